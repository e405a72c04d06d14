#ifndef HSI_ERROR_HPP_
#define HSI_ERROR_HPP_

#include <stdexcept>
#include <string>

namespace hsi {

// Every failure raised by the library derives from Error so callers can
// catch one type; the subclasses name the contract that was violated.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define HSI_DEFINE_ERROR(Name)            \
  class Name : public Error {             \
   public:                                \
    using Error::Error;                   \
  };

HSI_DEFINE_ERROR(ArgumentError)
HSI_DEFINE_ERROR(IngestionError)
HSI_DEFINE_ERROR(FormatError)
HSI_DEFINE_ERROR(DataError)
HSI_DEFINE_ERROR(SplitError)
HSI_DEFINE_ERROR(PairingError)
HSI_DEFINE_ERROR(ParseError)
HSI_DEFINE_ERROR(StructureError)
HSI_DEFINE_ERROR(UnsupportedStructureError)
HSI_DEFINE_ERROR(ShapeError)
HSI_DEFINE_ERROR(DegenerateSupportError)
HSI_DEFINE_ERROR(StateError)
HSI_DEFINE_ERROR(ConfigError)
HSI_DEFINE_ERROR(ReportError)
HSI_DEFINE_ERROR(TrainingError)

#undef HSI_DEFINE_ERROR

}  // namespace hsi

#endif  // HSI_ERROR_HPP_
