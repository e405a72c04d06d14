#ifndef HSI_CUBE_IO_HPP_
#define HSI_CUBE_IO_HPP_

#include <filesystem>
#include <string>

#include "hsi/cube.hpp"

namespace hsi {

// Header: UTF-8 key=value lines (height, width, bands, kind, payload,
// wavelengths as a comma list). '#' starts a comment. The payload path is
// resolved relative to the header's directory and holds height*width*bands
// little-endian float32 values in band-sequential order.
HyperCube load_cube(const std::filesystem::path& header_path);

// Writes <header_path> and its payload (default: header stem + ".bsq").
void write_cube(const HyperCube& cube, const std::filesystem::path& header_path,
                const std::string& payload_name = "");

// CSV "row,col,class_id" (labeled pixels only) plus a "id,name" sidecar.
LabelMap load_labels(const std::filesystem::path& csv_path,
                     const std::filesystem::path& names_path, int height,
                     int width);
void write_labels(const LabelMap& labels, const std::filesystem::path& csv_path,
                  const std::filesystem::path& names_path);

// Conventional sidecar path: labels.csv -> labels.names.csv
std::filesystem::path names_path_for(const std::filesystem::path& csv_path);

void write_split(const SplitSpec& split, const std::filesystem::path& path);
SplitSpec load_split(const std::filesystem::path& path);

}  // namespace hsi

#endif  // HSI_CUBE_IO_HPP_
