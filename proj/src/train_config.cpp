#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <set>
#include <sstream>

#include "hsi/trainers.hpp"

namespace hsi {

namespace {

using nlohmann::json;

[[noreturn]] void bad(const std::string& field, const std::string& msg) {
  throw ConfigError("trainer." + field + ": " + msg);
}

template <typename T>
T read(const json& j, const std::string& key, const std::string& path, T fallback) {
  if (!j.contains(key)) return fallback;
  const auto& v = j.at(key);
  if constexpr (std::is_same_v<T, bool>) {
    if (!v.is_boolean()) bad(path, "expected true or false");
  } else if constexpr (std::is_same_v<T, std::string>) {
    if (!v.is_string()) bad(path, "expected a string");
  } else if constexpr (std::is_integral_v<T>) {
    if (!v.is_number_integer()) bad(path, "expected an integer");
  } else {
    if (!v.is_number()) bad(path, "expected a number");
  }
  return v.get<T>();
}

}  // namespace

void TrainConfig::validate() const {
  if (epochs < 0) bad("epochs", "must be >= 0");
  if (batch_size < 1) bad("batch_size", "must be >= 1");
  if (!(learning_rate > 0.0)) bad("learning_rate", "must be positive");
  if (momentum < 0.0 || momentum >= 1.0) bad("momentum", "must lie in [0, 1)");
  if (lambda_recon < 0.0) bad("lambda_recon", "must be >= 0");
  if (freeze_depth < 0) bad("freeze_depth", "must be >= 0");
  if (head_units < 1) bad("head_units", "must be >= 1");
  if (clusters < 0 || clusters == 1) bad("clusters", "must be 0 (softmax width) or >= 2");
  if (kmeans_restarts < 1) bad("kmeans_restarts", "must be >= 1");
  if (clusterer != "kmeans") bad("clusterer", "unknown clusterer '" + clusterer + "'");
  for (double w : datl_weights) {
    if (!(w >= 0.0)) bad("datl_weights", "weights must be >= 0");
  }
  if (!(datl_weight >= 0.0)) bad("datl_weight", "must be >= 0");
  if (align_dim < 1) bad("align_dim", "must be >= 1");
  if (!(align_radius >= 0.0) || !std::isfinite(align_radius)) bad("align_radius", "must be >= 0");
  if (beta_refresh < 1) bad("beta_refresh", "must be >= 1");
  if (pad_sample_cap < adaptation.pad_folds) bad("pad_sample_cap", "must be >= pad_folds");
  try {
    adaptation.validate();
  } catch (const ArgumentError& e) {
    bad("adaptation", e.what());
  }
}

json TrainConfig::to_json() const {
  json a{{"beta_mode", adaptation.beta_mode == BetaMode::kFixed ? "fixed" : "pad"},
         {"fixed_beta", adaptation.fixed_beta},
         {"beta_clamp", {adaptation.beta_min, adaptation.beta_max}},
         {"stability_shift", adaptation.stability_shift},
         {"pad_folds", adaptation.pad_folds},
         {"svm_epochs", adaptation.svm_epochs},
         {"svm_lambda", adaptation.svm_lambda}};
  return json{{"epochs", epochs},
              {"batch_size", batch_size},
              {"learning_rate", learning_rate},
              {"momentum", momentum},
              {"seed", seed},
              {"lambda_recon", lambda_recon},
              {"freeze_depth", freeze_depth},
              {"head_units", head_units},
              {"clusterer", clusterer},
              {"clusters", clusters},
              {"kmeans_restarts", kmeans_restarts},
              {"datl_weights", datl_weights},
              {"datl_weight", datl_weight},
              {"align_dim", align_dim},
              {"align_radius", align_radius},
              {"beta_refresh", beta_refresh},
              {"pad_sample_cap", pad_sample_cap},
              {"adaptation", a}};
}

TrainConfig TrainConfig::from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("trainer: expected an object");
  static const std::set<std::string> known = {
      "epochs",      "batch_size",      "learning_rate", "momentum",     "seed",
      "lambda_recon", "freeze_depth",   "head_units",    "clusterer",    "clusters",
      "kmeans_restarts", "datl_weights", "datl_weight",  "align_dim", "align_radius", "beta_refresh",
      "pad_sample_cap", "adaptation"};
  for (const auto& [key, value] : j.items()) {
    if (!known.count(key)) bad(key, "unknown field");
  }
  TrainConfig c;
  c.epochs = read(j, "epochs", "epochs", c.epochs);
  c.batch_size = read(j, "batch_size", "batch_size", c.batch_size);
  c.learning_rate = read(j, "learning_rate", "learning_rate", c.learning_rate);
  c.momentum = read(j, "momentum", "momentum", c.momentum);
  c.seed = read<std::uint64_t>(j, "seed", "seed", c.seed);
  c.lambda_recon = read(j, "lambda_recon", "lambda_recon", c.lambda_recon);
  c.freeze_depth = read(j, "freeze_depth", "freeze_depth", c.freeze_depth);
  c.head_units = read(j, "head_units", "head_units", c.head_units);
  c.clusterer = read(j, "clusterer", "clusterer", c.clusterer);
  c.clusters = read(j, "clusters", "clusters", c.clusters);
  c.kmeans_restarts = read(j, "kmeans_restarts", "kmeans_restarts", c.kmeans_restarts);
  if (j.contains("datl_weights")) {
    const auto& w = j.at("datl_weights");
    if (!w.is_array()) bad("datl_weights", "expected an array of numbers");
    for (std::size_t i = 0; i < w.size(); ++i) {
      if (!w[i].is_number()) bad("datl_weights[" + std::to_string(i) + "]", "expected a number");
      c.datl_weights.push_back(w[i].get<double>());
    }
  }
  c.datl_weight = read(j, "datl_weight", "datl_weight", c.datl_weight);
  c.align_dim = read(j, "align_dim", "align_dim", c.align_dim);
  c.align_radius = read(j, "align_radius", "align_radius", c.align_radius);
  c.beta_refresh = read(j, "beta_refresh", "beta_refresh", c.beta_refresh);
  c.pad_sample_cap = read(j, "pad_sample_cap", "pad_sample_cap", c.pad_sample_cap);
  if (j.contains("adaptation")) {
    const auto& a = j.at("adaptation");
    if (!a.is_object()) bad("adaptation", "expected an object");
    static const std::set<std::string> akeys = {"beta_mode",  "fixed_beta", "beta_clamp",
                                                "stability_shift", "pad_folds", "svm_epochs",
                                                "svm_lambda"};
    for (const auto& [key, value] : a.items()) {
      if (!akeys.count(key)) bad("adaptation." + key, "unknown field");
    }
    auto& ad = c.adaptation;
    const auto mode = read<std::string>(a, "beta_mode", "adaptation.beta_mode", "pad");
    if (mode == "fixed") {
      ad.beta_mode = BetaMode::kFixed;
    } else if (mode == "pad") {
      ad.beta_mode = BetaMode::kPadEstimated;
    } else {
      bad("adaptation.beta_mode", "expected \"fixed\" or \"pad\"");
    }
    ad.fixed_beta = read(a, "fixed_beta", "adaptation.fixed_beta", ad.fixed_beta);
    if (a.contains("beta_clamp")) {
      const auto& cl = a.at("beta_clamp");
      if (!cl.is_array() || cl.size() != 2 || !cl[0].is_number() || !cl[1].is_number()) {
        bad("adaptation.beta_clamp", "expected [min, max]");
      }
      ad.beta_min = cl[0].get<double>();
      ad.beta_max = cl[1].get<double>();
    }
    ad.stability_shift =
        read(a, "stability_shift", "adaptation.stability_shift", ad.stability_shift);
    ad.pad_folds = read(a, "pad_folds", "adaptation.pad_folds", ad.pad_folds);
    ad.svm_epochs = read(a, "svm_epochs", "adaptation.svm_epochs", ad.svm_epochs);
    ad.svm_lambda = read(a, "svm_lambda", "adaptation.svm_lambda", ad.svm_lambda);
  }
  c.validate();
  return c;
}

std::uint64_t TrainConfig::hash() const {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char ch : to_json().dump()) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  return h;
}

double EpochRecord::get(const std::string& name) const {
  for (const auto& [k, v] : values) {
    if (k == name) return v;
  }
  throw ArgumentError("history has no column '" + name + "'");
}

void write_history_csv(const History& history, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << "epoch";
  if (!history.empty()) {
    for (const auto& [k, v] : history.front().values) out << ',' << k;
  }
  out << '\n' << std::setprecision(10);
  for (const auto& row : history) {
    out << row.epoch;
    for (const auto& [k, v] : row.values) out << ',' << v;
    out << '\n';
  }
}

Evaluation evaluate_labels(const std::vector<int>& truth, const std::vector<int>& predicted,
                           int classes) {
  if (truth.empty()) throw ArgumentError("evaluation needs a nonempty test set");
  if (truth.size() != predicted.size()) throw ShapeError("prediction count mismatch");
  Evaluation e;
  e.confusion.assign(classes, std::vector<int>(classes, 0));
  std::size_t correct = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const int t = truth[i], p = predicted[i];
    if (t < 1 || t > classes) throw ArgumentError("test labels must lie in 1..C");
    if (p >= 1 && p <= classes) ++e.confusion[t - 1][p - 1];
    correct += t == p;
  }
  e.oa = static_cast<double>(correct) / static_cast<double>(truth.size());
  e.per_class.resize(classes);
  for (int c = 0; c < classes; ++c) {
    long row = 0;
    for (int v : e.confusion[c]) row += v;
    e.per_class[c] = row ? static_cast<double>(e.confusion[c][c]) / row
                         : std::numeric_limits<double>::quiet_NaN();
  }
  return e;
}

Summary summarize(const std::vector<double>& values) {
  Summary s;
  s.n = values.size();
  if (values.empty()) return s;
  for (double v : values) s.mean += v;
  s.mean /= static_cast<double>(s.n);
  if (s.n > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - s.mean) * (v - s.mean);
    s.std = std::sqrt(ss / static_cast<double>(s.n - 1));
  }
  return s;
}

std::string format_summary(const Summary& s) {
  std::ostringstream out;
  out << std::fixed << std::setprecision(1) << s.mean;
  if (s.n > 1) out << " ± " << s.std;
  return out.str();
}

}  // namespace hsi
