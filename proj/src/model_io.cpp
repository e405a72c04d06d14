#include "hsi/trainers.hpp"

namespace hsi {

namespace {

nlohmann::json shape_json(Shape3 s) { return {s.h, s.w, s.c}; }

Shape3 shape_of(const nlohmann::json& j) {
  return {j.at(0).get<int>(), j.at(1).get<int>(), j.at(2).get<int>()};
}

nlohmann::json history_json(const History& h) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& rec : h) {
    nlohmann::json row{{"epoch", rec.epoch}};
    for (const auto& [k, v] : rec.values) row[k] = v;
    out.push_back(row);
  }
  return out;
}

NetworkSpec reparse(const std::string& text, bool insert_pool) {
  ParseOptions opt;
  opt.insert_pool = insert_pool;
  return parse_config(text, opt);
}

const nlohmann::json& require(const nlohmann::json& meta, const char* key) {
  if (!meta.contains(key)) throw FormatError(std::string("checkpoint metadata lacks '") + key + "'");
  return meta.at(key);
}

}  // namespace

void save_model(const TrainedModel& model, const std::filesystem::path& manifest,
                const nlohmann::json& extra) {
  const std::string text = render_config(model.spec);
  if (!(reparse(text, model.spec.pool_after_conv) == model.spec)) {
    throw ArgumentError("network cannot be expressed in the configuration grammar");
  }
  nlohmann::json meta{{"kind", "classifier"},
                      {"config", text},
                      {"insert_pool", model.spec.pool_after_conv},
                      {"input", shape_json(model.input)},
                      {"config_hash", model.config_hash},
                      {"seed", model.seed},
                      {"history", history_json(model.history)},
                      {"has_decoder", model.decoder.has_value()}};
  if (!extra.is_null()) meta["extra"] = extra;
  std::map<std::string, ParamStore> blocks{{"params", model.params}};
  if (model.decoder) blocks.emplace("decoder", model.decoder_params);
  write_checkpoint(manifest, meta, blocks);
}

TrainedModel load_model(const std::filesystem::path& manifest) {
  Checkpoint ck = read_checkpoint(manifest);
  const auto& meta = ck.meta;
  if (require(meta, "kind") != "classifier") throw FormatError("checkpoint is not a classifier");
  TrainedModel m;
  try {
    m.spec = reparse(require(meta, "config").get<std::string>(), require(meta, "insert_pool").get<bool>());
    m.input = shape_of(require(meta, "input"));
    m.config_hash = require(meta, "config_hash").get<std::uint64_t>();
    m.seed = require(meta, "seed").get<std::uint64_t>();
    for (const auto& row : require(meta, "history")) {
      EpochRecord rec;
      rec.epoch = row.at("epoch").get<int>();
      for (const auto& [k, v] : row.items()) {
        if (k != "epoch") rec.values.emplace_back(k, v.get<double>());
      }
      m.history.push_back(std::move(rec));
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint metadata: ") + e.what());
  }
  if (!ck.blocks.count("params")) throw FormatError("checkpoint lacks the 'params' block");
  m.params = std::move(ck.blocks["params"]);
  const ParamStore like = init_params(m.spec, m.input, 0);
  if (m.params.layers.size() != like.layers.size()) {
    throw FormatError("checkpoint parameters do not match the network");
  }
  for (std::size_t l = 0; l < like.layers.size(); ++l) {
    if (m.params.layers[l].size() != like.layers[l].size()) {
      throw FormatError("checkpoint parameters do not match the network");
    }
    for (std::size_t t = 0; t < like.layers[l].size(); ++t) {
      if (m.params.layers[l][t].shape != like.layers[l][t].shape) {
        throw FormatError("checkpoint tensor shape mismatch at layer " + std::to_string(l));
      }
    }
  }
  if (meta.value("has_decoder", false)) {
    if (!ck.blocks.count("decoder")) throw FormatError("checkpoint lacks the 'decoder' block");
    NetworkSpec trunk = m.spec;
    if (trunk.ends_in_softmax()) trunk.layers.pop_back();
    m.decoder = mirrored_decoder(trunk, m.input);
    m.decoder_params = std::move(ck.blocks["decoder"]);
  }
  return m;
}

void save_fann(const FannModel& model, const std::filesystem::path& manifest,
               const nlohmann::json& extra) {
  if (!model.trained) throw StateError("refusing to save an untrained FANN model");
  nlohmann::json meta{{"kind", "fann"},
                      {"config", render_fann_config(model.spec)},
                      {"source_bands", model.spec.source_branch.input_bands},
                      {"target_bands", model.spec.target_branch.input_bands},
                      {"source_input", shape_json(model.source_input)},
                      {"target_input", shape_json(model.target_input)},
                      {"align_dim", model.align_dim},
                      {"align_radius", model.align_radius},
                      {"betas", model.betas},
                      {"config_hash", model.config_hash},
                      {"seed", model.seed},
                      {"history", history_json(model.history)}};
  if (!extra.is_null()) meta["extra"] = extra;
  write_checkpoint(manifest, meta,
                   {{"source", model.source_params},
                    {"target", model.target_params},
                    {"projections", model.projections},
                    {"head", model.head_params}});
}

FannModel load_fann(const std::filesystem::path& manifest) {
  Checkpoint ck = read_checkpoint(manifest);
  const auto& meta = ck.meta;
  if (require(meta, "kind") != "fann") throw FormatError("checkpoint is not a FANN model");
  FannModel m;
  try {
    m.spec = parse_fann_config(require(meta, "config").get<std::string>(),
                               require(meta, "source_bands").get<int>(),
                               require(meta, "target_bands").get<int>());
    m.source_input = shape_of(require(meta, "source_input"));
    m.target_input = shape_of(require(meta, "target_input"));
    m.align_dim = require(meta, "align_dim").get<int>();
    m.align_radius = require(meta, "align_radius").get<double>();
    m.betas = require(meta, "betas").get<std::vector<double>>();
    m.config_hash = require(meta, "config_hash").get<std::uint64_t>();
    m.seed = require(meta, "seed").get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint metadata: ") + e.what());
  }
  for (const char* key : {"source", "target", "projections", "head"}) {
    if (!ck.blocks.count(key)) throw FormatError(std::string("checkpoint lacks the '") + key + "' block");
  }
  m.source_params = std::move(ck.blocks["source"]);
  m.target_params = std::move(ck.blocks["target"]);
  m.projections = std::move(ck.blocks["projections"]);
  m.head_params = std::move(ck.blocks["head"]);
  m.head = m.spec.head;
  m.head.input_bands = static_cast<int>(m.num_pairs()) * m.align_dim;
  m.trained = true;
  return m;
}

}  // namespace hsi
