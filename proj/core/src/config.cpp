#include "swarmseg/config.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "swarmseg/errors.hpp"

namespace swarmseg {

using nlohmann::json;

FusionMode fusion_mode_from_string(const std::string& s) {
  if (s == "hard") return FusionMode::kHard;
  if (s == "soft") return FusionMode::kSoft;
  if (s == "stacked") return FusionMode::kStacked;
  throw config_error("unknown fusion mode '" + s + "' (expected hard|soft|stacked)");
}

std::string to_string(FusionMode m) {
  switch (m) {
    case FusionMode::kHard: return "hard";
    case FusionMode::kSoft: return "soft";
    case FusionMode::kStacked: return "stacked";
  }
  return "?";
}

void EngineConfig::validate() const {
  if (world.classes < 2) throw config_error("world.classes must be >= 2");
  if (world.rows < view.rows || world.cols < view.cols)
    throw config_error("world dims must be >= viewport dims");
  if (view.feat_rows < 1 || view.feat_cols < 1 || view.rows % view.feat_rows != 0 ||
      view.cols % view.feat_cols != 0)
    throw config_error("view dims must be divisible by feature dims");
  if (agents < 1) throw config_error("agents must be >= 1");
  if (overlap_target < 0.0 || overlap_target > 1.0)
    throw config_error("overlap_target must lie in [0,1]");
  if (rotations.empty()) throw config_error("rotations list is empty");
  for (int r : rotations)
    if (r != 0 && r != 90 && r != 180 && r != 270)
      throw config_error("rotations must be multiples of 90 in [0,270], got " + std::to_string(r));
  if (obstruction.min_size < 0 || obstruction.max_size < obstruction.min_size)
    throw config_error("obstruction size range invalid");
  if (static_cast<long long>(obstruction.max_size) * obstruction.max_size * 2 >=
      static_cast<long long>(view.rows) * view.cols)
    throw config_error("obstruction footprint must stay below 50% of a viewport");
  if (obstruction.prob < 0.0 || obstruction.prob > 1.0)
    throw config_error("obstruction.prob must lie in [0,1]");
  if (model.feature_dim < 1 || model.query_dim < 1 || model.key_dim < 1)
    throw config_error("model channel dims must be >= 1");
  if (model.query_dim > model.key_dim)
    throw config_error("query_dim must be <= key_dim (asymmetric compression)");
  if (train.epochs < 1) throw config_error("train.epochs must be >= 1");
  if (train.lambda_corr < 0.0) throw config_error("train.lambda_corr must be >= 0");
  if (train.learning_rate <= 0.0) throw config_error("train.learning_rate must be > 0");
  if (train.corrupt_fraction < 0.0 || train.corrupt_fraction > 1.0)
    throw config_error("train.corrupt_fraction must lie in [0,1]");
  if (wire_scalar_bytes != 4 && wire_scalar_bytes != 8)
    throw config_error("wire_scalar_bytes must be 4 or 8");
}

namespace {

template <typename T>
void get_if_present(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

EngineConfig EngineConfig::from_json_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw config_error(std::string("config JSON parse error: ") + e.what());
  }
  EngineConfig cfg;
  try {
    if (j.contains("world")) {
      const auto& w = j["world"];
      get_if_present(w, "rows", cfg.world.rows);
      get_if_present(w, "cols", cfg.world.cols);
      get_if_present(w, "classes", cfg.world.classes);
      get_if_present(w, "texture_block", cfg.world.texture_block);
      get_if_present(w, "block_noise", cfg.world.block_noise);
      get_if_present(w, "pixel_noise", cfg.world.pixel_noise);
    }
    if (j.contains("view")) {
      const auto& v = j["view"];
      get_if_present(v, "rows", cfg.view.rows);
      get_if_present(v, "cols", cfg.view.cols);
      get_if_present(v, "feat_rows", cfg.view.feat_rows);
      get_if_present(v, "feat_cols", cfg.view.feat_cols);
    }
    get_if_present(j, "agents", cfg.agents);
    get_if_present(j, "overlap_target", cfg.overlap_target);
    get_if_present(j, "rotations", cfg.rotations);
    get_if_present(j, "snap_to_patch", cfg.snap_to_patch);
    if (j.contains("obstruction")) {
      const auto& o = j["obstruction"];
      get_if_present(o, "min", cfg.obstruction.min_size);
      get_if_present(o, "max", cfg.obstruction.max_size);
      get_if_present(o, "prob", cfg.obstruction.prob);
    }
    if (j.contains("model")) {
      const auto& m = j["model"];
      get_if_present(m, "feature_dim", cfg.model.feature_dim);
      get_if_present(m, "query_dim", cfg.model.query_dim);
      get_if_present(m, "key_dim", cfg.model.key_dim);
      get_if_present(m, "smoother_hidden", cfg.model.smoother_hidden);
    }
    if (j.contains("train")) {
      const auto& t = j["train"];
      get_if_present(t, "epochs", cfg.train.epochs);
      get_if_present(t, "learning_rate", cfg.train.learning_rate);
      get_if_present(t, "lambda_corr", cfg.train.lambda_corr);
      get_if_present(t, "corrupt_fraction", cfg.train.corrupt_fraction);
      if (t.contains("fusion")) cfg.train.fusion = fusion_mode_from_string(t["fusion"].get<std::string>());
    }
    get_if_present(j, "wire_scalar_bytes", cfg.wire_scalar_bytes);
    if (j.contains("seed")) cfg.seed = j["seed"].get<std::uint64_t>();
  } catch (const json::exception& e) {
    throw config_error(std::string("config field error: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

EngineConfig EngineConfig::from_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw config_error("cannot open config file '" + path + "'");
  std::stringstream ss;
  ss << is.rdbuf();
  return from_json_text(ss.str());
}

std::string EngineConfig::to_json_text() const {
  json j;
  j["world"] = {{"rows", world.rows},
                {"cols", world.cols},
                {"classes", world.classes},
                {"texture_block", world.texture_block},
                {"block_noise", world.block_noise},
                {"pixel_noise", world.pixel_noise}};
  j["view"] = {{"rows", view.rows},
               {"cols", view.cols},
               {"feat_rows", view.feat_rows},
               {"feat_cols", view.feat_cols}};
  j["agents"] = agents;
  j["overlap_target"] = overlap_target;
  j["rotations"] = rotations;
  j["snap_to_patch"] = snap_to_patch;
  j["obstruction"] = {{"min", obstruction.min_size},
                      {"max", obstruction.max_size},
                      {"prob", obstruction.prob}};
  j["model"] = {{"feature_dim", model.feature_dim},
                {"query_dim", model.query_dim},
                {"key_dim", model.key_dim},
                {"smoother_hidden", model.smoother_hidden}};
  j["train"] = {{"epochs", train.epochs},
                {"learning_rate", train.learning_rate},
                {"lambda_corr", train.lambda_corr},
                {"corrupt_fraction", train.corrupt_fraction},
                {"fusion", to_string(train.fusion)}};
  j["wire_scalar_bytes"] = wire_scalar_bytes;
  j["seed"] = seed;
  return j.dump(2);
}

}  // namespace swarmseg
