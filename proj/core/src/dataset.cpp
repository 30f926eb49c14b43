#include "swarmseg/dataset.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "swarmseg/errors.hpp"
#include "swarmseg/params.hpp"

namespace swarmseg {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string agent_file(int i, const char* kind) {
  return "agent_" + std::to_string(i) + "." + kind + ".bin";
}

std::string corr_file(int t, int s) {
  return "corr_" + std::to_string(t) + "_" + std::to_string(s) + ".bin";
}

json read_json_file(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw data_error("cannot open '" + path.string() + "'");
  json j;
  try {
    is >> j;
  } catch (const json::exception& e) {
    throw data_error("bad JSON in '" + path.string() + "': " + e.what());
  }
  return j;
}

}  // namespace

void save_sample(const std::string& dir, const SceneSample& sample) {
  fs::create_directories(dir);
  const int n = sample.agent_count();
  json manifest;
  manifest["agents"] = n;
  manifest["classes"] = sample.classes;
  manifest["feat_rows"] = sample.feat_rows;
  manifest["feat_cols"] = sample.feat_cols;
  manifest["seed"] = sample.seed;
  manifest["viewports"] = json::array();
  for (int i = 0; i < n; ++i) {
    const AgentObservation& a = sample.agents[i];
    manifest["viewports"].push_back({{"agent_id", a.viewport.agent_id},
                                     {"origin", {a.viewport.origin_row, a.viewport.origin_col}},
                                     {"rotation", a.viewport.rotation},
                                     {"rows", a.viewport.rows},
                                     {"cols", a.viewport.cols}});
    save_tensor(dir + "/" + agent_file(i, "obs"), "observation", a.observation);
    save_int_grid(dir + "/" + agent_file(i, "gt"), "gt_mask", a.gt_mask);
    save_int_grid(dir + "/" + agent_file(i, "obst"), "obstruction_mask", a.obstruction_mask);
  }
  for (int t = 0; t < n; ++t)
    for (int s = 0; s < n; ++s)
      if (t != s) save_int_grid(dir + "/" + corr_file(t, s), "gt_correspondence", sample.corr(t, s));
  std::ofstream os(dir + "/manifest.json");
  os << manifest.dump(2) << "\n";
  if (!os) throw data_error("cannot write manifest under '" + dir + "'");
}

SceneSample load_sample(const std::string& dir) {
  const json manifest = read_json_file(fs::path(dir) / "manifest.json");
  SceneSample s;
  const int n = manifest.at("agents").get<int>();
  s.classes = manifest.at("classes").get<int>();
  s.feat_rows = manifest.at("feat_rows").get<int>();
  s.feat_cols = manifest.at("feat_cols").get<int>();
  s.seed = manifest.at("seed").get<std::uint64_t>();
  s.agents.resize(n);
  const auto& vps = manifest.at("viewports");
  if (static_cast<int>(vps.size()) != n) throw data_error("manifest viewport count mismatch");
  for (int i = 0; i < n; ++i) {
    AgentObservation& a = s.agents[i];
    a.viewport.agent_id = vps[i].at("agent_id").get<int>();
    a.viewport.origin_row = vps[i].at("origin")[0].get<int>();
    a.viewport.origin_col = vps[i].at("origin")[1].get<int>();
    a.viewport.rotation = vps[i].at("rotation").get<int>();
    a.viewport.rows = vps[i].at("rows").get<int>();
    a.viewport.cols = vps[i].at("cols").get<int>();
    a.observation = load_tensor(dir + "/" + agent_file(i, "obs"));
    a.gt_mask = load_int_grid(dir + "/" + agent_file(i, "gt"));
    a.obstruction_mask = load_int_grid(dir + "/" + agent_file(i, "obst"));
    if (a.observation.rows != a.viewport.rows || a.observation.cols != a.viewport.cols ||
        a.observation.channels != 3)
      throw data_error("observation tensor shape mismatch in '" + dir + "'");
  }
  s.correspondences.resize(static_cast<std::size_t>(n) * n);
  for (int t = 0; t < n; ++t)
    for (int sp = 0; sp < n; ++sp)
      if (t != sp) {
        IntGrid g = load_int_grid(dir + "/" + corr_file(t, sp));
        if (g.rows != s.feat_rows || g.cols != s.feat_cols)
          throw data_error("correspondence grid shape mismatch in '" + dir + "'");
        const int no_match = s.feat_rows * s.feat_cols;
        for (int v : g.data)
          if (v < 0 || v > no_match)
            throw data_error("correspondence value out of range in '" + dir + "'");
        s.correspondences[static_cast<std::size_t>(t) * n + sp] = std::move(g);
      }
  return s;
}

std::vector<std::string> save_dataset(const std::string& dir, const EngineConfig& cfg, int count) {
  if (count < 1) throw config_error("save_dataset: count must be >= 1");
  fs::create_directories(dir);
  std::vector<std::string> sample_dirs;
  for (int i = 0; i < count; ++i) {
    const SceneSample s = make_scene_sample(cfg, cfg.seed + static_cast<std::uint64_t>(i));
    std::ostringstream name;
    name << "sample_" << std::setw(6) << std::setfill('0') << i;
    const std::string sdir = dir + "/" + name.str();
    save_sample(sdir, s);
    sample_dirs.push_back(sdir);
  }
  json root;
  root["samples"] = count;
  root["config"] = json::parse(cfg.to_json_text());
  std::ofstream os(dir + "/dataset.json");
  os << root.dump(2) << "\n";
  if (!os) throw data_error("cannot write dataset.json under '" + dir + "'");
  return sample_dirs;
}

std::vector<SceneSample> load_dataset(const std::string& dir) {
  const json root = read_json_file(fs::path(dir) / "dataset.json");
  const int count = root.at("samples").get<int>();
  std::vector<SceneSample> out;
  out.reserve(count);
  for (int i = 0; i < count; ++i) {
    std::ostringstream name;
    name << "sample_" << std::setw(6) << std::setfill('0') << i;
    out.push_back(load_sample(dir + "/" + name.str()));
  }
  if (out.empty()) throw data_error("dataset '" + dir + "' is empty");
  return out;
}

}  // namespace swarmseg
