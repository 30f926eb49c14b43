#pragma once

#include <string>
#include <vector>

#include "swarmseg/config.hpp"
#include "swarmseg/world.hpp"

namespace swarmseg {

// On-disk layout: one directory per sample holding a manifest.json, per-agent
// observation / gt / obstruction tensors and per-ordered-pair correspondence
// grids, all in the shared binary tensor container.
void save_sample(const std::string& dir, const SceneSample& sample);
SceneSample load_sample(const std::string& dir);

// Generate `count` samples with seeds cfg.seed + i and write them under
// `dir` as sample_000000, sample_000001, ... plus a dataset.json echo of the
// config. Returns the sample directories.
std::vector<std::string> save_dataset(const std::string& dir, const EngineConfig& cfg, int count);

std::vector<SceneSample> load_dataset(const std::string& dir);

}  // namespace swarmseg
