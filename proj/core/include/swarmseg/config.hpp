#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace swarmseg {

enum class FusionMode { kHard, kSoft, kStacked };

FusionMode fusion_mode_from_string(const std::string& s);
std::string to_string(FusionMode m);

struct WorldConfig {
  int rows = 160;
  int cols = 160;
  int classes = 6;
  int texture_block = 4;      // side of the block-noise cells, in pixels
  double block_noise = 0.12;  // amplitude of per-block appearance jitter
  double pixel_noise = 0.03;  // amplitude of per-pixel appearance jitter
};

struct ViewConfig {
  int rows = 64;       // H
  int cols = 64;       // W
  int feat_rows = 8;   // H_s
  int feat_cols = 8;   // W_s
  int patch_rows() const { return rows / feat_rows; }
  int patch_cols() const { return cols / feat_cols; }
  int feat_cells() const { return feat_rows * feat_cols; }
};

struct ObstructionConfig {
  int min_size = 8;
  int max_size = 16;
  double prob = 1.0;  // per-agent probability of one inserted obstruction
};

struct ModelConfig {
  int feature_dim = 16;     // F
  int query_dim = 8;        // Q
  int key_dim = 16;         // K
  int smoother_hidden = 64;
};

struct TrainSettings {
  int epochs = 20;
  double learning_rate = 0.05;
  double lambda_corr = 1.0;
  FusionMode fusion = FusionMode::kSoft;  // differentiable fused-loss path
  double corrupt_fraction = 0.3;          // volume fibers replaced by noise
};

struct EngineConfig {
  WorldConfig world;
  ViewConfig view;
  int agents = 3;
  double overlap_target = 0.45;
  std::vector<int> rotations = {0, 90, 180, 270};
  bool snap_to_patch = true;
  ObstructionConfig obstruction;
  ModelConfig model;
  TrainSettings train;
  int wire_scalar_bytes = 4;  // 4 or 8
  std::uint64_t seed = 0;

  // Throws config_error on inconsistent dimensions or flags.
  void validate() const;

  static EngineConfig from_json_text(const std::string& text);
  static EngineConfig from_file(const std::string& path);
  std::string to_json_text() const;
};

}  // namespace swarmseg
