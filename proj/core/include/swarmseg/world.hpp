#pragma once

#include <array>
#include <cstdint>
#include <utility>
#include <vector>

#include "swarmseg/config.hpp"
#include "swarmseg/grid.hpp"

namespace swarmseg {

// Procedurally generated semantic world: a class map plus a pseudo-RGB
// appearance that is a deterministic function of (class, local texture noise,
// seed). Matching by appearance is possible but not trivial.
struct World {
  int rows = 0;
  int cols = 0;
  int classes = 0;
  IntGrid class_map;                                // values in [0, classes)
  GridTensor appearance;                            // rows x cols x 3, in [0,1]
  std::uint64_t seed = 0;
  std::vector<std::array<double, 3>> prototypes;    // per-class texture prototype
};

// Axis-aligned camera window with right-angle rotation. Rotation is the
// clockwise rotation applied to the world patch to produce the observation.
struct Viewport {
  int agent_id = 0;
  int origin_row = 0;  // world coordinates of the footprint's top-left corner
  int origin_col = 0;
  int rotation = 0;    // one of 0, 90, 180, 270
  int rows = 0;        // H
  int cols = 0;        // W

  int foot_rows() const { return (rotation == 90 || rotation == 270) ? cols : rows; }
  int foot_cols() const { return (rotation == 90 || rotation == 270) ? rows : cols; }
};

// View pixel -> world pixel. Exact for integer coordinates; the double
// overload maps continuous positions (patch centers).
std::pair<int, int> view_to_world(const Viewport& vp, int r, int c);
std::pair<double, double> view_to_world(const Viewport& vp, double r, double c);

// World point -> view coordinates. Returns false when the point falls outside
// the viewport's pixel-center span [0, H-1] x [0, W-1].
bool world_to_view(const Viewport& vp, double wr, double wc, double& vr, double& vc);

// Fraction of one viewport's pixels covered by the intersection of the two
// footprints (both viewports have the same pixel count).
double viewport_overlap(const Viewport& a, const Viewport& b);
double mean_pairwise_overlap(const std::vector<Viewport>& vps);

struct AgentObservation {
  Viewport viewport;
  GridTensor observation;    // H x W x 3
  IntGrid gt_mask;           // H x W, unobstructed semantics
  IntGrid obstruction_mask;  // H x W, 0/1
};

// One synchronized snapshot: N observations plus exact ground truth.
struct SceneSample {
  std::vector<AgentObservation> agents;
  // Ordered-pair correspondence grids, indexed [target * N + supporting].
  // Values in [0, feat_cells]; feat_cells encodes no-match.
  std::vector<IntGrid> correspondences;
  int feat_rows = 0;
  int feat_cols = 0;
  int classes = 0;
  std::uint64_t seed = 0;

  int agent_count() const { return static_cast<int>(agents.size()); }
  int no_match_value() const { return feat_rows * feat_cols; }
  const IntGrid& corr(int target, int supporting) const {
    return correspondences[static_cast<std::size_t>(target) * agents.size() + supporting];
  }
};

// Deterministic given (config, seed). Every class covers >= 1% of cells.
World generate_world(const WorldConfig& cfg, int min_rows, int min_cols, std::uint64_t seed);

// Place n viewports whose mean pairwise overlap lands within +-10 percentage
// points of overlap_target. Bounded retries; throws generation_error when the
// target cannot be met.
std::vector<Viewport> place_agents(const World& world, const ViewConfig& view, int n_agents,
                                   double overlap_target, const std::vector<int>& rotations,
                                   bool snap_to_patch, std::uint64_t seed);

// Ground-truth patch correspondence from exact viewport geometry. Each target
// feature cell maps to the supporting cell whose world-patch center is
// nearest, or no-match (feat_cells) outside the supporting view or where the
// supporting patch is majority-obstructed.
IntGrid gt_correspondence(const Viewport& target, const Viewport& supporting,
                          const ViewConfig& view, const IntGrid* supporting_obstruction);

// Render observations and ground truth for the given viewports (no obstructions).
SceneSample render_sample(const World& world, const std::vector<Viewport>& viewports,
                          const ViewConfig& view);

// Insert per-view rectangular obstructions: observation pixels are replaced by
// an out-of-distribution appearance, obstruction masks are set, gt_mask is
// untouched, and correspondences are recomputed (majority-obstructed
// supporting patches become no-match).
SceneSample insert_obstruction(SceneSample sample, const ViewConfig& view,
                               const ObstructionConfig& cfg, std::uint64_t seed);

// Full per-sample pipeline: world -> placement -> render -> obstructions.
SceneSample make_scene_sample(const EngineConfig& cfg, std::uint64_t sample_seed);

// Appearance pattern used for obstruction pixels; far from every class
// prototype by construction.
std::array<double, 3> obstruction_appearance(int r, int c, std::uint64_t seed);

}  // namespace swarmseg
