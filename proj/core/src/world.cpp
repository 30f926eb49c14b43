#include "swarmseg/world.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "swarmseg/errors.hpp"
#include "swarmseg/rng.hpp"

namespace swarmseg {

namespace {

constexpr std::uint64_t kSaltBlockNoise = 0xb10c500aULL;
constexpr std::uint64_t kSaltPixelNoise = 0x90e15e11ULL;
constexpr std::uint64_t kSaltObstruction = 0x0b57ac1eULL;
constexpr std::uint64_t kSaltWorld = 0x3077f00dULL;
constexpr std::uint64_t kSaltPlacement = 0x97ace000ULL;

// Fixed palette: corners of the [0.25, 0.75]^3 cube ordered for maximal
// successive separation, then a denser lattice for large class counts (with
// proportionally reduced texture noise so obstruction pixels stay
// out-of-distribution).
std::vector<std::array<double, 3>> class_palette(int classes) {
  static const std::array<std::array<double, 3>, 8> corners = {{
      {0.25, 0.25, 0.25},
      {0.75, 0.75, 0.75},
      {0.75, 0.25, 0.25},
      {0.25, 0.75, 0.75},
      {0.25, 0.75, 0.25},
      {0.75, 0.25, 0.75},
      {0.25, 0.25, 0.75},
      {0.75, 0.75, 0.25},
  }};
  if (classes <= 8) {
    return {corners.begin(), corners.begin() + classes};
  }
  if (classes > 27) throw config_error("at most 27 classes supported");
  std::vector<std::array<double, 3>> out;
  const double levels[3] = {0.2, 0.5, 0.8};
  for (int i = 0; i < 3 && static_cast<int>(out.size()) < classes; ++i)
    for (int j = 0; j < 3 && static_cast<int>(out.size()) < classes; ++j)
      for (int k = 0; k < 3 && static_cast<int>(out.size()) < classes; ++k)
        out.push_back({levels[(i + j + k) % 3], levels[j], levels[k]});
  return out;
}

double noise_scale_for(int classes) { return classes <= 8 ? 1.0 : 0.4; }

long long required_cells_per_class(int rows, int cols) {
  const long long cells = static_cast<long long>(rows) * cols;
  return (cells + 99) / 100;  // ceil(1%)
}

std::vector<long long> class_histogram(const IntGrid& map, int classes) {
  std::vector<long long> h(classes, 0);
  for (int v : map.data) ++h[v];
  return h;
}

bool coverage_ok(const IntGrid& map, int classes, long long required) {
  const auto h = class_histogram(map, classes);
  return std::all_of(h.begin(), h.end(), [required](long long n) { return n >= required; });
}

IntGrid voronoi_class_map(int rows, int cols, int classes, Rng& rng) {
  constexpr int kSitesPerClass = 3;
  struct Site {
    double r, c;
    int cls;
  };
  std::vector<Site> sites;
  sites.reserve(static_cast<std::size_t>(classes) * kSitesPerClass);
  for (int cls = 0; cls < classes; ++cls)
    for (int s = 0; s < kSitesPerClass; ++s)
      sites.push_back({rng.uniform(0.0, rows), rng.uniform(0.0, cols), cls});

  IntGrid map(rows, cols);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      double best = 1e300;
      int best_cls = 0;
      for (const Site& s : sites) {
        const double dr = r - s.r, dc = c - s.c;
        const double d2 = dr * dr + dc * dc;
        if (d2 < best) {
          best = d2;
          best_cls = s.cls;
        }
      }
      map.at(r, c) = best_cls;
    }
  }
  return map;
}

// Stamp square regions for classes below the 1% floor. Stamps go to fresh
// non-overlapping slots, so a stamped class can never drop below the floor
// again and the loop terminates within `classes` passes.
void stamp_deficient_classes(IntGrid& map, int classes, long long required) {
  const int side = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(required))));
  const int slots_per_row = map.cols / side;
  const int slot_rows = map.rows / side;
  if (slots_per_row < 1 || slot_rows < 1)
    throw generation_error("world too small to guarantee class coverage");
  int cursor = 0;
  for (int pass = 0; pass <= classes; ++pass) {
    const auto h = class_histogram(map, classes);
    bool any = false;
    for (int cls = 0; cls < classes; ++cls) {
      if (h[cls] >= required) continue;
      any = true;
      if (cursor >= slots_per_row * slot_rows)
        throw generation_error("ran out of room stamping class coverage");
      const int r0 = (cursor / slots_per_row) * side;
      const int c0 = (cursor % slots_per_row) * side;
      ++cursor;
      for (int r = r0; r < r0 + side; ++r)
        for (int c = c0; c < c0 + side; ++c) map.at(r, c) = cls;
    }
    if (!any) return;
  }
  if (!coverage_ok(map, classes, required))
    throw generation_error("class coverage fix-up failed");
}

int snap(int v, int step) {
  if (step <= 1) return v;
  return (v / step) * step;
}

bool majority_obstructed(const IntGrid& mask, int cell_r, int cell_c, int pr, int pc) {
  int count = 0;
  for (int r = cell_r * pr; r < (cell_r + 1) * pr; ++r)
    for (int c = cell_c * pc; c < (cell_c + 1) * pc; ++c) count += mask.at(r, c);
  return count * 2 > pr * pc;
}

}  // namespace

std::pair<int, int> view_to_world(const Viewport& vp, int r, int c) {
  switch (vp.rotation) {
    case 0: return {vp.origin_row + r, vp.origin_col + c};
    case 90: return {vp.origin_row + (vp.cols - 1 - c), vp.origin_col + r};
    case 180: return {vp.origin_row + (vp.rows - 1 - r), vp.origin_col + (vp.cols - 1 - c)};
    case 270: return {vp.origin_row + c, vp.origin_col + (vp.rows - 1 - r)};
    default: throw config_error("viewport rotation must be a multiple of 90");
  }
}

std::pair<double, double> view_to_world(const Viewport& vp, double r, double c) {
  switch (vp.rotation) {
    case 0: return {vp.origin_row + r, vp.origin_col + c};
    case 90: return {vp.origin_row + (vp.cols - 1 - c), vp.origin_col + r};
    case 180: return {vp.origin_row + (vp.rows - 1 - r), vp.origin_col + (vp.cols - 1 - c)};
    case 270: return {vp.origin_row + c, vp.origin_col + (vp.rows - 1 - r)};
    default: throw config_error("viewport rotation must be a multiple of 90");
  }
}

bool world_to_view(const Viewport& vp, double wr, double wc, double& vr, double& vc) {
  const double dr = wr - vp.origin_row;
  const double dc = wc - vp.origin_col;
  switch (vp.rotation) {
    case 0:
      vr = dr;
      vc = dc;
      break;
    case 90:
      vr = dc;
      vc = vp.cols - 1 - dr;
      break;
    case 180:
      vr = vp.rows - 1 - dr;
      vc = vp.cols - 1 - dc;
      break;
    case 270:
      vr = vp.rows - 1 - dc;
      vc = dr;
      break;
    default: throw config_error("viewport rotation must be a multiple of 90");
  }
  return vr >= 0.0 && vr <= vp.rows - 1 && vc >= 0.0 && vc <= vp.cols - 1;
}

double viewport_overlap(const Viewport& a, const Viewport& b) {
  const int r0 = std::max(a.origin_row, b.origin_row);
  const int r1 = std::min(a.origin_row + a.foot_rows(), b.origin_row + b.foot_rows());
  const int c0 = std::max(a.origin_col, b.origin_col);
  const int c1 = std::min(a.origin_col + a.foot_cols(), b.origin_col + b.foot_cols());
  const long long area =
      static_cast<long long>(std::max(0, r1 - r0)) * std::max(0, c1 - c0);
  return static_cast<double>(area) / (static_cast<double>(a.rows) * a.cols);
}

double mean_pairwise_overlap(const std::vector<Viewport>& vps) {
  const int n = static_cast<int>(vps.size());
  if (n < 2) return 0.0;
  double sum = 0.0;
  int pairs = 0;
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) {
      sum += viewport_overlap(vps[i], vps[j]);
      ++pairs;
    }
  return sum / pairs;
}

World generate_world(const WorldConfig& cfg, int min_rows, int min_cols, std::uint64_t seed) {
  if (cfg.classes < 2) throw config_error("generate_world: need at least 2 classes");
  if (cfg.rows < min_rows || cfg.cols < min_cols)
    throw config_error("generate_world: world " + std::to_string(cfg.rows) + "x" +
                       std::to_string(cfg.cols) + " smaller than viewport " +
                       std::to_string(min_rows) + "x" + std::to_string(min_cols));
  const long long required = required_cells_per_class(cfg.rows, cfg.cols);
  if (required * cfg.classes > static_cast<long long>(cfg.rows) * cfg.cols)
    throw config_error("generate_world: 1% coverage per class impossible at this size");

  World w;
  w.rows = cfg.rows;
  w.cols = cfg.cols;
  w.classes = cfg.classes;
  w.seed = seed;
  w.prototypes = class_palette(cfg.classes);

  // Regenerate with derived seeds until every class holds >= 1% of cells;
  // stamp the stragglers as a last resort.
  constexpr int kAttempts = 16;
  for (int attempt = 0; attempt < kAttempts; ++attempt) {
    Rng rng(splitmix64(seed ^ kSaltWorld ^ (0x5151ULL * attempt)));
    w.class_map = voronoi_class_map(cfg.rows, cfg.cols, cfg.classes, rng);
    if (coverage_ok(w.class_map, cfg.classes, required)) break;
    if (attempt == kAttempts - 1) stamp_deficient_classes(w.class_map, cfg.classes, required);
  }

  const double scale = noise_scale_for(cfg.classes);
  const double block_amp = cfg.block_noise * scale;
  const double pixel_amp = cfg.pixel_noise * scale;
  const int block = std::max(1, cfg.texture_block);
  w.appearance = GridTensor(cfg.rows, cfg.cols, 3);
  for (int r = 0; r < cfg.rows; ++r) {
    for (int c = 0; c < cfg.cols; ++c) {
      const auto& proto = w.prototypes[w.class_map.at(r, c)];
      double* px = w.appearance.fiber(r, c);
      for (int ch = 0; ch < 3; ++ch) {
        const double bn = 2.0 * hash_unit(r / block, c / block, ch, seed ^ kSaltBlockNoise) - 1.0;
        const double pn = 2.0 * hash_unit(r, c, ch, seed ^ kSaltPixelNoise) - 1.0;
        px[ch] = std::clamp(proto[ch] + block_amp * bn + pixel_amp * pn, 0.0, 1.0);
      }
    }
  }
  return w;
}

std::vector<Viewport> place_agents(const World& world, const ViewConfig& view, int n_agents,
                                   double overlap_target, const std::vector<int>& rotations,
                                   bool snap_to_patch, std::uint64_t seed) {
  if (n_agents < 1) throw config_error("place_agents: need at least one agent");
  if (rotations.empty()) throw config_error("place_agents: rotation list empty");
  const int H = view.rows, W = view.cols;
  const int step_r = snap_to_patch ? view.patch_rows() : 1;
  const int step_c = snap_to_patch ? view.patch_cols() : 1;

  Rng rng(splitmix64(seed ^ kSaltPlacement));

  auto random_viewport = [&](Rng& r) {
    Viewport vp;
    vp.rows = H;
    vp.cols = W;
    vp.rotation = rotations[r.uniform_int(static_cast<int>(rotations.size()))];
    const int max_r = world.rows - vp.foot_rows();
    const int max_c = world.cols - vp.foot_cols();
    vp.origin_row = snap(r.uniform_int(max_r + 1), step_r);
    vp.origin_col = snap(r.uniform_int(max_c + 1), step_c);
    return vp;
  };

  if (n_agents == 1) {
    auto vp = random_viewport(rng);
    vp.agent_id = 0;
    return {vp};
  }

  // Full-overlap shortcut: identical footprints.
  if (overlap_target >= 0.999) {
    std::vector<Viewport> vps;
    Viewport base = random_viewport(rng);
    for (int i = 0; i < n_agents; ++i) {
      Viewport vp = base;
      vp.agent_id = i;
      vp.rotation = rotations[rng.uniform_int(static_cast<int>(rotations.size()))];
      if (vp.foot_rows() != base.foot_rows() || vp.foot_cols() != base.foot_cols())
        vp.rotation = base.rotation;  // non-square views keep one footprint
      vps.push_back(vp);
    }
    return vps;
  }

  // Zero-overlap shortcut: tile footprints if the world has room.
  if (overlap_target <= 1e-12) {
    const int cell = std::max(H, W);
    const int per_row = world.cols / cell;
    const int n_rows = world.rows / cell;
    if (per_row * n_rows >= n_agents) {
      std::vector<Viewport> vps;
      for (int i = 0; i < n_agents; ++i) {
        Viewport vp;
        vp.agent_id = i;
        vp.rows = H;
        vp.cols = W;
        vp.rotation = rotations[rng.uniform_int(static_cast<int>(rotations.size()))];
        vp.origin_row = (i / per_row) * cell;
        vp.origin_col = (i % per_row) * cell;
        vps.push_back(vp);
      }
      return vps;
    }
  }

  constexpr int kAttempts = 600;
  for (int attempt = 0; attempt < kAttempts; ++attempt) {
    Rng ar = rng.child(attempt + 1);
    std::vector<Viewport> vps;
    vps.push_back(random_viewport(ar));
    for (int i = 1; i < n_agents; ++i) {
      const Viewport& anchor = vps[ar.uniform_int(i)];
      Viewport vp;
      vp.rows = H;
      vp.cols = W;
      vp.rotation = rotations[ar.uniform_int(static_cast<int>(rotations.size()))];
      const double d = std::clamp(overlap_target + ar.uniform(-0.15, 0.15), 0.0, 1.0);
      if (d < 0.005) {
        vp = random_viewport(ar);
        vp.rotation = rotations[ar.uniform_int(static_cast<int>(rotations.size()))];
      } else {
        const int min_fr = std::min(anchor.foot_rows(), vp.foot_rows());
        const int min_fc = std::min(anchor.foot_cols(), vp.foot_cols());
        const double u = ar.uniform(std::sqrt(d), 1.0);
        int ir = std::clamp(static_cast<int>(std::llround(u * min_fr)), 1, min_fr);
        int ic = std::clamp(
            static_cast<int>(std::llround(d * H * W / std::max(1, ir))), 1, min_fc);
        const bool below = ar.coin(0.5);
        const bool right = ar.coin(0.5);
        int orow = below ? anchor.origin_row + (anchor.foot_rows() - ir)
                         : anchor.origin_row - (vp.foot_rows() - ir);
        int ocol = right ? anchor.origin_col + (anchor.foot_cols() - ic)
                         : anchor.origin_col - (vp.foot_cols() - ic);
        vp.origin_row = snap(std::clamp(orow, 0, world.rows - vp.foot_rows()), step_r);
        vp.origin_col = snap(std::clamp(ocol, 0, world.cols - vp.foot_cols()), step_c);
      }
      vps.push_back(vp);
    }
    const double mean = mean_pairwise_overlap(vps);
    bool ok;
    if (overlap_target <= 1e-12) {
      ok = mean == 0.0;
    } else {
      double max_pair = 0.0;
      for (std::size_t i = 0; i < vps.size(); ++i)
        for (std::size_t j = i + 1; j < vps.size(); ++j)
          max_pair = std::max(max_pair, viewport_overlap(vps[i], vps[j]));
      ok = std::abs(mean - overlap_target) <= 0.10 && max_pair > 0.0;
    }
    if (ok) {
      for (int i = 0; i < n_agents; ++i) vps[i].agent_id = i;
      return vps;
    }
  }
  throw generation_error("place_agents: could not reach overlap target " +
                         std::to_string(overlap_target) + " after bounded retries");
}

IntGrid gt_correspondence(const Viewport& target, const Viewport& supporting,
                          const ViewConfig& view, const IntGrid* supporting_obstruction) {
  const int pr = view.patch_rows(), pc = view.patch_cols();
  const int no_match = view.feat_cells();
  IntGrid out(view.feat_rows, view.feat_cols, no_match);
  for (int i = 0; i < view.feat_rows; ++i) {
    for (int j = 0; j < view.feat_cols; ++j) {
      const double vr = i * pr + (pr - 1) * 0.5;
      const double vc = j * pc + (pc - 1) * 0.5;
      const auto [wr, wc] = view_to_world(target, vr, vc);
      double sr, sc;
      if (!world_to_view(supporting, wr, wc, sr, sc)) continue;
      const int si = std::clamp(static_cast<int>(std::floor(sr / pr)), 0, view.feat_rows - 1);
      const int sj = std::clamp(static_cast<int>(std::floor(sc / pc)), 0, view.feat_cols - 1);
      if (supporting_obstruction != nullptr &&
          majority_obstructed(*supporting_obstruction, si, sj, pr, pc))
        continue;
      out.at(i, j) = si * view.feat_cols + sj;
    }
  }
  return out;
}

SceneSample render_sample(const World& world, const std::vector<Viewport>& viewports,
                          const ViewConfig& view) {
  SceneSample s;
  s.feat_rows = view.feat_rows;
  s.feat_cols = view.feat_cols;
  s.classes = world.classes;
  s.seed = world.seed;
  const int n = static_cast<int>(viewports.size());
  s.agents.reserve(n);
  for (const Viewport& vp : viewports) {
    AgentObservation a;
    a.viewport = vp;
    a.observation = GridTensor(vp.rows, vp.cols, 3);
    a.gt_mask = IntGrid(vp.rows, vp.cols);
    a.obstruction_mask = IntGrid(vp.rows, vp.cols, 0);
    for (int r = 0; r < vp.rows; ++r) {
      for (int c = 0; c < vp.cols; ++c) {
        const auto [wr, wc] = view_to_world(vp, r, c);
        const double* src = world.appearance.fiber(wr, wc);
        double* dst = a.observation.fiber(r, c);
        dst[0] = src[0];
        dst[1] = src[1];
        dst[2] = src[2];
        a.gt_mask.at(r, c) = world.class_map.at(wr, wc);
      }
    }
    s.agents.push_back(std::move(a));
  }
  s.correspondences.resize(static_cast<std::size_t>(n) * n);
  for (int t = 0; t < n; ++t)
    for (int sp = 0; sp < n; ++sp)
      if (t != sp)
        s.correspondences[static_cast<std::size_t>(t) * n + sp] =
            gt_correspondence(viewports[t], viewports[sp], view, nullptr);
  return s;
}

std::array<double, 3> obstruction_appearance(int r, int c, std::uint64_t seed) {
  std::array<double, 3> px;
  for (int ch = 0; ch < 3; ++ch)
    px[ch] = hash_unit(r, c, ch, seed ^ kSaltObstruction) < 0.5 ? 0.03 : 0.97;
  return px;
}

SceneSample insert_obstruction(SceneSample sample, const ViewConfig& view,
                               const ObstructionConfig& cfg, std::uint64_t seed) {
  if (cfg.max_size <= 0) return sample;
  const int n = sample.agent_count();
  bool any = false;
  for (int i = 0; i < n; ++i) {
    Rng rng(splitmix64(seed ^ kSaltObstruction ^ (0x0b5ULL + i)));
    if (!rng.coin(cfg.prob)) continue;
    const int span = cfg.max_size - cfg.min_size + 1;
    const int a = cfg.min_size + rng.uniform_int(span);
    const int b = cfg.min_size + rng.uniform_int(span);
    if (a <= 0 || b <= 0) continue;
    AgentObservation& obs = sample.agents[i];
    if (2LL * a * b >= static_cast<long long>(obs.viewport.rows) * obs.viewport.cols)
      throw config_error("insert_obstruction: footprint must stay below 50% of the viewport");
    const int r0 = rng.uniform_int(obs.viewport.rows - a + 1);
    const int c0 = rng.uniform_int(obs.viewport.cols - b + 1);
    for (int r = r0; r < r0 + a; ++r) {
      for (int c = c0; c < c0 + b; ++c) {
        const auto px = obstruction_appearance(r, c, seed ^ (0x715eULL * (i + 1)));
        double* dst = obs.observation.fiber(r, c);
        dst[0] = px[0];
        dst[1] = px[1];
        dst[2] = px[2];
        obs.obstruction_mask.at(r, c) = 1;
      }
    }
    any = true;
  }
  if (any) {
    for (int t = 0; t < n; ++t)
      for (int sp = 0; sp < n; ++sp)
        if (t != sp)
          sample.correspondences[static_cast<std::size_t>(t) * n + sp] = gt_correspondence(
              sample.agents[t].viewport, sample.agents[sp].viewport, view,
              &sample.agents[sp].obstruction_mask);
  }
  return sample;
}

SceneSample make_scene_sample(const EngineConfig& cfg, std::uint64_t sample_seed) {
  const World world =
      generate_world(cfg.world, cfg.view.rows, cfg.view.cols, splitmix64(sample_seed ^ kSaltWorld));
  const auto viewports =
      place_agents(world, cfg.view, cfg.agents, cfg.overlap_target, cfg.rotations,
                   cfg.snap_to_patch, splitmix64(sample_seed ^ kSaltPlacement));
  SceneSample s = render_sample(world, viewports, cfg.view);
  s = insert_obstruction(std::move(s), cfg.view, cfg.obstruction,
                         splitmix64(sample_seed ^ kSaltObstruction));
  s.seed = sample_seed;
  return s;
}

}  // namespace swarmseg
