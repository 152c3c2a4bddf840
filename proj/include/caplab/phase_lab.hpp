#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "caplab/quadratic.hpp"
#include "caplab/toy_models.hpp"

namespace caplab {

struct GridMeta {
  int n_features = 0;
  int embedding_dim = 0;
  ModelFamily family = ModelFamily::kRegression;
  Nonlinearity nonlinearity = Nonlinearity::kQuadratic;
  std::uint64_t config_hash = 0;
};

struct PhaseCell {
  std::optional<double> c1_analytic;
  std::optional<double> c1_empirical;
  std::optional<FeaturePhase> phase;  // analytic phase of feature 1
  bool diverged = false;
};

// Rectangular sweep over importance V (x axis) and sparsity p (y axis) for
// the first feature of v = (V, 1, ..., 1). Cells are stored sparsity-major:
// cells[ip * nv + iv].
struct PhaseGrid {
  std::vector<double> importance_axis;  // ascending
  std::vector<double> sparsity_axis;    // ascending
  std::vector<PhaseCell> cells;
  GridMeta meta;

  int cell_index(int ip, int iv) const {
    return ip * static_cast<int>(importance_axis.size()) + iv;
  }
  PhaseCell& cell(int ip, int iv) { return cells[cell_index(ip, iv)]; }
  const PhaseCell& cell(int ip, int iv) const { return cells[cell_index(ip, iv)]; }
};

// Geometric progression from lo to hi inclusive; count >= 2 (count == 1
// returns {lo}).
std::vector<double> log_spaced(double lo, double hi, int count);

// Closed-form quadratic-model grid: per cell k = 9/(5p) and
// C_1 from solve_allocation(v = (V, 1, ..., 1), D, k).
PhaseGrid analytic_phase_grid(int n_features, int embedding_dim,
                              const std::vector<double>& importance_axis,
                              const std::vector<double>& sparsity_axis);

struct SweepOptions {
  TrainConfig train;            // train.seed is the sweep base seed
  int jobs = 0;                 // worker threads; <= 0 means hardware
  std::string checkpoint_path;  // empty disables checkpointing
  // Optional sub-rectangle (inclusive index ranges); -1 means full axis.
  int ip_lo = -1, ip_hi = -1, iv_lo = -1, iv_hi = -1;
};

// Trained grid: per cell the best-of-restarts run with derived seed
// base + cell_index * 1000 + restart. Cells outside the sub-rectangle stay
// empty; diverged cells are flagged and skipped. Results are deterministic
// per base seed regardless of the number of jobs.
PhaseGrid empirical_phase_grid(ModelFamily family, Nonlinearity nl,
                               int n_features, int embedding_dim,
                               const std::vector<double>& importance_axis,
                               const std::vector<double>& sparsity_axis,
                               const SweepOptions& opts);

// Hash identifying a sweep configuration; stale checkpoint lines (different
// hash) are ignored on resume.
std::uint64_t sweep_config_hash(ModelFamily family, Nonlinearity nl,
                                int n_features, int embedding_dim,
                                const std::vector<double>& importance_axis,
                                const std::vector<double>& sparsity_axis,
                                const TrainConfig& train);

// CSV exchange: optional "# meta:" comment line, then the header
// V,p,k,C1_analytic,C1_empirical,phase and one row per cell (12 significant
// digits, blanks for missing values). The loader recomputes k = 9/(5p) and
// rejects inconsistent files.
std::string write_grid_csv(const PhaseGrid& grid);
PhaseGrid parse_grid_csv(const std::string& text);
void write_grid_csv_file(const PhaseGrid& grid, const std::string& path);
PhaseGrid load_grid_csv_file(const std::string& path);

struct ContourSegment {
  double x0, y0, x1, y1;  // lattice coordinates (x = iv, y = ip)
};

// Standard marching squares on the cell-center lattice; values is ny x nx
// stored row-major (values[iy * nx + ix]), non-finite entries mask their
// squares out. Saddles are resolved by the cell-center average.
std::vector<ContourSegment> marching_squares(const std::vector<double>& values,
                                             int nx, int ny, double level);

enum class GridChannel { kAnalytic, kEmpirical };

struct HeatmapStyle {
  int width = 720;
  int height = 560;
  std::string title;  // empty: derived from meta
};

// Self-contained SVG heatmap on log-log axes with phase-boundary contours at
// 0.47 and 0.53 and a k = 3 guide line.
std::string render_heatmap(const PhaseGrid& grid, GridChannel channel,
                           const HeatmapStyle& style = {});

}  // namespace caplab
