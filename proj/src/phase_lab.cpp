#include "caplab/phase_lab.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "caplab/errors.hpp"
#include "caplab/matrix.hpp"

namespace caplab {

namespace {

constexpr const char* kCsvHeader = "V,p,k,C1_analytic,C1_empirical,phase";

void check_axes(const std::vector<double>& importance_axis,
                const std::vector<double>& sparsity_axis) {
  if (importance_axis.empty() || sparsity_axis.empty()) {
    throw DomainError("phase grid: axes must be non-empty");
  }
  for (size_t i = 0; i < importance_axis.size(); i++) {
    if (!(importance_axis[i] > 0.0)) throw DomainError("phase grid: V axis must be positive");
    if (i && importance_axis[i] <= importance_axis[i - 1]) {
      throw DomainError("phase grid: V axis must be strictly increasing");
    }
  }
  for (size_t i = 0; i < sparsity_axis.size(); i++) {
    if (!(sparsity_axis[i] > 0.0) || sparsity_axis[i] > 1.0) {
      throw DomainError("phase grid: p axis must lie in (0, 1]");
    }
    if (i && sparsity_axis[i] <= sparsity_axis[i - 1]) {
      throw DomainError("phase grid: p axis must be strictly increasing");
    }
  }
}

}  // namespace

std::vector<double> log_spaced(double lo, double hi, int count) {
  // A single-point axis only uses lo, so hi == lo is fine there.
  if (!(lo > 0.0) || (count > 1 && !(hi > lo))) {
    throw DomainError("log_spaced: need 0 < lo < hi");
  }
  if (count < 1) throw DomainError("log_spaced: count must be positive");
  std::vector<double> out(count);
  if (count == 1) {
    out[0] = lo;
    return out;
  }
  const double llo = std::log(lo), lhi = std::log(hi);
  for (int i = 0; i < count; i++) {
    out[i] = std::exp(llo + (lhi - llo) * i / (count - 1.0));
  }
  out.front() = lo;
  out.back() = hi;
  return out;
}

PhaseGrid analytic_phase_grid(int n_features, int embedding_dim,
                              const std::vector<double>& importance_axis,
                              const std::vector<double>& sparsity_axis) {
  if (embedding_dim < 1 || n_features <= embedding_dim) {
    throw DomainError("analytic_phase_grid: need N > D >= 1");
  }
  check_axes(importance_axis, sparsity_axis);
  PhaseGrid grid;
  grid.importance_axis = importance_axis;
  grid.sparsity_axis = sparsity_axis;
  grid.cells.resize(importance_axis.size() * sparsity_axis.size());
  grid.meta.n_features = n_features;
  grid.meta.embedding_dim = embedding_dim;
  grid.meta.family = ModelFamily::kRegression;
  grid.meta.nonlinearity = Nonlinearity::kQuadratic;

  for (size_t ip = 0; ip < sparsity_axis.size(); ip++) {
    const double k = kurtosis_of(sparsity_axis[ip]);
    for (size_t iv = 0; iv < importance_axis.size(); iv++) {
      std::vector<double> v(n_features, 1.0);
      v[0] = importance_axis[iv];
      const AllocationSolution sol =
          solve_allocation(ImportanceVector(std::move(v)), embedding_dim, k);
      PhaseCell& cell = grid.cell(static_cast<int>(ip), static_cast<int>(iv));
      cell.c1_analytic = sol.capacities[0];
      cell.phase = sol.phases[0];
    }
  }
  return grid;
}

std::uint64_t sweep_config_hash(ModelFamily family, Nonlinearity nl,
                                int n_features, int embedding_dim,
                                const std::vector<double>& importance_axis,
                                const std::vector<double>& sparsity_axis,
                                const TrainConfig& train) {
  std::ostringstream s;
  s << to_string(family) << '|' << to_string(nl) << '|' << n_features << '|'
    << embedding_dim << '|' << train.steps << '|' << train.batch << '|'
    << train.learning_rate << '|' << train.beta1 << '|' << train.beta2 << '|'
    << train.adam_eps << '|' << train.weight_init_std << '|' << train.restarts
    << '|' << train.seed << '|';
  s.precision(17);
  for (double v : importance_axis) s << v << ',';
  s << '|';
  for (double p : sparsity_axis) s << p << ',';
  const std::string text = s.str();
  // FNV-1a
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

namespace {

std::string checkpoint_json(std::uint64_t hash, const PhaseGrid& grid, int cell) {
  const int nv = static_cast<int>(grid.importance_axis.size());
  const PhaseCell& pc = grid.cells[cell];
  nlohmann::json j;
  j["hash"] = std::to_string(hash);
  j["cell"] = cell;
  j["V"] = grid.importance_axis[cell % nv];
  j["p"] = grid.sparsity_axis[cell / nv];
  if (pc.c1_empirical) {
    j["c1"] = *pc.c1_empirical;
  } else {
    j["c1"] = nullptr;
  }
  j["diverged"] = pc.diverged;
  return j.dump();
}

// Adopt finished cells from an existing checkpoint; stale lines (other
// configs, unknown cells) are skipped.
std::vector<bool> load_checkpoint(const std::string& path, std::uint64_t hash,
                                  PhaseGrid& grid) {
  std::vector<bool> done(grid.cells.size(), false);
  std::ifstream in(path);
  if (!in) return done;
  const int nv = static_cast<int>(grid.importance_axis.size());
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object()) continue;
    if (!j.contains("hash") || j["hash"] != std::to_string(hash)) continue;
    if (!j.contains("cell") || !j["cell"].is_number_integer()) continue;
    const int cell = j["cell"].get<int>();
    if (cell < 0 || cell >= static_cast<int>(grid.cells.size())) continue;
    const double v_expect = grid.importance_axis[cell % nv];
    const double p_expect = grid.sparsity_axis[cell / nv];
    if (std::abs(j.value("V", 0.0) - v_expect) > 1e-9 * std::max(1.0, v_expect)) continue;
    if (std::abs(j.value("p", 0.0) - p_expect) > 1e-9) continue;
    PhaseCell& pc = grid.cells[cell];
    if (j.contains("c1") && j["c1"].is_number()) {
      pc.c1_empirical = j["c1"].get<double>();
    } else {
      pc.c1_empirical.reset();
    }
    pc.diverged = j.value("diverged", false);
    done[cell] = true;
  }
  return done;
}

}  // namespace

PhaseGrid empirical_phase_grid(ModelFamily family, Nonlinearity nl,
                               int n_features, int embedding_dim,
                               const std::vector<double>& importance_axis,
                               const std::vector<double>& sparsity_axis,
                               const SweepOptions& opts) {
  if (embedding_dim < 1 || n_features < embedding_dim) {
    throw DomainError("empirical_phase_grid: need N >= D >= 1");
  }
  check_axes(importance_axis, sparsity_axis);

  PhaseGrid grid;
  grid.importance_axis = importance_axis;
  grid.sparsity_axis = sparsity_axis;
  grid.cells.resize(importance_axis.size() * sparsity_axis.size());
  grid.meta.n_features = n_features;
  grid.meta.embedding_dim = embedding_dim;
  grid.meta.family = family;
  grid.meta.nonlinearity = nl;
  grid.meta.config_hash = sweep_config_hash(family, nl, n_features, embedding_dim,
                                            importance_axis, sparsity_axis, opts.train);

  const int nv = static_cast<int>(importance_axis.size());
  const int np = static_cast<int>(sparsity_axis.size());
  const int ip_lo = opts.ip_lo < 0 ? 0 : opts.ip_lo;
  const int ip_hi = opts.ip_hi < 0 ? np - 1 : opts.ip_hi;
  const int iv_lo = opts.iv_lo < 0 ? 0 : opts.iv_lo;
  const int iv_hi = opts.iv_hi < 0 ? nv - 1 : opts.iv_hi;
  if (ip_lo < 0 || ip_hi >= np || ip_lo > ip_hi || iv_lo < 0 || iv_hi >= nv ||
      iv_lo > iv_hi) {
    throw DomainError("empirical_phase_grid: sub-rectangle out of range");
  }

  std::vector<bool> done(grid.cells.size(), false);
  if (!opts.checkpoint_path.empty()) {
    done = load_checkpoint(opts.checkpoint_path, grid.meta.config_hash, grid);
  }

  std::vector<int> pending;
  for (int ip = ip_lo; ip <= ip_hi; ip++) {
    for (int iv = iv_lo; iv <= iv_hi; iv++) {
      const int cell = grid.cell_index(ip, iv);
      if (!done[cell]) pending.push_back(cell);
    }
  }

  std::atomic<size_t> next{0};
  std::mutex io_mutex;
  std::ofstream ck;
  if (!opts.checkpoint_path.empty()) {
    ck.open(opts.checkpoint_path, std::ios::app);
    if (!ck) throw IoError("cannot open checkpoint file '" + opts.checkpoint_path + "'");
  }
  std::exception_ptr failure;

  const auto worker = [&]() {
    while (true) {
      const size_t slot = next.fetch_add(1);
      if (slot >= pending.size()) break;
      const int cell = pending[slot];
      try {
        std::vector<double> v(n_features, 1.0);
        v[0] = importance_axis[cell % nv];
        const ModelSpec spec{family, nl, n_features, embedding_dim,
                             ImportanceVector(std::move(v))};
        const InputDistribution dist(sparsity_axis[cell / nv]);
        TrainConfig cfg = opts.train;
        cfg.seed = opts.train.seed + static_cast<std::uint64_t>(cell) * 1000ull;
        PhaseCell& pc = grid.cells[cell];
        try {
          const TrainResult result = train(spec, dist, cfg);
          pc.c1_empirical = result.capacity[0];
        } catch (const DivergenceError&) {
          pc.diverged = true;
        }
        if (ck.is_open()) {
          const std::lock_guard<std::mutex> lock(io_mutex);
          ck << checkpoint_json(grid.meta.config_hash, grid, cell) << "\n";
          ck.flush();
        }
      } catch (...) {
        const std::lock_guard<std::mutex> lock(io_mutex);
        if (!failure) failure = std::current_exception();
        next.store(pending.size());
        break;
      }
    }
  };

  int jobs = opts.jobs > 0 ? opts.jobs
                           : static_cast<int>(std::thread::hardware_concurrency());
  jobs = std::max(1, std::min<int>(jobs, static_cast<int>(pending.size())));
  if (pending.size() <= 1 || jobs == 1) {
    worker();
  } else {
    std::vector<std::thread> threads;
    threads.reserve(jobs);
    for (int t = 0; t < jobs; t++) threads.emplace_back(worker);
    for (auto& t : threads) t.join();
  }
  if (failure) std::rethrow_exception(failure);

  // Rewrite the checkpoint in canonical cell order so that repeated runs of
  // the same sweep produce byte-identical files even with jobs > 1.
  if (!opts.checkpoint_path.empty()) {
    ck.close();
    std::ofstream out(opts.checkpoint_path, std::ios::trunc);
    if (!out) throw IoError("cannot rewrite checkpoint file '" + opts.checkpoint_path + "'");
    for (size_t cell = 0; cell < grid.cells.size(); cell++) {
      const PhaseCell& pc = grid.cells[cell];
      if (pc.c1_empirical || pc.diverged) {
        out << checkpoint_json(grid.meta.config_hash, grid, static_cast<int>(cell))
            << "\n";
      }
    }
  }
  return grid;
}

std::string write_grid_csv(const PhaseGrid& grid) {
  std::ostringstream out;
  out << "# meta: n=" << grid.meta.n_features << " d=" << grid.meta.embedding_dim
      << " family=" << to_string(grid.meta.family)
      << " nonlinearity=" << to_string(grid.meta.nonlinearity)
      << " config_hash=" << grid.meta.config_hash << "\n";
  out << kCsvHeader << "\n";
  const int nv = static_cast<int>(grid.importance_axis.size());
  const int np = static_cast<int>(grid.sparsity_axis.size());
  for (int ip = 0; ip < np; ip++) {
    const double p = grid.sparsity_axis[ip];
    for (int iv = 0; iv < nv; iv++) {
      const PhaseCell& cell = grid.cell(ip, iv);
      out << format_g12(grid.importance_axis[iv]) << "," << format_g12(p) << ","
          << format_g12(kurtosis_of(p)) << ",";
      if (cell.c1_analytic) out << format_g12(*cell.c1_analytic);
      out << ",";
      if (cell.c1_empirical) out << format_g12(*cell.c1_empirical);
      out << ",";
      if (cell.phase) out << to_string(*cell.phase);
      out << "\n";
    }
  }
  return out.str();
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

double parse_csv_double(const std::string& tok) {
  size_t pos = 0;
  const double v = std::stod(tok, &pos);
  if (pos != tok.size()) throw IoError("grid csv: bad number '" + tok + "'");
  return v;
}

std::optional<FeaturePhase> parse_phase(const std::string& tok) {
  if (tok.empty()) return std::nullopt;
  if (tok == "ignored") return FeaturePhase::kIgnored;
  if (tok == "polysemantic") return FeaturePhase::kPolysemantic;
  if (tok == "monosemantic") return FeaturePhase::kMonosemantic;
  throw IoError("grid csv: unknown phase '" + tok + "'");
}

}  // namespace

PhaseGrid parse_grid_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  PhaseGrid grid;
  bool have_meta = false;

  if (!std::getline(in, line)) throw IoError("grid csv: empty input");
  if (line.rfind("# meta:", 0) == 0) {
    int n = 0, d = 0;
    char family[32] = {0}, nl[32] = {0};
    unsigned long long hash = 0;
    if (std::sscanf(line.c_str(),
                    "# meta: n=%d d=%d family=%31s nonlinearity=%31s config_hash=%llu",
                    &n, &d, family, nl, &hash) != 5) {
      throw IoError("grid csv: malformed meta line");
    }
    grid.meta.n_features = n;
    grid.meta.embedding_dim = d;
    grid.meta.family = parse_family(family);
    grid.meta.nonlinearity = parse_nonlinearity(nl);
    grid.meta.config_hash = hash;
    have_meta = true;
    if (!std::getline(in, line)) throw IoError("grid csv: missing header");
  }
  {
    std::string stripped = line;
    while (!stripped.empty() && stripped.back() == '\r') stripped.pop_back();
    if (stripped != kCsvHeader) {
      throw IoError(std::string("grid csv: header must be '") + kCsvHeader + "'");
    }
  }
  (void)have_meta;

  struct Row {
    double v, p;
    std::optional<double> c1a, c1e;
    std::optional<FeaturePhase> phase;
  };
  std::vector<Row> rows;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    const auto toks = split_csv_line(line);
    if (toks.size() != 6) throw IoError("grid csv: rows need 6 columns");
    Row row;
    row.v = parse_csv_double(toks[0]);
    row.p = parse_csv_double(toks[1]);
    const double k = parse_csv_double(toks[2]);
    if (!(row.p > 0.0) || row.p > 1.0) throw IoError("grid csv: p out of (0, 1]");
    if (std::abs(k - kurtosis_of(row.p)) > 1e-6 * std::max(1.0, k)) {
      throw IoError("grid csv: k column inconsistent with 9/(5p)");
    }
    if (!toks[3].empty()) row.c1a = parse_csv_double(toks[3]);
    if (!toks[4].empty()) row.c1e = parse_csv_double(toks[4]);
    for (const auto& c : {row.c1a, row.c1e}) {
      if (c && (*c < -1e-9 || *c > 1.0 + 1e-9)) {
        throw IoError("grid csv: capacity out of [0, 1]");
      }
    }
    row.phase = parse_phase(toks[5]);
    rows.push_back(row);
  }
  if (rows.empty()) throw IoError("grid csv: no data rows");

  std::map<double, int> v_index, p_index;
  for (const Row& r : rows) {
    v_index.emplace(r.v, 0);
    p_index.emplace(r.p, 0);
  }
  for (auto& [value, idx] : v_index) {
    grid.importance_axis.push_back(value);
    idx = static_cast<int>(grid.importance_axis.size()) - 1;
  }
  for (auto& [value, idx] : p_index) {
    grid.sparsity_axis.push_back(value);
    idx = static_cast<int>(grid.sparsity_axis.size()) - 1;
  }
  if (rows.size() != v_index.size() * p_index.size()) {
    throw IoError("grid csv: rows do not form a complete rectangular grid");
  }
  grid.cells.assign(rows.size(), PhaseCell{});
  std::vector<bool> seen(rows.size(), false);
  for (const Row& r : rows) {
    const int cell = grid.cell_index(p_index[r.p], v_index[r.v]);
    if (seen[cell]) throw IoError("grid csv: duplicate cell");
    seen[cell] = true;
    grid.cells[cell].c1_analytic = r.c1a;
    grid.cells[cell].c1_empirical = r.c1e;
    grid.cells[cell].phase = r.phase;
  }
  return grid;
}

void write_grid_csv_file(const PhaseGrid& grid, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write grid csv '" + path + "'");
  out << write_grid_csv(grid);
  if (!out.good()) throw IoError("write failed for '" + path + "'");
}

PhaseGrid load_grid_csv_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open grid csv '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_grid_csv(buf.str());
}

std::vector<ContourSegment> marching_squares(const std::vector<double>& values,
                                             int nx, int ny, double level) {
  if (nx < 1 || ny < 1 || static_cast<size_t>(nx) * ny != values.size()) {
    throw DomainError("marching_squares: values must be ny x nx");
  }
  std::vector<ContourSegment> segments;
  const auto at = [&](int ix, int iy) { return values[iy * nx + ix]; };

  for (int iy = 0; iy + 1 < ny; iy++) {
    for (int ix = 0; ix + 1 < nx; ix++) {
      const double c0 = at(ix, iy), c1 = at(ix + 1, iy);
      const double c2 = at(ix + 1, iy + 1), c3 = at(ix, iy + 1);
      if (!std::isfinite(c0) || !std::isfinite(c1) || !std::isfinite(c2) ||
          !std::isfinite(c3)) {
        continue;
      }
      const bool a0 = c0 >= level, a1 = c1 >= level, a2 = c2 >= level,
                 a3 = c3 >= level;
      const int idx = a0 + (a1 << 1) + (a2 << 2) + (a3 << 3);
      if (idx == 0 || idx == 15) continue;

      // Interpolated crossings on the four edges (x, y in lattice units).
      const auto lerp = [&](double va, double vb) {
        return (level - va) / (vb - va);
      };
      const double x = ix, y = iy;
      const double e0x = x + lerp(c0, c1), e0y = y;          // bottom
      const double e1x = x + 1, e1y = y + lerp(c1, c2);      // right
      const double e2x = x + lerp(c3, c2), e2y = y + 1;      // top
      const double e3x = x, e3y = y + lerp(c0, c3);          // left

      const auto add = [&](double ax, double ay, double bx, double by) {
        segments.push_back({ax, ay, bx, by});
      };
      switch (idx) {
        case 1: case 14: add(e0x, e0y, e3x, e3y); break;
        case 2: case 13: add(e0x, e0y, e1x, e1y); break;
        case 3: case 12: add(e1x, e1y, e3x, e3y); break;
        case 4: case 11: add(e1x, e1y, e2x, e2y); break;
        case 6: case 9:  add(e0x, e0y, e2x, e2y); break;
        case 7: case 8:  add(e2x, e2y, e3x, e3y); break;
        case 5: case 10: {
          // Saddle: resolve with the center average.
          const bool center_above = 0.25 * (c0 + c1 + c2 + c3) >= level;
          const bool c0_above = (idx == 5);
          if (center_above == c0_above) {
            add(e0x, e0y, e1x, e1y);
            add(e2x, e2y, e3x, e3y);
          } else {
            add(e0x, e0y, e3x, e3y);
            add(e1x, e1y, e2x, e2y);
          }
          break;
        }
        default: break;
      }
    }
  }
  return segments;
}

namespace {

std::string px(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

// Compact viridis approximation.
std::string viridis(double t) {
  static const int stops[5][3] = {
      {68, 1, 84}, {59, 82, 139}, {33, 145, 140}, {94, 201, 98}, {253, 231, 37}};
  t = std::clamp(t, 0.0, 1.0) * 4.0;
  const int s = std::min(3, static_cast<int>(t));
  const double f = t - s;
  char buf[8];
  std::snprintf(buf, sizeof(buf), "#%02x%02x%02x",
                static_cast<int>(std::lround(stops[s][0] + f * (stops[s + 1][0] - stops[s][0]))),
                static_cast<int>(std::lround(stops[s][1] + f * (stops[s + 1][1] - stops[s][1]))),
                static_cast<int>(std::lround(stops[s][2] + f * (stops[s + 1][2] - stops[s][2]))));
  return buf;
}

std::vector<double> cell_boundaries(const std::vector<double>& centers_log) {
  const size_t n = centers_log.size();
  std::vector<double> b(n + 1);
  if (n == 1) {
    b[0] = centers_log[0] - 0.5;
    b[1] = centers_log[0] + 0.5;
    return b;
  }
  b[0] = centers_log[0] - 0.5 * (centers_log[1] - centers_log[0]);
  for (size_t i = 1; i < n; i++) b[i] = 0.5 * (centers_log[i - 1] + centers_log[i]);
  b[n] = centers_log[n - 1] + 0.5 * (centers_log[n - 1] - centers_log[n - 2]);
  return b;
}

}  // namespace

std::string render_heatmap(const PhaseGrid& grid, GridChannel channel,
                           const HeatmapStyle& style) {
  const int nv = static_cast<int>(grid.importance_axis.size());
  const int np = static_cast<int>(grid.sparsity_axis.size());
  if (nv < 1 || np < 1 || grid.cells.size() != static_cast<size_t>(nv) * np) {
    throw DomainError("render_heatmap: malformed grid");
  }
  const int left = 70, right = 88, top = 44, bottom = 56;
  const double plot_w = style.width - left - right;
  const double plot_h = style.height - top - bottom;
  if (plot_w < 50 || plot_h < 50) throw DomainError("render_heatmap: canvas too small");

  std::vector<double> vlog(nv), plog(np);
  for (int i = 0; i < nv; i++) vlog[i] = std::log10(grid.importance_axis[i]);
  for (int i = 0; i < np; i++) plog[i] = std::log10(grid.sparsity_axis[i]);
  const std::vector<double> vb = cell_boundaries(vlog);
  const std::vector<double> pb = cell_boundaries(plog);

  const auto x_of = [&](double lv) {
    return left + (lv - vb.front()) / (vb.back() - vb.front()) * plot_w;
  };
  const auto y_of = [&](double lp) {
    return top + plot_h - (lp - pb.front()) / (pb.back() - pb.front()) * plot_h;
  };
  const auto value_of = [&](const PhaseCell& cell) -> std::optional<double> {
    return channel == GridChannel::kAnalytic ? cell.c1_analytic : cell.c1_empirical;
  };

  std::ostringstream svg;
  std::string title = style.title;
  if (title.empty()) {
    title = std::string(to_string(grid.meta.family)) + " / " +
            to_string(grid.meta.nonlinearity) +
            (channel == GridChannel::kAnalytic ? " (analytic C1)" : " (trained C1)");
  }
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << style.width
      << "\" height=\"" << style.height << "\" viewBox=\"0 0 " << style.width
      << " " << style.height << "\">\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg << "<text x=\"" << style.width / 2 << "\" y=\"24\" font-family=\"sans-serif\""
      << " font-size=\"15\" text-anchor=\"middle\">" << title << "</text>\n";

  // cells
  for (int ip = 0; ip < np; ip++) {
    for (int iv = 0; iv < nv; iv++) {
      const auto value = value_of(grid.cell(ip, iv));
      const std::string fill = value ? viridis(*value) : "#dddddd";
      const double x0 = x_of(vb[iv]), x1 = x_of(vb[iv + 1]);
      const double y0 = y_of(pb[ip + 1]), y1 = y_of(pb[ip]);
      svg << "<rect x=\"" << px(x0) << "\" y=\"" << px(y0) << "\" width=\""
          << px(x1 - x0) << "\" height=\"" << px(y1 - y0) << "\" fill=\"" << fill
          << "\"/>\n";
    }
  }

  // frame
  svg << "<rect x=\"" << left << "\" y=\"" << top << "\" width=\"" << px(plot_w)
      << "\" height=\"" << px(plot_h)
      << "\" fill=\"none\" stroke=\"black\" stroke-width=\"1\"/>\n";

  // k = 3 guide (p = 0.6)
  const double k3 = std::log10(0.6);
  if (k3 > pb.front() && k3 < pb.back()) {
    svg << "<line x1=\"" << left << "\" y1=\"" << px(y_of(k3)) << "\" x2=\""
        << px(left + plot_w) << "\" y2=\"" << px(y_of(k3))
        << "\" stroke=\"#888888\" stroke-dasharray=\"6,4\"/>\n";
    svg << "<text x=\"" << px(left + plot_w - 4) << "\" y=\"" << px(y_of(k3) - 4)
        << "\" font-family=\"sans-serif\" font-size=\"11\" fill=\"#666666\""
        << " text-anchor=\"end\">k = 3</text>\n";
  }

  // contours on the cell-center lattice
  std::vector<double> values(grid.cells.size(),
                             std::numeric_limits<double>::quiet_NaN());
  for (size_t i = 0; i < grid.cells.size(); i++) {
    const auto value = value_of(grid.cells[i]);
    if (value) values[i] = *value;
  }
  const auto center = [](const std::vector<double>& cs, double t) {
    const int n = static_cast<int>(cs.size());
    if (n == 1) return cs[0];
    int i = std::min(n - 2, static_cast<int>(t));
    return cs[i] + (t - i) * (cs[i + 1] - cs[i]);
  };
  const struct {
    double level;
    const char* stroke;
    const char* dash;
  } contour_styles[2] = {{0.47, "#ffffff", "5,3"}, {0.53, "#000000", ""}};
  for (const auto& cs : contour_styles) {
    for (const ContourSegment& seg : marching_squares(values, nv, np, cs.level)) {
      svg << "<line x1=\"" << px(x_of(center(vlog, seg.x0))) << "\" y1=\""
          << px(y_of(center(plog, seg.y0))) << "\" x2=\""
          << px(x_of(center(vlog, seg.x1))) << "\" y2=\""
          << px(y_of(center(plog, seg.y1))) << "\" stroke=\"" << cs.stroke
          << "\" stroke-width=\"1.6\"";
      if (cs.dash[0]) svg << " stroke-dasharray=\"" << cs.dash << "\"";
      svg << "/>\n";
    }
  }

  // axis ticks at decades
  svg << "<g font-family=\"sans-serif\" font-size=\"11\">\n";
  for (int e = static_cast<int>(std::ceil(vb.front())); e <= std::floor(vb.back()); e++) {
    const double x = x_of(e);
    svg << "<line x1=\"" << px(x) << "\" y1=\"" << px(top + plot_h) << "\" x2=\""
        << px(x) << "\" y2=\"" << px(top + plot_h + 5) << "\" stroke=\"black\"/>\n";
    svg << "<text x=\"" << px(x) << "\" y=\"" << px(top + plot_h + 18)
        << "\" text-anchor=\"middle\">" << format_g12(std::pow(10.0, e)) << "</text>\n";
  }
  for (int e = static_cast<int>(std::ceil(pb.front())); e <= std::floor(pb.back()); e++) {
    const double y = y_of(e);
    svg << "<line x1=\"" << px(left - 5) << "\" y1=\"" << px(y) << "\" x2=\"" << left
        << "\" y2=\"" << px(y) << "\" stroke=\"black\"/>\n";
    svg << "<text x=\"" << px(left - 8) << "\" y=\"" << px(y + 4)
        << "\" text-anchor=\"end\">" << format_g12(std::pow(10.0, e)) << "</text>\n";
  }
  svg << "<text x=\"" << px(left + plot_w / 2) << "\" y=\"" << style.height - 14
      << "\" text-anchor=\"middle\" font-size=\"13\">importance V</text>\n";
  svg << "<text x=\"18\" y=\"" << px(top + plot_h / 2)
      << "\" text-anchor=\"middle\" font-size=\"13\" transform=\"rotate(-90 18 "
      << px(top + plot_h / 2) << ")\">sparsity p</text>\n";
  svg << "</g>\n";

  // colorbar
  const double bar_x = left + plot_w + 26, bar_w = 14;
  const int bar_steps = 32;
  for (int i = 0; i < bar_steps; i++) {
    const double t0 = static_cast<double>(i) / bar_steps;
    const double y1 = top + plot_h * (1.0 - t0);
    const double y0 = top + plot_h * (1.0 - static_cast<double>(i + 1) / bar_steps);
    svg << "<rect x=\"" << px(bar_x) << "\" y=\"" << px(y0) << "\" width=\""
        << px(bar_w) << "\" height=\"" << px(y1 - y0 + 0.5) << "\" fill=\""
        << viridis((t0 + 0.5 / bar_steps)) << "\"/>\n";
  }
  svg << "<g font-family=\"sans-serif\" font-size=\"10\">\n";
  svg << "<text x=\"" << px(bar_x + bar_w + 4) << "\" y=\"" << px(top + plot_h)
      << "\">0</text>\n";
  svg << "<text x=\"" << px(bar_x + bar_w + 4) << "\" y=\"" << px(top + 8)
      << "\">1</text>\n";
  svg << "<text x=\"" << px(bar_x + bar_w + 4) << "\" y=\""
      << px(top + plot_h / 2 + 4) << "\">C1</text>\n";
  svg << "</g>\n";
  svg << "</svg>\n";
  return svg.str();
}

}  // namespace caplab
