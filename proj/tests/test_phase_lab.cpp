#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "caplab/errors.hpp"
#include "caplab/phase_lab.hpp"
#include "caplab/quadratic.hpp"

using namespace caplab;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& path) {
  std::ifstream in(path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path temp_file(const std::string& name) {
  return fs::temp_directory_path() / ("caplab_phase_test_" + name);
}

SweepOptions tiny_sweep_options(std::uint64_t seed) {
  SweepOptions opts;
  opts.train.steps = 300;
  opts.train.batch = 32;
  opts.train.restarts = 1;
  opts.train.seed = seed;
  opts.jobs = 1;
  return opts;
}

}  // namespace

TEST_SUITE("phase_lab") {

TEST_CASE("log spacing") {
  const std::vector<double> g = log_spaced(0.01, 100.0, 5);
  REQUIRE(g.size() == 5);
  CHECK(g[0] == 0.01);          // endpoints exact
  CHECK(g[4] == 100.0);
  CHECK(g[1] == doctest::Approx(0.1).epsilon(1e-12));
  CHECK(g[2] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(g[3] == doctest::Approx(10.0).epsilon(1e-12));
  CHECK(log_spaced(0.5, 2.0, 1) == std::vector<double>{0.5});
  CHECK_THROWS_AS(log_spaced(-1.0, 2.0, 3), DomainError);
  CHECK_THROWS_AS(log_spaced(2.0, 1.0, 3), DomainError);
}

TEST_CASE("analytic grid matches direct solves") {
  const std::vector<double> vs = log_spaced(0.1, 10.0, 6);
  const std::vector<double> ps = log_spaced(0.05, 1.0, 4);
  const PhaseGrid grid = analytic_phase_grid(6, 3, vs, ps);
  REQUIRE(grid.cells.size() == 24);
  CHECK(grid.meta.n_features == 6);
  CHECK(grid.meta.embedding_dim == 3);

  for (int ip = 0; ip < 4; ip++) {
    const double k = kurtosis_of(ps[ip]);
    const PhaseBoundaries pb = phase_boundaries(6, 3, k);
    for (int iv = 0; iv < 6; iv++) {
      const PhaseCell& pc = grid.cell(ip, iv);
      REQUIRE(pc.c1_analytic.has_value());
      REQUIRE(pc.phase.has_value());
      CHECK_FALSE(pc.c1_empirical.has_value());

      std::vector<double> v(6, 1.0);
      v[0] = vs[iv];
      const AllocationSolution sol = solve_allocation(ImportanceVector(v), 3, k);
      CHECK(*pc.c1_analytic == doctest::Approx(sol.capacities[0]).epsilon(1e-12));
      CHECK(*pc.phase == sol.phases[0]);

      // Phase column consistent with the analytic boundaries.
      if (!pb.degenerate && vs[iv] > pb.v_full * (1 + 1e-9)) {
        CHECK(*pc.phase == FeaturePhase::kMonosemantic);
      }
      if (!pb.degenerate && vs[iv] < pb.v_ignore * (1 - 1e-9)) {
        CHECK(*pc.phase == FeaturePhase::kIgnored);
      }
    }
  }
  CHECK_THROWS_AS(analytic_phase_grid(3, 3, vs, ps), DomainError);
  CHECK_THROWS_AS(analytic_phase_grid(6, 3, vs, {0.5, 1.5}), DomainError);  // p > 1
}

TEST_CASE("grid CSV round trip") {
  const PhaseGrid grid =
      analytic_phase_grid(6, 3, log_spaced(0.1, 10.0, 5), log_spaced(0.05, 1.0, 3));
  const std::string text = write_grid_csv(grid);
  const PhaseGrid back = parse_grid_csv(text);

  REQUIRE(back.importance_axis.size() == 5);
  REQUIRE(back.sparsity_axis.size() == 3);
  CHECK(back.meta.n_features == 6);
  CHECK(back.meta.embedding_dim == 3);
  CHECK(back.meta.config_hash == grid.meta.config_hash);
  for (int ip = 0; ip < 3; ip++) {
    CHECK(back.sparsity_axis[ip] == doctest::Approx(grid.sparsity_axis[ip]).epsilon(1e-11));
    for (int iv = 0; iv < 5; iv++) {
      const PhaseCell& a = grid.cell(ip, iv);
      const PhaseCell& b = back.cell(ip, iv);
      REQUIRE(b.c1_analytic.has_value());
      CHECK(*b.c1_analytic == doctest::Approx(*a.c1_analytic).epsilon(1e-11));
      CHECK_FALSE(b.c1_empirical.has_value());
      CHECK(*b.phase == *a.phase);
    }
  }
  // Writing the parsed grid back is byte-identical (formatting is pinned).
  CHECK(write_grid_csv(back) == text);
}

TEST_CASE("grid CSV parser rejects malformed input") {
  const PhaseGrid grid = analytic_phase_grid(4, 2, {0.5, 2.0}, {0.5, 1.0});
  const std::string good = write_grid_csv(grid);

  // Header must match exactly.
  CHECK_THROWS_AS(parse_grid_csv("V;p;k\n"), IoError);
  CHECK_THROWS_AS(parse_grid_csv(""), IoError);

  // k must equal 9/(5p) per row.
  std::string bad_k = "V,p,k,C1_analytic,C1_empirical,phase\n";
  bad_k += "0.5,1,2.4,0.5,,polysemantic\n";
  CHECK_THROWS_AS(parse_grid_csv(bad_k), IoError);

  // Capacities outside [0, 1] are rejected.
  std::string bad_c = "V,p,k,C1_analytic,C1_empirical,phase\n";
  bad_c += "0.5,1,1.8,1.5,,polysemantic\n";
  CHECK_THROWS_AS(parse_grid_csv(bad_c), IoError);

  // Wrong column count.
  CHECK_THROWS_AS(parse_grid_csv("V,p,k,C1_analytic,C1_empirical,phase\n1,1,1.8\n"), IoError);

  // Incomplete grids (a missing cell) and duplicates are rejected.
  std::string missing = good;
  const size_t last_row = missing.rfind('\n', missing.size() - 2);
  missing.erase(last_row + 1);
  CHECK_THROWS_AS(parse_grid_csv(missing), IoError);

  std::string dup = good;
  const size_t first_row = dup.find('\n', dup.find("phase")) + 1;
  const size_t second_row = dup.find('\n', first_row) + 1;
  dup += dup.substr(first_row, second_row - first_row);
  CHECK_THROWS_AS(parse_grid_csv(dup), IoError);
}

TEST_CASE("marching squares hand cases") {
  // Horizontal interface: one segment across the square at y = 0.5.
  const std::vector<double> ramp = {0.0, 0.0, 1.0, 1.0};
  const auto segs = marching_squares(ramp, 2, 2, 0.5);
  REQUIRE(segs.size() == 1);
  CHECK(segs[0].y0 == doctest::Approx(0.5));
  CHECK(segs[0].y1 == doctest::Approx(0.5));
  CHECK(std::min(segs[0].x0, segs[0].x1) == doctest::Approx(0.0));
  CHECK(std::max(segs[0].x0, segs[0].x1) == doctest::Approx(1.0));

  // Interpolation position follows the values: crossing at t = 0.25.
  const std::vector<double> skew = {0.0, 0.0, 2.0, 2.0};
  const auto segs2 = marching_squares(skew, 2, 2, 0.5);
  REQUIRE(segs2.size() == 1);
  CHECK(segs2[0].y0 == doctest::Approx(0.25));

  // Saddle: the center average (0.5) picks the diagonal pairing. High
  // corners sit at top-left and bottom-right; below the center value they
  // stay connected (contours cut off the top-right and bottom-left corners),
  // above it they are enclosed individually.
  const std::vector<double> saddle = {1.0, 0.0, 0.0, 1.0};
  const auto lo = marching_squares(saddle, 2, 2, 0.4);
  const auto hi = marching_squares(saddle, 2, 2, 0.6);
  REQUIRE(lo.size() == 2);
  REQUIRE(hi.size() == 2);
  const auto edge_of = [](double x, double y) -> char {
    if (y == 0.0) return 't';
    if (y == 1.0) return 'b';
    return x == 0.0 ? 'l' : 'r';
  };
  const auto pairings = [&](const std::vector<ContourSegment>& segs) {
    std::set<std::string> out;
    for (const ContourSegment& s : segs) {
      std::string p{edge_of(s.x0, s.y0), edge_of(s.x1, s.y1)};
      std::sort(p.begin(), p.end());
      out.insert(p);
    }
    return out;
  };
  CHECK(pairings(lo) == std::set<std::string>{"rt", "bl"});
  CHECK(pairings(hi) == std::set<std::string>{"lt", "br"});

  // Level outside the data range: nothing to draw.
  CHECK(marching_squares(ramp, 2, 2, 2.0).empty());
  // Non-finite corner masks the square out.
  const std::vector<double> masked = {std::nan(""), 0.0, 1.0, 1.0};
  CHECK(marching_squares(masked, 2, 2, 0.5).empty());
  // Degenerate lattice: no squares at all.
  CHECK(marching_squares({1.0, 0.0}, 2, 1, 0.5).empty());
}

TEST_CASE("contours on an analytic grid stay inside the lattice") {
  const std::vector<double> vs = log_spaced(0.1, 10.0, 12);
  const std::vector<double> ps = log_spaced(0.02, 1.0, 10);
  const PhaseGrid grid = analytic_phase_grid(6, 3, vs, ps);
  std::vector<double> values(grid.cells.size());
  for (size_t i = 0; i < grid.cells.size(); i++) values[i] = *grid.cells[i].c1_analytic;
  const auto segs = marching_squares(values, 12, 10, 0.47);
  CHECK(segs.size() > 0);
  for (const ContourSegment& s : segs) {
    for (double x : {s.x0, s.x1}) {
      CHECK(x >= 0.0);
      CHECK(x <= 11.0);
    }
    for (double y : {s.y0, s.y1}) {
      CHECK(y >= 0.0);
      CHECK(y <= 9.0);
    }
  }
}

TEST_CASE("config hash separates configurations") {
  const std::vector<double> vs = {0.5, 2.0};
  const std::vector<double> ps = {0.5, 1.0};
  TrainConfig base;
  const std::uint64_t h0 = sweep_config_hash(ModelFamily::kRegression,
                                             Nonlinearity::kQuadratic, 6, 3, vs, ps, base);
  CHECK(h0 == sweep_config_hash(ModelFamily::kRegression, Nonlinearity::kQuadratic,
                                6, 3, vs, ps, base));

  TrainConfig steps = base;
  steps.steps += 1;
  CHECK(h0 != sweep_config_hash(ModelFamily::kRegression, Nonlinearity::kQuadratic,
                                6, 3, vs, ps, steps));
  TrainConfig seed = base;
  seed.seed += 1;
  CHECK(h0 != sweep_config_hash(ModelFamily::kRegression, Nonlinearity::kQuadratic,
                                6, 3, vs, ps, seed));
  CHECK(h0 != sweep_config_hash(ModelFamily::kAutoencoder, Nonlinearity::kQuadratic,
                                6, 3, vs, ps, base));
  CHECK(h0 != sweep_config_hash(ModelFamily::kRegression, Nonlinearity::kRelu,
                                6, 3, vs, ps, base));
  CHECK(h0 != sweep_config_hash(ModelFamily::kRegression, Nonlinearity::kQuadratic,
                                7, 3, vs, ps, base));
  const std::vector<double> vs2 = {0.5, 2.0 + 1e-6};
  CHECK(h0 != sweep_config_hash(ModelFamily::kRegression, Nonlinearity::kQuadratic,
                                6, 3, vs2, ps, base));
}

TEST_CASE("empirical sweeps are deterministic across worker counts") {
  const std::vector<double> vs = {1.0};
  const std::vector<double> ps = {0.5, 1.0};

  SweepOptions one = tiny_sweep_options(19);
  const PhaseGrid a = empirical_phase_grid(ModelFamily::kRegression,
                                           Nonlinearity::kQuadratic, 2, 1, vs, ps, one);
  SweepOptions two = tiny_sweep_options(19);
  two.jobs = 2;
  const PhaseGrid b = empirical_phase_grid(ModelFamily::kRegression,
                                           Nonlinearity::kQuadratic, 2, 1, vs, ps, two);
  REQUIRE(a.cells.size() == 2);
  for (size_t i = 0; i < a.cells.size(); i++) {
    REQUIRE(a.cells[i].c1_empirical.has_value());
    REQUIRE(b.cells[i].c1_empirical.has_value());
    CHECK(*a.cells[i].c1_empirical == *b.cells[i].c1_empirical);  // bitwise
    CHECK_FALSE(a.cells[i].diverged);
    CHECK_FALSE(a.cells[i].c1_analytic.has_value());
  }
  CHECK(a.meta.config_hash == sweep_config_hash(ModelFamily::kRegression,
                                                Nonlinearity::kQuadratic, 2, 1, vs, ps,
                                                one.train));
}

TEST_CASE("sub-rectangle sweeps reproduce full-sweep cells") {
  const std::vector<double> vs = {0.5, 2.0};
  const std::vector<double> ps = {0.5, 1.0};
  SweepOptions full = tiny_sweep_options(23);
  const PhaseGrid whole = empirical_phase_grid(ModelFamily::kRegression,
                                               Nonlinearity::kQuadratic, 2, 1, vs, ps, full);

  SweepOptions rect = tiny_sweep_options(23);
  rect.ip_lo = 1;
  rect.ip_hi = 1;
  rect.iv_lo = 0;
  rect.iv_hi = 1;
  const PhaseGrid part = empirical_phase_grid(ModelFamily::kRegression,
                                              Nonlinearity::kQuadratic, 2, 1, vs, ps, rect);
  CHECK_FALSE(part.cell(0, 0).c1_empirical.has_value());  // outside the rectangle
  CHECK_FALSE(part.cell(0, 1).c1_empirical.has_value());
  for (int iv = 0; iv < 2; iv++) {
    REQUIRE(part.cell(1, iv).c1_empirical.has_value());
    CHECK(*part.cell(1, iv).c1_empirical == *whole.cell(1, iv).c1_empirical);
  }
}

TEST_CASE("checkpoints resume and survive stale lines") {
  const std::vector<double> vs = {1.0};
  const std::vector<double> ps = {0.5, 1.0};
  const fs::path ck = temp_file("resume.jsonl");
  fs::remove(ck);

  SweepOptions opts = tiny_sweep_options(19);
  opts.checkpoint_path = ck.string();
  const std::uint64_t hash = sweep_config_hash(ModelFamily::kRegression,
                                               Nonlinearity::kQuadratic, 2, 1, vs, ps,
                                               opts.train);

  // Pre-seed cell 0 with a sentinel value under the correct hash, plus a
  // stale line (wrong hash) for cell 1 that must be ignored.
  {
    std::ofstream out(ck);
    out << "{\"V\":1,\"c1\":0.123,\"cell\":0,\"diverged\":false,\"hash\":\""
        << hash << "\",\"p\":0.5}\n";
    out << "{\"V\":1,\"c1\":0.456,\"cell\":1,\"diverged\":false,\"hash\":\""
        << (hash + 1) << "\",\"p\":1}\n";
    out << "not json at all\n";
  }

  const PhaseGrid grid = empirical_phase_grid(ModelFamily::kRegression,
                                              Nonlinearity::kQuadratic, 2, 1, vs, ps, opts);
  REQUIRE(grid.cells[0].c1_empirical.has_value());
  CHECK(*grid.cells[0].c1_empirical == 0.123);  // adopted, not retrained
  REQUIRE(grid.cells[1].c1_empirical.has_value());
  CHECK(*grid.cells[1].c1_empirical != 0.456);  // stale line rejected

  // The rewritten checkpoint is canonical: a second no-op resume leaves the
  // file byte-identical.
  const std::string after_first = slurp(ck);
  CHECK(after_first.find("0.123") != std::string::npos);
  CHECK(after_first.find("not json") == std::string::npos);
  empirical_phase_grid(ModelFamily::kRegression, Nonlinearity::kQuadratic, 2, 1, vs, ps,
                       opts);
  CHECK(slurp(ck) == after_first);
  fs::remove(ck);
}

TEST_CASE("heatmap rendering") {
  const PhaseGrid grid =
      analytic_phase_grid(6, 3, log_spaced(0.1, 10.0, 8), log_spaced(0.05, 1.0, 6));
  const std::string svg = render_heatmap(grid, GridChannel::kAnalytic);
  CHECK(svg.find("<svg") == 0);
  CHECK(svg.find("</svg>") != std::string::npos);
  CHECK(svg.find("width=\"720\"") != std::string::npos);
  CHECK(svg.find("<rect") != std::string::npos);
  CHECK(svg.find("importance V") != std::string::npos);
  CHECK(svg.find("sparsity p") != std::string::npos);
  // Two phase-boundary contours plus the k = 3 guide.
  CHECK(svg.find("#ffffff") != std::string::npos);
  CHECK(svg.find("stroke-dasharray") != std::string::npos);

  HeatmapStyle style;
  style.width = 400;
  style.height = 300;
  style.title = "custom title";
  const std::string small = render_heatmap(grid, GridChannel::kAnalytic, style);
  CHECK(small.find("width=\"400\"") != std::string::npos);
  CHECK(small.find("custom title") != std::string::npos);

  // Missing channel values render as gaps, not crashes.
  const std::string empty_channel = render_heatmap(grid, GridChannel::kEmpirical);
  CHECK(empty_channel.find("<svg") == 0);
}

}  // TEST_SUITE
