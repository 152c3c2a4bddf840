// caplab: command-line front end for the capacity toolkit.
//
// Subcommands: capacity, solve, realize, analyze, loss, train, sweep.
// Matrices travel as CSV ("D,N" header + D rows), structured results as
// JSON, and '-' means stdin/stdout. Exit codes: 0 success, 1 domain error,
// 2 I/O or argument error.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "caplab/capacity.hpp"
#include "caplab/distribution.hpp"
#include "caplab/errors.hpp"
#include "caplab/feasibility.hpp"
#include "caplab/geometry.hpp"
#include "caplab/matrix.hpp"
#include "caplab/phase_lab.hpp"
#include "caplab/quadratic.hpp"
#include "caplab/toy_models.hpp"

namespace {

using nlohmann::json;

std::vector<double> parse_double_list(const std::string& text) {
  std::vector<double> out;
  std::string token;
  std::istringstream in(text);
  while (std::getline(in, token, ',')) {
    try {
      size_t pos = 0;
      out.push_back(std::stod(token, &pos));
      if (pos != token.size()) throw std::invalid_argument(token);
    } catch (const std::exception&) {
      throw caplab::IoError("bad number '" + token + "' in list '" + text + "'");
    }
  }
  if (out.empty()) throw caplab::IoError("empty list '" + text + "'");
  return out;
}

caplab::EmbeddingMatrix load_matrix(const std::string& path) {
  if (path == "-") return caplab::read_matrix_csv(std::cin);
  return caplab::read_matrix_csv_file(path);
}

void write_text(const std::string& path, const std::string& text) {
  if (path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream out(path);
  if (!out) throw caplab::IoError("cannot write '" + path + "'");
  out << text;
  if (!out.good()) throw caplab::IoError("write failed for '" + path + "'");
}

std::string read_text(const std::string& path) {
  std::ostringstream buf;
  if (path == "-") {
    buf << std::cin.rdbuf();
  } else {
    std::ifstream in(path);
    if (!in) throw caplab::IoError("cannot open '" + path + "'");
    buf << in.rdbuf();
  }
  return buf.str();
}

json parse_json(const std::string& text, const std::string& what) {
  json j = json::parse(text, nullptr, false);
  if (j.is_discarded()) throw caplab::IoError("malformed JSON in " + what);
  return j;
}

std::string joined_g12(const std::vector<double>& values) {
  std::string out;
  for (size_t i = 0; i < values.size(); i++) {
    if (i) out += ",";
    out += caplab::format_g12(values[i]);
  }
  return out;
}

json solution_json(const caplab::AllocationSolution& sol) {
  json j;
  // Key named so the document doubles as a realize request.
  j["capacities"] = sol.capacities.values();
  j["D"] = sol.capacities.dimension_budget();
  j["norms"] = sol.norms;
  j["lagrange"] = sol.lagrange;
  j["kurtosis"] = sol.kurtosis;
  j["degenerate"] = sol.degenerate;
  std::vector<std::string> phases;
  phases.reserve(sol.phases.size());
  for (const auto phase : sol.phases) phases.emplace_back(caplab::to_string(phase));
  j["phases"] = phases;
  return j;
}

json decomposition_json(const caplab::BlockDecomposition& dec) {
  json blocks = json::array();
  for (const caplab::Block& block : dec.blocks) {
    blocks.push_back({{"features", block.features},
                      {"subspace_dim", block.subspace_dim},
                      {"scale", block.scale}});
  }
  return json{{"blocks", blocks},
              {"ignored", dec.ignored},
              {"ambiguous", dec.ambiguous},
              {"efficiency_gap", dec.residual_efficiency_gap},
              {"is_efficient", dec.is_efficient}};
}

caplab::ImportanceVector importances_from_json(const json& j) {
  if (!j.is_array() || j.empty()) throw caplab::IoError("'v' must be a non-empty array");
  std::vector<double> v;
  for (const auto& e : j) {
    if (!e.is_number()) throw caplab::IoError("'v' must contain numbers");
    v.push_back(e.get<double>());
  }
  return caplab::ImportanceVector(std::move(v));
}

// --- capacity ---------------------------------------------------------

struct CapacityArgs {
  std::string matrix_path;
  bool use_alt = false;
  long mc_samples = 0;
  int mc_feature = 0;
  double mc_p = 1.0;
  std::uint64_t seed = 0;
};

void run_capacity(const CapacityArgs& args) {
  const caplab::EmbeddingMatrix w = load_matrix(args.matrix_path);
  if (args.mc_samples > 0) {
    const caplab::InputDistribution dist(args.mc_p);
    const caplab::McCapacity mc = caplab::mc_correlation_capacity(
        w, args.mc_feature, dist, args.mc_samples, args.seed);
    std::cout << "mc_capacity: " << caplab::format_g12(mc.value) << "\n";
    if (mc.degenerate) std::cout << "degenerate: true\n";
    return;
  }
  const caplab::CapacityVector c =
      args.use_alt ? caplab::alt_capacity_vector(w) : caplab::capacity_vector(w);
  double total = 0.0;
  for (double v : c.values()) total += v;
  std::cout << "capacities: " << joined_g12(c.values()) << "\n";
  std::cout << "total: " << caplab::format_g12(total) << "\n";
}

// --- solve ------------------------------------------------------------

struct SolveArgs {
  std::string v_list;
  std::string json_path;
  int budget = 0;
  double k = 0.0;
  double p = 0.0;
  std::string out_path = "-";
};

void run_solve(const SolveArgs& args) {
  std::vector<double> v;
  int budget = args.budget;
  double k = args.k;
  if (!args.json_path.empty()) {
    const json j = parse_json(read_text(args.json_path), "solve problem");
    if (!j.contains("v") || !j.contains("D") || !j.contains("k")) {
      throw caplab::IoError("solve problem JSON needs keys v, D, k");
    }
    v = importances_from_json(j["v"]).values();
    budget = j["D"].get<int>();
    k = j["k"].get<double>();
  } else {
    if (args.v_list.empty()) throw caplab::IoError("solve: need --v or --json");
    v = parse_double_list(args.v_list);
    if (args.p > 0.0) k = caplab::kurtosis_of(args.p);
  }
  const caplab::AllocationSolution sol =
      caplab::solve_allocation(caplab::ImportanceVector(std::move(v)), budget, k);
  write_text(args.out_path, solution_json(sol).dump(2) + "\n");
}

// --- realize ----------------------------------------------------------

struct RealizeArgs {
  std::string c_list;
  std::string norms_list;
  std::string json_path;
  int budget = 0;
  std::string out_path = "-";
};

void run_realize(const RealizeArgs& args) {
  std::vector<double> c, norms;
  int budget = args.budget;
  if (!args.json_path.empty()) {
    const json j = parse_json(read_text(args.json_path), "realize request");
    if (!j.contains("capacities") || !j.contains("D")) {
      throw caplab::IoError("realize request JSON needs keys capacities, D");
    }
    for (const auto& e : j["capacities"]) c.push_back(e.get<double>());
    budget = j["D"].get<int>();
    if (j.contains("norms") && !j["norms"].is_null()) {
      for (const auto& e : j["norms"]) norms.push_back(e.get<double>());
    }
  } else {
    if (args.c_list.empty()) throw caplab::IoError("realize: need --c or --json");
    c = parse_double_list(args.c_list);
    if (!args.norms_list.empty()) norms = parse_double_list(args.norms_list);
  }
  const caplab::CapacityVector capacities(std::move(c), budget);
  const caplab::EmbeddingMatrix w =
      norms.empty() ? caplab::realize_capacities(capacities)
                    : caplab::realize_allocation(capacities, norms);
  std::ostringstream out;
  caplab::write_matrix_csv(w, out);
  write_text(args.out_path, out.str());
}

// --- analyze ----------------------------------------------------------

struct AnalyzeArgs {
  std::string matrix_path;
  double tol = 1e-6;
  std::string out_path = "-";
};

void run_analyze(const AnalyzeArgs& args) {
  const caplab::EmbeddingMatrix w = load_matrix(args.matrix_path);
  const caplab::BlockDecomposition dec = caplab::block_decomposition(w, args.tol);
  write_text(args.out_path, decomposition_json(dec).dump(2) + "\n");
}

// --- loss -------------------------------------------------------------

struct LossArgs {
  std::string matrix_path;
  std::string v_list;
  double k = 0.0;
  double p = 0.0;
  std::string out_path = "-";
};

void run_loss(const LossArgs& args) {
  const caplab::EmbeddingMatrix w = load_matrix(args.matrix_path);
  const caplab::ImportanceVector v(parse_double_list(args.v_list));
  const double k = args.p > 0.0 ? caplab::kurtosis_of(args.p) : args.k;
  const caplab::CapacityVector c = caplab::capacity_vector(w);
  std::vector<double> norms(w.features());
  for (int i = 0; i < w.features(); i++) norms[i] = w.feature(i).squaredNorm();
  json j;
  j["closed_form"] = caplab::expected_loss_closed_form(w, v, k);
  j["capacity_form"] = caplab::expected_loss_capacity_form(c, norms, v, k);
  j["capacities"] = c.values();
  j["norms"] = norms;
  write_text(args.out_path, j.dump(2) + "\n");
}

// --- train ------------------------------------------------------------

struct TrainArgs {
  std::string config_path;
  std::string out_dir = ".";
  std::uint64_t seed = 0;
  bool seed_given = false;
};

void run_train(const TrainArgs& args) {
  const json j = parse_json(read_text(args.config_path), "train config");
  for (const char* key : {"family", "nonlinearity", "n", "d", "v", "p"}) {
    if (!j.contains(key)) {
      throw caplab::IoError(std::string("train config JSON needs key '") + key + "'");
    }
  }
  const caplab::ModelSpec spec{caplab::parse_family(j["family"].get<std::string>()),
                               caplab::parse_nonlinearity(j["nonlinearity"].get<std::string>()),
                               j["n"].get<int>(), j["d"].get<int>(),
                               importances_from_json(j["v"])};
  const caplab::InputDistribution dist(j["p"].get<double>());
  caplab::TrainConfig config;
  config.steps = j.value("steps", config.steps);
  config.batch = j.value("batch", config.batch);
  config.learning_rate = j.value("learning_rate", config.learning_rate);
  config.beta1 = j.value("beta1", config.beta1);
  config.beta2 = j.value("beta2", config.beta2);
  config.adam_eps = j.value("adam_eps", config.adam_eps);
  config.weight_init_std = j.value("weight_init_std", config.weight_init_std);
  config.restarts = j.value("restarts", config.restarts);
  config.seed = j.value("seed", config.seed);
  if (args.seed_given) config.seed = args.seed;

  const caplab::TrainResult result = caplab::train(spec, dist, config);

  std::filesystem::create_directories(args.out_dir);
  const std::string weights_path = args.out_dir + "/weights.csv";
  caplab::write_matrix_csv_file(result.final_weights, weights_path);
  json out;
  out["final_loss"] = result.final_loss;
  out["steps_run"] = result.steps_run;
  out["seed"] = result.seed;
  out["capacity"] = result.capacity.values();
  std::vector<double> bias(result.bias.data(), result.bias.data() + result.bias.size());
  out["bias"] = bias;
  out["weights_csv"] = "weights.csv";  // sibling of result.json
  write_text(args.out_dir + "/result.json", out.dump(2) + "\n");

  double total = 0.0;
  for (double c : result.capacity.values()) total += c;
  std::cout << "final_loss: " << caplab::format_g12(result.final_loss) << "\n";
  std::cout << "capacity: " << joined_g12(result.capacity.values()) << "\n";
  std::cout << "total: " << caplab::format_g12(total) << "\n";
  std::cout << "wrote: " << args.out_dir << "/result.json " << weights_path << "\n";
}

// --- sweep ------------------------------------------------------------

struct SweepArgs {
  std::string model = "quad-reg";
  bool analytic = false;
  bool empirical = false;
  int n = 0;
  int d = 0;
  std::string grid = "25x25";
  double v_min = 1e-2, v_max = 1e2;
  double p_min = 1e-2, p_max = 1.0;
  std::string rect;
  std::string out_dir;
  std::uint64_t seed = 0;
  int jobs = 0;
  long steps = 50000;
  int batch = 1024;
  double learning_rate = 1e-3;
  int restarts = 3;
  double init_std = 0.3;
};

std::pair<caplab::ModelFamily, caplab::Nonlinearity> parse_model(const std::string& name) {
  const auto split = name.find('-');
  if (split != std::string::npos) {
    const std::string head = name.substr(0, split), tail = name.substr(split + 1);
    caplab::ModelFamily family;
    if (tail == "reg") {
      family = caplab::ModelFamily::kRegression;
    } else if (tail == "ae") {
      family = caplab::ModelFamily::kAutoencoder;
    } else {
      throw caplab::IoError("unknown model '" + name + "'");
    }
    if (head == "quad") return {family, caplab::Nonlinearity::kQuadratic};
    if (head == "relu") return {family, caplab::Nonlinearity::kRelu};
    if (head == "gelu") return {family, caplab::Nonlinearity::kGelu};
  }
  throw caplab::IoError("unknown model '" + name + "' (want e.g. quad-reg, relu-ae)");
}

void run_sweep(const SweepArgs& args) {
  int nv = 0, np = 0;
  if (std::sscanf(args.grid.c_str(), "%dx%d", &nv, &np) != 2 || nv < 1 || np < 1) {
    throw caplab::IoError("bad --grid '" + args.grid + "' (want VxP, e.g. 25x25)");
  }
  if (args.analytic == args.empirical) {
    throw caplab::IoError("sweep: pass exactly one of --analytic / --empirical");
  }
  const auto [family, nl] = parse_model(args.model);
  const std::vector<double> v_axis = caplab::log_spaced(args.v_min, args.v_max, nv);
  const std::vector<double> p_axis = caplab::log_spaced(args.p_min, args.p_max, np);

  caplab::PhaseGrid grid;
  caplab::GridChannel channel;
  if (args.analytic) {
    if (family != caplab::ModelFamily::kRegression ||
        nl != caplab::Nonlinearity::kQuadratic) {
      throw caplab::DomainError("analytic sweeps exist for the quadratic regression model only");
    }
    grid = caplab::analytic_phase_grid(args.n, args.d, v_axis, p_axis);
    channel = caplab::GridChannel::kAnalytic;
  } else {
    caplab::SweepOptions opts;
    opts.train.steps = args.steps;
    opts.train.batch = args.batch;
    opts.train.learning_rate = args.learning_rate;
    opts.train.restarts = args.restarts;
    opts.train.weight_init_std = args.init_std;
    opts.train.seed = args.seed;
    opts.jobs = args.jobs;
    std::filesystem::create_directories(args.out_dir);
    opts.checkpoint_path = args.out_dir + "/checkpoint.jsonl";
    if (!args.rect.empty()) {
      if (std::sscanf(args.rect.c_str(), "%d:%d:%d:%d", &opts.ip_lo, &opts.ip_hi,
                      &opts.iv_lo, &opts.iv_hi) != 4) {
        throw caplab::IoError("bad --rect '" + args.rect + "' (want ip_lo:ip_hi:iv_lo:iv_hi)");
      }
    }
    grid = caplab::empirical_phase_grid(family, nl, args.n, args.d, v_axis, p_axis, opts);
    channel = caplab::GridChannel::kEmpirical;
  }

  std::filesystem::create_directories(args.out_dir);
  caplab::write_grid_csv_file(grid, args.out_dir + "/grid.csv");
  write_text(args.out_dir + "/grid.svg", caplab::render_heatmap(grid, channel));
  std::cout << "wrote: " << args.out_dir << "/grid.csv " << args.out_dir << "/grid.svg";
  if (args.empirical) std::cout << " " << args.out_dir << "/checkpoint.jsonl";
  std::cout << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"feature capacity toolkit: allocation solver, constructive embeddings,"
               " block geometry, and superposition phase diagrams"};
  app.require_subcommand(1);

  CapacityArgs cap_args;
  auto* cap = app.add_subcommand("capacity", "per-feature capacities of a matrix");
  cap->add_option("--matrix", cap_args.matrix_path, "matrix CSV path ('-' = stdin)")
      ->required();
  cap->add_flag("--alt", cap_args.use_alt, "use the SVD-based definition");
  cap->add_option("--mc", cap_args.mc_samples,
                  "Monte-Carlo sample count (prints one feature's estimate)");
  cap->add_option("--feature", cap_args.mc_feature, "feature index for --mc (default 0)");
  cap->add_option("--p", cap_args.mc_p, "input sparsity for --mc (default 1)");
  cap->add_option("--seed", cap_args.seed, "RNG seed for --mc")->envname("CAPLAB_SEED");
  cap->callback([&] { run_capacity(cap_args); });

  SolveArgs solve_args;
  auto* solve = app.add_subcommand("solve", "optimal quadratic-model capacity allocation");
  solve->add_option("--v", solve_args.v_list, "importances, e.g. 1,1,1,1,1,1");
  solve->add_option("--d", solve_args.budget, "embedding dimension D");
  solve->add_option("--k", solve_args.k, "input kurtosis k");
  solve->add_option("--p", solve_args.p, "input sparsity (sets k = 9/(5p))")
      ->excludes("--k");
  solve->add_option("--json", solve_args.json_path,
                    "problem JSON {v:[...], D, k} ('-' = stdin)");
  solve->add_option("--out", solve_args.out_path, "output path (default stdout)");
  solve->callback([&] { run_solve(solve_args); });

  RealizeArgs realize_args;
  auto* realize = app.add_subcommand("realize", "construct an embedding with given capacities");
  realize->add_option("--c", realize_args.c_list, "capacities, e.g. 0.5,0.5");
  realize->add_option("--d", realize_args.budget, "embedding dimension D");
  realize->add_option("--norms", realize_args.norms_list,
                      "squared embedding norms (allocation mode)");
  realize->add_option("--json", realize_args.json_path,
                      "request JSON {capacities:[...], D, norms?:[...]} ('-' = stdin)");
  realize->add_option("--out", realize_args.out_path, "output matrix CSV (default stdout)");
  realize->callback([&] { run_realize(realize_args); });

  AnalyzeArgs analyze_args;
  auto* analyze = app.add_subcommand("analyze", "block decomposition of an efficient matrix");
  analyze->add_option("--matrix", analyze_args.matrix_path, "matrix CSV path ('-' = stdin)")
      ->required();
  analyze->add_option("--tol", analyze_args.tol, "efficiency/clustering tolerance");
  analyze->add_option("--out", analyze_args.out_path, "output path (default stdout)");
  analyze->callback([&] { run_analyze(analyze_args); });

  LossArgs loss_args;
  auto* loss = app.add_subcommand("loss", "expected quadratic-model loss of a matrix");
  loss->add_option("--matrix", loss_args.matrix_path, "matrix CSV path ('-' = stdin)")
      ->required();
  loss->add_option("--v", loss_args.v_list, "importances")->required();
  loss->add_option("--k", loss_args.k, "input kurtosis k");
  loss->add_option("--p", loss_args.p, "input sparsity (sets k = 9/(5p))")
      ->excludes("--k");
  loss->add_option("--out", loss_args.out_path, "output path (default stdout)");
  loss->callback([&] { run_loss(loss_args); });

  TrainArgs train_args;
  auto* train = app.add_subcommand("train", "train one toy model from a JSON config");
  train->add_option("--config", train_args.config_path, "config JSON path ('-' = stdin)")
      ->required();
  train->add_option("--out-dir", train_args.out_dir, "output directory (default .)");
  auto* train_seed = train->add_option("--seed", train_args.seed, "base seed override")
                         ->envname("CAPLAB_SEED");
  train->callback([&] {
    train_args.seed_given = train_seed->count() > 0 || std::getenv("CAPLAB_SEED");
    run_train(train_args);
  });

  SweepArgs sweep_args;
  auto* sweep = app.add_subcommand("sweep", "phase-diagram sweep over (V, p)");
  sweep->add_option("--model", sweep_args.model,
                    "quad-reg|relu-reg|gelu-reg|quad-ae|relu-ae|gelu-ae");
  sweep->add_flag("--analytic", sweep_args.analytic, "closed-form grid (quad-reg only)");
  sweep->add_flag("--empirical", sweep_args.empirical, "trained grid");
  sweep->add_option("--n", sweep_args.n, "number of features N")->required();
  sweep->add_option("--d", sweep_args.d, "embedding dimension D")->required();
  sweep->add_option("--grid", sweep_args.grid, "axis sizes VxP (default 25x25)");
  sweep->add_option("--v-min", sweep_args.v_min, "smallest V (default 0.01)");
  sweep->add_option("--v-max", sweep_args.v_max, "largest V (default 100)");
  sweep->add_option("--p-min", sweep_args.p_min, "smallest p (default 0.01)");
  sweep->add_option("--p-max", sweep_args.p_max, "largest p (default 1)");
  sweep->add_option("--rect", sweep_args.rect,
                    "sub-rectangle ip_lo:ip_hi:iv_lo:iv_hi (empirical only)");
  sweep->add_option("--out-dir", sweep_args.out_dir, "output directory")->required();
  sweep->add_option("--seed", sweep_args.seed, "sweep base seed")->envname("CAPLAB_SEED");
  sweep->add_option("--jobs", sweep_args.jobs, "worker threads (default: hardware)");
  sweep->add_option("--steps", sweep_args.steps, "training steps per cell");
  sweep->add_option("--batch", sweep_args.batch, "training batch size");
  sweep->add_option("--lr", sweep_args.learning_rate, "learning rate");
  sweep->add_option("--restarts", sweep_args.restarts, "training restarts per cell");
  sweep->add_option("--init-std", sweep_args.init_std, "weight init std");
  sweep->callback([&] { run_sweep(sweep_args); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  } catch (const caplab::IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const caplab::DomainError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
