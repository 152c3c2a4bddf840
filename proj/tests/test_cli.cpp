#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>

// Binary path injected by the build so the suite exercises the real CLI.
#ifndef CAPLAB_CLI_PATH
#error "CAPLAB_CLI_PATH must point at the caplab binary"
#endif

namespace fs = std::filesystem;

namespace {

struct CmdResult {
  int exit_code = -1;
  std::string out;  // stdout
  std::string err;  // stderr
};

std::string slurp(const fs::path& path) {
  std::ifstream in(path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void spit(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  out << text;
}

fs::path scratch_dir() {
  const fs::path dir = fs::temp_directory_path() / "caplab_cli_suite";
  fs::create_directories(dir);
  return dir;
}

// Runs `caplab <args>` through the shell, optionally feeding stdin.
CmdResult run_cli(const std::string& args, const std::string& stdin_text = "",
                  const std::string& env_prefix = "") {
  const fs::path dir = scratch_dir();
  const fs::path out_path = dir / "stdout.txt";
  const fs::path err_path = dir / "stderr.txt";
  std::string cmd = env_prefix + CAPLAB_CLI_PATH " " + args;
  if (!stdin_text.empty()) {
    const fs::path in_path = dir / "stdin.txt";
    spit(in_path, stdin_text);
    cmd += " < " + in_path.string();
  }
  cmd += " > " + out_path.string() + " 2> " + err_path.string();
  const int status = std::system(cmd.c_str());
  CmdResult res;
  res.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  res.out = slurp(out_path);
  res.err = slurp(err_path);
  return res;
}

bool contains(const std::string& text, const std::string& needle) {
  return text.find(needle) != std::string::npos;
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("capacity from stdin") {
  const CmdResult res = run_cli("capacity --matrix -", "1,2\n0.5,-0.5\n");
  CHECK(res.exit_code == 0);
  CHECK(contains(res.out, "capacities: 0.5,0.5"));
  CHECK(contains(res.out, "total: 1"));
}

TEST_CASE("capacity alt and monte carlo modes") {
  const fs::path m = scratch_dir() / "antipodal.csv";
  spit(m, "1,2\n0.5,-0.5\n");

  const CmdResult alt = run_cli("capacity --matrix " + m.string() + " --alt");
  CHECK(alt.exit_code == 0);
  CHECK(contains(alt.out, "capacities: 0.5,0.5"));

  const CmdResult mc = run_cli("capacity --matrix " + m.string() +
                               " --mc 20000 --feature 0 --p 1 --seed 5");
  CHECK(mc.exit_code == 0);
  const size_t pos = mc.out.find("mc_capacity: ");
  REQUIRE(pos != std::string::npos);
  // Exact capacity is 0.5; the sampled correlation lands nearby.
  CHECK(std::stod(mc.out.substr(pos + 13)) == doctest::Approx(0.5).epsilon(0.1));
}

TEST_CASE("solve prints the allocation") {
  const CmdResult res = run_cli("solve --v 1,1,1,1,1,1 --d 3 --k 9");
  CHECK(res.exit_code == 0);
  CHECK(contains(res.out, "\"lagrange\": 1.6"));
  CHECK(contains(res.out, "\"D\": 3"));
  CHECK(contains(res.out, "0.5"));
  CHECK(contains(res.out, "polysemantic"));

  // --p is the sparsity spelling of the same instance: k = 9/(5*0.2) = 9.
  const CmdResult viap = run_cli("solve --v 1,1,1,1,1,1 --d 3 --p 0.2");
  CHECK(viap.exit_code == 0);
  CHECK(viap.out == res.out);
}

TEST_CASE("realize feeds back into capacity") {
  const fs::path dir = scratch_dir();
  const fs::path w = dir / "realized.csv";
  const CmdResult made =
      run_cli("realize --c 0.5,0.5,0.5,0.5 --d 2 --out " + w.string());
  CHECK(made.exit_code == 0);
  const CmdResult cap = run_cli("capacity --matrix " + w.string());
  CHECK(cap.exit_code == 0);
  CHECK(contains(cap.out, "capacities: 0.5,0.5,0.5,0.5"));
  CHECK(contains(cap.out, "total: 2"));
}

TEST_CASE("solve piped through realize via json") {
  const fs::path dir = scratch_dir();
  const fs::path sol = dir / "solution.json";
  const fs::path w = dir / "from_solution.csv";
  CHECK(run_cli("solve --v 2,1,1,1 --d 2 --k 9 --out " + sol.string()).exit_code == 0);
  CHECK(run_cli("realize --json " + sol.string() + " --out " + w.string()).exit_code == 0);

  const CmdResult ana = run_cli("analyze --matrix " + w.string());
  CHECK(ana.exit_code == 0);
  CHECK(contains(ana.out, "\"is_efficient\": true"));
  CHECK(contains(ana.out, "\"blocks\""));
}

TEST_CASE("loss reports both forms") {
  const CmdResult res = run_cli("loss --matrix - --v 1,1 --k 9", "1,2\n0.5,-0.5\n");
  CHECK(res.exit_code == 0);
  CHECK(contains(res.out, "\"closed_form\": 9.25"));
  CHECK(contains(res.out, "\"capacity_form\": 9.25"));
}

TEST_CASE("train writes deterministic artifacts") {
  const fs::path dir = scratch_dir();
  const fs::path cfg = dir / "train.json";
  spit(cfg, "{\"family\":\"regression\",\"nonlinearity\":\"quadratic\","
            "\"n\":2,\"d\":1,\"v\":[1,1],\"p\":0.2,"
            "\"steps\":300,\"batch\":32,\"restarts\":1}");
  const fs::path out1 = dir / "run1";
  const fs::path out2 = dir / "run2";
  fs::remove_all(out1);
  fs::remove_all(out2);

  const CmdResult a =
      run_cli("train --config " + cfg.string() + " --out-dir " + out1.string() + " --seed 4");
  CHECK(a.exit_code == 0);
  CHECK(contains(a.out, "final_loss:"));
  CHECK(fs::exists(out1 / "result.json"));
  CHECK(fs::exists(out1 / "weights.csv"));
  CHECK(contains(slurp(out1 / "result.json"), "\"seed\": 4"));

  // Same seed through the environment: byte-identical result files.
  const CmdResult b = run_cli("train --config " + cfg.string() + " --out-dir " +
                                  out2.string(),
                              "", "CAPLAB_SEED=4 ");
  CHECK(b.exit_code == 0);
  CHECK(slurp(out2 / "result.json") == slurp(out1 / "result.json"));
  CHECK(slurp(out2 / "weights.csv") == slurp(out1 / "weights.csv"));
}

TEST_CASE("analytic sweep writes grid artifacts") {
  const fs::path dir = scratch_dir() / "sweep_analytic";
  fs::remove_all(dir);
  const CmdResult res = run_cli(
      "sweep --model quad-reg --analytic --n 6 --d 3 --grid 4x3 --out-dir " + dir.string());
  CHECK(res.exit_code == 0);
  CHECK(fs::exists(dir / "grid.csv"));
  CHECK(fs::exists(dir / "grid.svg"));
  const std::string csv = slurp(dir / "grid.csv");
  CHECK(contains(csv, "# meta: n=6 d=3 family=regression nonlinearity=quadratic"));
  CHECK(contains(csv, "V,p,k,C1_analytic,C1_empirical,phase"));
  CHECK(contains(slurp(dir / "grid.svg"), "<svg"));

  // Analytic sweeps exist only for the quadratic regression model.
  CHECK(run_cli("sweep --model relu-ae --analytic --n 6 --d 3 --out-dir " + dir.string())
            .exit_code == 1);
}

TEST_CASE("empirical sweep resumes from its checkpoint") {
  const fs::path dir = scratch_dir() / "sweep_empirical";
  fs::remove_all(dir);
  const std::string args =
      "sweep --model quad-reg --empirical --n 2 --d 1 --grid 1x2 "
      "--v-min 1 --v-max 1 --steps 200 --batch 32 --restarts 1 --jobs 1 --seed 9 "
      "--out-dir " + dir.string();
  const CmdResult first = run_cli(args);
  CHECK(first.exit_code == 0);
  CHECK(fs::exists(dir / "grid.csv"));
  CHECK(fs::exists(dir / "grid.svg"));
  CHECK(fs::exists(dir / "checkpoint.jsonl"));
  const std::string csv1 = slurp(dir / "grid.csv");
  const std::string ck1 = slurp(dir / "checkpoint.jsonl");

  const CmdResult second = run_cli(args);
  CHECK(second.exit_code == 0);
  CHECK(slurp(dir / "grid.csv") == csv1);
  CHECK(slurp(dir / "checkpoint.jsonl") == ck1);
}

TEST_CASE("exit codes and help") {
  CHECK(run_cli("--help").exit_code == 0);
  CHECK(run_cli("solve --help").exit_code == 0);

  // Usage errors: exit 2.
  CHECK(run_cli("solve --v 1,1 --d 1 --k 9 --bogus").exit_code == 2);
  CHECK(run_cli("nonsense-subcommand").exit_code == 2);
  // Unreadable input: exit 2 with a message.
  const CmdResult io = run_cli("capacity --matrix /nonexistent/matrix.csv");
  CHECK(io.exit_code == 2);
  CHECK_FALSE(io.err.empty());
  // Domain errors: exit 1.
  const CmdResult dom = run_cli("solve --v 1,1 --d 3 --k 9");
  CHECK(dom.exit_code == 1);
  CHECK_FALSE(dom.err.empty());
  // Invalid matrix payload on stdin is also a domain error.
  CHECK(run_cli("capacity --matrix -", "1,2\nnan,0.5\n").exit_code == 1);
}

}  // TEST_SUITE
