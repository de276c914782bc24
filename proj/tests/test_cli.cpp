#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "oracles.hpp"

namespace fs = std::filesystem;

namespace {

struct CliResult {
  int code = -1;
  std::string out;
  std::string err;
};

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path fresh_dir(const std::string& tag) {
  fs::path dir = fs::temp_directory_path() / ("dsde_cli_" + tag);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

CliResult run_cli(const std::string& args, const fs::path& dir) {
  const fs::path out = dir / "stdout.txt";
  const fs::path err = dir / "stderr.txt";
  const std::string cmd = std::string(DSDE_CLI_PATH) + " " + args + " > " +
                          out.string() + " 2> " + err.string();
  const int status = std::system(cmd.c_str());
  CliResult r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = read_file(out);
  r.err = read_file(err);
  return r;
}

void write_config(const fs::path& file, const std::string& text) {
  std::ofstream out(file, std::ios::binary);
  out << text;
}

/// Parse "key = value" summary/record files.
std::map<std::string, std::string> parse_kv(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    const auto eq = line.find(" = ");
    if (eq != std::string::npos) kv[line.substr(0, eq)] = line.substr(eq + 3);
  }
  return kv;
}

/// CSV as vector of rows, each a vector of doubles (header skipped).
std::vector<std::vector<double>> parse_csv(const std::string& text) {
  std::vector<std::vector<double>> rows;
  std::istringstream in(text);
  std::string line;
  bool header = true;
  while (std::getline(in, line)) {
    if (header) {
      header = false;
      continue;
    }
    std::vector<double> row;
    std::istringstream cells(line);
    std::string cell;
    while (std::getline(cells, cell, ',')) row.push_back(std::atof(cell.c_str()));
    if (!row.empty()) rows.push_back(std::move(row));
  }
  return rows;
}

const char* kZeroConfig = R"(
schema = 1
[model.matrices]
a = [0.0, 0.0]
B = [[0.0, 0.0], [0.0, 0.0]]
C = [[0.0, 0.0], [0.0, 0.0]]
Sigma = [[0.0, 0.0], [0.0, 0.0]]
tau = 1.0
[history]
constant = [0.0, 0.0]
[grid]
steps_per_delay = 20
horizon = 2.0
)";

const char* kToggleSmall = R"(
schema = 1
[model]
builtin = "toggle"
state = "low_high"
[history]
constant = [0.0453, 1.1323]
[grid]
steps_per_delay = 100
horizon = 6.0
[disk]
radius = 0.3
delta_r = 0.03
)";

}  // namespace

TEST_CASE("cli: zero model gives an all-zero mean.csv and exit 0") {
  fs::path dir = fresh_dir("mean_zero");
  write_config(dir / "run.toml", kZeroConfig);
  auto r = run_cli("mean --config " + (dir / "run.toml").string() + " --out " +
                       dir.string(),
                   dir);
  CHECK(r.code == 0);
  auto rows = parse_csv(read_file(dir / "mean.csv"));
  REQUIRE(!rows.empty());
  for (const auto& row : rows)
    for (std::size_t i = 1; i < row.size(); ++i) CHECK(row[i] == 0.0);
  // run record present and ok
  auto kv = parse_kv(read_file(dir / "run_record.txt"));
  CHECK(kv["status"] == "ok");
  CHECK(kv["command"] == "mean");
}

TEST_CASE("cli: missing tau exits 2 and names the field") {
  fs::path dir = fresh_dir("missing_tau");
  std::string cfg(kZeroConfig);
  cfg.erase(cfg.find("tau = 1.0"), 9);
  write_config(dir / "run.toml", cfg);
  auto r = run_cli("mean --config " + (dir / "run.toml").string() + " --out " +
                       dir.string(),
                   dir);
  CHECK(r.code == 2);
  CHECK(r.err.find("error: config") != std::string::npos);
  CHECK(r.err.find("model.matrices.tau") != std::string::npos);
  // the record is emitted for failures too
  auto kv = parse_kv(read_file(dir / "run_record.txt"));
  CHECK(kv["status"] == "error");
}

TEST_CASE("cli: numeric failures exit 3") {
  fs::path dir = fresh_dir("numeric");
  std::string cfg(kZeroConfig);  // Sigma = 0 is rank deficient
  cfg += "\n[target]\nT = 1.0\nQ = [1.0, 0.0]\n";
  write_config(dir / "run.toml", cfg);
  auto r = run_cli("optimal-path --config " + (dir / "run.toml").string() +
                       " --out " + dir.string(),
                   dir);
  CHECK(r.code == 3);
  CHECK(r.err.find("error: numeric") != std::string::npos);
}

TEST_CASE("cli: brownian optimal path is the straight line with energy "
          "|q|^2/(2T)") {
  fs::path dir = fresh_dir("brownian_path");
  auto r = run_cli("optimal-path --config " +
                       std::string(DSDE_CONFIG_DIR) + "/brownian_path.toml" +
                       " --out " + dir.string(),
                   dir);
  CHECK(r.code == 0);
  const double energy = std::atof(read_file(dir / "energy.txt").c_str());
  const double expected = (1.0 * 1.0 + 0.5 * 0.5) / (2.0 * 2.0);
  CHECK(std::abs(energy - expected) <= 0.01 * expected);
  auto rows = parse_csv(read_file(dir / "path.csv"));
  REQUIRE(rows.size() == 401);  // t = 0..2 at delta = 0.005
  for (std::size_t i = 0; i < rows.size(); i += 50) {
    const double t = rows[i][0];
    CHECK(std::abs(rows[i][1] - t / 2.0 * 1.0) <= 2e-2);
    CHECK(std::abs(rows[i][2] - t / 2.0 * 0.5) <= 2e-2);
  }
}

TEST_CASE("cli: optimal path to the mean endpoint reproduces the mean") {
  fs::path dir = fresh_dir("path_on_mean");
  const std::string base = R"(
schema = 1
[model.matrices]
a = [0.0]
B = [[-1.0]]
C = [[0.0]]
Sigma = [[1.0]]
tau = 1.0
[history]
constant = [1.0]
[grid]
steps_per_delay = 100
horizon = 1.0
)";
  write_config(dir / "run.toml", base);
  auto r = run_cli("mean --config " + (dir / "run.toml").string() + " --out " +
                       dir.string(),
                   dir);
  REQUIRE(r.code == 0);
  auto mean_rows = parse_csv(read_file(dir / "mean.csv"));
  REQUIRE(mean_rows.size() >= 101);
  CHECK(std::abs(mean_rows[100][1] - std::exp(-1.0)) <= 3e-3);

  // target the solved mean endpoint: zero correction, zero energy
  write_config(dir / "run.toml",
               base + "[target]\nT = 1.0\nQ = [" +
                   dsde::format_g17(mean_rows[100][1]) + "]\n");
  r = run_cli("optimal-path --config " + (dir / "run.toml").string() +
                  " --out " + dir.string(),
              dir);
  REQUIRE(r.code == 0);
  auto path_rows = parse_csv(read_file(dir / "path.csv"));
  REQUIRE(path_rows.size() == 101);
  for (std::size_t i = 0; i < path_rows.size(); i += 10)
    CHECK(std::abs(path_rows[i][1] - mean_rows[i][1]) <= 1e-9);
  const double energy = std::atof(read_file(dir / "energy.txt").c_str());
  CHECK(std::abs(energy) <= 1e-12);
}

TEST_CASE("cli: cov on the small toggle writes diagonal and eigencurve") {
  fs::path dir = fresh_dir("cov_small");
  write_config(dir / "run.toml", kToggleSmall);
  auto r = run_cli("cov --config " + (dir / "run.toml").string() + " --out " +
                       dir.string() + " --threads 2",
                   dir);
  CHECK(r.code == 0);
  auto diag = parse_csv(read_file(dir / "cov_diag.csv"));
  auto eig = parse_csv(read_file(dir / "eigcurve.csv"));
  REQUIRE(diag.size() == 701);  // horizon 6 -> grid to 7, N=100
  REQUIRE(eig.size() == 701);
  // variances are nonnegative and grow from zero
  CHECK(diag[0][1] == 0.0);
  CHECK(diag[600][1] > 0.0);
  CHECK(diag[600][4] > diag[600][1]);  // second component dominates
}

TEST_CASE("cli: escape smoke run emits a parsable summary") {
  fs::path dir = fresh_dir("escape_small");
  write_config(dir / "run.toml", kToggleSmall);
  auto r = run_cli("escape --config " + (dir / "run.toml").string() +
                       " --out " + dir.string() + " --threads 2 --svg",
                   dir);
  CHECK(r.code == 0);
  auto kv = parse_kv(read_file(dir / "summary.txt"));
  CHECK(kv.count("T_opt") == 1);
  CHECK(kv.count("q_hat_global") == 1);
  CHECK(kv.count("energy") == 1);
  const double t_opt = std::atof(kv["T_opt"].c_str());
  CHECK(t_opt > 0.5);
  CHECK(t_opt < 4.0);
  CHECK(fs::exists(dir / "energy_matrix.csv"));
  CHECK(fs::exists(dir / "escape_path.csv"));
  CHECK(fs::exists(dir / "boundary.csv"));
  CHECK(fs::exists(dir / "energy_curve.csv"));
  CHECK(fs::exists(dir / "escape.svg"));
}

TEST_CASE("cli: simulate is deterministic for a fixed seed and responds to "
          "--seed") {
  fs::path dir = fresh_dir("simulate_det");
  std::string cfg(kToggleSmall);
  cfg += R"(
[simulation]
process = "cle"
steps_per_delay = 200
horizon = 2.0
n_paths = 50
seed = 7
record_stride = 10
moment_times = [1.0, 2.0]
)";
  write_config(dir / "run.toml", cfg);
  const std::string base = "simulate --config " + (dir / "run.toml").string();

  fs::path out1 = dir / "a", out2 = dir / "b", out3 = dir / "c";
  CHECK(run_cli(base + " --out " + out1.string(), dir).code == 0);
  CHECK(run_cli(base + " --out " + out2.string() + " --threads 2", dir).code == 0);
  CHECK(read_file(out1 / "moments.csv") == read_file(out2 / "moments.csv"));
  CHECK(read_file(out1 / "exits.csv") == read_file(out2 / "exits.csv"));

  CHECK(run_cli(base + " --out " + out3.string() + " --seed 8", dir).code == 0);
  CHECK(read_file(out1 / "moments.csv") != read_file(out3 / "moments.csv"));

  // raw paths only appear behind the explicit flag
  CHECK_FALSE(fs::exists(out1 / "paths.csv"));
  fs::path out4 = dir / "d";
  CHECK(run_cli(base + " --out " + out4.string() + " --dump-paths", dir).code == 0);
  CHECK(fs::exists(out4 / "paths.csv"));
}

TEST_CASE("cli: simulate with a single path skips moments with a warning") {
  fs::path dir = fresh_dir("simulate_single");
  std::string cfg(kZeroConfig);
  cfg += R"(
[simulation]
process = "lna"
steps_per_delay = 20
horizon = 1.0
n_paths = 1
seed = 3
moment_times = [1.0]
)";
  write_config(dir / "run.toml", cfg);
  auto r = run_cli("simulate --config " + (dir / "run.toml").string() +
                       " --out " + dir.string(),
                   dir);
  CHECK(r.code == 0);
  CHECK_FALSE(fs::exists(dir / "moments.csv"));
  CHECK(read_file(dir / "run_record.txt").find("moments were not estimated") !=
        std::string::npos);
}

TEST_CASE("cli: solver outputs are byte-identical across thread counts") {
  fs::path dir = fresh_dir("threads_det");
  write_config(dir / "run.toml", kToggleSmall);
  fs::path out1 = dir / "t1", out2 = dir / "t2";
  CHECK(run_cli("cov --config " + (dir / "run.toml").string() + " --out " +
                    out1.string() + " --threads 1",
                dir).code == 0);
  CHECK(run_cli("cov --config " + (dir / "run.toml").string() + " --out " +
                    out2.string() + " --threads 3",
                dir).code == 0);
  CHECK(read_file(out1 / "cov_diag.csv") == read_file(out2 / "cov_diag.csv"));
  CHECK(read_file(out1 / "eigcurve.csv") == read_file(out2 / "eigcurve.csv"));

  fs::path out3 = dir / "e1", out4 = dir / "e2";
  CHECK(run_cli("escape --config " + (dir / "run.toml").string() + " --out " +
                    out3.string() + " --threads 1",
                dir).code == 0);
  CHECK(run_cli("escape --config " + (dir / "run.toml").string() + " --out " +
                    out4.string() + " --threads 3",
                dir).code == 0);
  CHECK(read_file(out3 / "energy_matrix.csv") ==
        read_file(out4 / "energy_matrix.csv"));
  CHECK(read_file(out3 / "summary.txt") == read_file(out4 / "summary.txt"));
}

TEST_CASE("cli: usage errors exit 2, help exits 0") {
  fs::path dir = fresh_dir("usage");
  CHECK(run_cli("mean", dir).code == 2);            // missing --config
  CHECK(run_cli("no-such-command", dir).code == 2);
  CHECK(run_cli("--help", dir).code == 0);
}
