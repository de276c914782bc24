#include <doctest.h>

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "oracles.hpp"

using namespace dsde;

namespace {

const char* kExplicitConfig = R"(
schema = 1

[model.matrices]
a = [0.0, 0.0]
B = [[-1.0, 0.0], [0.0, -1.0]]
C = [[0.0, 0.0], [0.0, 0.0]]
Sigma = [[1.0, 0.0], [0.0, 1.0]]
tau = 1.0
epsilon = 0.5

[history]
constant = [0.1, -0.2]

[grid]
steps_per_delay = 50
horizon = 2.0
)";

std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("config parser: sections, scalars, arrays, comments") {
  auto t = ConfigTable::parse(R"(
# top comment
schema = 1
name = "demo"   # trailing comment
flag = true

[block]
x = -2.5e-1
list = [1.0, 2.0, 3.0]
matrix = [[1.0, 0.0],
          [0.0, 1.0]]
)");
  CHECK(t.integer("schema") == 1);
  CHECK(t.string("name") == "demo");
  CHECK(t.boolean_or("flag", false));
  CHECK(t.number("block.x") == doctest::Approx(-0.25));
  CHECK(t.number_list("block.list") == std::vector<double>{1.0, 2.0, 3.0});
  Matrix m = t.matrix("block.matrix");
  CHECK((m - Matrix::Identity(2, 2)).norm() == 0.0);
}

TEST_CASE("config parser: malformed inputs carry line numbers") {
  CHECK_THROWS_AS(ConfigTable::parse("schema 1\n"), config_error);
  CHECK_THROWS_AS(ConfigTable::parse("s = \"unterminated\n"), config_error);
  CHECK_THROWS_AS(ConfigTable::parse("a = 1\na = 2\n"), config_error);
  CHECK_THROWS_AS(ConfigTable::parse("v = [1.0, 2.0\n"), config_error);
  CHECK_THROWS_AS(ConfigTable::parse("v = zebra\n"), config_error);
  try {
    ConfigTable::parse("ok = 1\nbroken\n");
  } catch (const config_error& e) {
    CHECK(std::string(e.what()).find("line 2") != std::string::npos);
  }
}

TEST_CASE("parse_run_config: explicit matrices") {
  RunConfig rc = parse_run_config(ConfigTable::parse(kExplicitConfig));
  CHECK_FALSE(rc.builtin_toggle);
  REQUIRE(rc.explicit_model.has_value());
  CHECK(rc.explicit_model->epsilon == 0.5);
  CHECK(rc.explicit_model->tau == 1.0);
  CHECK(rc.steps_per_delay == 50);
  CHECK(rc.horizon == 2.0);
  REQUIRE(rc.history.has_value());
  CHECK(rc.history->start()(1) == doctest::Approx(-0.2));

  ResolvedSetup setup = resolve_setup(rc);
  CHECK(setup.origin.norm() == 0.0);
  CHECK_FALSE(setup.nonlinear.has_value());
}

TEST_CASE("parse_run_config: missing tau names the field") {
  std::string text(kExplicitConfig);
  const auto pos = text.find("tau = 1.0");
  text.erase(pos, 9);
  try {
    parse_run_config(ConfigTable::parse(text));
    FAIL("expected a config error");
  } catch (const config_error& e) {
    CHECK(std::string(e.what()).find("model.matrices.tau") != std::string::npos);
  }
}

TEST_CASE("parse_run_config: exactly one model source") {
  std::string both(kExplicitConfig);
  both += "\n[model]\nbuiltin = \"toggle\"\n";
  CHECK_THROWS_AS(parse_run_config(ConfigTable::parse(both)), config_error);

  const char* neither = "schema = 1\n[grid]\nsteps_per_delay = 10\nhorizon = 1.0\n";
  CHECK_THROWS_AS(parse_run_config(ConfigTable::parse(neither)), config_error);
}

TEST_CASE("parse_run_config: schema gate and state names") {
  CHECK_THROWS_AS(
      parse_run_config(ConfigTable::parse("schema = 2\n[model]\nbuiltin = \"toggle\"\n")),
      config_error);
  CHECK_THROWS_AS(parse_run_config(ConfigTable::parse(
                      "schema = 1\n[model]\nbuiltin = \"toggle\"\nstate = \"x\"\n"
                      "[grid]\nsteps_per_delay = 10\nhorizon = 1.0\n")),
                  config_error);
}

TEST_CASE("resolve_setup: builtin toggle shifts the history into local "
          "coordinates") {
  auto t = ConfigTable::parse(R"(
schema = 1
[model]
builtin = "toggle"
state = "low_high"
[history]
constant = [0.0453, 1.1323]
[grid]
steps_per_delay = 100
horizon = 5.0
)");
  RunConfig rc = parse_run_config(t);
  ResolvedSetup setup = resolve_setup(rc);
  CHECK(std::abs(setup.origin(0) - 0.0498) <= 1e-4);
  CHECK(std::abs(setup.origin(1) - 1.0033) <= 1e-4);
  REQUIRE(setup.history.has_value());
  const Vector local = setup.history->start();
  CHECK(local(0) == doctest::Approx(0.0453 - setup.origin(0)));
  CHECK(local(1) == doctest::Approx(1.1323 - setup.origin(1)));
  CHECK(setup.nonlinear.has_value());
  CHECK(setup.states.size() == 3);
  CHECK((setup.to_global(setup.to_local(oracles::vec2(1.0, 2.0))) -
         oracles::vec2(1.0, 2.0))
            .norm() <= 1e-15);
}

TEST_CASE("format_g17 round-trips doubles exactly") {
  for (double v : {0.1, -3.0303e-17, 1.0 / 3.0, 1e300, 0.0, 2.5}) {
    const std::string s = format_g17(v);
    CHECK(std::strtod(s.c_str(), nullptr) == v);
  }
}

TEST_CASE("csv writers: mean file layout") {
  DelayModel m = oracles::brownian_model(2);
  TimeGrid grid = build_grid(1.0, 1.0, 4);
  MeanPath mean = solve_mean(m, HistoryPath::constant(oracles::vec2(1.0, 2.0), 1.0),
                             grid);
  auto path = std::filesystem::temp_directory_path() / "dsde_test_mean.csv";
  write_mean_csv(path.string(), mean);
  const std::string text = read_file(path);
  CHECK(text.find("t,m_1,m_2\n") == 0);
  CHECK(text.find("\r") == std::string::npos);  // LF only
  // 1 header + 9 rows (grid overhangs to 2*tau)
  CHECK(std::count(text.begin(), text.end(), '\n') == 10);
  std::filesystem::remove(path);
}

TEST_CASE("csv writers: covariance column layout") {
  DelayModel m = oracles::brownian_model(2);
  TimeGrid grid = build_grid(1.0, 1.0, 4);
  FField field = solve_F(m, grid);
  CovarianceColumn col = solve_covariance_column(m, field, 1.0);
  auto path = std::filesystem::temp_directory_path() / "dsde_test_col.csv";
  write_column_csv(path.string(), col);
  const std::string text = read_file(path);
  CHECK(text.find("s,rho_11,rho_12,rho_21,rho_22\n") == 0);
  CHECK(std::count(text.begin(), text.end(), '\n') == 10);
  std::filesystem::remove(path);
}

TEST_CASE("svg writer emits a well-formed document") {
  auto path = std::filesystem::temp_directory_path() / "dsde_test_plot.svg";
  SvgSeries s;
  s.label = "demo";
  for (int i = 0; i <= 10; ++i)
    s.points.emplace_back(i / 10.0, std::sin(i / 10.0));
  write_line_svg(path.string(), "demo", {s});
  const std::string text = read_file(path);
  CHECK(text.find("<svg") == 0);
  CHECK(text.find("</svg>") != std::string::npos);
  CHECK(text.find("polyline") != std::string::npos);
  std::filesystem::remove(path);
}
