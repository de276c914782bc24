#pragma once

#include <cctype>
#include <cmath>
#include <cstdlib>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "dsde/escape.hpp"
#include "dsde/lna.hpp"
#include "dsde/model.hpp"
#include "dsde/montecarlo.hpp"

namespace dsde {

/// Value in a run-configuration file: string, number, boolean, or a
/// (possibly nested) array.
struct ConfigValue {
  enum class Kind { string, number, boolean, array };
  Kind kind = Kind::number;
  std::string str;
  double num = 0.0;
  bool flag = false;
  std::vector<ConfigValue> items;
};

/// Parser for the TOML-style subset used by the run configs: `[section]`
/// headers, `key = value` pairs, `#` comments, quoted strings, numbers,
/// booleans, and arrays (including arrays of arrays, possibly spanning
/// lines). Keys are exposed flattened as `section.key`.
class ConfigTable {
 public:
  static ConfigTable parse(const std::string& text) {
    ConfigTable table;
    std::istringstream in(text);
    std::string line;
    std::string prefix;
    int lineno = 0;
    std::string pending_key;
    std::string pending_value;
    int pending_line = 0;

    auto fail = [](int ln, const std::string& msg) {
      throw config_error("config: line " + std::to_string(ln) + ": " + msg);
    };

    while (std::getline(in, line)) {
      ++lineno;
      strip_comment(line);
      std::string trimmed = trim(line);

      if (!pending_key.empty()) {  // continuing a multi-line array
        pending_value += " " + trimmed;
        if (bracket_balance(pending_value) > 0) continue;
        std::size_t pos = 0;
        ConfigValue v = parse_value(pending_value, pos, pending_line);
        skip_ws(pending_value, pos);
        if (pos != pending_value.size())
          fail(pending_line, "trailing characters after value");
        table.insert(pending_key, std::move(v), pending_line);
        pending_key.clear();
        pending_value.clear();
        continue;
      }

      if (trimmed.empty()) continue;
      if (trimmed.front() == '[') {
        if (trimmed.back() != ']')
          fail(lineno, "malformed section header " + trimmed);
        prefix = trim(trimmed.substr(1, trimmed.size() - 2));
        if (prefix.empty()) fail(lineno, "empty section name");
        continue;
      }
      const std::size_t eq = trimmed.find('=');
      if (eq == std::string::npos) fail(lineno, "expected key = value");
      std::string key = trim(trimmed.substr(0, eq));
      if (key.empty()) fail(lineno, "empty key");
      std::string value = trim(trimmed.substr(eq + 1));
      if (value.empty()) fail(lineno, "missing value for key " + key);
      const std::string full = prefix.empty() ? key : prefix + "." + key;
      if (value.front() == '[' && bracket_balance(value) > 0) {
        pending_key = full;
        pending_value = value;
        pending_line = lineno;
        continue;
      }
      std::size_t pos = 0;
      ConfigValue v = parse_value(value, pos, lineno);
      skip_ws(value, pos);
      if (pos != value.size()) fail(lineno, "trailing characters after value");
      table.insert(full, std::move(v), lineno);
    }
    if (!pending_key.empty())
      fail(pending_line, "unterminated array for key " + pending_key);
    return table;
  }

  bool has(const std::string& key) const { return values_.count(key) > 0; }

  bool has_prefix(const std::string& prefix) const {
    auto it = values_.lower_bound(prefix);
    return it != values_.end() &&
           (it->first == prefix ||
            it->first.compare(0, prefix.size() + 1, prefix + ".") == 0);
  }

  const ConfigValue& at(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end())
      throw config_error("config: missing required field '" + key + "'");
    return it->second;
  }

  double number(const std::string& key) const {
    const ConfigValue& v = at(key);
    if (v.kind != ConfigValue::Kind::number)
      throw config_error("config: field '" + key + "' must be a number");
    return v.num;
  }
  double number_or(const std::string& key, double fallback) const {
    return has(key) ? number(key) : fallback;
  }

  Index integer(const std::string& key) const {
    const double v = number(key);
    const Index n = static_cast<Index>(std::llround(v));
    if (std::abs(v - static_cast<double>(n)) > 1e-9)
      throw config_error("config: field '" + key + "' must be an integer");
    return n;
  }
  Index integer_or(const std::string& key, Index fallback) const {
    return has(key) ? integer(key) : fallback;
  }

  std::string string(const std::string& key) const {
    const ConfigValue& v = at(key);
    if (v.kind != ConfigValue::Kind::string)
      throw config_error("config: field '" + key + "' must be a string");
    return v.str;
  }
  std::string string_or(const std::string& key, const std::string& fallback) const {
    return has(key) ? string(key) : fallback;
  }

  bool boolean_or(const std::string& key, bool fallback) const {
    if (!has(key)) return fallback;
    const ConfigValue& v = at(key);
    if (v.kind != ConfigValue::Kind::boolean)
      throw config_error("config: field '" + key + "' must be true or false");
    return v.flag;
  }

  std::vector<double> number_list(const std::string& key) const {
    const ConfigValue& v = at(key);
    if (v.kind != ConfigValue::Kind::array)
      throw config_error("config: field '" + key + "' must be an array");
    std::vector<double> out;
    for (const auto& item : v.items) {
      if (item.kind != ConfigValue::Kind::number)
        throw config_error("config: field '" + key + "' must hold numbers");
      out.push_back(item.num);
    }
    return out;
  }

  Vector vector(const std::string& key) const {
    const auto nums = number_list(key);
    Vector v(static_cast<Index>(nums.size()));
    for (std::size_t i = 0; i < nums.size(); ++i)
      v(static_cast<Index>(i)) = nums[i];
    return v;
  }

  Matrix matrix(const std::string& key) const {
    const ConfigValue& v = at(key);
    if (v.kind != ConfigValue::Kind::array || v.items.empty())
      throw config_error("config: field '" + key +
                         "' must be an array of rows");
    const std::size_t rows = v.items.size();
    std::size_t cols = 0;
    for (const auto& row : v.items) {
      if (row.kind != ConfigValue::Kind::array)
        throw config_error("config: field '" + key +
                           "' must be an array of rows");
      if (cols == 0) cols = row.items.size();
      if (row.items.size() != cols || cols == 0)
        throw config_error("config: field '" + key + "' has ragged rows");
    }
    Matrix m(static_cast<Index>(rows), static_cast<Index>(cols));
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < cols; ++c) {
        const ConfigValue& cell = v.items[r].items[c];
        if (cell.kind != ConfigValue::Kind::number)
          throw config_error("config: field '" + key + "' must hold numbers");
        m(static_cast<Index>(r), static_cast<Index>(c)) = cell.num;
      }
    return m;
  }

  const std::map<std::string, ConfigValue>& entries() const { return values_; }

 private:
  void insert(const std::string& key, ConfigValue v, int lineno) {
    if (!values_.emplace(key, std::move(v)).second)
      throw config_error("config: line " + std::to_string(lineno) +
                         ": duplicate key '" + key + "'");
  }

  static std::string trim(const std::string& s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return s.substr(b, e - b);
  }

  static void strip_comment(std::string& line) {
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
      if (line[i] == '"') quoted = !quoted;
      if (line[i] == '#' && !quoted) {
        line.erase(i);
        return;
      }
    }
  }

  static int bracket_balance(const std::string& s) {
    int depth = 0;
    bool quoted = false;
    for (char c : s) {
      if (c == '"') quoted = !quoted;
      if (quoted) continue;
      if (c == '[') ++depth;
      if (c == ']') --depth;
    }
    return depth;
  }

  static void skip_ws(const std::string& s, std::size_t& pos) {
    while (pos < s.size() && std::isspace(static_cast<unsigned char>(s[pos])))
      ++pos;
  }

  static ConfigValue parse_value(const std::string& s, std::size_t& pos,
                                 int lineno) {
    skip_ws(s, pos);
    if (pos >= s.size())
      throw config_error("config: line " + std::to_string(lineno) +
                         ": missing value");
    ConfigValue v;
    const char c = s[pos];
    if (c == '"') {
      v.kind = ConfigValue::Kind::string;
      ++pos;
      while (pos < s.size() && s[pos] != '"') v.str += s[pos++];
      if (pos >= s.size())
        throw config_error("config: line " + std::to_string(lineno) +
                           ": unterminated string");
      ++pos;
      return v;
    }
    if (c == '[') {
      v.kind = ConfigValue::Kind::array;
      ++pos;
      skip_ws(s, pos);
      if (pos < s.size() && s[pos] == ']') {
        ++pos;
        return v;
      }
      for (;;) {
        v.items.push_back(parse_value(s, pos, lineno));
        skip_ws(s, pos);
        if (pos < s.size() && s[pos] == ',') {
          ++pos;
          continue;
        }
        if (pos < s.size() && s[pos] == ']') {
          ++pos;
          return v;
        }
        throw config_error("config: line " + std::to_string(lineno) +
                           ": expected ',' or ']' in array");
      }
    }
    if (s.compare(pos, 4, "true") == 0) {
      v.kind = ConfigValue::Kind::boolean;
      v.flag = true;
      pos += 4;
      return v;
    }
    if (s.compare(pos, 5, "false") == 0) {
      v.kind = ConfigValue::Kind::boolean;
      v.flag = false;
      pos += 5;
      return v;
    }
    char* end = nullptr;
    v.num = std::strtod(s.c_str() + pos, &end);
    if (end == s.c_str() + pos)
      throw config_error("config: line " + std::to_string(lineno) +
                         ": cannot parse value starting at '" +
                         s.substr(pos, 12) + "'");
    v.kind = ConfigValue::Kind::number;
    pos = static_cast<std::size_t>(end - s.c_str());
    return v;
  }

  std::map<std::string, ConfigValue> values_;
};

enum class ProcessKind { linear, nonlinear };

/// Parsed, validated run configuration (still unresolved: the toggle model's
/// stationary state and LNA are produced by resolve_setup).
struct RunConfig {
  int schema = 1;

  bool builtin_toggle = false;
  ToggleParams toggle;
  std::string toggle_state = "low_high";  ///< low_high | high_low | saddle
  std::optional<DelayModel> explicit_model;

  std::optional<HistoryPath> history;  ///< global coordinates for the builtin

  Index steps_per_delay = 0;  ///< grid N
  double horizon = 0.0;       ///< grid T (scan horizon for escape)

  std::optional<double> target_T;
  std::optional<Vector> target_Q;

  std::optional<double> disk_radius;
  std::optional<double> disk_delta_r;
  std::optional<Vector> disk_center;
  BoundaryHalf half = BoundaryHalf::full;

  std::optional<SimulationConfig> simulation;
  ProcessKind process = ProcessKind::linear;
  std::vector<double> moment_times;
};

inline RunConfig parse_run_config(const ConfigTable& t) {
  RunConfig rc;
  rc.schema = static_cast<int>(t.integer("schema"));
  if (rc.schema != 1)
    throw config_error("config: unsupported schema version " +
                       std::to_string(rc.schema));

  const bool has_builtin = t.has("model.builtin");
  const bool has_matrices = t.has_prefix("model.matrices");
  if (has_builtin == has_matrices)
    throw config_error(
        "config: exactly one model source required: either model.builtin or "
        "[model.matrices]");
  if (has_builtin) {
    const std::string name = t.string("model.builtin");
    if (name != "toggle")
      throw config_error("config: unknown builtin model '" + name + "'");
    rc.builtin_toggle = true;
    rc.toggle.beta = t.number_or("model.beta", rc.toggle.beta);
    rc.toggle.k = t.number_or("model.k", rc.toggle.k);
    rc.toggle.gamma = t.number_or("model.gamma", rc.toggle.gamma);
    rc.toggle.tau = t.number_or("model.tau", rc.toggle.tau);
    rc.toggle.system_size = t.number_or("model.system_size", rc.toggle.system_size);
    rc.toggle_state = t.string_or("model.state", "low_high");
    if (rc.toggle_state != "low_high" && rc.toggle_state != "high_low" &&
        rc.toggle_state != "saddle")
      throw config_error("config: model.state must be low_high, high_low, or saddle");
  } else {
    DelayModel m;
    m.a = t.vector("model.matrices.a");
    m.B = t.matrix("model.matrices.B");
    m.C = t.matrix("model.matrices.C");
    m.Sigma = t.matrix("model.matrices.Sigma");
    m.tau = t.number("model.matrices.tau");
    m.epsilon = t.number_or("model.matrices.epsilon", 1.0);
    if (!m.dims_consistent())
      throw config_error("config: [model.matrices] dimensions are inconsistent");
    rc.explicit_model = std::move(m);
  }

  const double tau = rc.builtin_toggle ? rc.toggle.tau : rc.explicit_model->tau;
  if (!(tau > 0.0)) throw config_error("config: field 'model.tau' must be positive");

  if (t.has("history.constant")) {
    rc.history = HistoryPath::constant(t.vector("history.constant"), tau);
  } else if (t.has("history.samples")) {
    const ConfigValue& v = t.at("history.samples");
    std::vector<double> times;
    std::vector<Vector> values;
    for (const auto& row : v.items) {
      if (row.kind != ConfigValue::Kind::array || row.items.size() < 2)
        throw config_error("config: history.samples rows must be [t, x_1, ...]");
      times.push_back(row.items[0].num);
      Vector x(static_cast<Index>(row.items.size()) - 1);
      for (std::size_t i = 1; i < row.items.size(); ++i)
        x(static_cast<Index>(i - 1)) = row.items[i].num;
      values.push_back(std::move(x));
    }
    try {
      rc.history = HistoryPath(std::move(times), std::move(values));
    } catch (const parameter_error& e) {
      throw config_error(std::string("config: history.samples: ") + e.what());
    }
  }

  rc.steps_per_delay = t.integer("grid.steps_per_delay");
  rc.horizon = t.number("grid.horizon");

  if (t.has_prefix("target")) {
    rc.target_T = t.number("target.T");
    rc.target_Q = t.vector("target.Q");
  }

  if (t.has_prefix("disk")) {
    rc.disk_radius = t.number("disk.radius");
    if (t.has("disk.delta_r")) rc.disk_delta_r = t.number("disk.delta_r");
    if (t.has("disk.center")) rc.disk_center = t.vector("disk.center");
    const std::string half = t.string_or("disk.half", "full");
    if (half == "full") rc.half = BoundaryHalf::full;
    else if (half == "upper") rc.half = BoundaryHalf::upper;
    else if (half == "lower") rc.half = BoundaryHalf::lower;
    else throw config_error("config: disk.half must be full, upper, or lower");
  }

  if (t.has_prefix("simulation")) {
    SimulationConfig sim;
    sim.steps_per_delay = t.integer_or("simulation.steps_per_delay", rc.steps_per_delay);
    sim.horizon = t.number_or("simulation.horizon", rc.horizon);
    sim.n_paths = t.integer("simulation.n_paths");
    sim.seed = static_cast<std::uint64_t>(t.integer_or("simulation.seed", 0));
    sim.record_stride = t.integer_or("simulation.record_stride", 1);
    if (t.has("simulation.noise_scale"))
      sim.noise_scale = t.number("simulation.noise_scale");
    rc.simulation = sim;
    const std::string process = t.string_or("simulation.process", "lna");
    if (process == "lna") rc.process = ProcessKind::linear;
    else if (process == "cle") rc.process = ProcessKind::nonlinear;
    else throw config_error("config: simulation.process must be lna or cle");
    if (t.has("simulation.moment_times"))
      rc.moment_times = t.number_list("simulation.moment_times");
  }
  return rc;
}

/// Everything a command needs to run: the linear model in its own (local)
/// coordinates, the history shifted into those coordinates, and the global
/// position of the local origin.
struct ResolvedSetup {
  DelayModel model;
  std::optional<HistoryPath> history;  ///< model coordinates
  Vector origin;                       ///< global coords of the local origin
  std::optional<NonlinearDelayModel> nonlinear;
  std::vector<StationaryState> states;

  Vector to_local(const Vector& global) const { return global - origin; }
  Vector to_global(const Vector& local) const { return local + origin; }
};

namespace detail {

inline std::vector<Vector> toggle_seeds(const ToggleParams& p) {
  const double s = p.beta / p.gamma;
  std::vector<Vector> seeds;
  auto add = [&](double x, double y) {
    Vector v(2);
    v << x, y;
    seeds.push_back(v);
  };
  add(0.05 * s, s);
  add(s, 0.05 * s);
  add(s / 3.0, s / 3.0);
  add(0.0, 0.0);
  add(s, s);
  return seeds;
}

}  // namespace detail

inline ResolvedSetup resolve_setup(const RunConfig& rc) {
  ResolvedSetup setup;
  if (!rc.builtin_toggle) {
    setup.model = *rc.explicit_model;
    setup.origin = Vector::Zero(setup.model.dim());
    setup.history = rc.history;
    return setup;
  }

  NonlinearDelayModel toggle = toggle_model(rc.toggle);
  StationarySearch search =
      find_stationary_states(toggle, detail::toggle_seeds(rc.toggle));
  const StationaryState* chosen = nullptr;
  for (const auto& st : search.states) {
    const bool saddle = st.stability == Stability::saddle;
    if (rc.toggle_state == "saddle" && saddle) chosen = &st;
    if (rc.toggle_state == "low_high" && !saddle && st.z(0) < st.z(1))
      chosen = &st;
    if (rc.toggle_state == "high_low" && !saddle && st.z(0) > st.z(1))
      chosen = &st;
  }
  if (!chosen)
    throw numeric_error("resolve: stationary-state search did not find the '" +
                        rc.toggle_state + "' state for these parameters");

  setup.model = build_lna(toggle, *chosen);
  setup.origin = chosen->z;
  setup.nonlinear = std::move(toggle);
  setup.states = search.states;
  if (rc.history) {
    std::vector<double> times = rc.history->times();
    std::vector<Vector> values;
    values.reserve(rc.history->values().size());
    for (const auto& v : rc.history->values())
      values.push_back(v - setup.origin);
    setup.history = HistoryPath(std::move(times), std::move(values));
  }
  return setup;
}

}  // namespace dsde
