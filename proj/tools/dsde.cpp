// Command-line front end: mean | cov | optimal-path | escape | simulate.
// Every run writes its outputs plus a run_record.txt into --out.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "dsde/dsde.hpp"

namespace fs = std::filesystem;
using namespace dsde;

namespace {

struct CommonOpts {
  std::string config_path;
  std::string out_dir = ".";
  std::optional<std::uint64_t> seed;
  int threads = std::max(1u, std::thread::hardware_concurrency());
  bool svg = false;
};

std::string format_vector(const Vector& v) {
  std::string s = "[";
  for (Index i = 0; i < v.size(); ++i) {
    if (i) s += ", ";
    s += format_g17(v(i));
  }
  return s + "]";
}

std::string serialize_config_value(const ConfigValue& v) {
  switch (v.kind) {
    case ConfigValue::Kind::string:
      return "\"" + v.str + "\"";
    case ConfigValue::Kind::boolean:
      return v.flag ? "true" : "false";
    case ConfigValue::Kind::number:
      return format_g17(v.num);
    case ConfigValue::Kind::array: {
      std::string s = "[";
      for (std::size_t i = 0; i < v.items.size(); ++i) {
        if (i) s += ", ";
        s += serialize_config_value(v.items[i]);
      }
      return s + "]";
    }
  }
  return "";
}

/// Collects the reproducibility record emitted for every run.
class RunRecord {
 public:
  void set(const std::string& key, const std::string& value) {
    lines_.emplace_back(key, value);
  }
  void warn(const std::string& message) { warnings_.push_back(message); }
  void stage_ms(const std::string& name, double ms) {
    set("stage." + name + "_ms", format_g17(ms));
  }
  void output(const fs::path& file) {
    std::error_code ec;
    const auto size = fs::file_size(file, ec);
    set("output." + file.filename().string(),
        ec ? "?" : std::to_string(size) + " bytes");
  }

  void write(const fs::path& file, const std::string& status,
             const std::string& reason) const {
    std::ofstream out(file, std::ios::binary);
    out << "tool = dsde " << kVersion << "\n";
    out << "status = " << status << "\n";
    if (!reason.empty()) out << "reason = " << reason << "\n";
    for (const auto& [k, v] : lines_) out << k << " = " << v << "\n";
    for (std::size_t i = 0; i < warnings_.size(); ++i)
      out << "warning." << i << " = " << warnings_[i] << "\n";
  }

 private:
  std::vector<std::pair<std::string, std::string>> lines_;
  std::vector<std::string> warnings_;
};

struct Ctx {
  CommonOpts opts;
  fs::path out;
  ConfigTable table;
  RunConfig rc;
  ResolvedSetup setup;
  RunRecord record;

  template <typename Fn>
  void stage(const std::string& name, Fn&& fn) {
    const auto start = std::chrono::steady_clock::now();
    fn();
    const auto stop = std::chrono::steady_clock::now();
    record.stage_ms(name,
                    std::chrono::duration<double, std::milli>(stop - start).count());
  }

  fs::path file(const std::string& name) const { return out / name; }

  void note_output(const std::string& name) { record.output(file(name)); }

  const HistoryPath& history_local() const {
    if (!setup.history)
      throw config_error("config: this command requires a [history] block");
    return *setup.history;
  }
};

int execute(const std::string& command, const CommonOpts& opts,
            const std::function<void(Ctx&)>& body) {
  Ctx ctx;
  ctx.opts = opts;
  ctx.out = fs::path(opts.out_dir);
  std::error_code ec;
  fs::create_directories(ctx.out, ec);
  ctx.record.set("command", command);
  ctx.record.set("config_file", opts.config_path);
  ctx.record.set("threads", std::to_string(opts.threads));

  auto finish_error = [&](const std::string& kind, const std::string& what,
                          int code) {
    std::cerr << "error: " << kind << ": " << what << "\n";
    ctx.record.write(ctx.file("run_record.txt"), "error", kind + ": " + what);
    return code;
  };

  try {
    std::ifstream in(opts.config_path, std::ios::binary);
    if (!in) throw config_error("config: cannot open file " + opts.config_path);
    std::stringstream buffer;
    buffer << in.rdbuf();
    ctx.table = ConfigTable::parse(buffer.str());
    for (const auto& [k, v] : ctx.table.entries())
      ctx.record.set("config." + k, serialize_config_value(v));
    ctx.rc = parse_run_config(ctx.table);
    if (opts.seed && ctx.rc.simulation) ctx.rc.simulation->seed = *opts.seed;
    ctx.stage("resolve", [&] { ctx.setup = resolve_setup(ctx.rc); });
    ctx.record.set("origin", format_vector(ctx.setup.origin));
    for (const auto& st : ctx.setup.states)
      ctx.record.set(
          std::string("stationary_state.") +
              (st.stability == Stability::saddle ? "saddle" : "stable"),
          format_vector(st.z));
    body(ctx);
  } catch (const config_error& e) {
    return finish_error("config", e.what(), 2);
  } catch (const parameter_error& e) {
    return finish_error("config", e.what(), 2);
  } catch (const numeric_error& e) {
    return finish_error("numeric", e.what(), 3);
  } catch (const std::exception& e) {
    return finish_error("internal", e.what(), 3);
  }
  ctx.record.write(ctx.file("run_record.txt"), "ok", "");
  return 0;
}

std::vector<SvgSeries> component_series(const TimeGrid& grid,
                                        const std::vector<Vector>& values,
                                        Index count, const std::string& prefix) {
  static const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd"};
  const Index d = values.front().size();
  std::vector<SvgSeries> out;
  for (Index i = 0; i < d; ++i) {
    SvgSeries s;
    s.label = prefix + "_" + std::to_string(i + 1);
    s.color = palette[i % 4];
    for (Index j = 0; j < count; ++j)
      s.points.emplace_back(grid.time(j), values[static_cast<std::size_t>(j)](i));
    out.push_back(std::move(s));
  }
  return out;
}

int cmd_mean(const CommonOpts& opts, bool analytic_check) {
  return execute("mean", opts, [&](Ctx& ctx) {
    const TimeGrid grid =
        build_grid(ctx.setup.model.tau, ctx.rc.horizon, ctx.rc.steps_per_delay);
    MeanPath mean;
    ctx.stage("solve", [&] {
      mean = solve_mean(ctx.setup.model, ctx.history_local(), grid);
    });
    ctx.stage("write", [&] {
      write_mean_csv(ctx.file("mean.csv").string(), mean);
      ctx.note_output("mean.csv");
    });
    if (analytic_check) {
      MeanPath ref;
      ctx.stage("analytic", [&] {
        ref = solve_mean_analytic(ctx.setup.model, ctx.history_local(), grid);
      });
      double gap = 0.0;
      for (Index j = 0; j <= grid.last; ++j)
        gap = std::max(gap, (mean.at(j) - ref.at(j)).norm());
      write_mean_csv(ctx.file("mean_analytic.csv").string(), ref);
      ctx.note_output("mean_analytic.csv");
      ctx.record.set("analytic_sup_gap", format_g17(gap));
      std::cout << "analytic cross-check sup gap = " << format_g17(gap) << "\n";
    }
    if (ctx.opts.svg) {
      write_line_svg(ctx.file("mean.svg").string(), "mean path (local coordinates)",
                     component_series(grid, mean.values, grid.last + 1, "m"));
      ctx.note_output("mean.svg");
    }
    std::cout << "mean solved on " << grid.size() << " grid points; final |m| = "
              << format_g17(mean.at(grid.last).norm()) << "\n";
  });
}

int cmd_cov(const CommonOpts& opts) {
  return execute("cov", opts, [&](Ctx& ctx) {
    const TimeGrid grid =
        build_grid(ctx.setup.model.tau, ctx.rc.horizon, ctx.rc.steps_per_delay);
    FField field;
    CovarianceDiagonal diag;
    ctx.stage("forcing", [&] { field = solve_F(ctx.setup.model, grid); });
    ctx.stage("diagonal", [&] {
      diag = solve_covariance_diagonal(ctx.setup.model, field, grid,
                                       ctx.opts.threads);
    });
    ctx.stage("write", [&] {
      write_diagonal_csv(ctx.file("cov_diag.csv").string(), diag);
      write_eigcurve_csv(ctx.file("eigcurve.csv").string(), diag);
      ctx.note_output("cov_diag.csv");
      ctx.note_output("eigcurve.csv");
    });
    const Matrix& last = diag.at(grid.last);
    ctx.record.set("rho_final_diag",
                   format_vector(Vector(last.diagonal())));
    if (ctx.opts.svg) {
      std::vector<SvgSeries> var_series;
      const Index d = ctx.setup.model.dim();
      for (Index i = 0; i < d; ++i) {
        SvgSeries s;
        s.label = "var_" + std::to_string(i + 1);
        s.color = i == 0 ? "#1f77b4" : "#d62728";
        for (Index j = 0; j <= grid.last; ++j)
          s.points.emplace_back(grid.time(j), diag.at(j)(i, i));
        var_series.push_back(std::move(s));
      }
      write_line_svg(ctx.file("variances.svg").string(), "variances", var_series);
      SvgSeries eig;
      eig.label = "min eig of rho(t,t)^-1";
      for (Index j = 1; j <= grid.last; ++j) {
        auto [lmin, lmax] = detail::sym_eigen_range(diag.at(j));
        (void)lmin;
        if (lmax > 0) eig.points.emplace_back(grid.time(j), 1.0 / lmax);
      }
      write_line_svg(ctx.file("eigcurve.svg").string(),
                     "smallest eigenvalue of rho(t,t)^-1", {eig});
      ctx.note_output("variances.svg");
      ctx.note_output("eigcurve.svg");
    }
    auto [lmin, lmax] = detail::sym_eigen_range(last);
    (void)lmin;
    std::cout << "covariance diagonal solved; final variances = "
              << format_vector(Vector(last.diagonal()))
              << ", min eig of inverse = " << format_g17(1.0 / lmax) << "\n";
  });
}

int cmd_optimal_path(const CommonOpts& opts) {
  return execute("optimal-path", opts, [&](Ctx& ctx) {
    if (!ctx.rc.target_T || !ctx.rc.target_Q)
      throw config_error("config: optimal-path requires a [target] block");
    const TimeGrid grid =
        build_grid(ctx.setup.model.tau, ctx.rc.horizon, ctx.rc.steps_per_delay);
    const double T = *ctx.rc.target_T;
    const Vector q_local = ctx.setup.to_local(*ctx.rc.target_Q);

    MeanPath mean;
    FField field;
    CovarianceColumn column;
    TransitionPath path;
    ctx.stage("solve", [&] {
      mean = solve_mean(ctx.setup.model, ctx.history_local(), grid);
      field = solve_F(ctx.setup.model, grid);
      column = solve_covariance_column(ctx.setup.model, field, T);
      path = optimal_path(mean, column, column.at(column.t_index), q_local);
    });
    ctx.stage("write", [&] {
      write_path_csv(ctx.file("path.csv").string(), path.path);
      std::ofstream energy(ctx.file("energy.txt"), std::ios::binary);
      energy << format_g17(path.energy) << "\n";
      ctx.note_output("path.csv");
      ctx.note_output("energy.txt");
    });
    ctx.record.set("energy", format_g17(path.energy));
    ctx.record.set("terminal_local", format_vector(path.path.terminal()));
    ctx.record.set("terminal_global",
                   format_vector(ctx.setup.to_global(path.path.terminal())));
    if (ctx.opts.svg) {
      SvgSeries mean_s, path_s;
      mean_s.label = "mean";
      mean_s.color = "#888888";
      path_s.label = "optimal path";
      for (Index j = 0; j <= path.path.t_index; ++j) {
        mean_s.points.emplace_back(mean.at(j)(0), mean.at(j)(1));
        path_s.points.emplace_back(path.path.at(j)(0), path.path.at(j)(1));
      }
      write_line_svg(ctx.file("path.svg").string(),
                     "optimal transition path (local coordinates)",
                     {mean_s, path_s}, true);
      ctx.note_output("path.svg");
    }
    std::cout << "optimal path to " << format_vector(*ctx.rc.target_Q)
              << " at T = " << format_g17(T)
              << ": energy = " << format_g17(path.energy) << "\n";
  });
}

int cmd_escape(const CommonOpts& opts, const std::string& half_override) {
  return execute("escape", opts, [&](Ctx& ctx) {
    if (!ctx.rc.disk_radius || !ctx.rc.disk_delta_r)
      throw config_error(
          "config: escape requires a [disk] block with radius and delta_r");
    EscapeProblem problem;
    problem.grid =
        build_grid(ctx.setup.model.tau, ctx.rc.horizon, ctx.rc.steps_per_delay);
    problem.radius = *ctx.rc.disk_radius;
    problem.delta_r = *ctx.rc.disk_delta_r;
    problem.T_large = ctx.rc.horizon;
    problem.threads = ctx.opts.threads;
    problem.half = ctx.rc.half;
    if (half_override == "upper") problem.half = BoundaryHalf::upper;
    else if (half_override == "lower") problem.half = BoundaryHalf::lower;
    else if (half_override == "full") problem.half = BoundaryHalf::full;
    else if (!half_override.empty())
      throw config_error("config: --half must be full, upper, or lower");
    if (ctx.rc.disk_center) {
      problem.center = ctx.setup.to_local(*ctx.rc.disk_center);
    } else {
      if (!ctx.rc.builtin_toggle)
        throw config_error("config: missing required field 'disk.center'");
      problem.center = Vector::Zero(2);  // builtin: the stationary state
    }

    EscapeSolution sol;
    ctx.stage("optimize", [&] {
      sol = escape_optimize(ctx.setup.model, ctx.history_local(), problem);
    });

    Index excluded = 0;
    for (char e : sol.matrix.excluded) excluded += (e != 0);
    if (excluded > 0)
      ctx.record.warn(std::to_string(excluded) +
                      " scan times excluded by conditioning (early times)");

    ctx.stage("write", [&] {
      write_energy_matrix_csv(ctx.file("energy_matrix.csv").string(), sol.matrix);
      write_path_csv(ctx.file("escape_path.csv").string(), sol.path.path);
      write_boundary_csv(ctx.file("boundary.csv").string(), sol.matrix.points);
      // per-time minimum over the boundary
      std::vector<double> curve(sol.matrix.times.size());
      for (std::size_t r = 0; r < sol.matrix.times.size(); ++r)
        curve[r] = sol.matrix.excluded[r]
                       ? std::numeric_limits<double>::quiet_NaN()
                       : sol.matrix.entries.row(static_cast<Index>(r)).minCoeff();
      write_energy_curve_csv(ctx.file("energy_curve.csv").string(),
                             sol.matrix.times, curve, sol.matrix.excluded);

      std::ofstream summary(ctx.file("summary.txt"), std::ios::binary);
      summary << "T_opt = " << (sol.finite ? format_g17(sol.T_opt) : "inf") << "\n";
      summary << "T_argmin = " << format_g17(sol.T_argmin) << "\n";
      summary << "q_hat_local = " << format_vector(sol.q_hat) << "\n";
      summary << "q_hat_global = " << format_vector(ctx.setup.to_global(sol.q_hat))
              << "\n";
      summary << "energy = " << format_g17(sol.energy) << "\n";
      summary << "boundary_points = " << sol.matrix.points.size() << "\n";
      summary << "excluded_times = " << excluded << "\n";
      ctx.note_output("energy_matrix.csv");
      ctx.note_output("escape_path.csv");
      ctx.note_output("boundary.csv");
      ctx.note_output("energy_curve.csv");
      ctx.note_output("summary.txt");
    });
    ctx.record.set("T_opt", sol.finite ? format_g17(sol.T_opt) : "inf");
    ctx.record.set("q_hat_local", format_vector(sol.q_hat));
    ctx.record.set("q_hat_global", format_vector(ctx.setup.to_global(sol.q_hat)));
    ctx.record.set("energy", format_g17(sol.energy));

    if (ctx.opts.svg) {
      SvgSeries path_s, mean_s;
      path_s.label = "escape path";
      mean_s.label = "mean";
      mean_s.color = "#888888";
      for (Index j = 0; j <= sol.path.path.t_index; ++j)
        path_s.points.emplace_back(sol.path.path.at(j)(0), sol.path.path.at(j)(1));
      MeanPath mean = solve_mean(ctx.setup.model, ctx.history_local(), problem.grid);
      for (Index j = 0; j <= problem.grid.floor_index(problem.T_large); ++j)
        mean_s.points.emplace_back(mean.at(j)(0), mean.at(j)(1));
      write_line_svg(ctx.file("escape.svg").string(),
                     "optimal escape (local coordinates)",
                     {svg_circle(problem.center, problem.radius, "disk"), mean_s,
                      path_s},
                     true);
      ctx.note_output("escape.svg");
    }
    std::cout << "escape: T_opt = " << (sol.finite ? format_g17(sol.T_opt) : "inf")
              << ", q_hat (global) = "
              << format_vector(ctx.setup.to_global(sol.q_hat))
              << ", energy = " << format_g17(sol.energy) << "\n";
  });
}

int cmd_simulate(const CommonOpts& opts, bool dump_paths) {
  return execute("simulate", opts, [&](Ctx& ctx) {
    if (!ctx.rc.simulation)
      throw config_error("config: simulate requires a [simulation] block");
    SimulationConfig sim = *ctx.rc.simulation;
    sim.threads = ctx.opts.threads;
    ctx.record.set("seed", std::to_string(sim.seed));

    PathEnsemble ens(std::vector<double>{0.0}, 1, 1, 0, 1.0);
    bool nonlinear = ctx.rc.process == ProcessKind::nonlinear;
    Vector exit_center;
    if (nonlinear) {
      if (!ctx.setup.nonlinear)
        throw config_error("config: simulation.process = cle needs the builtin model");
      if (!ctx.rc.history)
        throw config_error("config: this command requires a [history] block");
      ctx.stage("simulate", [&] {
        ens = simulate_nonlinear(*ctx.setup.nonlinear, *ctx.rc.history, sim);
      });
      exit_center = ctx.rc.disk_center ? *ctx.rc.disk_center : ctx.setup.origin;
    } else {
      ctx.stage("simulate", [&] {
        ens = simulate_linear(ctx.setup.model, ctx.history_local(), sim);
      });
      exit_center = ctx.rc.disk_center ? ctx.setup.to_local(*ctx.rc.disk_center)
                                       : Vector::Zero(ctx.setup.model.dim());
    }
    ctx.record.set("n_paths", std::to_string(ens.n_paths()));
    if (ens.n_failed() > 0)
      ctx.record.warn(std::to_string(ens.n_failed()) +
                      " paths failed (non-finite states) and were frozen");
    if (ens.clamp_count() > 0)
      ctx.record.warn(std::to_string(ens.clamp_count()) +
                      " diffusion evaluations clamped a negative radicand");

    ctx.stage("write", [&] {
      if (!ctx.rc.moment_times.empty()) {
        if (sim.n_paths < 2) {
          ctx.record.warn("n_paths < 2: moments were not estimated");
          std::cerr << "warning: n_paths < 2: moments were not estimated\n";
        } else {
          auto moments = estimate_moments(ens, ctx.rc.moment_times);
          write_moments_csv(ctx.file("moments.csv").string(), moments);
          ctx.note_output("moments.csv");
        }
      }
      if (ctx.rc.disk_radius) {
        auto exits = exit_statistics(ens, exit_center, *ctx.rc.disk_radius);
        write_exits_csv(ctx.file("exits.csv").string(), exits, ens.dim());
        ctx.note_output("exits.csv");
        ctx.record.set("exit_fraction", format_g17(exits.exit_fraction));
      }
      if (dump_paths) {
        write_raw_paths_csv(ctx.file("paths.csv").string(), ens);
        ctx.note_output("paths.csv");
      }
    });
    std::cout << "simulated " << ens.n_paths() << " paths, "
              << ens.n_times() << " recorded times\n";
  });
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"large-deviations toolkit for linear delay SDEs"};
  app.require_subcommand(1);

  CommonOpts opts;
  bool analytic_check = false;
  bool dump_paths = false;
  std::string half_override;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", opts.config_path, "run configuration file")
        ->required();
    cmd->add_option("--out", opts.out_dir, "output directory");
    cmd->add_option("--seed", [&](const std::vector<std::string>& vals) {
      opts.seed = std::stoull(vals.front());
      return true;
    }, "override the simulation seed");
    cmd->add_option("--threads", opts.threads, "worker threads");
    cmd->add_flag("--svg", opts.svg, "also emit SVG figures");
    return cmd;
  };

  auto* mean = add_common(app.add_subcommand("mean", "solve the mean delay ODE"));
  mean->add_flag("--analytic-check", analytic_check,
                 "also run the stepwise exponential solver and report the gap");
  auto* cov = add_common(
      app.add_subcommand("cov", "solve the covariance diagonal and eigencurve"));
  auto* path = add_common(app.add_subcommand(
      "optimal-path", "most likely transition path to a target"));
  auto* escape = add_common(
      app.add_subcommand("escape", "optimal disk-exit time, point, and path"));
  escape->add_option("--half", half_override,
                     "restrict the boundary: full, upper, or lower");
  auto* simulate = add_common(
      app.add_subcommand("simulate", "Euler-Maruyama ensembles and statistics"));
  simulate->add_flag("--dump-paths", dump_paths,
                     "write raw recorded paths (large)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  if (mean->parsed()) return cmd_mean(opts, analytic_check);
  if (cov->parsed()) return cmd_cov(opts);
  if (path->parsed()) return cmd_optimal_path(opts);
  if (escape->parsed()) return cmd_escape(opts, half_override);
  if (simulate->parsed()) return cmd_simulate(opts, dump_paths);
  return 2;
}
