#pragma once

#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "dsde/escape.hpp"
#include "dsde/montecarlo.hpp"
#include "dsde/rate.hpp"
#include "dsde/steps.hpp"

namespace dsde {

/// All CSV output goes through this formatter: 17 significant digits, so
/// reruns of the same configuration are byte-identical.
inline std::string format_g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

namespace detail {

class CsvWriter {
 public:
  explicit CsvWriter(const std::string& path) : out_(path, std::ios::binary) {
    if (!out_) throw parameter_error("cannot open output file " + path);
  }

  void header(const std::vector<std::string>& cols) { row_strings(cols); }

  void row_strings(const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i) out_ << ',';
      out_ << cells[i];
    }
    out_ << '\n';
  }

  void cell(double v) {
    if (pending_) out_ << ',';
    out_ << format_g17(v);
    pending_ = true;
  }
  void cell(const std::string& s) {
    if (pending_) out_ << ',';
    out_ << s;
    pending_ = true;
  }
  void end_row() {
    out_ << '\n';
    pending_ = false;
  }

 private:
  std::ofstream out_;
  bool pending_ = false;
};

inline std::vector<std::string> component_headers(const std::string& prefix,
                                                  Index d) {
  std::vector<std::string> cols;
  for (Index i = 1; i <= d; ++i) cols.push_back(prefix + "_" + std::to_string(i));
  return cols;
}

inline std::vector<std::string> matrix_headers(const std::string& prefix,
                                               Index d) {
  std::vector<std::string> cols;
  for (Index i = 1; i <= d; ++i)
    for (Index j = 1; j <= d; ++j)
      cols.push_back(prefix + "_" + std::to_string(i) + std::to_string(j));
  return cols;
}

}  // namespace detail

/// One row per grid time: t, m_1..m_d.
inline void write_mean_csv(const std::string& path, const MeanPath& mean) {
  detail::CsvWriter csv(path);
  const Index d = mean.values.front().size();
  std::vector<std::string> cols{"t"};
  for (auto& c : detail::component_headers("m", d)) cols.push_back(c);
  csv.header(cols);
  for (Index j = 0; j <= mean.grid.last; ++j) {
    csv.cell(mean.grid.time(j));
    for (Index i = 0; i < d; ++i) csv.cell(mean.at(j)(i));
    csv.end_row();
  }
}

/// One row per grid time: t, rho_11, rho_12, ... row-major.
inline void write_diagonal_csv(const std::string& path,
                               const CovarianceDiagonal& diag) {
  detail::CsvWriter csv(path);
  const Index d = diag.values.front().rows();
  std::vector<std::string> cols{"t"};
  for (auto& c : detail::matrix_headers("rho", d)) cols.push_back(c);
  csv.header(cols);
  for (Index j = 0; j <= diag.grid.last; ++j) {
    csv.cell(diag.grid.time(j));
    for (Index r = 0; r < d; ++r)
      for (Index c = 0; c < d; ++c) csv.cell(diag.at(j)(r, c));
    csv.end_row();
  }
}

inline void write_column_csv(const std::string& path,
                             const CovarianceColumn& col) {
  detail::CsvWriter csv(path);
  const Index d = col.values.front().rows();
  std::vector<std::string> cols{"s"};
  for (auto& c : detail::matrix_headers("rho", d)) cols.push_back(c);
  csv.header(cols);
  for (Index j = 0; j <= col.grid.last; ++j) {
    csv.cell(col.grid.time(j));
    for (Index r = 0; r < d; ++r)
      for (Index c = 0; c < d; ++c) csv.cell(col.at(j)(r, c));
    csv.end_row();
  }
}

/// Smallest eigenvalue of rho(t,t)^{-1} per grid time, computed as
/// 1/lambda_max(rho(t,t)); infinity where rho is zero.
inline void write_eigcurve_csv(const std::string& path,
                               const CovarianceDiagonal& diag) {
  detail::CsvWriter csv(path);
  csv.header({"t", "min_eig_rho_inv"});
  for (Index j = 0; j <= diag.grid.last; ++j) {
    auto [lmin, lmax] = detail::sym_eigen_range(diag.at(j));
    (void)lmin;
    csv.cell(diag.grid.time(j));
    csv.cell(lmax > 0.0 ? 1.0 / lmax : std::numeric_limits<double>::infinity());
    csv.end_row();
  }
}

/// Sampled path on [0, T]: t, h_1..h_d.
inline void write_path_csv(const std::string& path, const SampledPath& p) {
  detail::CsvWriter csv(path);
  const Index d = p.values.front().size();
  std::vector<std::string> cols{"t"};
  for (auto& c : detail::component_headers("h", d)) cols.push_back(c);
  csv.header(cols);
  for (Index j = 0; j <= p.t_index; ++j) {
    csv.cell(p.grid.time(j));
    for (Index i = 0; i < d; ++i) csv.cell(p.at(j)(i));
    csv.end_row();
  }
}

/// Energy-vs-time curve: T, excluded flag, energy.
inline void write_energy_curve_csv(const std::string& path,
                                   const std::vector<double>& times,
                                   const std::vector<double>& energies,
                                   const std::vector<char>& excluded) {
  detail::CsvWriter csv(path);
  csv.header({"T", "excluded", "energy"});
  for (std::size_t i = 0; i < times.size(); ++i) {
    csv.cell(times[i]);
    csv.cell(static_cast<double>(excluded[i]));
    csv.cell(energies[i]);
    csv.end_row();
  }
}

/// Boundary points: index, q_1, q_2.
inline void write_boundary_csv(const std::string& path,
                               const std::vector<Vector>& points) {
  detail::CsvWriter csv(path);
  csv.header({"k", "q_1", "q_2"});
  for (std::size_t k = 0; k < points.size(); ++k) {
    csv.cell(static_cast<double>(k));
    csv.cell(points[k](0));
    csv.cell(points[k](1));
    csv.end_row();
  }
}

/// Exit-energy matrix: rows are scan times (flagged when excluded), columns
/// the boundary points in list order.
inline void write_energy_matrix_csv(const std::string& path,
                                    const EnergyMatrix& m) {
  detail::CsvWriter csv(path);
  std::vector<std::string> cols{"t", "excluded"};
  for (Index k = 0; k < static_cast<Index>(m.points.size()); ++k)
    cols.push_back("E_" + std::to_string(k));
  csv.header(cols);
  for (Index r = 0; r < static_cast<Index>(m.times.size()); ++r) {
    csv.cell(m.times[static_cast<std::size_t>(r)]);
    csv.cell(static_cast<double>(m.excluded[static_cast<std::size_t>(r)]));
    for (Index k = 0; k < m.entries.cols(); ++k) csv.cell(m.entries(r, k));
    csv.end_row();
  }
}

/// Empirical moments: one row per requested time.
inline void write_moments_csv(const std::string& path,
                              const std::vector<MomentEstimate>& moments) {
  if (moments.empty()) throw parameter_error("moments: nothing to write");
  const Index d = moments.front().mean.size();
  detail::CsvWriter csv(path);
  std::vector<std::string> cols{"t", "n"};
  for (auto& c : detail::component_headers("mean", d)) cols.push_back(c);
  for (auto& c : detail::matrix_headers("cov", d)) cols.push_back(c);
  for (auto& c : detail::component_headers("se_mean", d)) cols.push_back(c);
  for (auto& c : detail::component_headers("se_var", d)) cols.push_back(c);
  csv.header(cols);
  for (const auto& est : moments) {
    csv.cell(est.time);
    csv.cell(static_cast<double>(est.n));
    for (Index i = 0; i < d; ++i) csv.cell(est.mean(i));
    for (Index r = 0; r < d; ++r)
      for (Index c = 0; c < d; ++c) csv.cell(est.covariance(r, c));
    for (Index i = 0; i < d; ++i) csv.cell(est.mean_se(i));
    for (Index i = 0; i < d; ++i) csv.cell(est.variance_se(i));
    csv.end_row();
  }
}

/// Per-path exit rows: path, exited, t_exit, x_exit_1..d.
inline void write_exits_csv(const std::string& path, const ExitStatistics& ex,
                            Index dim) {
  detail::CsvWriter csv(path);
  std::vector<std::string> cols{"path", "exited", "t_exit"};
  for (auto& c : detail::component_headers("x_exit", dim)) cols.push_back(c);
  csv.header(cols);
  for (std::size_t p = 0; p < ex.exited.size(); ++p) {
    csv.cell(static_cast<double>(p));
    csv.cell(static_cast<double>(ex.exited[p]));
    csv.cell(ex.exit_times[p]);
    for (Index i = 0; i < dim; ++i)
      csv.cell(ex.exited[p] ? ex.exit_points[p](i)
                            : std::numeric_limits<double>::quiet_NaN());
    csv.end_row();
  }
}

/// Raw recorded paths (large; written only on explicit request):
/// path, t, x_1..x_d.
inline void write_raw_paths_csv(const std::string& path,
                                const PathEnsemble& ens) {
  detail::CsvWriter csv(path);
  std::vector<std::string> cols{"path", "t"};
  for (auto& c : detail::component_headers("x", ens.dim())) cols.push_back(c);
  csv.header(cols);
  for (Index p = 0; p < ens.n_paths(); ++p)
    for (Index k = 0; k < ens.n_times(); ++k) {
      csv.cell(static_cast<double>(p));
      csv.cell(ens.times()[static_cast<std::size_t>(k)]);
      for (Index i = 0; i < ens.dim(); ++i) csv.cell(ens.state(p, k)(i));
      csv.end_row();
    }
}

}  // namespace dsde
