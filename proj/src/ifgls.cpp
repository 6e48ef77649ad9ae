#include "windchart/ifgls.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "windchart/stats.hpp"

namespace windchart {

namespace {

double rms(const Eigen::Ref<const Eigen::VectorXd>& v) {
  if (v.size() == 0) return 0.0;
  return std::sqrt(v.squaredNorm() / static_cast<double>(v.size()));
}

ResidualSeries tail_series(const Design& design,
                           const Eigen::VectorXd& values, int skip) {
  ResidualSeries rs;
  rs.values = values;
  rs.t_index.assign(design.t_index.begin() + skip, design.t_index.end());
  rs.timestamps.assign(design.timestamps.begin() + skip,
                       design.timestamps.end());
  return rs;
}

// Per-lag portmanteau p-values for h = 1..p; a constant series is treated
// as white.
std::vector<double> lag_pvalues(const Eigen::Ref<const Eigen::VectorXd>& r,
                                int p) {
  std::vector<double> pv(static_cast<std::size_t>(p), 1.0);
  if (p == 0) return pv;
  const double var = (r.array() - r.mean()).square().sum();
  if (var <= 0.0) return pv;
  const Eigen::VectorXd rho = autocorrelations(r, p);
  for (int h = 1; h <= p; ++h) {
    const double q = ljung_box_q(rho.head(h), r.size());
    pv[static_cast<std::size_t>(h - 1)] = chi_square_sf(q, h);
  }
  return pv;
}

}  // namespace

ResidualSeries raw_residuals(const Design& design, const MarsModel& model) {
  const Eigen::VectorXd fitted = predict(model, design.x);
  return tail_series(design, design.y - fitted, 0);
}

IfglsResult ifgls_loop(const Design& design, const MarsModel& model,
                       const IfglsConfig& config) {
  if (design.rows() < 3) throw std::invalid_argument("ifgls: design too small");
  if (config.max_iter < 1 || config.conv_threshold <= 0.0)
    throw std::invalid_argument("ifgls: bad config");

  const Eigen::Index T = design.rows();
  const Eigen::MatrixXd b = basis_matrix(model, design.x);

  IfglsResult res;
  res.coeffs = model.coeffs;
  Eigen::VectorXd u = design.y - b * res.coeffs;
  res.rmse_before = rms(u);

  const int p = config.order >= 0 ? config.order
                                  : select_order(u, config.order_max);
  res.ar.order = p;
  res.ar.coeffs = Eigen::VectorXd::Zero(p);

  if (p == 0) {
    res.converged = true;
    res.residuals = tail_series(design, u, 0);
    res.rmse_after = rms(u);
    res.log.push_back("order 0: residuals treated as white, no refit");
    return res;
  }
  if (T <= 2 * static_cast<Eigen::Index>(p))
    throw std::runtime_error("ifgls: series too short for AR order");

  Eigen::VectorXd prev_ar = Eigen::VectorXd::Zero(p);
  Eigen::VectorXd r;
  for (int iter = 1; iter <= config.max_iter; ++iter) {
    const ArModel ar = fit_ar(u, p);

    // Quasi-differenced response on rows t > p, refit of the coefficients.
    const Eigen::Index rows = T - p;
    Eigen::VectorXd ty = design.y.tail(rows);
    for (int j = 0; j < p; ++j)
      ty -= ar.coeffs(j) * u.segment(p - j - 1, rows);
    const Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(b.bottomRows(rows));
    if (qr.rank() < b.cols())
      throw std::runtime_error("ifgls: rank-deficient refit");
    res.coeffs = qr.solve(ty);

    u = design.y - b * res.coeffs;
    r = ar_residuals(u, ar);

    const double delta = (ar.coeffs - prev_ar).cwiseAbs().maxCoeff();
    res.ljung_pvalues = lag_pvalues(r, p);
    double min_p = 1.0;
    for (double v : res.ljung_pvalues) min_p = std::min(min_p, v);

    res.ar = ar;
    res.iterations = iter;
    prev_ar = ar.coeffs;

    char line[160];
    std::snprintf(line, sizeof(line),
                  "iter %d: max_coeff_change=%.6g min_ljung_p=%.6g", iter,
                  delta, min_p);
    res.log.emplace_back(line);

    if (delta < config.conv_threshold && min_p > config.alpha_lb) {
      res.converged = true;
      break;
    }
  }

  res.residuals = tail_series(design, r, p);
  res.rmse_after = rms(r);
  return res;
}

void write_residuals_csv(std::ostream& out, const ResidualSeries& r) {
  out << "t_index,timestamp,residual\n";
  char buf[40];
  for (Eigen::Index i = 0; i < r.values.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%.17g", r.values(i));
    out << r.t_index[static_cast<std::size_t>(i)] << ','
        << format_timestamp_utc(r.timestamps[static_cast<std::size_t>(i)])
        << ',' << buf << '\n';
  }
}

ResidualSeries read_residuals_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line))
    throw std::runtime_error("residual csv: empty file");
  std::vector<double> values;
  ResidualSeries rs;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    std::istringstream ls(line);
    std::string t_str, ts_str, r_str;
    if (!std::getline(ls, t_str, ',') || !std::getline(ls, ts_str, ',') ||
        !std::getline(ls, r_str))
      throw std::runtime_error("residual csv: malformed row '" + line + "'");
    const auto ts = parse_timestamp(ts_str);
    if (!ts) throw std::runtime_error("residual csv: bad timestamp " + ts_str);
    rs.t_index.push_back(std::stol(t_str));
    rs.timestamps.push_back(*ts);
    values.push_back(std::stod(r_str));
  }
  if (values.empty()) throw std::runtime_error("residual csv: no rows");
  rs.values = Eigen::Map<Eigen::VectorXd>(
      values.data(), static_cast<Eigen::Index>(values.size()));
  return rs;
}

void write_residuals_file(const std::string& path, const ResidualSeries& r) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  write_residuals_csv(out, r);
}

ResidualSeries read_residuals_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path);
  return read_residuals_csv(in);
}

void write_ifgls_log(std::ostream& out, const IfglsResult& result) {
  char buf[64];
  out << "order = " << result.ar.order << '\n';
  out << "iterations = " << result.iterations << '\n';
  out << "converged = " << (result.converged ? "yes" : "no") << '\n';
  std::snprintf(buf, sizeof(buf), "%.17g", result.rmse_before);
  out << "rmse_raw = " << buf << '\n';
  std::snprintf(buf, sizeof(buf), "%.17g", result.rmse_after);
  out << "rmse_whitened = " << buf << '\n';
  out << "ar_coeffs =";
  for (Eigen::Index j = 0; j < result.ar.coeffs.size(); ++j) {
    std::snprintf(buf, sizeof(buf), "%.17g", result.ar.coeffs(j));
    out << ' ' << buf;
  }
  out << '\n';
  out << "ljung_pvalues =";
  for (double p : result.ljung_pvalues) {
    std::snprintf(buf, sizeof(buf), "%.17g", p);
    out << ' ' << buf;
  }
  out << '\n';
  for (const std::string& line : result.log) out << line << '\n';
}

}  // namespace windchart
