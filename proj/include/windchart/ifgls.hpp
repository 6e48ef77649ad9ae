#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "windchart/ar.hpp"
#include "windchart/mars.hpp"
#include "windchart/scada.hpp"

namespace windchart {

// A residual series aligned with the design rows it came from.
struct ResidualSeries {
  Eigen::VectorXd values;
  std::vector<long> t_index;
  std::vector<std::int64_t> timestamps;

  Eigen::Index size() const { return values.size(); }
};

struct IfglsConfig {
  int order = -1;           // AR order; -1 selects by BIC up to order_max
  int order_max = 10;
  double conv_threshold = 0.001;  // max coefficient change
  double alpha_lb = 0.05;         // Box-Ljung level per lag
  int max_iter = 50;
};

struct IfglsResult {
  Eigen::VectorXd coeffs;   // basis coefficients after the final refit
  ArModel ar;
  ResidualSeries residuals;            // whitened r_t, rows t > order
  std::vector<double> ljung_pvalues;   // per lag 1..order at the last iterate
  int iterations = 0;
  bool converged = false;
  double rmse_before = 0.0;  // raw fit residuals
  double rmse_after = 0.0;   // whitened residuals
  std::vector<std::string> log;  // one line per iteration
};

// Alternates AR estimation on the fit residuals with a refit of the basis
// coefficients on quasi-differenced responses until the AR coefficients
// settle and the whitened residuals pass per-lag Box-Ljung checks.
IfglsResult ifgls_loop(const Design& design, const MarsModel& model,
                       const IfglsConfig& config);

ResidualSeries raw_residuals(const Design& design, const MarsModel& model);

void write_residuals_csv(std::ostream& out, const ResidualSeries& r);
ResidualSeries read_residuals_csv(std::istream& in);
void write_residuals_file(const std::string& path, const ResidualSeries& r);
ResidualSeries read_residuals_file(const std::string& path);

void write_ifgls_log(std::ostream& out, const IfglsResult& result);

}  // namespace windchart
