#pragma once

#include <Eigen/Dense>

namespace windchart {

/// Sample autocorrelations rho_1..rho_max_lag.
/// rho_k = sum_{t>k} (x_t - mean)(x_{t-k} - mean) / sum_t (x_t - mean)^2.
/// Throws std::runtime_error on a zero-variance series.
Eigen::VectorXd autocorrelations(const Eigen::Ref<const Eigen::VectorXd>& x,
                                 int max_lag);

/// Ljung-Box portmanteau statistic from precomputed autocorrelations
/// rho(0..h-1) = rho_1..rho_h of a series of length T:
///   Q = T (T + 2) sum_k rho_k^2 / (T - k).
double ljung_box_q(const Eigen::Ref<const Eigen::VectorXd>& rho,
                   Eigen::Index T);

struct LjungBoxResult {
  double q;
  double p_value;  // upper chi-square tail, df = number of lags
};

/// Portmanteau whiteness test over the first `lags` autocorrelations.
LjungBoxResult ljung_box(const Eigen::Ref<const Eigen::VectorXd>& x, int lags);

/// Regularized incomplete gamma functions P(a,x) and Q(a,x) = 1 - P(a,x).
double regularized_gamma_p(double a, double x);
double regularized_gamma_q(double a, double x);

/// Upper tail of the chi-square distribution with df degrees of freedom.
double chi_square_sf(double x, double df);

}  // namespace windchart
