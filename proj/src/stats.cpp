#include "windchart/stats.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace windchart {

Eigen::VectorXd autocorrelations(const Eigen::Ref<const Eigen::VectorXd>& x,
                                 int max_lag) {
  const Eigen::Index T = x.size();
  if (max_lag < 1) throw std::invalid_argument("autocorrelations: max_lag < 1");
  if (T <= max_lag)
    throw std::invalid_argument("autocorrelations: series shorter than lags");

  const double mu = x.mean();
  const Eigen::VectorXd c = x.array() - mu;
  const double denom = c.squaredNorm();
  if (denom <= 0.0)
    throw std::runtime_error("autocorrelations: zero-variance series");

  Eigen::VectorXd rho(max_lag);
  for (int k = 1; k <= max_lag; ++k)
    rho(k - 1) = c.tail(T - k).dot(c.head(T - k)) / denom;
  return rho;
}

double ljung_box_q(const Eigen::Ref<const Eigen::VectorXd>& rho,
                   Eigen::Index T) {
  const double n = static_cast<double>(T);
  double acc = 0.0;
  for (Eigen::Index k = 1; k <= rho.size(); ++k)
    acc += rho(k - 1) * rho(k - 1) / (n - static_cast<double>(k));
  return n * (n + 2.0) * acc;
}

LjungBoxResult ljung_box(const Eigen::Ref<const Eigen::VectorXd>& x,
                         int lags) {
  const Eigen::VectorXd rho = autocorrelations(x, lags);
  const double q = ljung_box_q(rho, x.size());
  return {q, chi_square_sf(q, static_cast<double>(lags))};
}

namespace {

// Lower incomplete gamma by power series, for x < a + 1.
double gamma_p_series(double a, double x) {
  double ap = a;
  double sum = 1.0 / a;
  double del = sum;
  for (int i = 0; i < 500; ++i) {
    ap += 1.0;
    del *= x / ap;
    sum += del;
    if (std::abs(del) < std::abs(sum) * 1e-16) break;
  }
  return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

// Upper incomplete gamma by modified Lentz continued fraction, for x >= a + 1.
double gamma_q_cf(double a, double x) {
  const double tiny = 1e-300;
  double b = x + 1.0 - a;
  double c = 1.0 / tiny;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i <= 500; ++i) {
    const double an = -static_cast<double>(i) * (static_cast<double>(i) - a);
    b += 2.0;
    d = an * d + b;
    if (std::abs(d) < tiny) d = tiny;
    c = b + an / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < 1e-16) break;
  }
  return h * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

}  // namespace

double regularized_gamma_p(double a, double x) {
  if (a <= 0.0 || x < 0.0)
    throw std::invalid_argument("regularized_gamma_p: bad arguments");
  if (x == 0.0) return 0.0;
  if (x < a + 1.0) return gamma_p_series(a, x);
  return 1.0 - gamma_q_cf(a, x);
}

double regularized_gamma_q(double a, double x) {
  if (a <= 0.0 || x < 0.0)
    throw std::invalid_argument("regularized_gamma_q: bad arguments");
  if (x == 0.0) return 1.0;
  if (x < a + 1.0) return 1.0 - gamma_p_series(a, x);
  return gamma_q_cf(a, x);
}

double chi_square_sf(double x, double df) {
  if (df <= 0.0) throw std::invalid_argument("chi_square_sf: df <= 0");
  if (x <= 0.0) return 1.0;
  return regularized_gamma_q(df / 2.0, x / 2.0);
}

}  // namespace windchart
