#include "windchart/ar.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace windchart {

namespace {

// Lagged regressor rows for t = start+1..T (1-based), columns u_{t-1}..u_{t-p}.
Eigen::MatrixXd lag_matrix(const Eigen::Ref<const Eigen::VectorXd>& u,
                           int order, Eigen::Index start) {
  const Eigen::Index rows = u.size() - start;
  Eigen::MatrixXd m(rows, order);
  for (int j = 0; j < order; ++j)
    m.col(j) = u.segment(start - j - 1, rows);
  return m;
}

}  // namespace

ArModel fit_ar(const Eigen::Ref<const Eigen::VectorXd>& u, int order) {
  if (order < 0) throw std::invalid_argument("fit_ar: negative order");
  ArModel model;
  model.order = order;
  model.coeffs = Eigen::VectorXd::Zero(order);
  if (order == 0) return model;
  if (u.size() <= static_cast<Eigen::Index>(order))
    throw std::invalid_argument("fit_ar: series shorter than order");

  const Eigen::MatrixXd m = lag_matrix(u, order, order);
  const Eigen::VectorXd rhs = u.tail(u.size() - order);
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(m);
  if (qr.rank() < order)
    throw std::runtime_error("fit_ar: degenerate AR regression");
  model.coeffs = qr.solve(rhs);
  return model;
}

int select_order(const Eigen::Ref<const Eigen::VectorXd>& u, int order_max) {
  if (order_max < 0) throw std::invalid_argument("select_order: negative max");
  // Common estimation window t > order_max keeps the criteria comparable.
  const Eigen::Index t_eff = u.size() - order_max;
  if (t_eff < 1)
    throw std::invalid_argument("select_order: series shorter than max order");
  const Eigen::VectorXd rhs = u.tail(t_eff);

  int best_order = 0;
  double best_bic = std::numeric_limits<double>::infinity();
  for (int p = 0; p <= order_max; ++p) {
    double sse;
    if (p == 0) {
      sse = rhs.squaredNorm();
    } else {
      const Eigen::MatrixXd m = lag_matrix(u, p, order_max);
      Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(m);
      if (qr.rank() < p) continue;
      sse = (rhs - m * qr.solve(rhs)).squaredNorm();
    }
    if (sse <= 0.0) return p;  // exact fit, nothing beyond is better
    const double n = static_cast<double>(t_eff);
    const double bic = n * std::log(sse / n) + p * std::log(n);
    if (bic < best_bic) {
      best_bic = bic;
      best_order = p;
    }
  }
  return best_order;
}

Eigen::VectorXd ar_residuals(const Eigen::Ref<const Eigen::VectorXd>& u,
                             const ArModel& model) {
  const int p = model.order;
  if (p == 0) return u;
  if (u.size() <= p)
    throw std::invalid_argument("ar_residuals: series shorter than order");
  Eigen::VectorXd r = u.tail(u.size() - p);
  for (int j = 0; j < p; ++j)
    r -= model.coeffs(j) * u.segment(p - j - 1, u.size() - p);
  return r;
}

}  // namespace windchart
