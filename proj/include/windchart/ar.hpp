#pragma once

#include <Eigen/Dense>

namespace windchart {

// Autoregression u_t = a_1 u_{t-1} + ... + a_p u_{t-p} + e_t, no intercept.
struct ArModel {
  int order = 0;
  Eigen::VectorXd coeffs;  // a_1 .. a_p
};

// Least-squares fit over t = p+1..T. Throws std::runtime_error when the
// lagged regressor matrix is rank deficient.
ArModel fit_ar(const Eigen::Ref<const Eigen::VectorXd>& u, int order);

// BIC order selection on the common window t > order_max; 0 means white.
int select_order(const Eigen::Ref<const Eigen::VectorXd>& u, int order_max);

// r_t = u_t - sum_theta a_theta u_{t-theta}, defined for t > p; returns
// a series of length u.size() - p. Order zero returns u unchanged.
Eigen::VectorXd ar_residuals(const Eigen::Ref<const Eigen::VectorXd>& u,
                             const ArModel& model);

}  // namespace windchart
