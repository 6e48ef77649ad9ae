#include <doctest.h>

#include <cmath>
#include <sstream>
#include <stdexcept>

#include "windchart/ar.hpp"
#include "windchart/ifgls.hpp"
#include "windchart/stats.hpp"
#include "windchart/synth.hpp"

using namespace windchart;

namespace {

double ar1_sse(const Eigen::VectorXd& u, double a) {
  double sse = 0.0;
  for (Eigen::Index t = 1; t < u.size(); ++t) {
    const double e = u(t) - a * u(t - 1);
    sse += e * e;
  }
  return sse;
}

// Hinge response on a 1-d grid with additive AR(1) noise; the scenario every
// whitening test shares.
Design hinge_design(Eigen::Index n, double ar1, std::uint64_t seed,
                    double noise_scale) {
  Eigen::VectorXd coeffs(1);
  coeffs << ar1;
  const Eigen::VectorXd noise = gen_ar(coeffs, NoiseKind::normal, n, seed);
  Design d;
  d.y.resize(n);
  d.x.resize(n, 1);
  d.t_index.resize(static_cast<std::size_t>(n));
  d.timestamps.resize(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    d.x(i, 0) = 2.0 * static_cast<double>(i) / static_cast<double>(n - 1);
    d.y(i) = 2.0 + 3.0 * std::max(d.x(i, 0) - 1.0, 0.0) + noise_scale * noise(i);
    d.t_index[static_cast<std::size_t>(i)] = static_cast<long>(i);
    d.timestamps[static_cast<std::size_t>(i)] = 1356998400 + 600 * i;
  }
  return d;
}

}  // namespace

TEST_CASE("least squares on the worked series recovers one half") {
  Eigen::VectorXd u(4);
  u << 8, 4, 2, 1;
  const ArModel m = fit_ar(u, 1);
  REQUIRE(m.order == 1);
  CHECK(std::fabs(m.coeffs(0) - 0.5) <= 1e-15);
}

TEST_CASE("order zero fit and residuals are pass-through") {
  Eigen::VectorXd u(5);
  u << 1, -2, 3, -4, 5;
  const ArModel m = fit_ar(u, 0);
  CHECK(m.coeffs.size() == 0);
  const Eigen::VectorXd r = ar_residuals(u, m);
  CHECK((r - u).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("degenerate and undersized regressions are rejected") {
  CHECK_THROWS_AS((void)fit_ar(Eigen::VectorXd::Zero(40), 1),
                  std::runtime_error);
  Eigen::VectorXd tiny(2);
  tiny << 1, 2;
  CHECK_THROWS_AS((void)fit_ar(tiny, 2), std::invalid_argument);
  CHECK_THROWS_AS((void)fit_ar(tiny, -1), std::invalid_argument);
  // Exactly order+1 points is enough for a rank-1 system.
  const ArModel m = fit_ar(tiny, 1);
  CHECK(m.coeffs(0) == doctest::Approx(2.0).epsilon(1e-14));
}

TEST_CASE("fitted coefficient beats every grid alternative on sse") {
  const Eigen::VectorXd u =
      gen_ar((Eigen::VectorXd(1) << 0.6).finished(), NoiseKind::normal, 600, 5);
  const ArModel m = fit_ar(u, 1);
  const double best = ar1_sse(u, m.coeffs(0));
  for (double a = -0.95; a <= 0.95; a += 0.01)
    CHECK(best <= ar1_sse(u, a) + 1e-9);
}

TEST_CASE("white noise estimates a coefficient near zero") {
  const Eigen::VectorXd u = gen_noise(NoiseKind::normal, 2000, 9);
  const ArModel m = fit_ar(u, 1);
  CHECK(std::fabs(m.coeffs(0)) < 0.05);
}

TEST_CASE("an ar(1) coefficient is recovered from its own draws") {
  const Eigen::VectorXd u =
      gen_ar((Eigen::VectorXd(1) << 0.6).finished(), NoiseKind::normal, 2000, 3);
  const ArModel m = fit_ar(u, 1);
  CHECK(m.coeffs(0) > 0.55);
  CHECK(m.coeffs(0) < 0.65);
}

TEST_CASE("model sse never exceeds the zero-coefficient model") {
  for (std::uint64_t seed : {1ULL, 2ULL, 3ULL}) {
    const Eigen::VectorXd u = gen_ar((Eigen::VectorXd(2) << 0.4, 0.2).finished(),
                                     NoiseKind::student_t5, 500, seed);
    const ArModel m = fit_ar(u, 2);
    const Eigen::VectorXd r = ar_residuals(u, m);
    CHECK(r.squaredNorm() <= u.tail(u.size() - 2).squaredNorm() + 1e-9);
  }
}

TEST_CASE("order selection separates white, first and second order noise") {
  int right_white = 0, right_one = 0, right_two = 0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const Eigen::VectorXd w = gen_noise(NoiseKind::normal, 900, seed);
    if (select_order(w, 5) == 0) ++right_white;
    const Eigen::VectorXd a1 =
        gen_ar((Eigen::VectorXd(1) << 0.6).finished(), NoiseKind::normal, 900,
               seed, 1);
    if (select_order(a1, 5) == 1) ++right_one;
    const Eigen::VectorXd a2 =
        gen_ar((Eigen::VectorXd(2) << 0.5, 0.3).finished(), NoiseKind::normal,
               900, seed, 2);
    if (select_order(a2, 5) == 2) ++right_two;
  }
  CHECK(right_white >= 4);
  CHECK(right_one >= 4);
  CHECK(right_two >= 4);
}

TEST_CASE("residual filter has the stated length and values") {
  Eigen::VectorXd u(5);
  u << 1, 2, 3, 4, 5;
  ArModel m;
  m.order = 2;
  m.coeffs = Eigen::Vector2d(0.5, 0.25);
  const Eigen::VectorXd r = ar_residuals(u, m);
  REQUIRE(r.size() == 3);
  CHECK(r(0) == doctest::Approx(3 - 0.5 * 2 - 0.25 * 1).epsilon(1e-15));
  CHECK(r(1) == doctest::Approx(4 - 0.5 * 3 - 0.25 * 2).epsilon(1e-15));
  CHECK(r(2) == doctest::Approx(5 - 0.5 * 4 - 0.25 * 3).epsilon(1e-15));
}

TEST_CASE("forced order zero whitening is a converged no-op") {
  const Design d = hinge_design(200, 0.0, 21, 1.0);
  const MarsModel m = fit(d);
  IfglsConfig cfg;
  cfg.order = 0;
  const IfglsResult res = ifgls_loop(d, m, cfg);
  CHECK(res.converged);
  CHECK(res.iterations == 0);
  CHECK(res.ar.order == 0);
  CHECK(res.residuals.size() == d.rows());
  CHECK(res.rmse_after == doctest::Approx(res.rmse_before).epsilon(1e-15));
  const ResidualSeries raw = raw_residuals(d, m);
  CHECK((res.residuals.values - raw.values).cwiseAbs().maxCoeff() < 1e-12);
  REQUIRE(res.log.size() == 1);
}

TEST_CASE("whitening recovers the error process and settles") {
  const Design d = hinge_design(1500, 0.6, 11, 5.0);
  const MarsModel m = fit(d);
  IfglsConfig cfg;
  cfg.order = 1;
  const IfglsResult res = ifgls_loop(d, m, cfg);
  CHECK(res.converged);
  CHECK(res.iterations <= cfg.max_iter);
  CHECK(res.ar.coeffs(0) > 0.5);
  CHECK(res.ar.coeffs(0) < 0.7);
  CHECK(res.rmse_after < res.rmse_before);
  REQUIRE(res.residuals.size() == d.rows() - 1);
  // Residual series stays aligned with the design rows it kept.
  CHECK(res.residuals.t_index.front() == 1);
  CHECK(res.residuals.timestamps.front() == d.timestamps[1]);

  // The reported convergence is reproducible from the stored residuals.
  const Eigen::VectorXd rho = autocorrelations(res.residuals.values, 1);
  const double q = ljung_box_q(rho.head(1), res.residuals.size());
  CHECK(chi_square_sf(q, 1.0) > cfg.alpha_lb);
  REQUIRE(res.ljung_pvalues.size() == 1);
  CHECK(res.ljung_pvalues[0] ==
        doctest::Approx(chi_square_sf(q, 1.0)).epsilon(1e-9));
}

TEST_CASE("the refit cannot worsen one-step prediction error") {
  const Design d = hinge_design(800, 0.55, 31, 4.0);
  const MarsModel m = fit(d);

  // Replicate the first iteration's fixed pieces.
  const Eigen::MatrixXd b = basis_matrix(m, d.x);
  const Eigen::VectorXd u0 = d.y - b * m.coeffs;
  const ArModel ar = fit_ar(u0, 1);
  const Eigen::Index rows = d.rows() - 1;
  Eigen::VectorXd ty = d.y.tail(rows) - ar.coeffs(0) * u0.head(rows);

  IfglsConfig cfg;
  cfg.order = 1;
  cfg.max_iter = 1;
  const IfglsResult res = ifgls_loop(d, m, cfg);
  const double before = (ty - b.bottomRows(rows) * m.coeffs).squaredNorm();
  const double after = (ty - b.bottomRows(rows) * res.coeffs).squaredNorm();
  CHECK(after <= before + 1e-9);
}

TEST_CASE("a tight threshold leaves the loop unconverged at max_iter") {
  const Design d = hinge_design(600, 0.6, 13, 4.0);
  const MarsModel m = fit(d);
  IfglsConfig cfg;
  cfg.order = 1;
  cfg.max_iter = 1;
  // One iteration moves the coefficient from zero to about 0.6.
  const IfglsResult res = ifgls_loop(d, m, cfg);
  CHECK_FALSE(res.converged);
  CHECK(res.iterations == 1);
  CHECK(res.log.size() == 1);
}

TEST_CASE("configuration and size errors are rejected up front") {
  const Design d = hinge_design(100, 0.0, 1, 1.0);
  const MarsModel m = fit(d);
  IfglsConfig bad;
  bad.max_iter = 0;
  CHECK_THROWS_AS((void)ifgls_loop(d, m, bad), std::invalid_argument);
  bad = IfglsConfig{};
  bad.conv_threshold = 0.0;
  CHECK_THROWS_AS((void)ifgls_loop(d, m, bad), std::invalid_argument);
}

TEST_CASE("residual csv round-trips bit-exactly") {
  const Design d = hinge_design(300, 0.5, 17, 3.0);
  const MarsModel m = fit(d);
  IfglsConfig cfg;
  cfg.order = 1;
  const IfglsResult res = ifgls_loop(d, m, cfg);

  std::ostringstream out;
  write_residuals_csv(out, res.residuals);
  std::istringstream in(out.str());
  const ResidualSeries back = read_residuals_csv(in);
  REQUIRE(back.size() == res.residuals.size());
  for (Eigen::Index i = 0; i < back.size(); ++i) {
    CHECK(back.values(i) == res.residuals.values(i));
    CHECK(back.t_index[static_cast<std::size_t>(i)] ==
          res.residuals.t_index[static_cast<std::size_t>(i)]);
    CHECK(back.timestamps[static_cast<std::size_t>(i)] ==
          res.residuals.timestamps[static_cast<std::size_t>(i)]);
  }
}

TEST_CASE("the whitening log names its headline figures") {
  const Design d = hinge_design(400, 0.5, 19, 3.0);
  const MarsModel m = fit(d);
  IfglsConfig cfg;
  cfg.order = 1;
  const IfglsResult res = ifgls_loop(d, m, cfg);
  std::ostringstream out;
  write_ifgls_log(out, res);
  const std::string text = out.str();
  CHECK(text.find("order = 1") != std::string::npos);
  CHECK(text.find("converged = ") != std::string::npos);
  CHECK(text.find("rmse_raw = ") != std::string::npos);
  CHECK(text.find("rmse_whitened = ") != std::string::npos);
  CHECK(text.find("iter 1:") != std::string::npos);
}
