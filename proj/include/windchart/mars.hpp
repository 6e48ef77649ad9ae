#pragma once

#include <Eigen/Dense>

#include <iosfwd>
#include <vector>

#include "windchart/scada.hpp"

namespace windchart {

/// One hinge multiplier max(sign * (x[var_index] - knot), 0).
struct HingeFactor {
  int var_index = 0;
  int sign = 1;  // +1 or -1
  double knot = 0.0;
};

/// Product of hinge factors; an empty factor list is the intercept.
struct BasisFunction {
  std::vector<HingeFactor> factors;

  bool uses(int var) const {
    for (const HingeFactor& f : factors)
      if (f.var_index == var) return true;
    return false;
  }
  int degree() const { return static_cast<int>(factors.size()); }
};

/// Additive hinge-product model y ~ sum_s coeffs[s] * basis[s](x).
/// basis[0] is always the intercept.
struct MarsModel {
  std::vector<BasisFunction> basis;
  Eigen::VectorXd coeffs;
  double gcv_score = 0.0;
  double sse = 0.0;  // training residual sum of squares
};

struct MarsConfig {
  /// Maximum number of basis functions including the intercept;
  /// 0 means min(2 * ceil(10 * arity) + 1, 201).
  int max_terms = 0;
  int max_degree = 2;     // max hinge factors per basis function
  double d = 2.0;         // GCV cost per non-intercept basis function
  int max_knots = 128;    // candidate knots per variable (quantile-thinned)
  double rel_improve_tol = 1e-6;  // forward stop: relative SSE reduction
};

/// Evaluate one basis function at a feature row.
/// Throws std::invalid_argument when a factor references a missing variable.
double eval_basis(const BasisFunction& b,
                  const Eigen::Ref<const Eigen::RowVectorXd>& x);

/// Generalized cross-validation score (sse/T) / (1 - C/T)^2 with
/// C = hat_trace + d*S + 1.  S counts non-intercept basis functions and
/// hat_trace is the trace of the hat matrix of the full basis (its rank for
/// a full-rank basis, intercept column included).
/// Throws std::invalid_argument when C >= T ("model too complex").
double gcv(double sse, Eigen::Index T, int S, double hat_trace, double d);

/// Greedy forward construction: starting from the intercept, repeatedly adds
/// the reflected hinge pair (on a parent basis function and an unused
/// variable) that most reduces the training SSE, refitting coefficients by
/// least squares after each addition.  Stops at max_terms or when the best
/// relative SSE reduction falls below rel_improve_tol.
MarsModel forward_pass(const Eigen::Ref<const Eigen::MatrixXd>& x,
                       const Eigen::Ref<const Eigen::VectorXd>& y,
                       const MarsConfig& config = {});

/// Backward deletion under GCV: repeatedly removes the non-intercept basis
/// function whose removal most improves (or least worsens) GCV and returns
/// the best subset encountered.
MarsModel backward_prune(const MarsModel& model,
                         const Eigen::Ref<const Eigen::MatrixXd>& x,
                         const Eigen::Ref<const Eigen::VectorXd>& y,
                         const MarsConfig& config = {});

MarsModel fit(const Eigen::Ref<const Eigen::MatrixXd>& x,
              const Eigen::Ref<const Eigen::VectorXd>& y,
              const MarsConfig& config = {});
MarsModel fit(const Design& design, const MarsConfig& config = {});

/// Basis data matrix B with B(t, s) = basis[s](x row t).
Eigen::MatrixXd basis_matrix(const MarsModel& model,
                             const Eigen::Ref<const Eigen::MatrixXd>& x);

Eigen::VectorXd predict(const MarsModel& model,
                        const Eigen::Ref<const Eigen::MatrixXd>& x);

/// GCV of a model recomputed from scratch on training data.
double model_gcv(const MarsModel& model,
                 const Eigen::Ref<const Eigen::MatrixXd>& x,
                 const Eigen::Ref<const Eigen::VectorXd>& y, double d);

/// One basis function per line: coefficient, then var:sign:knot triples.
/// Decimals use 17 significant digits and round-trip bit-exactly.
void write_model(std::ostream& out, const MarsModel& model);
MarsModel read_model(std::istream& in);

}  // namespace windchart
