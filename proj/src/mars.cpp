#include "windchart/mars.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <limits>
#include <ostream>
#include <set>
#include <sstream>
#include <stdexcept>
#include <tuple>

namespace windchart {

namespace {

constexpr double kPivotRelTol = 1e-9;   // min residual norm ratio for a new column
constexpr double kDetRelTol = 1e-9;     // min 2x2 Schur determinant ratio

int default_max_terms(int arity) {
  const int suggested = 2 * static_cast<int>(std::ceil(10.0 * arity)) + 1;
  return std::min(suggested, 201);
}

// Evenly thinned subset of a sorted distinct-value list, keeping endpoints.
std::vector<double> thin_knots(const std::vector<double>& vals, int max_knots) {
  if (static_cast<int>(vals.size()) <= max_knots) return vals;
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(max_knots));
  const double step = static_cast<double>(vals.size() - 1) /
                      static_cast<double>(max_knots - 1);
  std::size_t prev = std::numeric_limits<std::size_t>::max();
  for (int j = 0; j < max_knots; ++j) {
    const std::size_t idx =
        static_cast<std::size_t>(std::llround(j * step));
    if (idx != prev) out.push_back(vals[idx]);
    prev = idx;
  }
  return out;
}

struct Candidate {
  double delta = 0.0;  // SSE reduction
  int parent = -1;
  int var = -1;
  double knot = 0.0;
  bool add_upper = false;  // hinge (x - knot)+
  bool add_lower = false;  // hinge (knot - x)+
  bool valid() const { return parent >= 0; }
};

// Tie rule: lowest variable index, then smallest knot, then lowest parent.
bool candidate_beats(const Candidate& a, const Candidate& b) {
  if (!b.valid()) return a.valid();
  if (a.delta != b.delta) return a.delta > b.delta;
  return std::tie(a.var, a.knot, a.parent) < std::tie(b.var, b.knot, b.parent);
}

struct FitState {
  Eigen::MatrixXd b;       // T x cap basis matrix, first S columns in use
  int terms = 0;           // S
  Eigen::MatrixXd gram;    // S x S
  Eigen::VectorXd gy;      // B^T y
  Eigen::LLT<Eigen::MatrixXd> llt;
  Eigen::VectorXd coeffs;
  double sse = 0.0;
  double rank = 0.0;       // hat-matrix trace of the current basis
};

bool refit(FitState& st, const Eigen::Ref<const Eigen::VectorXd>& y) {
  const auto bs = st.b.leftCols(st.terms);
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(bs);
  if (qr.rank() < st.terms) return false;
  st.coeffs = qr.solve(y);
  st.sse = (y - bs * st.coeffs).squaredNorm();
  st.rank = static_cast<double>(qr.rank());
  st.gram = bs.transpose() * bs;
  st.gy = bs.transpose() * y;
  st.llt.compute(st.gram);
  return st.llt.info() == Eigen::Success;
}

}  // namespace

double eval_basis(const BasisFunction& b,
                  const Eigen::Ref<const Eigen::RowVectorXd>& x) {
  double prod = 1.0;
  for (const HingeFactor& f : b.factors) {
    if (f.var_index < 0 || f.var_index >= x.size())
      throw std::invalid_argument("eval_basis: var_index out of range");
    const double h = static_cast<double>(f.sign) * (x(f.var_index) - f.knot);
    if (h <= 0.0) return 0.0;
    prod *= h;
  }
  return prod;
}

double gcv(double sse, Eigen::Index T, int S, double hat_trace, double d) {
  if (sse < 0.0) throw std::invalid_argument("gcv: negative sse");
  const double n = static_cast<double>(T);
  const double c = hat_trace + d * static_cast<double>(S) + 1.0;
  if (c >= n)
    throw std::invalid_argument("gcv: model too complex for sample size");
  const double denom = 1.0 - c / n;
  return (sse / n) / (denom * denom);
}

Eigen::MatrixXd basis_matrix(const MarsModel& model,
                             const Eigen::Ref<const Eigen::MatrixXd>& x) {
  const Eigen::Index T = x.rows();
  const Eigen::Index S = static_cast<Eigen::Index>(model.basis.size());
  Eigen::MatrixXd b = Eigen::MatrixXd::Ones(T, S);
  for (Eigen::Index s = 0; s < S; ++s) {
    for (const HingeFactor& f : model.basis[static_cast<std::size_t>(s)].factors) {
      if (f.var_index < 0 || f.var_index >= x.cols())
        throw std::invalid_argument("basis_matrix: var_index out of range");
      b.col(s).array() *=
          (static_cast<double>(f.sign) * (x.col(f.var_index).array() - f.knot))
              .max(0.0);
    }
  }
  return b;
}

Eigen::VectorXd predict(const MarsModel& model,
                        const Eigen::Ref<const Eigen::MatrixXd>& x) {
  if (model.coeffs.size() != static_cast<Eigen::Index>(model.basis.size()))
    throw std::invalid_argument("predict: coeffs/basis size mismatch");
  return basis_matrix(model, x) * model.coeffs;
}

MarsModel forward_pass(const Eigen::Ref<const Eigen::MatrixXd>& x,
                       const Eigen::Ref<const Eigen::VectorXd>& y,
                       const MarsConfig& config) {
  const Eigen::Index T = x.rows();
  const int arity = static_cast<int>(x.cols());
  if (T < 1 || arity < 1) throw std::invalid_argument("forward_pass: empty design");
  if (y.size() != T) throw std::invalid_argument("forward_pass: x/y size mismatch");
  const int max_terms =
      config.max_terms > 0 ? config.max_terms : default_max_terms(arity);
  if (max_terms < 1 || config.max_degree < 1)
    throw std::invalid_argument("forward_pass: bad config");

  // Sample-size ceiling: keep the GCV cost C(S) = S + d*(S-1) + 1 below T.
  int cap = max_terms;
  while (cap > 1 &&
         static_cast<double>(cap) + config.d * (cap - 1) + 1.0 >=
             static_cast<double>(T))
    --cap;

  FitState st;
  st.b.resize(T, cap);
  st.b.col(0).setOnes();
  st.terms = 1;

  std::vector<BasisFunction> basis(1);  // intercept
  refit(st, y);

  // Row order per variable, ascending value; reused across steps.
  std::vector<std::vector<Eigen::Index>> asc(static_cast<std::size_t>(arity));
  for (int v = 0; v < arity; ++v) {
    auto& ord = asc[static_cast<std::size_t>(v)];
    ord.resize(static_cast<std::size_t>(T));
    for (Eigen::Index i = 0; i < T; ++i) ord[static_cast<std::size_t>(i)] = i;
    std::stable_sort(ord.begin(), ord.end(), [&](Eigen::Index a, Eigen::Index b) {
      return x(a, v) < x(b, v);
    });
  }

  std::set<std::tuple<int, int, double>> rejected;  // (parent, var, knot)

  // Residual below this is an exact fit up to rounding; stop rather than
  // chase noise-level deltas.
  const double sse_floor = 1e-20 * std::max(1.0, y.squaredNorm());

  Eigen::MatrixXd bd;          // basis rows permuted by descending x_v
  Eigen::VectorXd xd, yd, w1;  // permuted var values, y, and pc .* x weights
  Eigen::VectorXd p0(cap), p1(cap), z1(cap), z2(cap), gtil(cap);

  while (st.terms + 2 <= cap) {
    const int S = st.terms;
    gtil.head(S) = st.llt.matrixL().solve(st.gy);

    Candidate best;
    for (int v = 0; v < arity; ++v) {
      const auto& ord = asc[static_cast<std::size_t>(v)];
      // Permute current basis rows into descending-x_v order.
      bd.resize(T, S);
      xd.resize(T);
      yd.resize(T);
      for (Eigen::Index i = 0; i < T; ++i) {
        const Eigen::Index r = ord[static_cast<std::size_t>(T - 1 - i)];
        bd.row(i) = st.b.row(r).head(S);
        xd(i) = x(r, v);
        yd(i) = y(r);
      }

      for (int parent = 0; parent < S; ++parent) {
        const BasisFunction& pb = basis[static_cast<std::size_t>(parent)];
        if (pb.degree() >= config.max_degree || pb.uses(v)) continue;

        const auto pc = bd.col(parent);
        w1 = pc.cwiseProduct(xd);

        // Distinct knot values on the parent's support, ascending.
        std::vector<double> vals;
        for (Eigen::Index i = T - 1; i >= 0; --i)
          if (pc(i) != 0.0 && (vals.empty() || vals.back() != xd(i)))
            vals.push_back(xd(i));
        if (vals.size() < 2) continue;
        std::vector<double> knots = thin_knots(vals, config.max_knots);

        // Totals over the full column, accumulated in sweep order.
        const Eigen::VectorXd p0t = bd.transpose() * pc;
        const Eigen::VectorXd p1t = bd.transpose() * w1;
        const double q0t = pc.dot(yd);
        const double q1t = w1.dot(yd);
        const double r0t = pc.squaredNorm();
        const double r1t = pc.dot(w1);
        const double r2t = w1.squaredNorm();

        p0.head(S).setZero();
        p1.head(S).setZero();
        double q0 = 0.0, q1 = 0.0, r0 = 0.0, r1 = 0.0, r2 = 0.0;
        Eigen::Index row = 0;

        // Knots descending; suffix sums cover rows with x_v > knot.
        for (auto it = knots.rbegin(); it != knots.rend(); ++it) {
          const double knot = *it;
          Eigen::Index block = row;
          while (block < T && xd(block) > knot) ++block;
          if (block > row) {
            const Eigen::Index len = block - row;
            p0.head(S) += bd.middleRows(row, len).transpose() *
                          pc.segment(row, len);
            p1.head(S) += bd.middleRows(row, len).transpose() *
                          w1.segment(row, len);
            q0 += pc.segment(row, len).dot(yd.segment(row, len));
            q1 += w1.segment(row, len).dot(yd.segment(row, len));
            r0 += pc.segment(row, len).squaredNorm();
            r1 += pc.segment(row, len).dot(w1.segment(row, len));
            r2 += w1.segment(row, len).squaredNorm();
            row = block;
          }
          if (rejected.count({parent, v, knot})) continue;

          // Upper hinge pc .* (x - knot)+ projected against current basis.
          const double c11 = r2 - 2.0 * knot * r1 + knot * knot * r0;
          // Lower hinge pc .* (knot - x)+ from complements.
          const double c22 = knot * knot * (r0t - r0) -
                             2.0 * knot * (r1t - r1) + (r2t - r2);

          bool u_ok = c11 > 0.0;
          bool w_ok = c22 > 0.0;
          double m11 = 0.0, m22 = 0.0, m12 = 0.0, rb1 = 0.0, rb2 = 0.0;
          if (u_ok) {
            z1.head(S) = st.llt.matrixL().solve(
                (p1.head(S) - knot * p0.head(S)).eval());
            m11 = c11 - z1.head(S).squaredNorm();
            rb1 = (q1 - knot * q0) - z1.head(S).dot(gtil.head(S));
            u_ok = m11 > kPivotRelTol * c11;
          }
          if (w_ok) {
            z2.head(S) = st.llt.matrixL().solve(
                (knot * (p0t - p0.head(S)) - (p1t - p1.head(S))).eval());
            m22 = c22 - z2.head(S).squaredNorm();
            rb2 = (knot * (q0t - q0) - (q1t - q1)) -
                  z2.head(S).dot(gtil.head(S));
            w_ok = m22 > kPivotRelTol * c22;
          }

          Candidate cand;
          cand.parent = parent;
          cand.var = v;
          cand.knot = knot;
          if (u_ok && w_ok) {
            m12 = -z1.head(S).dot(z2.head(S));
            const double det = m11 * m22 - m12 * m12;
            if (det > kDetRelTol * m11 * m22) {
              cand.delta = (rb1 * rb1 * m22 - 2.0 * rb1 * rb2 * m12 +
                            rb2 * rb2 * m11) /
                           det;
              cand.add_upper = cand.add_lower = true;
            } else {
              const double du = rb1 * rb1 / m11;
              const double dw = rb2 * rb2 / m22;
              cand.delta = std::max(du, dw);
              cand.add_upper = du >= dw;
              cand.add_lower = !cand.add_upper;
            }
          } else if (u_ok) {
            cand.delta = rb1 * rb1 / m11;
            cand.add_upper = true;
          } else if (w_ok) {
            cand.delta = rb2 * rb2 / m22;
            cand.add_lower = true;
          } else {
            continue;
          }
          if (!std::isfinite(cand.delta) || cand.delta <= 0.0) continue;
          if (candidate_beats(cand, best)) best = cand;
        }
      }
    }

    if (st.sse <= sse_floor) break;
    if (!best.valid()) break;
    if (best.delta < config.rel_improve_tol * st.sse) break;

    // Materialize the accepted hinge columns in original row order.
    const auto pc_orig = st.b.col(best.parent);
    int added = 0;
    const BasisFunction parent_fn = basis[static_cast<std::size_t>(best.parent)];
    if (best.add_upper) {
      st.b.col(st.terms + added) =
          pc_orig.cwiseProduct((x.col(best.var).array() - best.knot).max(0.0).matrix());
      BasisFunction f = parent_fn;
      f.factors.push_back({best.var, +1, best.knot});
      basis.push_back(std::move(f));
      ++added;
    }
    if (best.add_lower) {
      st.b.col(st.terms + added) =
          pc_orig.cwiseProduct((best.knot - x.col(best.var).array()).max(0.0).matrix());
      BasisFunction f = parent_fn;
      f.factors.push_back({best.var, -1, best.knot});
      basis.push_back(std::move(f));
      ++added;
    }
    st.terms += added;

    if (!refit(st, y)) {
      // Rank-deficient after addition: back out and retry without it.
      st.terms -= added;
      basis.resize(static_cast<std::size_t>(st.terms));
      rejected.insert({best.parent, best.var, best.knot});
      refit(st, y);
      continue;
    }
  }

  MarsModel model;
  model.basis = std::move(basis);
  model.coeffs = st.coeffs;
  model.sse = st.sse;
  model.gcv_score =
      gcv(st.sse, T, st.terms - 1, st.rank, config.d);
  return model;
}

MarsModel backward_prune(const MarsModel& model,
                         const Eigen::Ref<const Eigen::MatrixXd>& x,
                         const Eigen::Ref<const Eigen::VectorXd>& y,
                         const MarsConfig& config) {
  const Eigen::Index T = x.rows();
  const Eigen::MatrixXd b = basis_matrix(model, x);
  const Eigen::MatrixXd gram = b.transpose() * b;
  const Eigen::VectorXd gy = b.transpose() * y;
  const double yy = y.squaredNorm();
  const int S = static_cast<int>(model.basis.size());

  const auto subset_sse = [&](const std::vector<int>& idx) -> double {
    const int k = static_cast<int>(idx.size());
    Eigen::MatrixXd g(k, k);
    Eigen::VectorXd c(k);
    for (int i = 0; i < k; ++i) {
      c(i) = gy(idx[static_cast<std::size_t>(i)]);
      for (int j = 0; j < k; ++j)
        g(i, j) = gram(idx[static_cast<std::size_t>(i)],
                       idx[static_cast<std::size_t>(j)]);
    }
    const Eigen::LDLT<Eigen::MatrixXd> ldlt(g);
    if (ldlt.info() != Eigen::Success)
      return std::numeric_limits<double>::infinity();
    return std::max(0.0, yy - c.dot(ldlt.solve(c)));
  };

  const auto subset_gcv = [&](const std::vector<int>& idx) -> double {
    const int k = static_cast<int>(idx.size());
    return gcv(subset_sse(idx), T, k - 1, static_cast<double>(k), config.d);
  };

  std::vector<int> current(static_cast<std::size_t>(S));
  for (int i = 0; i < S; ++i) current[static_cast<std::size_t>(i)] = i;

  std::vector<int> best_subset = current;
  double best_gcv = subset_gcv(current);

  while (current.size() > 1) {
    double step_gcv = std::numeric_limits<double>::infinity();
    std::size_t drop = 0;
    for (std::size_t j = 0; j < current.size(); ++j) {
      if (current[j] == 0) continue;  // intercept stays
      std::vector<int> trial;
      trial.reserve(current.size() - 1);
      for (std::size_t i = 0; i < current.size(); ++i)
        if (i != j) trial.push_back(current[i]);
      const double g = subset_gcv(trial);
      if (g < step_gcv) {
        step_gcv = g;
        drop = j;
      }
    }
    if (!std::isfinite(step_gcv)) break;
    current.erase(current.begin() + static_cast<std::ptrdiff_t>(drop));
    if (step_gcv < best_gcv) {
      best_gcv = step_gcv;
      best_subset = current;
    }
  }

  // Refit the winning subset with a rank-revealing decomposition.
  const int k = static_cast<int>(best_subset.size());
  Eigen::MatrixXd bs(T, k);
  MarsModel pruned;
  pruned.basis.reserve(best_subset.size());
  for (int i = 0; i < k; ++i) {
    bs.col(i) = b.col(best_subset[static_cast<std::size_t>(i)]);
    pruned.basis.push_back(
        model.basis[static_cast<std::size_t>(best_subset[static_cast<std::size_t>(i)])]);
  }
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(bs);
  pruned.coeffs = qr.solve(y);
  pruned.sse = (y - bs * pruned.coeffs).squaredNorm();
  pruned.gcv_score = gcv(pruned.sse, T, k - 1,
                         static_cast<double>(qr.rank()), config.d);
  return pruned;
}

MarsModel fit(const Eigen::Ref<const Eigen::MatrixXd>& x,
              const Eigen::Ref<const Eigen::VectorXd>& y,
              const MarsConfig& config) {
  return backward_prune(forward_pass(x, y, config), x, y, config);
}

MarsModel fit(const Design& design, const MarsConfig& config) {
  return fit(design.x, design.y, config);
}

double model_gcv(const MarsModel& model,
                 const Eigen::Ref<const Eigen::MatrixXd>& x,
                 const Eigen::Ref<const Eigen::VectorXd>& y, double d) {
  const Eigen::MatrixXd b = basis_matrix(model, x);
  const double sse = (y - b * model.coeffs).squaredNorm();
  const Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(b);
  return gcv(sse, x.rows(), static_cast<int>(model.basis.size()) - 1,
             static_cast<double>(qr.rank()), d);
}

void write_model(std::ostream& out, const MarsModel& model) {
  char buf[64];
  out << "# mars model v1\n";
  std::snprintf(buf, sizeof(buf), "%.17g", model.gcv_score);
  out << "# gcv " << buf << '\n';
  std::snprintf(buf, sizeof(buf), "%.17g", model.sse);
  out << "# sse " << buf << '\n';
  for (std::size_t s = 0; s < model.basis.size(); ++s) {
    std::snprintf(buf, sizeof(buf), "%.17g",
                  model.coeffs(static_cast<Eigen::Index>(s)));
    out << buf;
    for (const HingeFactor& f : model.basis[s].factors) {
      std::snprintf(buf, sizeof(buf), "%.17g", f.knot);
      out << ' ' << f.var_index << ':' << (f.sign > 0 ? "+1" : "-1") << ':'
          << buf;
    }
    out << '\n';
  }
}

MarsModel read_model(std::istream& in) {
  MarsModel model;
  std::vector<double> coeffs;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    if (line[0] == '#') {
      std::istringstream hs(line);
      std::string hash, key;
      hs >> hash >> key;
      if (key == "gcv") hs >> model.gcv_score;
      if (key == "sse") hs >> model.sse;
      continue;
    }
    std::istringstream ls(line);
    double coef;
    if (!(ls >> coef)) throw std::runtime_error("mars model: bad coefficient");
    BasisFunction fn;
    std::string tok;
    while (ls >> tok) {
      HingeFactor f;
      int sign;
      if (std::sscanf(tok.c_str(), "%d:%d:%lg", &f.var_index, &sign,
                      &f.knot) != 3 ||
          (sign != 1 && sign != -1))
        throw std::runtime_error("mars model: bad factor '" + tok + "'");
      f.sign = sign;
      fn.factors.push_back(f);
    }
    coeffs.push_back(coef);
    model.basis.push_back(std::move(fn));
  }
  if (model.basis.empty()) throw std::runtime_error("mars model: empty file");
  model.coeffs = Eigen::Map<Eigen::VectorXd>(coeffs.data(),
                                             static_cast<Eigen::Index>(coeffs.size()));
  return model;
}

}  // namespace windchart
