#pragma once

// Partial-l1 LASSO: min_b 1/2 ||X b - y||^2 + lambda ||b_Sbar||_1, with the
// dual projection machinery used to certify where the first feature enters
// when lambda drops just below the critical value ||X^T P_S^perp y||_inf.

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "seqattn/errors.hpp"
#include "seqattn/data.hpp"
#include "seqattn/linalg.hpp"

namespace seqattn {

struct LassoOptions {
  double tol = 1e-10;          // stop when the largest coordinate change is below this
  long max_sweeps = 100000;
  double kkt_accept = 1e-6;    // a run that hits max_sweeps is accepted only below this
  bool polish = true;          // re-solve the KKT system on the detected active set
  bool record_objective = false;
};

struct LassoSolution {
  Vector beta;
  double lambda = 0.0;
  IndexList penalized_set;  // Sbar, ascending
  double kkt_residual = 0.0;
  long sweeps_used = 0;
  double objective = 0.0;
  std::vector<double> objective_history;  // one entry per sweep when recorded
};

struct SignedIndex {
  Index index = 0;
  int sign = 0;
  friend bool operator==(const SignedIndex&, const SignedIndex&) = default;
};

struct DualProjection {
  Vector u;
  std::vector<SignedIndex> active_faces;  // faces of C_lambda containing u
  Vector residual_vector;                 // P_S^perp y - u
  LassoSolution primal;
};

namespace detail {

inline double soft_threshold(double z, double t) {
  if (z > t) return z - t;
  if (z < -t) return z + t;
  return 0.0;
}

inline IndexList complement(Index d, const std::vector<bool>& in_s) {
  IndexList out;
  for (Index i = 0; i < d; ++i)
    if (!in_s[static_cast<std::size_t>(i)]) out.push_back(i);
  return out;
}

inline double kkt_violation(const Vector& q, const Vector& beta, const std::vector<bool>& in_s, double lambda) {
  double worst = 0.0;
  for (Index i = 0; i < q.size(); ++i) {
    double v = 0.0;
    if (in_s[static_cast<std::size_t>(i)]) {
      v = std::abs(q[i]);
    } else if (beta[i] != 0.0) {
      v = std::abs(q[i] - lambda * (beta[i] > 0.0 ? 1.0 : -1.0));
    } else {
      v = std::max(0.0, std::abs(q[i]) - lambda);
    }
    worst = std::max(worst, v);
  }
  return worst;
}

inline double lasso_objective(const Matrix& x, const Vector& y, const std::vector<bool>& in_s, double lambda,
                              const Vector& beta) {
  double l1 = 0.0;
  for (Index i = 0; i < beta.size(); ++i)
    if (!in_s[static_cast<std::size_t>(i)]) l1 += std::abs(beta[i]);
  return 0.5 * (x * beta - y).squaredNorm() + lambda * l1;
}

/// Re-solves X_E^T (y - X_E b_E) = lambda * s_E on E = S u {active}, keeping
/// the signs found by coordinate descent. Returns nullopt if the system is
/// singular or a sign flips.
inline std::optional<Vector> polish_active_set(const Matrix& x, const Vector& y, const std::vector<bool>& in_s,
                                               double lambda, const Vector& beta) {
  IndexList e;
  std::vector<double> s;
  for (Index i = 0; i < beta.size(); ++i) {
    const bool sel = in_s[static_cast<std::size_t>(i)];
    if (sel || beta[i] != 0.0) {
      if (x.col(i).squaredNorm() == 0.0) continue;
      e.push_back(i);
      s.push_back(sel ? 0.0 : (beta[i] > 0.0 ? 1.0 : -1.0));
    }
  }
  if (e.empty()) return Vector::Zero(beta.size());
  const Matrix xe = select_columns(x, e);
  Eigen::ColPivHouseholderQR<Matrix> qr(xe);
  if (qr.rank() < xe.cols()) return std::nullopt;
  const Matrix gram = xe.transpose() * xe;
  Eigen::LDLT<Matrix> ldlt(gram);
  Vector sv = Eigen::Map<const Vector>(s.data(), static_cast<Index>(s.size()));
  Vector be = qr.solve(y) - lambda * ldlt.solve(sv);
  // One refinement step on the exact stationarity residual.
  const Vector resid = xe.transpose() * (y - xe * be) - lambda * sv;
  be += ldlt.solve(resid);
  Vector out = Vector::Zero(beta.size());
  for (std::size_t k = 0; k < e.size(); ++k) {
    if (s[k] != 0.0 && be[static_cast<Index>(k)] * s[k] <= 0.0) return std::nullopt;
    out[e[k]] = be[static_cast<Index>(k)];
  }
  return out;
}

}  // namespace detail

/// Cyclic coordinate descent on the Gram matrix. Coordinates in S are updated
/// with threshold 0, coordinates in Sbar with threshold lambda.
inline LassoSolution solve_partial_lasso(const Matrix& x, const Vector& y, const std::vector<bool>& in_s, double lambda,
                                         const LassoOptions& opt = {}, const Vector* warm_start = nullptr) {
  detail::require(x.rows() == y.size(), "solve_partial_lasso: X rows and y length differ");
  detail::require(static_cast<std::size_t>(x.cols()) == in_s.size(), "solve_partial_lasso: S has wrong length");
  detail::require(lambda > 0.0 && std::isfinite(lambda), "solve_partial_lasso: lambda must be > 0");
  const Index d = x.cols();

  const Matrix gram = x.transpose() * x;
  const Vector c = x.transpose() * y;
  Vector beta = warm_start ? *warm_start : Vector::Zero(d);
  detail::require(beta.size() == d, "solve_partial_lasso: warm start has wrong length");
  Vector q = c - gram * beta;  // X^T (y - X beta)

  LassoSolution sol;
  sol.lambda = lambda;
  sol.penalized_set = detail::complement(d, in_s);
  if (opt.record_objective) sol.objective_history.push_back(detail::lasso_objective(x, y, in_s, lambda, beta));

  bool converged = false;
  long sweep = 0;
  while (sweep < opt.max_sweeps) {
    ++sweep;
    double max_change = 0.0;
    for (Index j = 0; j < d; ++j) {
      const double gjj = gram(j, j);
      if (gjj == 0.0) continue;
      const double thr = in_s[static_cast<std::size_t>(j)] ? 0.0 : lambda;
      const double nb = detail::soft_threshold(q[j] + gjj * beta[j], thr) / gjj;
      const double delta = nb - beta[j];
      if (delta != 0.0) {
        beta[j] = nb;
        q.noalias() -= gram.col(j) * delta;
        max_change = std::max(max_change, std::abs(delta));
      }
    }
    if (opt.record_objective) sol.objective_history.push_back(detail::lasso_objective(x, y, in_s, lambda, beta));
    if (max_change < opt.tol) {
      converged = true;
      break;
    }
  }
  q = x.transpose() * (y - x * beta);
  double kkt = detail::kkt_violation(q, beta, in_s, lambda);

  if (opt.polish) {
    if (auto polished = detail::polish_active_set(x, y, in_s, lambda, beta)) {
      const Vector qp = x.transpose() * (y - x * *polished);
      const double kp = detail::kkt_violation(qp, *polished, in_s, lambda);
      if (kp <= kkt) {
        beta = *polished;
        kkt = kp;
      }
    }
  }
  if (!converged && kkt > opt.kkt_accept) {
    throw ConvergenceError("partial LASSO did not converge in " + std::to_string(opt.max_sweeps) +
                           " sweeps (KKT residual " + std::to_string(kkt) + ")");
  }
  sol.beta = std::move(beta);
  sol.kkt_residual = kkt;
  sol.sweeps_used = sweep;
  sol.objective = detail::lasso_objective(x, y, in_s, lambda, sol.beta);
  return sol;
}

inline LassoSolution solve_partial_lasso(const Matrix& x, const Vector& y, const IndexList& s, double lambda,
                                         const LassoOptions& opt = {}) {
  return solve_partial_lasso(x, y, membership(x.cols(), s), lambda, opt);
}

/// ||X^T P_S^perp y||_inf over unselected columns; 0 once S explains y.
inline double critical_lambda(const Matrix& x, const Vector& y, const IndexList& s) {
  const Vector r = project_residual(select_columns(x, s), y);
  if (r.norm() <= 1e-12 * std::max(1.0, y.norm())) return 0.0;
  const auto in_s = membership(x.cols(), s);
  const Vector corr = column_correlations(x, r);
  double best = 0.0;
  for (Index i = 0; i < x.cols(); ++i)
    if (!in_s[static_cast<std::size_t>(i)]) best = std::max(best, std::abs(corr[i]));
  return best;
}

struct DualityGap {
  double primal = 0.0;
  double dual = 0.0;
  double gap = 0.0;
};

/// Gap between the LASSO objective at beta and the dual value of the nearest
/// feasible point to u = y - X beta (projected onto colspan(X_S)^perp, then
/// scaled into C_lambda). The dual is 1/2 ||y||^2 - 1/2 ||y - u||^2.
inline DualityGap duality_gap(const Matrix& x, const Vector& y, const IndexList& s, double lambda, const Vector& beta) {
  const auto in_s = membership(x.cols(), s);
  DualityGap g;
  g.primal = detail::lasso_objective(x, y, in_s, lambda, beta);
  Vector u = project_residual(select_columns(x, s), y - x * beta);
  const double worst = (x.transpose() * u).cwiseAbs().maxCoeff();
  if (worst > lambda) u *= lambda / worst;
  g.dual = 0.5 * y.squaredNorm() - 0.5 * (y - u).squaredNorm();
  g.gap = g.primal - g.dual;
  return g;
}

/// Projection of P_S^perp y onto C_lambda n colspan(X_S)^perp, recovered from
/// the primal through X beta = y - u.
inline DualProjection project_onto_dual(const Matrix& x, const Vector& y, const IndexList& s, double lambda,
                                        const LassoOptions& opt = {}) {
  DualProjection dp;
  const auto in_s = membership(x.cols(), s);
  dp.primal = solve_partial_lasso(x, y, in_s, lambda, opt);
  dp.u = y - x * dp.primal.beta;
  dp.residual_vector = project_residual(select_columns(x, s), y) - dp.u;
  const Vector corr = x.transpose() * dp.u;
  for (Index i = 0; i < x.cols(); ++i) {
    if (in_s[static_cast<std::size_t>(i)]) continue;
    if (std::abs(corr[i]) >= lambda - 1e-8) dp.active_faces.push_back({i, corr[i] > 0.0 ? 1 : -1});
  }
  return dp;
}

struct LemmaEpsilonResult {
  double epsilon = 0.0;
  double lambda = 0.0;
  IndexList t;                        // maximizers of |<X_i, P_S^perp y>|
  double residual_norm = 0.0;         // ||P_S^perp y - u||
  double orthogonal_component = 0.0;  // part of the residual outside span(P_S^perp X_T)
  double orthogonal_to_xt = 0.0;      // part outside span(X_T) itself
  bool pass = false;
};

struct LemmaReport {
  std::string instance_fingerprint;
  double critical = 0.0;
  std::vector<LemmaEpsilonResult> results;  // ascending epsilon
  std::optional<double> epsilon_threshold;  // largest eps with every smaller grid eps passing
  bool pass = false;
};

/// For each eps: lambda = (1 - eps) * critical, T = {i : |<X_i, P_S^perp y>| within
/// 1e-8 of the maximum}, and the residual of the dual projection is tested
/// for membership in the span of T's columns. The dual problem lives in
/// colspan(X_S)^perp, where a column acts as its projection P_S^perp X_i, so
/// membership is measured against span(P_S^perp X_T) (equal to span(X_T) when
/// S is empty). The literal distance to span(X_T) is reported alongside.
inline LemmaReport certify_lemma_proj_res(const Matrix& x, const Vector& y, const IndexList& s,
                                          std::vector<double> eps_grid, const LassoOptions& opt = {}) {
  std::sort(eps_grid.begin(), eps_grid.end());
  LemmaReport rep;
  const Matrix xs = select_columns(x, s);
  const Vector r = project_residual(xs, y);
  detail::require(r.norm() > 0.0, "certify_lemma_proj_res: P_S^perp y is zero");
  const auto in_s = membership(x.cols(), s);
  const Vector corr = column_correlations(x, r);
  rep.instance_fingerprint = fingerprint(x, y);
  rep.critical = critical_lambda(x, y, s);

  IndexList t;
  for (Index i = 0; i < x.cols(); ++i)
    if (!in_s[static_cast<std::size_t>(i)] && std::abs(corr[i]) >= rep.critical - 1e-8) t.push_back(i);
  const Matrix xt = select_columns(x, t);
  Matrix xt_perp(x.rows(), xt.cols());
  for (Index j = 0; j < xt.cols(); ++j) xt_perp.col(j) = project_residual(xs, xt.col(j));

  bool prefix_ok = true;
  for (double eps : eps_grid) {
    LemmaEpsilonResult res;
    res.epsilon = eps;
    res.lambda = (1.0 - eps) * rep.critical;
    res.t = t;
    if (res.lambda > 0.0) {
      const DualProjection dp = project_onto_dual(x, y, s, res.lambda, opt);
      res.residual_norm = dp.residual_vector.norm();
      res.orthogonal_component = project_residual(xt_perp, dp.residual_vector).norm();
      res.orthogonal_to_xt = project_residual(xt, dp.residual_vector).norm();
      res.pass = res.residual_norm > 0.0 && res.orthogonal_component < 1e-6 * res.residual_norm;
    }
    prefix_ok = prefix_ok && res.pass;
    if (prefix_ok) rep.epsilon_threshold = eps;
    rep.results.push_back(std::move(res));
  }
  rep.pass = !rep.results.empty() && rep.results.front().pass;
  return rep;
}

}  // namespace seqattn
