#pragma once

// Empirical certification harness: Sequential LASSO vs OMP, regularized linear
// attention vs OMP (analytic and optimization paths), the overparameterized
// l2 <-> l1 objective equivalence, the softmax-attention regularizer grid,
// and attention-score / marginal-gain rank correlation.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "seqattn/data.hpp"
#include "seqattn/lasso.hpp"
#include "seqattn/linalg.hpp"
#include "seqattn/models.hpp"
#include "seqattn/optim.hpp"
#include "seqattn/selectors.hpp"
#include "seqattn/stats.hpp"

namespace seqattn {

struct Divergence {
  std::uint64_t seed = 0;
  Index round = 0;
  std::vector<double> scores;  // reference method's scores in that round (selected entries NaN)
};

struct EquivalenceReport {
  std::pair<std::string, std::string> methods_compared;
  Index instances = 0;
  Index exact_match_count = 0;
  Index untied_mismatches = 0;
  std::optional<Divergence> first_divergence;
  std::vector<bool> tie_flags;
  Index degenerate_rounds = 0;
  std::vector<double> round_agreement;  // optimization path only
  double max_objective_gap = 0.0;       // analytic path: |Eq4(split) - Eq5|

  bool pass() const { return untied_mismatches == 0 && degenerate_rounds == 0; }
};

/// Gaussian sparse-linear instance with continuous noise, unit-normalized.
inline Dataset equivalence_instance(Index n, Index d, std::uint64_t seed, double noise = 0.1) {
  const Index k_true = std::max<Index>(1, d / 5);
  return normalize_unit_columns(synth_sparse_linear(n, d, k_true, noise, seed).dataset);
}

namespace detail {

inline std::vector<double> scores_of(const RoundRecord& r) {
  std::vector<double> out;
  for (const auto& s : r.candidate_scores) out.push_back(s.value_or(std::numeric_limits<double>::quiet_NaN()));
  return out;
}

/// True when some OMP round had its top two residual correlations within a
/// relative 1e-9 of each other, i.e. the selection was decided by tie-breaking.
inline bool has_near_tie(const SelectionTrace& omp_trace) {
  for (const auto& r : omp_trace.rounds) {
    double first = -1.0, second = -1.0;
    for (const auto& s : r.candidate_scores) {
      if (!s) continue;
      const double v = std::sqrt(std::max(0.0, *s));
      if (v > first) {
        second = first;
        first = v;
      } else if (v > second) {
        second = v;
      }
    }
    if (second >= 0.0 && first - second <= 1e-9 * std::max(first, 1e-300)) return true;
  }
  return false;
}

inline void record(EquivalenceReport& rep, const SelectionTrace& ref, const IndexList& other, std::uint64_t seed) {
  const bool tie = has_near_tie(ref);
  rep.tie_flags.push_back(tie);
  ++rep.instances;
  if (other == ref.final_s) {
    ++rep.exact_match_count;
    return;
  }
  if (!tie) ++rep.untied_mismatches;
  if (!rep.first_divergence) {
    Index r = 0;
    while (r < static_cast<Index>(other.size()) && other[static_cast<std::size_t>(r)] == ref.final_s[static_cast<std::size_t>(r)]) ++r;
    rep.first_divergence = Divergence{seed, r, scores_of(ref.rounds[static_cast<std::size_t>(r)])};
  }
}

}  // namespace detail

/// Compares ordered selections of exact-critical Sequential LASSO and OMP on
/// one instance, folding the outcome into rep.
inline void compare_seq_lasso_omp(EquivalenceReport& rep, const Dataset& ds, Index k, std::uint64_t tag = 0) {
  const ModelSpec linear{ModelKind::linear, 0, 1};
  const SelectionTrace o = omp(ds, linear, k);
  const SelectionTrace s = sequential_lasso(ds, k, LassoSelectMode::exact());
  detail::record(rep, o, s.final_s, tag);
}

inline EquivalenceReport check_seq_lasso_equals_omp(Index n, Index d, Index k, const std::vector<std::uint64_t>& seeds) {
  EquivalenceReport rep;
  rep.methods_compared = {"sequential_lasso", "omp"};
  for (std::uint64_t seed : seeds) compare_seq_lasso_omp(rep, equivalence_instance(n, d, seed), k, seed);
  return rep;
}

// ---------------------------------------------------------------------------
// Regularized linear attention objective:
//   F(w, theta) = ||X (s(w) o theta) - y||^2 + (lambda/2) (||w_Sbar||^2 + ||theta_Sbar||^2)
// with s_i = 1 on S and s_i = w_i off S, and its l1 counterpart
//   G(beta)     = ||X beta - y||^2 + lambda ||beta_Sbar||_1.

inline double factored_objective(const Matrix& x, const Vector& y, const std::vector<bool>& in_s, double lambda,
                                 const Vector& w, const Vector& theta) {
  Vector beta = theta;
  double reg = 0.0;
  for (Index i = 0; i < x.cols(); ++i) {
    if (in_s[static_cast<std::size_t>(i)]) continue;
    beta[i] = w[i] * theta[i];
    reg += w[i] * w[i] + theta[i] * theta[i];
  }
  return (x * beta - y).squaredNorm() + 0.5 * lambda * reg;
}

inline double l1_objective(const Matrix& x, const Vector& y, const std::vector<bool>& in_s, double lambda,
                           const Vector& beta) {
  double l1 = 0.0;
  for (Index i = 0; i < x.cols(); ++i)
    if (!in_s[static_cast<std::size_t>(i)]) l1 += std::abs(beta[i]);
  return (x * beta - y).squaredNorm() + lambda * l1;
}

/// Minimizer of G. G = 2 * (1/2 ||X b - y||^2 + (lambda/2) ||b_Sbar||_1), so the
/// partial-LASSO solver runs at lambda / 2.
inline LassoSolution solve_l1_form(const Matrix& x, const Vector& y, const std::vector<bool>& in_s, double lambda,
                                   const LassoOptions& opt = {}) {
  return solve_partial_lasso(x, y, in_s, 0.5 * lambda, opt);
}

/// For fixed beta the cheapest factorization has |w_i| = |theta_i| = sqrt|beta_i|.
inline std::pair<Vector, Vector> hoff_split(const Vector& beta, const std::vector<bool>& in_s) {
  Vector w = Vector::Zero(beta.size());
  Vector theta = beta;
  for (Index i = 0; i < beta.size(); ++i) {
    if (in_s[static_cast<std::size_t>(i)]) continue;
    const double r = std::sqrt(std::abs(beta[i]));
    w[i] = r;
    theta[i] = beta[i] < 0.0 ? -r : r;
  }
  return {w, theta};
}

struct AlternatingResult {
  Vector w, theta;
  double objective = 0.0;
  long iterations = 0;
};

/// Block-coordinate minimization of F: for fixed w, theta solves a ridge
/// problem; for fixed theta, w_Sbar solves another. Both blocks are exact.
inline AlternatingResult minimize_factored_alternating(const Matrix& x, const Vector& y,
                                                       const std::vector<bool>& in_s, double lambda,
                                                       long max_iter = 2000000, double rel_tol = 1e-15) {
  const Index d = x.cols();
  IndexList sbar, s;
  for (Index i = 0; i < d; ++i) (in_s[static_cast<std::size_t>(i)] ? s : sbar).push_back(i);
  const Matrix gram = x.transpose() * x;
  const Vector xty = x.transpose() * y;

  AlternatingResult res;
  res.w = Vector::Zero(d);
  for (Index i : sbar) res.w[i] = 1.0;
  res.theta = Vector::Zero(d);
  double prev = std::numeric_limits<double>::infinity();
  for (long it = 0; it < max_iter; ++it) {
    // theta-step: (D G D + lambda/2 P) theta = D X^T y
    Vector dvec = Vector::Ones(d);
    for (Index i : sbar) dvec[i] = res.w[i];
    Matrix a = dvec.asDiagonal() * gram * dvec.asDiagonal();
    for (Index i : sbar) a(i, i) += 0.5 * lambda;
    res.theta = a.ldlt().solve(dvec.asDiagonal() * xty);

    // w-step on Sbar: (T G_bb T + lambda/2 I) w = T X_b^T (y - X_S theta_S)
    if (!sbar.empty()) {
      Vector rhs_y = y;
      for (Index i : s) rhs_y -= x.col(i) * res.theta[i];
      const auto nb = static_cast<Index>(sbar.size());
      Matrix b(nb, nb);
      Vector rhs(nb);
      for (Index p = 0; p < nb; ++p) {
        const Index i = sbar[static_cast<std::size_t>(p)];
        rhs[p] = res.theta[i] * x.col(i).dot(rhs_y);
        for (Index q = 0; q < nb; ++q) {
          const Index j = sbar[static_cast<std::size_t>(q)];
          b(p, q) = res.theta[i] * gram(i, j) * res.theta[j];
        }
        b(p, p) += 0.5 * lambda;
      }
      const Vector wb = b.ldlt().solve(rhs);
      for (Index p = 0; p < nb; ++p) res.w[sbar[static_cast<std::size_t>(p)]] = wb[p];
    }
    res.objective = factored_objective(x, y, in_s, lambda, res.w, res.theta);
    res.iterations = it + 1;
    if (prev - res.objective <= rel_tol * std::max(1.0, std::abs(res.objective))) break;
    prev = res.objective;
  }
  return res;
}

struct HoffInstance {
  Matrix x;
  Vector y;
  IndexList s;
  double lambda = 0.0;  // on the F / G scale
};

struct HoffInstanceResult {
  double l1 = 0.0;                    // min G via the partial-LASSO solver
  double factored_split = 0.0;        // F at the sqrt-split of the G minimizer
  double factored_alternating = 0.0;  // min F by alternating minimization
  long iterations = 0;
  double gap = 0.0;                   // |factored_alternating - l1|
};

struct HoffReport {
  std::vector<HoffInstanceResult> instances;
  double max_gap = 0.0;
  double max_split_gap = 0.0;
  double tolerance = 1e-6;
  bool pass() const { return max_gap <= tolerance && max_split_gap <= tolerance; }
};

/// Random instance for the equivalence check: unit columns, unit y, a random
/// selected set of size 0..3 and lambda between 0.2 and 0.9 of the value at
/// which every unselected coefficient vanishes (2 * critical lambda).
inline HoffInstance random_hoff_instance(Index n, Index d, std::uint64_t seed) {
  const Dataset ds = equivalence_instance(n, d, seed);
  std::mt19937_64 rng(detail::derive_seed(seed, 17));
  IndexList perm(static_cast<std::size_t>(d));
  std::iota(perm.begin(), perm.end(), Index{0});
  std::shuffle(perm.begin(), perm.end(), rng);
  const auto s_size = static_cast<std::size_t>(std::uniform_int_distribution<int>(0, 3)(rng));
  HoffInstance inst{ds.x, ds.y, IndexList(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(s_size)), 0.0};
  std::sort(inst.s.begin(), inst.s.end());
  const double ratio = std::uniform_real_distribution<double>(0.2, 0.9)(rng);
  inst.lambda = ratio * 2.0 * critical_lambda(inst.x, inst.y, inst.s);
  return inst;
}

inline HoffReport check_hoff_equivalence(const std::vector<HoffInstance>& instances, double tolerance = 1e-6) {
  HoffReport rep;
  rep.tolerance = tolerance;
  for (const auto& inst : instances) {
    const auto in_s = membership(inst.x.cols(), inst.s);
    HoffInstanceResult r;
    if (inst.lambda > 0.0) {
      const LassoSolution sol = solve_l1_form(inst.x, inst.y, in_s, inst.lambda);
      r.l1 = l1_objective(inst.x, inst.y, in_s, inst.lambda, sol.beta);
      const auto [w, theta] = hoff_split(sol.beta, in_s);
      r.factored_split = factored_objective(inst.x, inst.y, in_s, inst.lambda, w, theta);
      const AlternatingResult alt = minimize_factored_alternating(inst.x, inst.y, in_s, inst.lambda);
      r.factored_alternating = alt.objective;
      r.iterations = alt.iterations;
    } else {
      // No penalty: both objectives are ordinary least squares.
      const LstSqSolution ls = least_squares(inst.x, inst.y);
      r.l1 = r.factored_split = r.factored_alternating = ls.residual_norm_sq;
    }
    r.gap = std::abs(r.factored_alternating - r.l1);
    rep.max_gap = std::max(rep.max_gap, r.gap);
    rep.max_split_gap = std::max(rep.max_split_gap, std::abs(r.factored_split - r.l1));
    rep.instances.push_back(r);
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Regularized linear attention vs OMP

struct AttentionOmpOptions {
  std::vector<double> lambda_ratios{1.0 - 1e-3};  // multiples of 2 * critical lambda
  bool optimization_path = false;
  double optimization_ratio = 0.9;
  TrainConfig optimizer{OptimizerKind::adam, 1e-2, 1 << 30, 3000, 0.0, 0.0, 0, std::nullopt, false};
};

struct AttentionOmpReport {
  EquivalenceReport analytic;
  std::optional<EquivalenceReport> optimization;
};

/// Analytic path of one round: lambda = ratio * 2 * lambda*(S). ratio >= 1
/// must leave every unselected coefficient at zero (flagged degenerate and
/// checked). ratio < 1 is refined by halving 1 - ratio until the entering set
/// is consistent, as in exact-critical Sequential LASSO; the pick is the
/// largest l1 mask magnitude |w_i| = sqrt|beta_i| of the split minimizer.
struct AnalyticRound {
  std::optional<Index> chosen;
  bool degenerate = false;
  double objective_gap = 0.0;
};

inline AnalyticRound regularized_attention_round(const Matrix& x, const Vector& y, const IndexList& s, double ratio) {
  AnalyticRound out;
  const auto in_s = membership(x.cols(), s);
  const double crit = critical_lambda(x, y, s);
  if (crit == 0.0) {
    out.degenerate = true;
    return out;
  }
  const Vector corr = column_correlations(x, project_residual(select_columns(x, s), y)).cwiseAbs();
  double one_minus = 1.0 - ratio;
  if (ratio >= 1.0) {
    const double lambda = ratio * 2.0 * crit;
    const LassoSolution sol = solve_l1_form(x, y, in_s, lambda);
    out.degenerate = true;
    for (Index i = 0; i < x.cols(); ++i)
      if (!in_s[static_cast<std::size_t>(i)] && std::abs(sol.beta[i]) > 1e-10) out.degenerate = false;
    return out;
  }
  for (int h = 0; h <= 60; ++h, one_minus *= 0.5) {
    const double lambda = (1.0 - one_minus) * 2.0 * crit;
    const LassoSolution sol = solve_l1_form(x, y, in_s, lambda);
    const auto [w, theta] = hoff_split(sol.beta, in_s);
    out.objective_gap = std::abs(factored_objective(x, y, in_s, lambda, w, theta) - l1_objective(x, y, in_s, lambda, sol.beta));
    std::optional<Index> best;
    bool consistent = true;
    for (Index i = 0; i < x.cols(); ++i) {
      if (in_s[static_cast<std::size_t>(i)] || std::abs(sol.beta[i]) <= 1e-10) continue;
      consistent = consistent && corr[i] >= crit - 1e-6;
      if (!best || std::abs(w[i]) > std::abs(w[*best])) best = i;
    }
    if (best && consistent) {
      out.chosen = best;
      return out;
    }
  }
  throw ConvergenceError("regularized_attention_round: no consistent entering set");
}

inline AttentionOmpReport check_regularized_attention_equals_omp(Index n, Index d, Index k,
                                                                 const std::vector<std::uint64_t>& seeds,
                                                                 const AttentionOmpOptions& opt = {}) {
  AttentionOmpReport rep;
  rep.analytic.methods_compared = {"regularized_linear_attention(analytic)", "omp"};
  if (opt.optimization_path) {
    rep.optimization = EquivalenceReport{};
    rep.optimization->methods_compared = {"regularized_linear_attention(gradient)", "omp"};
    rep.optimization->round_agreement.assign(static_cast<std::size_t>(k), 0.0);
  }
  const ModelSpec linear{ModelKind::linear, 0, 1};
  for (std::uint64_t seed : seeds) {
    const Dataset ds = equivalence_instance(n, d, seed);
    const SelectionTrace o = omp(ds, linear, k);

    for (double ratio : opt.lambda_ratios) {
      IndexList picked;
      for (Index r = 0; r < k; ++r) {
        const AnalyticRound ar = regularized_attention_round(ds.x, ds.y, picked, ratio);
        rep.analytic.max_objective_gap = std::max(rep.analytic.max_objective_gap, ar.objective_gap);
        if (ar.degenerate) {
          ++rep.analytic.degenerate_rounds;
          break;
        }
        picked.push_back(*ar.chosen);
      }
      if (ratio < 1.0) detail::record(rep.analytic, o, picked, seed);
    }

    if (opt.optimization_path) {
      IndexList agree_path;
      for (Index r = 0; r < k; ++r) {
        // Condition on OMP's prefix so each round is compared on the same S.
        const IndexList prefix(o.final_s.begin(), o.final_s.begin() + r);
        TrainConfig cfg = opt.optimizer;
        cfg.l2_lambda = opt.optimization_ratio * 2.0 * critical_lambda(ds.x, ds.y, prefix);
        cfg.seed = detail::derive_seed(seed, static_cast<std::uint64_t>(r));
        AttentionModel m = init_model(linear, d, Scheme::l1, membership(d, prefix), cfg.seed);
        const TrainResult tr = train(std::move(m), linear, ds.x, ds.y, cfg, LossKind::squared_error);
        const Vector mag = mask_values(tr.model.logits, tr.model.selected, Scheme::l1);
        const IndexList top = detail::pick_top(mag, tr.model.selected, std::vector<bool>(static_cast<std::size_t>(d), false), 1);
        const bool ok = top.front() == o.final_s[static_cast<std::size_t>(r)];
        if (ok) rep.optimization->round_agreement[static_cast<std::size_t>(r)] += 1.0;
        agree_path.push_back(top.front());
      }
      detail::record(*rep.optimization, o, agree_path, seed);
    }
  }
  if (rep.optimization) {
    for (double& a : rep.optimization->round_agreement) a /= static_cast<double>(seeds.size());
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Softmax-attention regularizer Q*(beta o beta) for beta in R^2, S empty:
//   Q*(x) = inf_w ||w||^2 + sum_i x_i / softmax_i(w)^2.

struct QStarValue {
  double value = 0.0;
  Vector w;
  int restarts = 0;
  int best_restart = 0;
};

namespace detail {

inline double qstar_objective(const Vector& x, const Vector& w, Vector* grad) {
  const double mx = w.maxCoeff();
  Vector s = (w.array() - mx).exp();
  s /= s.sum();
  double f = w.squaredNorm();
  double acc = 0.0;  // sum_i x_i / s_i^2
  for (Index i = 0; i < x.size(); ++i) {
    if (x[i] == 0.0) continue;
    const double t = x[i] / (s[i] * s[i]);
    f += t;
    acc += t;
  }
  if (grad) {
    grad->resize(w.size());
    for (Index j = 0; j < w.size(); ++j) {
      const double own = x[j] == 0.0 ? 0.0 : x[j] / (s[j] * s[j]);
      (*grad)[j] = 2.0 * w[j] - 2.0 * own + 2.0 * s[j] * acc;
    }
  }
  return f;
}

}  // namespace detail

/// Multi-start gradient descent with Armijo backtracking over w in R^2.
inline QStarValue qstar_value(double beta1, double beta2, int max_iter = 20000) {
  Vector x(2);
  x << beta1 * beta1, beta2 * beta2;
  static constexpr std::array<double, 7> kStarts = {0.0, 1.0, -1.0, 3.0, -3.0, 6.0, -6.0};
  QStarValue best;
  best.value = std::numeric_limits<double>::infinity();
  int restart = 0;
  for (double t : kStarts) {
    Vector w(2);
    w << t, -t;
    Vector g;
    double f = detail::qstar_objective(x, w, &g);
    for (int it = 0; it < max_iter && g.norm() > 1e-11 * std::max(1.0, f); ++it) {
      double step = 1.0;
      Vector trial;
      double ft = 0.0;
      for (int bt = 0; bt < 80; ++bt, step *= 0.5) {
        trial = w - step * g;
        ft = detail::qstar_objective(x, trial, nullptr);
        if (ft <= f - 1e-4 * step * g.squaredNorm()) break;
      }
      if (!(ft < f)) break;
      w = trial;
      f = detail::qstar_objective(x, w, &g);
    }
    if (f < best.value) {
      best.value = f;
      best.w = w;
      best.best_restart = restart;
    }
    ++restart;
  }
  best.restarts = restart;
  return best;
}

struct QStarGrid {
  std::vector<double> axis;  // shared by beta1 and beta2
  Matrix values;             // values(i, j) = Q*(axis[i], axis[j])
  int restarts = 0;
  std::vector<std::pair<double, double>> diagonal_second_diff;      // (t, 2nd diff of Q*(t, t))
  std::vector<std::pair<double, double>> antidiagonal_second_diff;  // (b1, 2nd diff along b1 + b2 = c)
  double antidiagonal_c = 0.0;
};

/// Q* on a resolution x resolution grid over [-range, range]^2, with
/// second-difference probes along the diagonal (t, t) and along the line
/// beta1 + beta2 = 1.5 * range, restricted to |beta1| + |beta2| > 2.
inline QStarGrid qstar_grid(double range, int resolution) {
  detail::require(range > 0.0 && resolution >= 2, "qstar_grid: range and resolution must be positive");
  QStarGrid g;
  const double h = 2.0 * range / (resolution - 1);
  for (int i = 0; i < resolution; ++i) g.axis.push_back(-range + h * i);
  g.values.resize(resolution, resolution);
  for (int i = 0; i < resolution; ++i) {
    for (int j = 0; j < resolution; ++j) {
      const QStarValue v = qstar_value(g.axis[static_cast<std::size_t>(i)], g.axis[static_cast<std::size_t>(j)]);
      g.values(i, j) = v.value;
      g.restarts = v.restarts;
    }
  }
  const double probe_h = range / 20.0;
  for (double t = 1.0 + probe_h; t + probe_h <= range; t += probe_h) {
    const double q0 = qstar_value(t - probe_h, t - probe_h).value;
    const double q1 = qstar_value(t, t).value;
    const double q2 = qstar_value(t + probe_h, t + probe_h).value;
    g.diagonal_second_diff.emplace_back(t, q0 - 2.0 * q1 + q2);
  }
  g.antidiagonal_c = std::max(2.5, 1.5 * range);
  for (double b = probe_h; b + probe_h < g.antidiagonal_c; b += probe_h) {
    const double c = g.antidiagonal_c;
    const double q0 = qstar_value(b - probe_h, c - b + probe_h).value;
    const double q1 = qstar_value(b, c - b).value;
    const double q2 = qstar_value(b + probe_h, c - b - probe_h).value;
    g.antidiagonal_second_diff.emplace_back(b, q0 - 2.0 * q1 + q2);
  }
  return g;
}

// ---------------------------------------------------------------------------
// Attention scores vs exact marginal gains

enum class AttentionScoreSource { trained, analytic_linear };

struct MarginalGainRow {
  Index k = 0;
  IndexList preselected;
  IndexList candidates;
  std::vector<double> attention_scores;
  std::vector<double> gains;  // loss(S) - loss(S u {i}); higher is better
  double spearman = 0.0;
};

struct MarginalGainOptions {
  Scheme scheme = Scheme::softmax;
  AttentionScoreSource source = AttentionScoreSource::trained;
  Index epochs_per_round = 0;  // 0: cfg.epochs
};

/// loss(S u {i}) for every candidate, by exact least squares (linear
/// regression) or by training on the column subset.
inline std::vector<double> subset_losses(const Dataset& ds, const ModelSpec& spec, const TrainConfig& cfg,
                                         const IndexList& s, const IndexList& candidates) {
  std::vector<double> out;
  const bool exact = detail::exact_linear_path(ds, spec);
  for (Index i : candidates) {
    IndexList cols = s;
    cols.push_back(i);
    if (exact) {
      out.push_back(least_squares(select_columns(ds.x, cols), ds.y).residual_norm_sq);
      continue;
    }
    const Dataset sub = subset_columns(ds, cols);
    AttentionModel m = init_model(spec, sub.d(), Scheme::none, std::vector<bool>(cols.size(), true), cfg.seed);
    out.push_back(train(std::move(m), spec, sub.x, sub.y, cfg, default_loss(ds)).final_loss);
  }
  return out;
}

/// For each k: S = first k Sequential Attention picks; Spearman between the
/// attention scores of the round conditioned on S and the exact marginal gains
/// over the unselected features. The analytic_linear source scores a feature
/// by |<X_i, P_S^perp y>|, the quantity the regularized linear attention
/// objective thresholds on.
inline std::vector<MarginalGainRow> marginal_gain_correlation(const Dataset& ds, const ModelSpec& spec,
                                                              const TrainConfig& cfg,
                                                              const std::vector<Index>& preselected_k,
                                                              const MarginalGainOptions& opt = {}) {
  Index k_max = 0;
  for (Index k : preselected_k) k_max = std::max(k_max, k);
  detail::require(k_max < ds.d(), "marginal_gain_correlation: preselected size must leave candidates");
  IndexList order;
  if (k_max > 0) {
    AttentionSelectOptions so;
    so.scheme = opt.scheme;
    so.epochs_per_round = opt.epochs_per_round > 0 ? opt.epochs_per_round : cfg.epochs;
    order = sequential_attention(ds, spec, cfg, k_max, so).final_s;
  }

  std::vector<MarginalGainRow> rows;
  for (Index k : preselected_k) {
    MarginalGainRow row;
    row.k = k;
    row.preselected.assign(order.begin(), order.begin() + k);
    const auto in_s = membership(ds.d(), row.preselected);
    for (Index i = 0; i < ds.d(); ++i)
      if (!in_s[static_cast<std::size_t>(i)]) row.candidates.push_back(i);

    Vector scores;
    if (opt.source == AttentionScoreSource::analytic_linear) {
      detail::require(detail::exact_linear_path(ds, spec), "analytic_linear scores need a linear regression spec");
      scores = column_correlations(ds.x, project_residual(select_columns(ds.x, row.preselected), ds.y)).cwiseAbs();
    } else {
      TrainConfig rc = cfg;
      if (opt.epochs_per_round > 0) rc.epochs = opt.epochs_per_round;
      rc.seed = detail::derive_seed(cfg.seed, static_cast<std::uint64_t>(1000 + k));
      scores = attention_round(ds, spec, rc, in_s, opt.scheme).scores;
    }
    const auto losses = subset_losses(ds, spec, cfg, row.preselected, row.candidates);
    for (std::size_t c = 0; c < row.candidates.size(); ++c) {
      row.attention_scores.push_back(scores[row.candidates[c]]);
      row.gains.push_back(-losses[c]);
    }
    row.spearman = spearman(row.attention_scores, row.gains);
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace seqattn
