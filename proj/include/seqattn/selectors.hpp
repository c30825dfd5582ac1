#pragma once

// Sequential Attention, OMP, Sequential LASSO and greedy forward selection.
// Every selector returns a SelectionTrace; within a round the winner is the
// unselected feature with the largest score, ties going to the lowest index,
// and degenerate (all-zero / constant) columns always rank last.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <exception>
#include <limits>
#include <optional>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

#include <nlohmann/json.hpp>

#include "seqattn/data.hpp"
#include "seqattn/errors.hpp"
#include "seqattn/lasso.hpp"
#include "seqattn/linalg.hpp"
#include "seqattn/models.hpp"
#include "seqattn/optim.hpp"

namespace seqattn {

struct RoundRecord {
  Index round_index = 0;
  std::vector<std::optional<double>> candidate_scores;  // nullopt for features already in S
  IndexList chosen;
  double train_loss = 0.0;
  nlohmann::json hyperparams = nlohmann::json::object();
};

struct SelectionTrace {
  std::string method;
  std::vector<RoundRecord> rounds;
  IndexList final_s;
  nlohmann::json config = nlohmann::json::object();
  std::string dataset_fingerprint;
  std::vector<std::uint32_t> example_visits;  // filled in one-pass mode
};

struct AttentionSelectOptions {
  Scheme scheme = Scheme::softmax;
  Index batch_per_round = 1;
  Index epochs_per_round = 0;  // 0: spread cfg.epochs over the rounds
  bool warm_start = false;
  bool one_pass = false;       // round r trains once over shard r only
};

struct LassoSelectMode {
  enum class Kind { exact_critical, fixed_lambda };
  Kind kind = Kind::exact_critical;
  double lambda = 0.0;    // fixed_lambda only
  double epsilon = 1e-3;  // exact_critical: lambda = (1 - epsilon) * lambda*

  static LassoSelectMode exact(double eps = 1e-3) { return {Kind::exact_critical, 0.0, eps}; }
  static LassoSelectMode fixed(double lambda) { return {Kind::fixed_lambda, lambda, 1e-3}; }
};

namespace detail {

inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
  std::uint64_t z = base + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

/// Top `count` unselected indices: non-degenerate first, then score
/// descending (NaN as -inf), then index ascending.
inline IndexList pick_top(const Vector& scores, const std::vector<bool>& selected, const std::vector<bool>& degenerate,
                          Index count) {
  IndexList cand;
  for (Index i = 0; i < scores.size(); ++i)
    if (!selected[static_cast<std::size_t>(i)]) cand.push_back(i);
  auto key = [&](Index i) {
    const double s = std::isnan(scores[i]) ? -std::numeric_limits<double>::infinity() : scores[i];
    return std::make_tuple(degenerate[static_cast<std::size_t>(i)] ? 1 : 0, -s, i);
  };
  std::sort(cand.begin(), cand.end(), [&](Index a, Index b) { return key(a) < key(b); });
  cand.resize(static_cast<std::size_t>(std::min<Index>(count, static_cast<Index>(cand.size()))));
  return cand;
}

inline std::vector<std::optional<double>> masked_scores(const Vector& scores, const std::vector<bool>& selected) {
  std::vector<std::optional<double>> out(static_cast<std::size_t>(scores.size()));
  for (Index i = 0; i < scores.size(); ++i)
    if (!selected[static_cast<std::size_t>(i)]) out[static_cast<std::size_t>(i)] = scores[i];
  return out;
}

inline void require_budget(const Dataset& ds, Index k) {
  require(k >= 0 && k <= ds.d(), "selector: k must be in [0, d], got k=" + std::to_string(k) +
                                     " with d=" + std::to_string(ds.d()));
}

inline bool exact_linear_path(const Dataset& ds, const ModelSpec& spec) {
  return spec.kind == ModelKind::linear && ds.task == Task::regression && spec.output_dim == 1;
}

inline nlohmann::json train_config_json(const TrainConfig& cfg) {
  return {{"optimizer", to_string(cfg.optimizer)}, {"learning_rate", cfg.learning_rate},
          {"batch_size", cfg.batch_size},          {"epochs", cfg.epochs},
          {"l2_lambda", cfg.l2_lambda},            {"l1_mask_lambda", cfg.l1_mask_lambda},
          {"seed", cfg.seed}};
}

inline nlohmann::json spec_json(const ModelSpec& spec) {
  return {{"kind", to_string(spec.kind)}, {"hidden_width", spec.hidden_width}, {"output_dim", spec.output_dim}};
}

/// Per-round epoch budget: an explicit value, or cfg.epochs spread over the
/// rounds with the remainder going to the earliest rounds.
inline std::vector<Index> epoch_schedule(Index total_epochs, Index rounds, Index per_round) {
  std::vector<Index> out(static_cast<std::size_t>(rounds), per_round);
  if (per_round > 0) return out;
  const Index base = total_epochs / rounds;
  const Index extra = total_epochs % rounds;
  for (Index r = 0; r < rounds; ++r) out[static_cast<std::size_t>(r)] = std::max<Index>(1, base + (r < extra ? 1 : 0));
  return out;
}

}  // namespace detail

struct AttentionRound {
  Vector scores;  // logits for softmax, mask values for the other schemes
  double train_loss = 0.0;
  std::size_t steps = 0;
  AttentionModel model;
  std::vector<std::uint32_t> visits;
};

/// One round of Sequential Attention: train (theta, w) with the mask scheme
/// over the unselected set, then read off per-feature attention scores.
/// Softmax is ranked by the logits themselves; other schemes by their mask
/// value s_i(w), since the sign of w is irrelevant to them.
inline AttentionRound attention_round(const Dataset& ds, const ModelSpec& spec, const TrainConfig& cfg,
                                      const std::vector<bool>& selected, Scheme scheme,
                                      const AttentionModel* warm = nullptr) {
  AttentionModel model = warm ? *warm : init_model(spec, ds.d(), scheme, selected, cfg.seed);
  model.selected = selected;
  model.scheme = scheme;
  TrainResult tr = train(std::move(model), spec, ds.x, ds.y, cfg, default_loss(ds));
  AttentionRound out;
  out.scores = scheme == Scheme::softmax ? tr.model.logits : mask_values(tr.model.logits, selected, scheme);
  out.train_loss = tr.final_loss;
  out.steps = tr.steps;
  out.visits = std::move(tr.visits);
  out.model = std::move(tr.model);
  return out;
}

/// Sequential Attention: each round retrains the masked model (fresh
/// initialization unless warm_start) and adds the top batch_per_round
/// unselected features by attention score.
inline SelectionTrace sequential_attention(const Dataset& ds, const ModelSpec& spec, const TrainConfig& cfg, Index k,
                                           const AttentionSelectOptions& opt = {}) {
  detail::require_budget(ds, k);
  detail::require(opt.batch_per_round >= 1, "sequential_attention: batch_per_round must be >= 1");
  const Index rounds = k == 0 ? 0 : (k + opt.batch_per_round - 1) / opt.batch_per_round;
  const auto degenerate = degenerate_columns(ds);

  SelectionTrace trace;
  trace.method = "sequential_attention";
  trace.dataset_fingerprint = fingerprint(ds);
  trace.config = {{"scheme", to_string(opt.scheme)}, {"batch_per_round", opt.batch_per_round},
                  {"k", k}, {"warm_start", opt.warm_start}, {"one_pass", opt.one_pass},
                  {"model", detail::spec_json(spec)}, {"train", detail::train_config_json(cfg)},
                  {"loss", to_string(default_loss(ds))}, {"normalization", to_string(ds.norm_meta.kind)}};
  if (rounds == 0) return trace;

  const auto epochs = opt.one_pass ? std::vector<Index>(static_cast<std::size_t>(rounds), 1)
                                   : detail::epoch_schedule(cfg.epochs, rounds, opt.epochs_per_round);
  std::optional<ShardPlan> plan;
  if (opt.one_pass) {
    plan = make_shard_plan(ds.n(), rounds);
    trace.example_visits.assign(static_cast<std::size_t>(ds.n()), 0U);
  }

  std::vector<bool> selected(static_cast<std::size_t>(ds.d()), false);
  std::optional<AttentionModel> carried;
  for (Index r = 0; r < rounds; ++r) {
    const Index remaining = k - static_cast<Index>(trace.final_s.size());
    const Index count = std::min(opt.batch_per_round, remaining);

    TrainConfig rc = cfg;
    rc.epochs = epochs[static_cast<std::size_t>(r)];
    rc.seed = detail::derive_seed(cfg.seed, static_cast<std::uint64_t>(r));
    if (plan) {
      rc.shard = plan->round_boundaries[static_cast<std::size_t>(r)];
      rc.count_visits = true;
    }
    AttentionRound ar = attention_round(ds, spec, rc, selected, opt.scheme,
                                        opt.warm_start && carried ? &*carried : nullptr);
    if (plan) {
      for (std::size_t i = 0; i < ar.visits.size(); ++i) trace.example_visits[i] += ar.visits[i];
    }

    RoundRecord rec;
    rec.round_index = r;
    rec.candidate_scores = detail::masked_scores(ar.scores, selected);
    rec.chosen = detail::pick_top(ar.scores, selected, degenerate, count);
    rec.train_loss = ar.train_loss;
    rec.hyperparams = {{"epochs", rc.epochs}, {"seed", rc.seed}, {"steps", ar.steps}};
    if (rc.shard) rec.hyperparams["shard"] = {rc.shard->begin, rc.shard->end};
    for (Index i : rec.chosen) {
      selected[static_cast<std::size_t>(i)] = true;
      trace.final_s.push_back(i);
    }
    if (opt.warm_start) carried = std::move(ar.model);
    trace.rounds.push_back(std::move(rec));
  }
  return trace;
}

/// Orthogonal Matching Pursuit. Linear regression: score_i = <X_i, P_S^perp y>^2
/// from an exact least-squares refit of S. Other specs: the model is trained on
/// S alone and features are scored with glm_input_gradient_scores.
inline SelectionTrace omp(const Dataset& ds, const ModelSpec& spec, Index k, const TrainConfig& cfg = {}) {
  detail::require_budget(ds, k);
  const auto degenerate = degenerate_columns(ds);
  const bool exact = detail::exact_linear_path(ds, spec);

  SelectionTrace trace;
  trace.method = "omp";
  trace.dataset_fingerprint = fingerprint(ds);
  trace.config = {{"k", k}, {"model", detail::spec_json(spec)}, {"exact_linear", exact},
                  {"normalization", to_string(ds.norm_meta.kind)}};
  if (!exact) trace.config["train"] = detail::train_config_json(cfg);

  std::vector<bool> selected(static_cast<std::size_t>(ds.d()), false);
  for (Index r = 0; r < k; ++r) {
    RoundRecord rec;
    rec.round_index = r;
    Vector scores;
    if (exact) {
      const LstSqSolution ls = least_squares(select_columns(ds.x, trace.final_s), ds.y);
      scores = column_correlations(ds.x, ls.residual).array().square();
      rec.train_loss = ls.residual_norm_sq;
    } else {
      TrainConfig rc = cfg;
      rc.seed = detail::derive_seed(cfg.seed, static_cast<std::uint64_t>(r));
      AttentionModel m = init_model(spec, ds.d(), Scheme::none, selected, rc.seed);
      TrainResult tr = train(std::move(m), spec, ds.x, ds.y, rc, default_loss(ds));
      scores = glm_input_gradient_scores(tr.model, spec, ds.x, ds.y, default_loss(ds));
      rec.train_loss = tr.final_loss;
      rec.hyperparams = {{"seed", rc.seed}, {"steps", tr.steps}};
    }
    rec.candidate_scores = detail::masked_scores(scores, selected);
    rec.chosen = detail::pick_top(scores, selected, degenerate, 1);
    selected[static_cast<std::size_t>(rec.chosen.front())] = true;
    trace.final_s.push_back(rec.chosen.front());
    trace.rounds.push_back(std::move(rec));
  }
  return trace;
}

/// Sequential LASSO on a linear least-squares instance (unit columns assumed).
///
/// exact_critical: lambda* = ||X^T P_S^perp y||_inf in closed form; the
/// partial-l1 problem is solved at (1 - eps) lambda* and the entering set
/// A(S) = {i not in S : |beta_i| > 1e-10} is read off. eps is halved until
/// every entering feature's correlation is within 1e-6 of lambda*. The pick
/// inside A(S) is argmax |<X_i, P_S^perp y>|, lowest index on ties. Once S
/// explains y (lambda* = 0) the remaining features are taken in index order.
///
/// fixed_lambda: one solve per round at the given lambda, pick argmax |beta_i|.
inline SelectionTrace sequential_lasso(const Dataset& ds, Index k, LassoSelectMode mode = LassoSelectMode::exact(),
                                       const LassoOptions& lopt = {}) {
  detail::require_budget(ds, k);
  if (mode.kind == LassoSelectMode::Kind::fixed_lambda) {
    detail::require(mode.lambda > 0.0, "sequential_lasso: lambda must be > 0");
  } else {
    detail::require(mode.epsilon > 0.0 && mode.epsilon < 1.0, "sequential_lasso: epsilon must be in (0, 1)");
  }
  const auto degenerate = degenerate_columns(ds);
  const Index d = ds.d();

  SelectionTrace trace;
  trace.method = "sequential_lasso";
  trace.dataset_fingerprint = fingerprint(ds);
  trace.config = {{"k", k},
                  {"mode", mode.kind == LassoSelectMode::Kind::exact_critical ? "exact_critical" : "fixed_lambda"},
                  {"epsilon", mode.epsilon},
                  {"tol", lopt.tol},
                  {"max_sweeps", lopt.max_sweeps},
                  {"normalization", to_string(ds.norm_meta.kind)}};
  if (mode.kind == LassoSelectMode::Kind::fixed_lambda) trace.config["lambda"] = mode.lambda;

  std::vector<bool> selected(static_cast<std::size_t>(d), false);
  for (Index r = 0; r < k; ++r) {
    RoundRecord rec;
    rec.round_index = r;
    const LstSqSolution ls = least_squares(select_columns(ds.x, trace.final_s), ds.y);
    const Vector corr = column_correlations(ds.x, ls.residual);
    const Vector abs_corr = corr.cwiseAbs();
    rec.train_loss = ls.residual_norm_sq;

    Vector warm = Vector::Zero(d);
    for (std::size_t j = 0; j < trace.final_s.size(); ++j) warm[trace.final_s[j]] = ls.coefficients[static_cast<Index>(j)];

    if (mode.kind == LassoSelectMode::Kind::fixed_lambda) {
      const LassoSolution sol = solve_partial_lasso(ds.x, ds.y, selected, mode.lambda, lopt, &warm);
      const Vector mag = sol.beta.cwiseAbs();
      // Rank by |beta|, then correlation, then index.
      IndexList cand;
      for (Index i = 0; i < d; ++i)
        if (!selected[static_cast<std::size_t>(i)]) cand.push_back(i);
      std::sort(cand.begin(), cand.end(), [&](Index a, Index b) {
        return std::make_tuple(degenerate[static_cast<std::size_t>(a)] ? 1 : 0, -mag[a], -abs_corr[a], a) <
               std::make_tuple(degenerate[static_cast<std::size_t>(b)] ? 1 : 0, -mag[b], -abs_corr[b], b);
      });
      rec.chosen = {cand.front()};
      rec.candidate_scores = detail::masked_scores(mag, selected);
      rec.hyperparams = {{"lambda", mode.lambda}, {"kkt_residual", sol.kkt_residual},
                         {"sweeps", sol.sweeps_used}, {"entering", mag[cand.front()] > 0.0}};
    } else {
      double lambda_star = 0.0;
      for (Index i = 0; i < d; ++i)
        if (!selected[static_cast<std::size_t>(i)] && !degenerate[static_cast<std::size_t>(i)])
          lambda_star = std::max(lambda_star, abs_corr[i]);
      if (ls.residual.norm() <= 1e-12 * std::max(1.0, ds.y.norm())) lambda_star = 0.0;
      rec.candidate_scores = detail::masked_scores(abs_corr, selected);

      if (lambda_star == 0.0) {
        rec.chosen = detail::pick_top(Vector::Zero(d), selected, degenerate, 1);
        rec.hyperparams = {{"lambda_star", 0.0}, {"fallback", "index_order"}};
      } else {
        double eps = mode.epsilon;
        IndexList entering;
        LassoSolution sol;
        for (int halvings = 0;; ++halvings) {
          if (halvings > 60) {
            throw ConvergenceError("sequential_lasso: no consistent entering set below lambda* in round " +
                                   std::to_string(r));
          }
          sol = solve_partial_lasso(ds.x, ds.y, selected, (1.0 - eps) * lambda_star, lopt, &warm);
          entering.clear();
          for (Index i = 0; i < d; ++i)
            if (!selected[static_cast<std::size_t>(i)] && std::abs(sol.beta[i]) > 1e-10) entering.push_back(i);
          const bool consistent =
              !entering.empty() && std::all_of(entering.begin(), entering.end(),
                                               [&](Index i) { return abs_corr[i] >= lambda_star - 1e-6; });
          if (consistent) break;
          eps *= 0.5;
        }
        Index best = entering.front();
        for (Index i : entering)
          if (abs_corr[i] > abs_corr[best]) best = i;
        rec.chosen = {best};
        rec.hyperparams = {{"lambda_star", lambda_star},   {"epsilon", eps},
                           {"lambda", sol.lambda},         {"entering_set", entering},
                           {"kkt_residual", sol.kkt_residual}, {"sweeps", sol.sweeps_used}};
      }
    }
    selected[static_cast<std::size_t>(rec.chosen.front())] = true;
    trace.final_s.push_back(rec.chosen.front());
    trace.rounds.push_back(std::move(rec));
  }
  return trace;
}

/// Sequential LASSO carried over to non-linear models: each round trains the
/// masked model with an l1 penalty on the unselected mask magnitudes and
/// adds the feature with the largest mask magnitude.
inline SelectionTrace sequential_lasso_masked(const Dataset& ds, const ModelSpec& spec, const TrainConfig& cfg, Index k,
                                              double l1_lambda, Scheme scheme = Scheme::l1) {
  detail::require(l1_lambda > 0.0, "sequential_lasso_masked: l1_lambda must be > 0");
  TrainConfig c = cfg;
  c.l1_mask_lambda = l1_lambda;
  AttentionSelectOptions opt;
  opt.scheme = scheme;
  SelectionTrace t = sequential_attention(ds, spec, c, k, opt);
  t.method = "sequential_lasso";
  t.config["mode"] = "masked_l1";
  t.config["lambda"] = l1_lambda;
  return t;
}

/// Exact greedy forward selection: each round evaluates the loss of S u {i}
/// for every candidate and keeps the minimizer. Linear regression refits by
/// least squares; other specs train one model per candidate on those columns.
inline SelectionTrace greedy_forward(const Dataset& ds, const ModelSpec& spec, const TrainConfig& cfg, Index k,
                                     unsigned threads = 0) {
  detail::require_budget(ds, k);
  const auto degenerate = degenerate_columns(ds);
  const bool exact = detail::exact_linear_path(ds, spec);
  const Index d = ds.d();
  if (threads == 0) threads = std::max(1U, std::thread::hardware_concurrency());

  SelectionTrace trace;
  trace.method = "greedy";
  trace.dataset_fingerprint = fingerprint(ds);
  trace.config = {{"k", k}, {"model", detail::spec_json(spec)}, {"exact_linear", exact},
                  {"normalization", to_string(ds.norm_meta.kind)}};
  if (!exact) trace.config["train"] = detail::train_config_json(cfg);

  std::vector<bool> selected(static_cast<std::size_t>(d), false);
  for (Index r = 0; r < k; ++r) {
    IndexList cand;
    for (Index i = 0; i < d; ++i)
      if (!selected[static_cast<std::size_t>(i)]) cand.push_back(i);
    Vector losses = Vector::Constant(d, std::numeric_limits<double>::quiet_NaN());
    const std::uint64_t round_seed = detail::derive_seed(cfg.seed, static_cast<std::uint64_t>(r));

    auto eval = [&](Index i) {
      IndexList cols = trace.final_s;
      cols.push_back(i);
      if (exact) return least_squares(select_columns(ds.x, cols), ds.y).residual_norm_sq;
      const Dataset sub = subset_columns(ds, cols);
      TrainConfig rc = cfg;
      rc.seed = round_seed;
      AttentionModel m = init_model(spec, sub.d(), Scheme::none, std::vector<bool>(cols.size(), true), rc.seed);
      return train(std::move(m), spec, sub.x, sub.y, rc, default_loss(ds)).final_loss;
    };
    const unsigned workers = std::min<unsigned>(threads, static_cast<unsigned>(cand.size()));
    if (workers <= 1 || exact) {
      for (Index i : cand) losses[i] = eval(i);
    } else {
      std::vector<std::thread> pool;
      std::vector<std::exception_ptr> errors(workers);
      for (unsigned w = 0; w < workers; ++w) {
        pool.emplace_back([&, w] {
          try {
            for (std::size_t c = w; c < cand.size(); c += workers) losses[cand[c]] = eval(cand[c]);
          } catch (...) {
            errors[w] = std::current_exception();
          }
        });
      }
      for (auto& t : pool) t.join();
      for (auto& e : errors)
        if (e) std::rethrow_exception(e);
    }

    const Vector scores = -losses;
    RoundRecord rec;
    rec.round_index = r;
    rec.candidate_scores = detail::masked_scores(scores, selected);
    rec.chosen = detail::pick_top(scores, selected, degenerate, 1);
    rec.train_loss = losses[rec.chosen.front()];
    if (!exact) rec.hyperparams = {{"seed", round_seed}};
    selected[static_cast<std::size_t>(rec.chosen.front())] = true;
    trace.final_s.push_back(rec.chosen.front());
    trace.rounds.push_back(std::move(rec));
  }
  return trace;
}

}  // namespace seqattn
