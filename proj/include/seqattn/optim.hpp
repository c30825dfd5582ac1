#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "seqattn/data.hpp"
#include "seqattn/errors.hpp"
#include "seqattn/models.hpp"

namespace seqattn {

enum class OptimizerKind { sgd, adam };

inline const char* to_string(OptimizerKind k) { return k == OptimizerKind::sgd ? "sgd" : "adam"; }

inline OptimizerKind optimizer_from_string(const std::string& s) {
  if (s == "sgd") return OptimizerKind::sgd;
  if (s == "adam") return OptimizerKind::adam;
  throw ContractError("unknown optimizer '" + s + "'");
}

struct TrainConfig {
  OptimizerKind optimizer = OptimizerKind::adam;
  double learning_rate = 1e-3;
  Index batch_size = 256;
  Index epochs = 100;
  double l2_lambda = 0.0;       // Penalty::l2, on the summed-loss scale
  double l1_mask_lambda = 0.0;  // Penalty::l1_mask, on the summed-loss scale
  std::uint64_t seed = 0;
  std::optional<ExampleRange> shard;  // train on these rows only
  bool count_visits = false;
};

struct TrainResult {
  AttentionModel model;
  double initial_loss = 0.0;  // objective / n_train before the first step
  double final_loss = 0.0;    // objective / n_train after the last step
  std::size_t steps = 0;
  std::vector<std::uint32_t> visits;  // per example of X, when requested
};

namespace detail {

inline void validate(const TrainConfig& cfg) {
  require(cfg.learning_rate > 0.0 && std::isfinite(cfg.learning_rate), "TrainConfig: learning_rate must be > 0");
  require(cfg.epochs >= 1, "TrainConfig: epochs must be >= 1");
  require(cfg.batch_size >= 1, "TrainConfig: batch_size must be >= 1");
  require(cfg.l2_lambda >= 0.0 && cfg.l1_mask_lambda >= 0.0, "TrainConfig: penalties must be >= 0");
}

struct AdamState {
  std::vector<double> m, v;
};

}  // namespace detail

/// Objective on rows [range): (summed data loss + penalty) / rows.
inline double training_objective(const AttentionModel& model, const ModelSpec& spec, const Matrix& x, const Vector& y,
                                 LossKind loss, const Penalty& penalty) {
  const double n = static_cast<double>(x.rows());
  return loss_value(model, spec, x, y, loss, penalty) / n;
}

/// Mini-batch training for exactly epochs * ceil(n_train / batch) steps. The
/// per-step gradient is an unbiased estimate of the gradient of the
/// training_objective. Batches are drawn from a per-epoch shuffle seeded by
/// cfg.seed only.
inline TrainResult train(AttentionModel model, const ModelSpec& spec, const Matrix& x, const Vector& y,
                         const TrainConfig& cfg, LossKind loss) {
  detail::validate(cfg);
  detail::require(x.rows() == y.size(), "train: X rows and y length differ");
  detail::require(x.cols() == model.d(), "train: dataset columns do not match model dimension");

  const ExampleRange range = cfg.shard.value_or(ExampleRange{0, x.rows()});
  detail::require(range.begin >= 0 && range.begin < range.end && range.end <= x.rows(), "train: empty or invalid shard");
  const Matrix xt = x.middleRows(range.begin, range.size());
  const Vector yt = y.segment(range.begin, range.size());
  const Index n = xt.rows();
  const Penalty scaled{cfg.l2_lambda / static_cast<double>(n), cfg.l1_mask_lambda / static_cast<double>(n)};
  const Penalty raw{cfg.l2_lambda, cfg.l1_mask_lambda};

  TrainResult res;
  if (cfg.count_visits) res.visits.assign(static_cast<std::size_t>(x.rows()), 0U);
  res.initial_loss = training_objective(model, spec, xt, yt, loss, raw);

  std::mt19937_64 rng(cfg.seed);
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});

  // Flat optimizer state: the 4 theta blocks followed by the logits.
  std::size_t total = static_cast<std::size_t>(model.logits.size());
  for (auto b : model.theta.blocks()) total += b.size();
  detail::AdamState adam{std::vector<double>(total, 0.0), std::vector<double>(total, 0.0)};
  const double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;

  Matrix xb;
  Vector yb;
  for (Index epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (Index start = 0; start < n; start += cfg.batch_size) {
      const Index len = std::min(cfg.batch_size, n - start);
      xb.resize(len, xt.cols());
      yb.resize(len);
      for (Index r = 0; r < len; ++r) {
        const Index src = order[static_cast<std::size_t>(start + r)];
        xb.row(r) = xt.row(src);
        yb[r] = yt[src];
        if (cfg.count_visits) ++res.visits[static_cast<std::size_t>(range.begin + src)];
      }
      LossAndGrads g = loss_and_grads(model, spec, xb, yb, loss, scaled, 1.0 / static_cast<double>(len));
      ++res.steps;
      if (!std::isfinite(g.loss)) {
        throw DivergenceError(res.steps, "training diverged: non-finite loss at step " + std::to_string(res.steps));
      }

      auto params = model.theta.blocks();
      auto grads = g.grad_theta.blocks();
      std::size_t k = 0;
      const double t = static_cast<double>(res.steps);
      const double bc1 = 1.0 - std::pow(beta1, t);
      const double bc2 = 1.0 - std::pow(beta2, t);
      auto update = [&](double& p, double gi) {
        if (cfg.optimizer == OptimizerKind::sgd) {
          p -= cfg.learning_rate * gi;
        } else {
          adam.m[k] = beta1 * adam.m[k] + (1.0 - beta1) * gi;
          adam.v[k] = beta2 * adam.v[k] + (1.0 - beta2) * gi * gi;
          p -= cfg.learning_rate * (adam.m[k] / bc1) / (std::sqrt(adam.v[k] / bc2) + eps);
        }
        ++k;
      };
      for (std::size_t b = 0; b < params.size(); ++b)
        for (std::size_t i = 0; i < params[b].size(); ++i) update(params[b][i], grads[b][i]);
      for (Index i = 0; i < model.logits.size(); ++i) update(model.logits[i], g.grad_logits[i]);

      if (!model.logits.allFinite() || !model.theta.w1.allFinite() || !model.theta.w2.allFinite()) {
        throw DivergenceError(res.steps, "training diverged: non-finite parameters at step " + std::to_string(res.steps));
      }
    }
  }
  res.final_loss = training_objective(model, spec, xt, yt, loss, raw);
  if (!std::isfinite(res.final_loss)) {
    throw DivergenceError(res.steps, "training diverged: non-finite final loss");
  }
  res.model = std::move(model);
  return res;
}

}  // namespace seqattn
