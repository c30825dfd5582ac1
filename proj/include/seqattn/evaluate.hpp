#pragma once

// Held-out evaluation of a selected feature set and the adaptivity sweep
// (features added per round vs downstream quality at a fixed step budget).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "seqattn/data.hpp"
#include "seqattn/linalg.hpp"
#include "seqattn/models.hpp"
#include "seqattn/optim.hpp"
#include "seqattn/selectors.hpp"
#include "seqattn/stats.hpp"

namespace seqattn {

struct HoldoutMetrics {
  std::optional<double> accuracy;      // classification
  std::optional<double> auc;           // binary classification
  std::optional<double> log_loss;      // classification, mean per example
  std::optional<double> squared_loss;  // regression, mean per example
  std::optional<double> r2;            // regression
};

namespace detail {

inline HoldoutMetrics classification_metrics(const Matrix& proba, const Vector& y, int num_classes) {
  HoldoutMetrics m;
  const Index n = y.size();
  double correct = 0.0, ll = 0.0;
  std::vector<double> pos_score;
  std::vector<int> labels;
  for (Index i = 0; i < n; ++i) {
    const auto c = static_cast<Index>(y[i]);
    Index arg = 0;
    proba.row(i).maxCoeff(&arg);
    correct += arg == c ? 1.0 : 0.0;
    ll -= std::log(std::clamp(proba(i, c), 1e-15, 1.0));
    if (num_classes == 2) {
      pos_score.push_back(proba(i, 1));
      labels.push_back(c == 1 ? 1 : 0);
    }
  }
  m.accuracy = correct / static_cast<double>(n);
  m.log_loss = ll / static_cast<double>(n);
  if (num_classes == 2) m.auc = roc_auc(pos_score, labels);
  return m;
}

inline HoldoutMetrics regression_metrics(const Vector& pred, const Vector& y) {
  HoldoutMetrics m;
  const double sse = (pred - y).squaredNorm();
  const double sst = (y.array() - y.mean()).matrix().squaredNorm();
  m.squared_loss = sse / static_cast<double>(y.size());
  m.r2 = sst > 0.0 ? 1.0 - sse / sst : 0.0;
  return m;
}

/// Two-column (or num_classes-column) probabilities for every model kind.
inline Matrix class_probabilities(const AttentionModel& model, const ModelSpec& spec, const Matrix& x) {
  const Matrix p = predict_proba(model, spec, x);
  if (p.cols() > 1) return p;
  Matrix two(p.rows(), 2);
  two.col(1) = p.col(0);
  two.col(0) = (1.0 - p.col(0).array()).matrix();
  return two;
}

}  // namespace detail

/// Trains on train's `features` columns and scores on validation. An empty
/// feature set falls back to the majority class or the training mean.
inline HoldoutMetrics holdout_metrics(const Dataset& train_ds, const Dataset& val_ds, const IndexList& features,
                                      ModelKind kind, Index hidden_width, const TrainConfig& cfg) {
  if (features.empty()) {
    if (train_ds.task == Task::regression) {
      return detail::regression_metrics(Vector::Constant(val_ds.n(), train_ds.y.mean()), val_ds.y);
    }
    Vector freq = Vector::Zero(train_ds.num_classes);
    for (Index i = 0; i < train_ds.n(); ++i) freq[static_cast<Index>(train_ds.y[i])] += 1.0;
    freq /= static_cast<double>(train_ds.n());
    Matrix proba(val_ds.n(), train_ds.num_classes);
    for (Index i = 0; i < val_ds.n(); ++i) proba.row(i) = freq.transpose();
    return detail::classification_metrics(proba, val_ds.y, train_ds.num_classes);
  }
  const Dataset tr = subset_columns(train_ds, features);
  const Dataset va = subset_columns(val_ds, features);
  const ModelSpec spec = make_spec(kind, tr, hidden_width);
  AttentionModel m = init_model(spec, tr.d(), Scheme::none, std::vector<bool>(features.size(), true), cfg.seed);
  const TrainResult res = train(std::move(m), spec, tr.x, tr.y, cfg, default_loss(tr));
  if (tr.task == Task::regression) return detail::regression_metrics(forward(res.model, spec, va.x).col(0), va.y);
  return detail::classification_metrics(detail::class_probabilities(res.model, spec, va.x), va.y, tr.num_classes);
}

struct EvaluationSummary {
  Index trials = 0;
  std::vector<HoldoutMetrics> per_trial;
  std::optional<MeanStd> accuracy, auc, log_loss, squared_loss, r2;
};

/// Repeated random holdout splits; trial t uses split seed derive(seed, t).
inline EvaluationSummary evaluate_selection(const Dataset& ds, const IndexList& features, ModelKind kind,
                                            Index hidden_width, const TrainConfig& cfg, Index trials,
                                            double holdout_fraction, std::uint64_t seed) {
  detail::require(trials >= 1, "evaluate_selection: trials must be >= 1");
  EvaluationSummary out;
  out.trials = trials;
  for (Index t = 0; t < trials; ++t) {
    const std::uint64_t s = detail::derive_seed(seed, static_cast<std::uint64_t>(t));
    const auto [tr, va] = train_validation_split(ds, holdout_fraction, s);
    TrainConfig c = cfg;
    c.seed = s;
    out.per_trial.push_back(holdout_metrics(tr, va, features, kind, hidden_width, c));
  }
  auto collect = [&](std::optional<double> HoldoutMetrics::*field) -> std::optional<MeanStd> {
    std::vector<double> v;
    for (const auto& m : out.per_trial)
      if (m.*field) v.push_back(*(m.*field));
    if (v.empty()) return std::nullopt;
    return mean_std(v);
  };
  out.accuracy = collect(&HoldoutMetrics::accuracy);
  out.auc = collect(&HoldoutMetrics::auc);
  out.log_loss = collect(&HoldoutMetrics::log_loss);
  out.squared_loss = collect(&HoldoutMetrics::squared_loss);
  out.r2 = collect(&HoldoutMetrics::r2);
  return out;
}

struct AdaptivityRow {
  Index batch_per_round = 1;
  Index rounds = 0;
  std::size_t total_steps = 0;
  IndexList selected;
  double metric = 0.0;  // validation R^2 (regression) or accuracy (classification)
};

struct AdaptivityReport {
  std::string metric_name;
  std::vector<AdaptivityRow> rows;
  bool monotone_non_increasing = false;  // quality never improves as batch_per_round grows
};

/// Runs Sequential Attention at each batch_per_round with the same total epoch
/// budget cfg.epochs (spread over the rounds, so the number of optimizer steps
/// is identical) and scores each selection on a fixed holdout split.
inline AdaptivityReport sweep_adaptivity(const Dataset& ds, const ModelSpec& spec, const TrainConfig& cfg, Index k,
                                         const std::vector<Index>& batch_sizes, Scheme scheme,
                                         double holdout_fraction = 0.2) {
  AdaptivityReport rep;
  rep.metric_name = ds.task == Task::regression ? "r2" : "accuracy";
  const auto [tr, va] = train_validation_split(ds, holdout_fraction, detail::derive_seed(cfg.seed, 0xADA));
  for (Index b : batch_sizes) {
    AttentionSelectOptions opt;
    opt.scheme = scheme;
    opt.batch_per_round = b;
    const SelectionTrace t = sequential_attention(tr, spec, cfg, k, opt);
    AdaptivityRow row;
    row.batch_per_round = b;
    row.rounds = static_cast<Index>(t.rounds.size());
    for (const auto& r : t.rounds) row.total_steps += r.hyperparams.value("steps", std::size_t{0});
    row.selected = t.final_s;
    const HoldoutMetrics m = holdout_metrics(tr, va, t.final_s, spec.kind, spec.hidden_width, cfg);
    row.metric = ds.task == Task::regression ? *m.r2 : *m.accuracy;
    rep.rows.push_back(std::move(row));
  }
  rep.monotone_non_increasing = true;
  for (std::size_t i = 1; i < rep.rows.size(); ++i)
    if (rep.rows[i].metric > rep.rows[i - 1].metric + 1e-12) rep.monotone_non_increasing = false;
  return rep;
}

}  // namespace seqattn
