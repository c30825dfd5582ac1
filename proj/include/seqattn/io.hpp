#pragma once

// JSON encodings of traces and certification reports. Non-finite numbers are
// written as null, and null reads back as NaN.

#include <cmath>
#include <fstream>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "seqattn/errors.hpp"
#include "seqattn/evaluate.hpp"
#include "seqattn/lasso.hpp"
#include "seqattn/selectors.hpp"
#include "seqattn/verify.hpp"

namespace seqattn {

using nlohmann::json;

namespace detail {

inline json num(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

inline json vec(const std::vector<double>& v) {
  json a = json::array();
  for (double x : v) a.push_back(num(x));
  return a;
}

inline json opt_mean_std(const std::optional<MeanStd>& m) {
  if (!m) return nullptr;
  return {{"mean", num(m->mean)}, {"std", num(m->std)}};
}

}  // namespace detail

inline json to_json(const RoundRecord& r) {
  json scores = json::array();
  for (const auto& s : r.candidate_scores) scores.push_back(s ? detail::num(*s) : json(nullptr));
  return {{"round_index", r.round_index}, {"candidate_scores", scores}, {"chosen", r.chosen},
          {"train_loss", detail::num(r.train_loss)}, {"hyperparams", r.hyperparams}};
}

inline json to_json(const SelectionTrace& t) {
  json rounds = json::array();
  for (const auto& r : t.rounds) rounds.push_back(to_json(r));
  json j = {{"method", t.method}, {"rounds", rounds}, {"final_S", t.final_s}, {"config", t.config},
            {"dataset_fingerprint", t.dataset_fingerprint}};
  if (!t.example_visits.empty()) j["example_visits"] = t.example_visits;
  return j;
}

/// Inverse of to_json. Already-selected features are stored as null scores,
/// so a null score is read back as "selected" (nullopt).
inline SelectionTrace trace_from_json(const json& j) {
  try {
    SelectionTrace t;
    t.method = j.at("method").get<std::string>();
    t.final_s = j.at("final_S").get<IndexList>();
    t.config = j.value("config", json::object());
    t.dataset_fingerprint = j.value("dataset_fingerprint", std::string{});
    if (j.contains("example_visits")) t.example_visits = j.at("example_visits").get<std::vector<std::uint32_t>>();
    for (const auto& jr : j.at("rounds")) {
      RoundRecord r;
      r.round_index = jr.at("round_index").get<Index>();
      for (const auto& s : jr.at("candidate_scores"))
        r.candidate_scores.push_back(s.is_null() ? std::nullopt : std::optional<double>(s.get<double>()));
      r.chosen = jr.at("chosen").get<IndexList>();
      r.train_loss = jr.at("train_loss").is_null() ? std::numeric_limits<double>::quiet_NaN()
                                                   : jr.at("train_loss").get<double>();
      r.hyperparams = jr.value("hyperparams", json::object());
      t.rounds.push_back(std::move(r));
    }
    return t;
  } catch (const json::exception& e) {
    throw ContractError(std::string("malformed trace JSON: ") + e.what());
  }
}

inline json to_json(const EquivalenceReport& r) {
  json j = {{"methods_compared", {r.methods_compared.first, r.methods_compared.second}},
            {"instances", r.instances},
            {"exact_match_count", r.exact_match_count},
            {"untied_mismatches", r.untied_mismatches},
            {"tie_flags", r.tie_flags},
            {"degenerate_rounds", r.degenerate_rounds},
            {"pass", r.pass()}};
  if (r.first_divergence) {
    j["first_divergence"] = {{"seed", r.first_divergence->seed},
                             {"round", r.first_divergence->round},
                             {"scores", detail::vec(r.first_divergence->scores)}};
  } else {
    j["first_divergence"] = nullptr;
  }
  if (!r.round_agreement.empty()) j["round_agreement"] = detail::vec(r.round_agreement);
  j["max_objective_gap"] = detail::num(r.max_objective_gap);
  return j;
}

/// One record per epsilon, each carrying the instance fingerprint.
inline json to_json(const LemmaReport& r) {
  json records = json::array();
  for (const auto& e : r.results) {
    records.push_back({{"lemma", "proj_res"},
                       {"instance_fingerprint", r.instance_fingerprint},
                       {"epsilon", e.epsilon},
                       {"lambda", detail::num(e.lambda)},
                       {"T", e.t},
                       {"residual_norm", detail::num(e.residual_norm)},
                       {"orthogonal_component", detail::num(e.orthogonal_component)},
                       {"orthogonal_to_span_xt", detail::num(e.orthogonal_to_xt)},
                       {"pass", e.pass}});
  }
  return {{"lemma", "proj_res"},
          {"instance_fingerprint", r.instance_fingerprint},
          {"critical_lambda", detail::num(r.critical)},
          {"epsilon_threshold", r.epsilon_threshold ? json(*r.epsilon_threshold) : json(nullptr)},
          {"records", records},
          {"pass", r.pass}};
}

inline json to_json(const HoffReport& r) {
  json inst = json::array();
  for (const auto& i : r.instances)
    inst.push_back({{"l1", detail::num(i.l1)}, {"factored_split", detail::num(i.factored_split)},
                    {"factored_alternating", detail::num(i.factored_alternating)}, {"iterations", i.iterations},
                    {"gap", detail::num(i.gap)}});
  return {{"instances", inst}, {"max_gap", detail::num(r.max_gap)}, {"max_split_gap", detail::num(r.max_split_gap)},
          {"tolerance", r.tolerance}, {"pass", r.pass()}};
}

inline json to_json(const QStarGrid& g) {
  json diag = json::array(), anti = json::array();
  for (const auto& [t, v] : g.diagonal_second_diff) diag.push_back({{"t", t}, {"second_difference", detail::num(v)}});
  for (const auto& [b, v] : g.antidiagonal_second_diff)
    anti.push_back({{"beta1", b}, {"second_difference", detail::num(v)}});
  return {{"resolution", g.axis.size()},
          {"range", g.axis.empty() ? 0.0 : g.axis.back()},
          {"restarts", g.restarts},
          {"diagonal_probe", diag},
          {"antidiagonal_probe", {{"c", g.antidiagonal_c}, {"points", anti}}}};
}

/// Columns x, y, value: one line per grid point.
inline void write_qstar_csv(const QStarGrid& g, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw ContractError("cannot write " + path);
  os.precision(17);
  os << "x,y,value\n";
  for (std::size_t i = 0; i < g.axis.size(); ++i)
    for (std::size_t j = 0; j < g.axis.size(); ++j)
      os << g.axis[i] << ',' << g.axis[j] << ',' << g.values(static_cast<Index>(i), static_cast<Index>(j)) << '\n';
}

inline json to_json(const EvaluationSummary& s) {
  return {{"trials", s.trials},
          {"accuracy", detail::opt_mean_std(s.accuracy)},
          {"auc", detail::opt_mean_std(s.auc)},
          {"log_loss", detail::opt_mean_std(s.log_loss)},
          {"squared_loss", detail::opt_mean_std(s.squared_loss)},
          {"r2", detail::opt_mean_std(s.r2)}};
}

inline json to_json(const AdaptivityReport& r) {
  json rows = json::array();
  for (const auto& row : r.rows)
    rows.push_back({{"batch_per_round", row.batch_per_round}, {"rounds", row.rounds},
                    {"total_steps", row.total_steps}, {"selected", row.selected},
                    {"metric", detail::num(row.metric)}});
  return {{"metric", r.metric_name}, {"rows", rows}, {"monotone_non_increasing", r.monotone_non_increasing}};
}

inline json to_json(const std::vector<MarginalGainRow>& rows) {
  json out = json::array();
  for (const auto& r : rows)
    out.push_back({{"k", r.k}, {"preselected", r.preselected}, {"candidates", r.candidates},
                   {"attention_scores", detail::vec(r.attention_scores)}, {"gains", detail::vec(r.gains)},
                   {"spearman", detail::num(r.spearman)}});
  return out;
}

}  // namespace seqattn
