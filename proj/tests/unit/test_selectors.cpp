#include <set>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "seqattn/selectors.hpp"
#include "seqattn/verify.hpp"

using namespace seqattn;

namespace {

const ModelSpec kLinear{ModelKind::linear, 0, 1};

Dataset orthonormal_instance() {
  // Orthonormal columns with y having decreasing weights 5, 4, 3, 2, 1.
  Eigen::HouseholderQR<Matrix> qr(Matrix::Random(20, 5));
  Dataset ds;
  ds.x = qr.householderQ() * Matrix::Identity(20, 5);
  Vector w(5);
  w << 3, 1, 5, 2, 4;
  ds.y = ds.x * w;
  return ds;
}

}  // namespace

TEST(Omp, OrthonormalDesignPicksByCoefficientMagnitude) {
  const Dataset ds = orthonormal_instance();
  EXPECT_EQ(omp(ds, kLinear, 5).final_s, (IndexList{2, 4, 0, 3, 1}));
}

TEST(Omp, MatchesExplicitProjectionOracle) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Dataset ds = equivalence_instance(40, 12, seed);
    EXPECT_EQ(omp(ds, kLinear, 6).final_s, oracle::omp_explicit(ds.x, ds.y, 6)) << "seed " << seed;
  }
}

TEST(Omp, TraceShape) {
  const Dataset ds = equivalence_instance(30, 8, 1);
  const SelectionTrace t = omp(ds, kLinear, 3);
  ASSERT_EQ(t.rounds.size(), 3U);
  EXPECT_EQ(t.method, "omp");
  EXPECT_EQ(t.dataset_fingerprint, fingerprint(ds));
  for (std::size_t r = 0; r < 3; ++r) {
    EXPECT_EQ(t.rounds[r].chosen.size(), 1U);
    for (std::size_t j = 0; j < r; ++j) EXPECT_FALSE(t.rounds[r].candidate_scores[static_cast<std::size_t>(t.final_s[j])]);
  }
  EXPECT_GE(t.rounds[0].train_loss, t.rounds[2].train_loss);
}

TEST(Omp, TieBreaksToLowestIndexAndDegenerateLast) {
  Dataset ds;
  ds.x = Matrix::Zero(4, 4);
  ds.x(0, 1) = 1.0;
  ds.x(0, 3) = 1.0;  // identical to column 1
  ds.x(1, 2) = 1.0;
  ds.y = Vector::Zero(4);
  ds.y[0] = 1.0;
  ds.y[1] = 0.5;
  // Column 0 is all zero, so it is degenerate and always ranks last.
  const SelectionTrace t = omp(ds, kLinear, 4);
  EXPECT_EQ(t.final_s.front(), 1);
  EXPECT_EQ(t.final_s[1], 2);
  EXPECT_EQ(t.final_s.back(), 0);
}

TEST(Greedy, MatchesBruteForceOracle) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const Dataset ds = equivalence_instance(30, 10, 40 + seed);
    EXPECT_EQ(greedy_forward(ds, kLinear, {}, 4).final_s, oracle::greedy_brute_force(ds.x, ds.y, 4));
  }
}

TEST(Greedy, NonLinearSpecIsThreadCountIndependent) {
  const Dataset ds = normalize_zscore(synth_sparse_linear(60, 5, 2, 0.1, 3).dataset);
  const ModelSpec mlp{ModelKind::mlp_relu, 4, 1};
  TrainConfig cfg;
  cfg.epochs = 5;
  cfg.batch_size = 20;
  const auto a = greedy_forward(ds, mlp, cfg, 2, 1);
  const auto b = greedy_forward(ds, mlp, cfg, 2, 3);
  EXPECT_EQ(a.final_s, b.final_s);
  EXPECT_EQ(a.rounds[0].candidate_scores, b.rounds[0].candidate_scores);
}

TEST(SequentialLasso, EqualsOmpOnRandomInstances) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const Dataset ds = equivalence_instance(60, 15, seed);
    EXPECT_EQ(sequential_lasso(ds, 6).final_s, omp(ds, kLinear, 6).final_s) << "seed " << seed;
  }
}

TEST(SequentialLasso, FixedLambdaRecordsMagnitudes) {
  const Dataset ds = equivalence_instance(40, 8, 2);
  const double lambda = 0.5 * critical_lambda(ds.x, ds.y, {});
  const SelectionTrace t = sequential_lasso(ds, 3, LassoSelectMode::fixed(lambda));
  EXPECT_EQ(t.final_s.size(), 3U);
  EXPECT_EQ(t.config["mode"], "fixed_lambda");
  EXPECT_THROW(sequential_lasso(ds, 3, LassoSelectMode::fixed(0.0)), ContractError);
}

TEST(SequentialLasso, FallsBackToIndexOrderWhenResidualVanishes) {
  Dataset ds = equivalence_instance(20, 5, 3);
  ds.y = ds.x.col(3);
  const SelectionTrace t = sequential_lasso(ds, 3);
  EXPECT_EQ(t.final_s, (IndexList{3, 0, 1}));
  EXPECT_EQ(t.rounds[1].hyperparams["fallback"], "index_order");
}

TEST(SequentialAttention, RecoversPlantedSupport) {
  const auto inst = synth_sparse_linear(400, 20, 3, 0.05, 7);
  const Dataset ds = normalize_zscore(inst.dataset);
  TrainConfig cfg;
  cfg.learning_rate = 2e-2;
  cfg.batch_size = 400;
  cfg.epochs = 900;
  cfg.l2_lambda = critical_lambda(ds.x, ds.y, {});
  const SelectionTrace t = sequential_attention(ds, kLinear, cfg, 3);
  std::set<Index> got(t.final_s.begin(), t.final_s.end());
  EXPECT_EQ(got, std::set<Index>(inst.true_support.begin(), inst.true_support.end()));
}

TEST(SequentialAttention, BatchPerRoundAndBudget) {
  const Dataset ds = normalize_zscore(synth_sparse_linear(100, 10, 3, 0.1, 1).dataset);
  TrainConfig cfg;
  cfg.epochs = 10;
  cfg.batch_size = 25;
  AttentionSelectOptions opt;
  opt.batch_per_round = 3;
  const SelectionTrace t = sequential_attention(ds, kLinear, cfg, 7, opt);
  ASSERT_EQ(t.rounds.size(), 3U);
  EXPECT_EQ(t.rounds[0].chosen.size(), 3U);
  EXPECT_EQ(t.rounds[2].chosen.size(), 1U);
  std::size_t steps = 0;
  for (const auto& r : t.rounds) steps += r.hyperparams["steps"].get<std::size_t>();
  EXPECT_EQ(steps, 10U * 4U);
  EXPECT_THROW(sequential_attention(ds, kLinear, cfg, 11), ContractError);
  EXPECT_TRUE(sequential_attention(ds, kLinear, cfg, 0).final_s.empty());
}

TEST(SequentialAttention, OnePassVisitsEachExampleOnce) {
  const Dataset ds = normalize_zscore(synth_sparse_linear(103, 10, 3, 0.1, 1).dataset);
  TrainConfig cfg;
  cfg.batch_size = 8;
  AttentionSelectOptions opt;
  opt.one_pass = true;
  opt.batch_per_round = 2;
  const SelectionTrace t = sequential_attention(ds, kLinear, cfg, 8, opt);
  ASSERT_EQ(t.example_visits.size(), 103U);
  for (auto v : t.example_visits) EXPECT_EQ(v, 1U);
}

TEST(SequentialAttention, AllSchemesProduceValidSelections) {
  const Dataset ds = normalize_zscore(synth_sparse_linear(80, 8, 2, 0.1, 2).dataset);
  TrainConfig cfg;
  cfg.epochs = 6;
  cfg.batch_size = 40;
  for (Scheme s : kAllSchemes) {
    AttentionSelectOptions opt;
    opt.scheme = s;
    opt.warm_start = s == Scheme::l2;
    const SelectionTrace t = sequential_attention(ds, ModelSpec{ModelKind::mlp_relu, 4, 1}, cfg, 4, opt);
    std::set<Index> uniq(t.final_s.begin(), t.final_s.end());
    EXPECT_EQ(uniq.size(), 4U) << to_string(s);
  }
}

TEST(SequentialLassoMasked, RunsOnClassification) {
  Dataset ds = normalize_zscore(synth_sparse_linear(80, 6, 2, 0.1, 5).dataset);
  ds.task = Task::classification;
  for (Index i = 0; i < ds.n(); ++i) ds.y[i] = ds.y[i] > 0.0 ? 1.0 : 0.0;
  ds.num_classes = 2;
  TrainConfig cfg;
  cfg.epochs = 5;
  const ModelSpec spec = make_spec(ModelKind::glm_logistic, ds);
  const SelectionTrace t = sequential_lasso_masked(ds, spec, cfg, 3, 0.5);
  EXPECT_EQ(t.final_s.size(), 3U);
  EXPECT_EQ(t.method, "sequential_lasso");
  const SelectionTrace o = omp(ds, spec, 2, cfg);
  EXPECT_EQ(o.final_s.size(), 2U);
}
