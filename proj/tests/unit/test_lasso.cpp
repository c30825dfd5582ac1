#include <random>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "seqattn/data.hpp"
#include "seqattn/lasso.hpp"
#include "seqattn/verify.hpp"

using namespace seqattn;

namespace {

Dataset instance(Index n, Index d, std::uint64_t seed) { return equivalence_instance(n, d, seed); }

double stationarity(const Matrix& x, const Vector& y, const std::vector<bool>& in_s, double lambda, const Vector& b) {
  return detail::kkt_violation(x.transpose() * (y - x * b), b, in_s, lambda);
}

}  // namespace

TEST(PartialLasso, OrthonormalDesignIsSoftThresholding) {
  // Orthonormal columns: beta_i = soft(<X_i, y>, lambda) off S, <X_i, y> on S.
  Eigen::HouseholderQR<Matrix> qr(Matrix::Random(12, 5));
  const Matrix q = qr.householderQ() * Matrix::Identity(12, 5);
  Vector y = Vector::Random(12);
  const std::vector<bool> in_s = {false, true, false, false, false};
  const double lambda = 0.2;
  const LassoSolution sol = solve_partial_lasso(q, y, in_s, lambda);
  const Vector c = q.transpose() * y;
  for (Index i = 0; i < 5; ++i) {
    const double expect = in_s[static_cast<std::size_t>(i)] ? c[i] : detail::soft_threshold(c[i], lambda);
    EXPECT_NEAR(sol.beta[i], expect, 1e-12);
  }
}

TEST(PartialLasso, MatchesFistaOracle) {
  for (std::uint64_t seed = 0; seed < 8; ++seed) {
    const Dataset ds = instance(40, 8, seed);
    const auto in_s = membership(8, IndexList{static_cast<Index>(seed % 8)});
    const double lambda = 0.3 * critical_lambda(ds.x, ds.y, {static_cast<Index>(seed % 8)});
    const LassoSolution sol = solve_partial_lasso(ds.x, ds.y, in_s, lambda);
    const Vector ref = oracle::lasso_fista(ds.x, ds.y, in_s, lambda);
    EXPECT_LT((sol.beta - ref).lpNorm<Eigen::Infinity>(), 1e-7) << "seed " << seed;
  }
}

TEST(PartialLasso, KktAndDualityGapOnRandomInstances) {
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    const Dataset ds = instance(60, 15, 1000 + seed);
    std::mt19937_64 rng(seed);
    IndexList s;
    for (Index i = 0; i < static_cast<Index>(seed % 4); ++i) s.push_back(static_cast<Index>(rng() % 15));
    std::sort(s.begin(), s.end());
    s.erase(std::unique(s.begin(), s.end()), s.end());
    const auto in_s = membership(15, s);
    const double lc = critical_lambda(ds.x, ds.y, s);
    for (double ratio : {0.05, 0.3, 0.9, 0.999}) {
      const double lambda = ratio * lc;
      const LassoSolution sol = solve_partial_lasso(ds.x, ds.y, in_s, lambda);
      EXPECT_LT(stationarity(ds.x, ds.y, in_s, lambda, sol.beta), 1e-8);
      EXPECT_LT(std::abs(duality_gap(ds.x, ds.y, s, lambda, sol.beta).gap), 1e-8);
    }
  }
}

TEST(PartialLasso, VariationalInequalityAgainstRandomPoints) {
  // The minimizer's objective is no larger than at any perturbation.
  const Dataset ds = instance(30, 6, 5);
  const auto in_s = membership(6, IndexList{2});
  const double lambda = 0.4 * critical_lambda(ds.x, ds.y, {2});
  const LassoSolution sol = solve_partial_lasso(ds.x, ds.y, in_s, lambda);
  const double f0 = detail::lasso_objective(ds.x, ds.y, in_s, lambda, sol.beta);
  std::mt19937_64 rng(1);
  std::normal_distribution<double> n01;
  for (int t = 0; t < 200; ++t) {
    Vector b = sol.beta;
    for (Index i = 0; i < 6; ++i) b[i] += 1e-3 * n01(rng);
    EXPECT_GE(detail::lasso_objective(ds.x, ds.y, in_s, lambda, b), f0 - 1e-12);
  }
}

TEST(PartialLasso, RecordsMonotoneObjective) {
  const Dataset ds = instance(30, 10, 9);
  LassoOptions opt;
  opt.record_objective = true;
  opt.polish = false;
  const auto in_s = membership(10, IndexList{});
  const LassoSolution sol = solve_partial_lasso(ds.x, ds.y, in_s, 0.1 * critical_lambda(ds.x, ds.y, {}), opt);
  ASSERT_GE(sol.objective_history.size(), 2U);
  for (std::size_t i = 1; i < sol.objective_history.size(); ++i)
    EXPECT_LE(sol.objective_history[i], sol.objective_history[i - 1] + 1e-13);
}

TEST(PartialLasso, RejectsBadLambda) {
  const Dataset ds = instance(10, 3, 1);
  EXPECT_THROW(solve_partial_lasso(ds.x, ds.y, std::vector<bool>(3, false), 0.0), ContractError);
  EXPECT_THROW(solve_partial_lasso(ds.x, ds.y, std::vector<bool>(2, false), 1.0), ContractError);
}

TEST(CriticalLambda, MatchesBisectionOracle) {
  for (std::uint64_t seed = 0; seed < 4; ++seed) {
    const Dataset ds = instance(30, 6, 50 + seed);
    const IndexList s = seed % 2 ? IndexList{1, 4} : IndexList{};
    const double closed = critical_lambda(ds.x, ds.y, s);
    const double bisect = oracle::critical_lambda_bisection(ds.x, ds.y, membership(6, s));
    EXPECT_NEAR(closed, bisect, 1e-6 * closed);
  }
}

TEST(CriticalLambda, AboveCriticalNothingEnters) {
  const Dataset ds = instance(40, 8, 3);
  const IndexList s = {0, 5};
  const double lc = critical_lambda(ds.x, ds.y, s);
  const LassoSolution sol = solve_partial_lasso(ds.x, ds.y, s, 1.01 * lc);
  for (Index i = 0; i < 8; ++i)
    if (i != 0 && i != 5) {
      EXPECT_EQ(sol.beta[i], 0.0);
    }
}

TEST(CriticalLambda, ZeroWhenSExplainsY) {
  Dataset ds = instance(20, 4, 2);
  ds.y = ds.x.col(1) * 2.0;
  EXPECT_EQ(critical_lambda(ds.x, ds.y, {1}), 0.0);
}

TEST(DualProjection, FeasibleAndActiveFacesMatchCorrelations) {
  const Dataset ds = instance(50, 10, 4);
  const IndexList s = {3};
  const double lambda = 0.98 * critical_lambda(ds.x, ds.y, s);
  const DualProjection dp = project_onto_dual(ds.x, ds.y, s, lambda);
  EXPECT_LE((ds.x.transpose() * dp.u).cwiseAbs().maxCoeff(), lambda + 1e-8);
  EXPECT_LT(std::abs(ds.x.col(3).dot(dp.u)), 1e-8);
  ASSERT_FALSE(dp.active_faces.empty());
  const Vector corr = column_correlations(ds.x, project_residual(select_columns(ds.x, s), ds.y));
  Index arg = 0;
  for (Index i = 0; i < 10; ++i)
    if (i != 3 && std::abs(corr[i]) > std::abs(corr[arg])) arg = i;
  EXPECT_EQ(dp.active_faces.front().index, arg);
}

TEST(Lemma, ResidualInSpanOfMaximizersWithConstructedTie) {
  const Dataset base = instance(60, 12, 21);
  for (const IndexList& s : {IndexList{}, IndexList{0, 7, 9}}) {
    const Vector r = project_residual(select_columns(base.x, s), base.y);
    const Vector corr = column_correlations(base.x, r).cwiseAbs();
    Index a = -1;
    for (Index i = 0; i < 12; ++i)
      if (std::find(s.begin(), s.end(), i) == s.end() && (a < 0 || corr[i] > corr[a])) a = i;
    const Index b = a == 1 ? 2 : 1;
    const Matrix x = oracle::with_exact_tie(base.x, base.y, s, a, b, 5);
    const LemmaReport rep = certify_lemma_proj_res(x, base.y, s, {1e-4, 1e-3});
    ASSERT_EQ(rep.results.front().t.size(), 2U);
    EXPECT_TRUE(rep.pass);
    EXPECT_LT(rep.results.front().orthogonal_component, 1e-6 * rep.results.front().residual_norm);
    EXPECT_FALSE(rep.instance_fingerprint.empty());
  }
}

TEST(Lemma, LargeEpsilonEventuallyFails) {
  const Dataset ds = instance(60, 12, 22);
  const LemmaReport rep = certify_lemma_proj_res(ds.x, ds.y, {}, {1e-4, 0.9});
  EXPECT_TRUE(rep.results.front().pass);
  EXPECT_FALSE(rep.results.back().pass);
  ASSERT_TRUE(rep.epsilon_threshold.has_value());
  EXPECT_DOUBLE_EQ(*rep.epsilon_threshold, 1e-4);
}
