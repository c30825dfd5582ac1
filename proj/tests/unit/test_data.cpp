#include <filesystem>
#include <fstream>
#include <set>

#include <gtest/gtest.h>

#include "seqattn/data.hpp"

using namespace seqattn;

namespace {

std::string write_temp(const std::string& name, const std::string& body) {
  const auto path = std::filesystem::temp_directory_path() / ("seqattn_test_" + name);
  std::ofstream(path) << body;
  return path.string();
}

}  // namespace

TEST(LoadCsv, HeaderAndNamedLabel) {
  const auto p = write_temp("ok.csv", "a,y,b\n1,2,3\n4,5,6\n");
  const Dataset ds = load_csv(p, "y", true);
  ASSERT_EQ(ds.n(), 2);
  ASSERT_EQ(ds.d(), 2);
  EXPECT_EQ(ds.feature_names, (std::vector<std::string>{"a", "b"}));
  EXPECT_DOUBLE_EQ(ds.x(1, 1), 6.0);
  EXPECT_DOUBLE_EQ(ds.y[1], 5.0);
}

TEST(LoadCsv, NoHeaderIndexLabelAndQuotedCells) {
  const auto p = write_temp("nohdr.csv", "\"1.5\",2,-3e-1\n4,5,6\n");
  const Dataset ds = load_csv(p, "0", false);
  EXPECT_DOUBLE_EQ(ds.y[0], 1.5);
  EXPECT_DOUBLE_EQ(ds.x(0, 1), -0.3);
}

TEST(LoadCsv, RaggedRowReportsLine) {
  std::string body = "a,b,y\n";
  for (int i = 0; i < 5; ++i) body += "1,2,3\n";
  body += "1,2\n";  // line 7
  const auto p = write_temp("ragged.csv", body);
  try {
    load_csv(p, "y", true);
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 7U);
    EXPECT_NE(std::string(e.what()).find(":7:"), std::string::npos);
  }
}

TEST(LoadCsv, NonNumericCellReportsLine) {
  std::string body = "a,b,y\n";
  for (int i = 0; i < 5; ++i) body += "1,2,3\n";
  body += "1,abc,3\n";
  const auto p = write_temp("nonnum.csv", body);
  try {
    load_csv(p, "y", true);
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 7U);
    EXPECT_NE(std::string(e.what()).find("abc"), std::string::npos);
  }
}

TEST(LoadCsv, MissingLabelAndMissingFile) {
  const auto p = write_temp("nolabel.csv", "a,b\n1,2\n");
  EXPECT_THROW(load_csv(p, "y", true), ParseError);
  EXPECT_THROW(load_csv("/nonexistent/file.csv", "y", true), ParseError);
}

TEST(LoadCsv, ClassificationLabelsAreDense) {
  const auto p = write_temp("cls.csv", "a,y\n1,10\n2,-4\n3,10\n4,7\n");
  const Dataset ds = load_csv(p, "y", true, Task::classification);
  EXPECT_EQ(ds.num_classes, 3);
  EXPECT_EQ(ds.y, (Vector(4) << 2, 0, 2, 1).finished());
}

TEST(Sidecar, ReadsTaskAndLabel) {
  const auto p = write_temp("side.json", R"({"task": "classification", "label_column": 3})");
  const SidecarMeta m = load_sidecar(p);
  EXPECT_EQ(m.task, Task::classification);
  EXPECT_EQ(m.label_column, "3");
  EXPECT_THROW(load_sidecar(write_temp("bad.json", "{nope")), ParseError);
}

TEST(Normalize, UnitColumnsFlagsZeroColumnsAndRoundTrips) {
  Dataset ds;
  ds.x = Matrix(3, 3);
  ds.x << 3, 0, 1, 4, 0, 2, 0, 0, 2;
  ds.y = Vector::Constant(3, 2.0);
  const Dataset u = normalize_unit_columns(ds);
  EXPECT_NEAR(u.x.col(0).norm(), 1.0, 1e-15);
  EXPECT_NEAR(u.x.col(2).norm(), 1.0, 1e-15);
  EXPECT_NEAR(u.y.norm(), 1.0, 1e-15);
  EXPECT_EQ(degenerate_columns(u), (std::vector<bool>{false, true, false}));
  const Dataset back = denormalize(u);
  EXPECT_LT((back.x - ds.x).norm(), 1e-12);
  EXPECT_LT((back.y - ds.y).norm(), 1e-12);
}

TEST(Normalize, ZscoreMomentsAndConstantColumns) {
  Dataset ds = synth_sparse_linear(50, 4, 2, 0.1, 1).dataset;
  ds.x.col(2).setConstant(7.0);
  const Dataset z = normalize_zscore(ds);
  for (Index j : {0, 1, 3}) {
    EXPECT_NEAR(z.x.col(j).mean(), 0.0, 1e-12);
    EXPECT_NEAR(z.x.col(j).squaredNorm() / 50.0, 1.0, 1e-12);
  }
  EXPECT_TRUE(z.x.col(2).isZero(0.0));
  EXPECT_TRUE(degenerate_columns(z)[2]);
  EXPECT_EQ(z.y, ds.y);
  const Dataset back = denormalize(z);
  EXPECT_LT((back.x.col(0) - ds.x.col(0)).norm(), 1e-12);
}

TEST(Synthetic, DeterministicAndSparse) {
  const auto a = synth_sparse_linear(30, 10, 3, 0.0, 42);
  const auto b = synth_sparse_linear(30, 10, 3, 0.0, 42);
  EXPECT_EQ(a.dataset.x, b.dataset.x);
  EXPECT_EQ(a.true_support, b.true_support);
  EXPECT_EQ(a.true_support.size(), 3U);
  EXPECT_TRUE(std::is_sorted(a.true_support.begin(), a.true_support.end()));
  EXPECT_EQ((a.beta.array() != 0.0).count(), 3);
  EXPECT_LT((a.dataset.x * a.beta - a.dataset.y).norm(), 1e-12);
}

TEST(ShardPlanTest, CoversEveryExampleOnceLargerFirst) {
  for (Index n : {10, 11, 64, 97}) {
    for (Index k : {1, 3, 7, 10}) {
      const ShardPlan p = make_shard_plan(n, k);
      ASSERT_EQ(static_cast<Index>(p.round_boundaries.size()), k);
      Index next = 0;
      for (std::size_t r = 0; r < p.round_boundaries.size(); ++r) {
        const auto& b = p.round_boundaries[r];
        EXPECT_EQ(b.begin, next);
        next = b.end;
        if (r > 0) {
          EXPECT_LE(b.size(), p.round_boundaries[r - 1].size());
        }
        EXPECT_LE(p.round_boundaries.front().size() - b.size(), 1);
      }
      EXPECT_EQ(next, n);
    }
  }
  EXPECT_THROW(make_shard_plan(3, 4), ContractError);
  EXPECT_THROW(make_shard_plan(3, 0), ContractError);
}

TEST(Split, PartitionsRowsDeterministically) {
  Dataset ds = synth_sparse_linear(20, 2, 1, 0.0, 3).dataset;
  for (Index i = 0; i < 20; ++i) ds.x(i, 0) = static_cast<double>(i);
  const auto [tr, va] = train_validation_split(ds, 0.25, 9);
  EXPECT_EQ(tr.n(), 15);
  EXPECT_EQ(va.n(), 5);
  std::set<double> ids;
  for (Index i = 0; i < tr.n(); ++i) ids.insert(tr.x(i, 0));
  for (Index i = 0; i < va.n(); ++i) ids.insert(va.x(i, 0));
  EXPECT_EQ(ids.size(), 20U);
  const auto again = train_validation_split(ds, 0.25, 9);
  EXPECT_EQ(again.first.x, tr.x);
}

TEST(Fingerprint, SensitiveToContentAndShape) {
  const Dataset a = synth_sparse_linear(10, 3, 1, 0.1, 1).dataset;
  Dataset b = a;
  EXPECT_EQ(fingerprint(a), fingerprint(b));
  b.x(4, 2) += 1e-12;
  EXPECT_NE(fingerprint(a), fingerprint(b));
  EXPECT_EQ(fingerprint(a).rfind("10x3:", 0), 0U);
}

TEST(SubsetColumns, KeepsOrderAndNames) {
  const Dataset a = synth_sparse_linear(5, 4, 1, 0.0, 2).dataset;
  const IndexList cols = {3, 1};
  const Dataset s = subset_columns(a, cols);
  EXPECT_EQ(s.x.col(0), a.x.col(3));
  EXPECT_EQ(s.feature_names, (std::vector<std::string>{"x3", "x1"}));
}
