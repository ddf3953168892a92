#include <gtest/gtest.h>

#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include "rfdepth/tabular.hpp"
#include "test_support.hpp"

using namespace rfdepth;
using testing_support::put_be32;
using testing_support::TempDir;
using testing_support::write_bytes;

namespace {

std::vector<unsigned char> idx_images(std::uint32_t magic, std::uint32_t count, std::uint32_t rows,
                                      std::uint32_t cols, std::size_t payload) {
  std::vector<unsigned char> b;
  put_be32(b, magic);
  put_be32(b, count);
  put_be32(b, rows);
  put_be32(b, cols);
  for (std::size_t i = 0; i < payload; ++i) b.push_back(static_cast<unsigned char>(i % 256));
  return b;
}

std::vector<unsigned char> idx_labels(std::uint32_t magic, std::uint32_t count, std::size_t payload) {
  std::vector<unsigned char> b;
  put_be32(b, magic);
  put_be32(b, count);
  for (std::size_t i = 0; i < payload; ++i) b.push_back(static_cast<unsigned char>(i % 10));
  return b;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST(LoadIdx, TestSetSizedHeader) {
  TempDir dir("idx");
  write_bytes(dir.file("img"), idx_images(2051, 10000, 28, 28, 10000u * 784u));
  write_bytes(dir.file("lab"), idx_labels(2049, 10000, 10000));
  const Dataset d = load_idx(dir.file("img"), dir.file("lab"));
  EXPECT_EQ(d.n(), 10000u);
  EXPECT_EQ(d.p(), 784u);
  EXPECT_EQ(d.task(), Task::Classification);
  EXPECT_EQ(d.n_classes(), 10u);
  // Raw pixel bytes, no rescaling.
  EXPECT_EQ(d.at(0, 0), 0.0);
  EXPECT_EQ(d.at(0, 255), 255.0);
  EXPECT_EQ(d.at(1, 0), static_cast<double>(784 % 256));
  EXPECT_EQ(d.response()[13], 3.0);
}

TEST(LoadIdx, ZeroCountIsEmpty) {
  TempDir dir("idx");
  write_bytes(dir.file("img"), idx_images(2051, 0, 28, 28, 0));
  write_bytes(dir.file("lab"), idx_labels(2049, 0, 0));
  EXPECT_THROW(load_idx(dir.file("img"), dir.file("lab")), EmptyDatasetError);
}

TEST(LoadIdx, ImageFilePassedAsLabelsIsFormatError) {
  TempDir dir("idx");
  write_bytes(dir.file("img"), idx_images(2051, 3, 2, 2, 12));
  try {
    load_idx(dir.file("img"), dir.file("img"));
    FAIL() << "expected FormatError";
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find(dir.file("img")), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("label"), std::string::npos);
  }
}

TEST(LoadIdx, CountMismatchIsConsistencyError) {
  TempDir dir("idx");
  write_bytes(dir.file("img"), idx_images(2051, 3, 2, 2, 12));
  write_bytes(dir.file("lab"), idx_labels(2049, 4, 4));
  EXPECT_THROW(load_idx(dir.file("img"), dir.file("lab")), ConsistencyError);
}

TEST(LoadIdx, TruncatedPayloadReportsOffset) {
  TempDir dir("idx");
  write_bytes(dir.file("img"), idx_images(2051, 3, 2, 2, 10));
  write_bytes(dir.file("lab"), idx_labels(2049, 3, 3));
  try {
    load_idx(dir.file("img"), dir.file("lab"));
    FAIL() << "expected IoError";
  } catch (const IoError& e) {
    EXPECT_EQ(e.offset(), 26u);
  }
  write_bytes(dir.file("short"), {0, 0, 8});
  EXPECT_THROW(load_idx(dir.file("short"), dir.file("lab")), IoError);
}

TEST(LoadIdx, MissingFileIsIoError) {
  EXPECT_THROW(load_idx("/nonexistent/a", "/nonexistent/b"), IoError);
}

TEST(LoadIdx, OfficialTestFilesWhenAvailable) {
  const char* dir = std::getenv("RFDEPTH_MNIST_DIR");
  if (!dir) GTEST_SKIP() << "RFDEPTH_MNIST_DIR not set";
  const std::string base(dir);
  const Dataset d = load_idx(base + "/t10k-images-idx3-ubyte", base + "/t10k-labels-idx1-ubyte");
  EXPECT_EQ(d.n(), 10000u);
  EXPECT_EQ(d.p(), 784u);
  for (double y : d.response()) {
    EXPECT_GE(y, 0.0);
    EXPECT_LE(y, 9.0);
  }
}

TEST(Dataset, RejectsInvalidContents) {
  EXPECT_THROW(Dataset({}, 1, {}, Task::Regression), EmptyDatasetError);
  EXPECT_THROW(Dataset({1.0, std::nan("")}, 1, {1.0, 2.0}, Task::Regression), DomainError);
  EXPECT_THROW(Dataset({1.0, 2.0}, 1, {0.0, 2.0}, Task::Classification, 2), DomainError);
  EXPECT_THROW(Dataset({1.0, 2.0}, 1, {0.0, 1.0}, Task::Classification, 1), DomainError);
  EXPECT_THROW(Dataset({1.0, 2.0, 3.0}, 2, {0.0, 1.0}, Task::Regression), ConsistencyError);
}

TEST(BinarizeLabel, IndicatorOfPositiveClass) {
  const Dataset d({0, 1, 2, 3}, 1, {0, 1, 2, 1}, Task::Classification, 3);
  const Dataset b = binarize_label(d, 1);
  EXPECT_EQ(std::vector<double>(b.response().begin(), b.response().end()),
            (std::vector<double>{0, 1, 0, 1}));
  EXPECT_EQ(b.n_classes(), 2u);
  EXPECT_EQ(std::vector<double>(b.features().begin(), b.features().end()),
            std::vector<double>(d.features().begin(), d.features().end()));
}

TEST(BinarizeLabel, AllPositiveGivesAllOnes) {
  const Dataset d({0, 1, 2}, 1, {2, 2, 2}, Task::Classification, 3);
  const Dataset b = binarize_label(d, 2);
  for (double y : b.response()) EXPECT_EQ(y, 1.0);
}

TEST(BinarizeLabel, OutOfRangeClassIsDomainError) {
  const Dataset d({0, 1}, 1, {0, 9}, Task::Classification, 10);
  EXPECT_THROW(binarize_label(d, 10), DomainError);
  const Dataset r({0, 1}, 1, {0, 9}, Task::Regression);
  EXPECT_THROW(binarize_label(r, 0), DomainError);
}

TEST(SubsampleSplits, TwoThousandRowDrawsAreDisjoint) {
  std::vector<double> a(60000), b(10000);
  std::iota(a.begin(), a.end(), 0.0);
  std::iota(b.begin(), b.end(), 0.0);
  const Dataset train_pool(a, 1, std::vector<double>(60000, 0.0), Task::Regression);
  const Dataset test_pool(b, 1, std::vector<double>(10000, 0.0), Task::Regression);
  const SplitPlan plan{"mnist", 2000, 2000, 2000, 42};
  auto [tr, va, te] = subsample_splits(train_pool, test_pool, plan);
  EXPECT_EQ(tr.n(), 2000u);
  EXPECT_EQ(va.n(), 2000u);
  EXPECT_EQ(te.n(), 2000u);
  std::set<double> val(va.features().begin(), va.features().end());
  std::set<double> tst(te.features().begin(), te.features().end());
  std::set<double> trn(tr.features().begin(), tr.features().end());
  EXPECT_EQ(val.size(), 2000u);
  EXPECT_EQ(tst.size(), 2000u);
  EXPECT_EQ(trn.size(), 2000u);
  for (double v : val) EXPECT_EQ(tst.count(v), 0u);
}

TEST(SubsampleSplits, InfeasibleSizesAreCapacityError) {
  const Dataset pool(std::vector<double>(10, 1.0), 1, std::vector<double>(10, 0.0), Task::Regression);
  EXPECT_THROW(subsample_splits(pool, pool, SplitPlan{"x", 5, 6, 5, 1}), CapacityError);
  EXPECT_THROW(subsample_splits(pool, pool, SplitPlan{"x", 11, 1, 1, 1}), CapacityError);
}

TEST(SubsampleSplits, SameSeedSameIndices) {
  const SplitPlan plan{"x", 50, 20, 30, 99};
  const auto a = draw_split_indices(1000, 100, plan);
  const auto b = draw_split_indices(1000, 100, plan);
  EXPECT_EQ(a.train, b.train);
  EXPECT_EQ(a.validation, b.validation);
  EXPECT_EQ(a.test, b.test);
  const auto c = draw_split_indices(1000, 100, SplitPlan{"x", 50, 20, 30, 100});
  EXPECT_NE(a.train, c.train);
}

TEST(ResultsCsv, EmptySequenceIsHeaderOnly) {
  TempDir dir("csv");
  write_results_csv({}, dir.file("r.csv"));
  EXPECT_EQ(slurp(dir.file("r.csv")), std::string(kResultsHeader) + "\n");
}

TEST(ResultsCsv, OneRowTwoLinesAndExactRoundTrip) {
  TempDir dir("csv");
  SweepResult r{"depth-sweep", "low", 0.05, 10, 4, 1, 100, 50, 1.5, 0.25, 0.01};
  const std::vector<SweepResult> rows{r};
  write_results_csv(rows, dir.file("r.csv"));
  const std::string text = slurp(dir.file("r.csv"));
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 2);
  EXPECT_NE(text.find(",0.25,0.01\n"), std::string::npos);
  const auto back = parse_results_csv(text);
  ASSERT_EQ(back.size(), 1u);
  EXPECT_EQ(back[0], r);
  write_results_csv(rows, dir.file("r2.csv"));
  EXPECT_EQ(slurp(dir.file("r2.csv")), text);
}

TEST(ResultsCsv, RandomRowsRoundTrip) {
  Rng rng(5);
  std::vector<SweepResult> rows;
  for (int i = 0; i < 300; ++i) {
    SweepResult r;
    r.experiment = "exp" + std::to_string(rng.uniform_index(5));
    r.setting = rng.uniform_index(2) ? "low" : "high-10";
    if (rng.uniform_index(3)) r.snr = std::exp(6.0 * rng.uniform01() - 3.0);
    if (rng.uniform_index(3)) r.mtry = rng.uniform_index(1000);
    if (rng.uniform_index(3)) r.maxnodes = rng.uniform_index(3000);
    if (rng.uniform_index(3)) r.nodesize = rng.uniform_index(50);
    if (rng.uniform_index(3)) r.n_trees = rng.uniform_index(600);
    r.rep_count = rng.uniform_index(200);
    r.mean_train_loss = rng.normal() * 1e3;
    r.mean_test_loss = std::ldexp(rng.uniform01(), static_cast<int>(rng.uniform_index(80)) - 40);
    r.se_test_loss = rng.uniform01() / 3.0;
    rows.push_back(r);
  }
  EXPECT_EQ(parse_results_csv(format_results_csv(rows)), rows);
}

TEST(ResultsCsv, UnwritablePathIsIoError) {
  EXPECT_THROW(write_results_csv({}, "/nonexistent-dir/r.csv"), IoError);
}

TEST(ResultsCsv, DelimiterInLabelIsRejected) {
  SweepResult r;
  r.experiment = "a,b";
  const std::vector<SweepResult> rows{r};
  EXPECT_THROW(format_results_csv(rows), DomainError);
}

TEST(Delimited, WriteThenReadPreservesValues) {
  TempDir dir("delim");
  const Dataset d({0.1, -2.5, 3e-7, 4.0, 1.0 / 3.0, 6.0}, 2, {1.0, 2.0, 0.7}, Task::Regression);
  write_delimited(d, dir.file("d.csv"));
  const Dataset back = read_delimited(dir.file("d.csv"), Task::Regression);
  EXPECT_EQ(back.n(), 3u);
  EXPECT_EQ(back.p(), 2u);
  EXPECT_TRUE(std::equal(back.features().begin(), back.features().end(), d.features().begin()));
  EXPECT_TRUE(std::equal(back.response().begin(), back.response().end(), d.response().begin()));
}

TEST(Delimited, RaggedRowIsFormatError) {
  TempDir dir("delim");
  std::ofstream(dir.file("bad.csv")) << "a,b,y\n1,2,3\n1,2\n";
  EXPECT_THROW(read_delimited(dir.file("bad.csv"), Task::Regression), FormatError);
}
