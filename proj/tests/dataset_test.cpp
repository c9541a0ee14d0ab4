#include <filesystem>
#include <fstream>
#include <set>

#include <gtest/gtest.h>

#include "am3/dataset.hpp"
#include "am3/synthetic.hpp"

using namespace am3;
namespace fs = std::filesystem;

namespace {

class TempDir {
 public:
  TempDir() {
    path_ = fs::temp_directory_path() / ("am3_dataset_test_" + std::to_string(::testing::UnitTest::GetInstance()->random_seed()) +
                                         "_" + ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

void write(const fs::path& p, const std::string& content) {
  std::ofstream out(p);
  out << content;
}

LabeledDataset categories(std::size_t n) {
  LabeledDataset d;
  d.feature_dimension = 1;
  for (std::size_t i = 0; i < n; ++i) {
    d.categories.emplace("k" + std::to_string(i), CategoryData{CategoryLabel{{"w" + std::to_string(i)}}, {{0.0}}});
  }
  return d;
}

}  // namespace

TEST(LoadDataset, OneCategoryTwoSamples) {
  TempDir dir;
  write(dir.path() / "manifest", "#dim 4\ncat\tcat|kitty\tcat.csv\n");
  write(dir.path() / "cat.csv", "1,2,3,4\n0.5,0.25,-1,1e-3\n");
  const auto d = load_dataset(dir.path());
  EXPECT_EQ(d.feature_dimension, 4u);
  ASSERT_EQ(d.categories.size(), 1u);
  const auto& cat = d.category("cat");
  EXPECT_EQ(cat.samples.size(), 2u);
  EXPECT_EQ(cat.label.annotations, (std::vector<std::string>{"cat", "kitty"}));
  EXPECT_EQ(cat.samples[1][3], 1e-3);
}

TEST(LoadDataset, MissingFeatureFileIsDataError) {
  TempDir dir;
  write(dir.path() / "manifest", "#dim 2\ncat\tcat\tnope.csv\n");
  EXPECT_THROW(load_dataset(dir.path()), DataError);
}

TEST(LoadDataset, MalformedManifestIsParseError) {
  TempDir dir;
  write(dir.path() / "manifest", "cat\tcat\tcat.csv\n");
  EXPECT_THROW(load_dataset(dir.path()), ParseError);
  write(dir.path() / "manifest", "#dim 2\ncat cat.csv\n");
  EXPECT_THROW(load_dataset(dir.path()), ParseError);
}

TEST(LoadDataset, RowLengthMismatchNamesCategoryAndRow) {
  TempDir dir;
  write(dir.path() / "manifest", "#dim 2\nzebra\tzebra\tz.csv\n");
  write(dir.path() / "z.csv", "1,2\n3\n");
  try {
    load_dataset(dir.path());
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("zebra"), std::string::npos);
    EXPECT_NE(msg.find("row 2"), std::string::npos);
  }
}

TEST(LoadDataset, WriteLoadRoundTripIsExact) {
  TempDir dir;
  SyntheticTaskSpec spec;
  spec.n_categories = 5;
  spec.samples_per_category = 7;
  spec.seed = 3;
  const auto task = generate_synthetic_crossmodal(spec);
  write_dataset(task.dataset, dir.path());
  EXPECT_EQ(load_dataset(dir.path()), task.dataset);
}

TEST(SplitCategories, SizesDisjointAndExhaustive) {
  const auto d = categories(10);
  const auto s = split_categories(d, {0.6, 0.2, 0.2}, 1);
  EXPECT_EQ(s.train.size(), 6u);
  EXPECT_EQ(s.val.size(), 2u);
  EXPECT_EQ(s.test.size(), 2u);
  std::set<CategoryId> all;
  for (const auto* part : {&s.train, &s.val, &s.test}) all.insert(part->begin(), part->end());
  EXPECT_EQ(all.size(), 10u);
}

TEST(SplitCategories, FractionsMustSumToOne) {
  EXPECT_THROW(split_categories(categories(10), {0.5, 0.2, 0.2}, 1), ConfigError);
  EXPECT_THROW(split_categories(categories(10), {0.8, 0.2, 0.0}, 1), ConfigError);
}

TEST(SplitCategories, TooFewCategoriesForEpisodes) {
  EXPECT_THROW(split_categories(categories(10), {0.6, 0.2, 0.2}, 1, 5), ConfigError);
}

TEST(SplitCategories, SeededPartitionIsStableAndSeedSensitive) {
  const auto d = categories(40);
  const auto a = split_categories(d, {0.6, 0.2, 0.2}, 9);
  const auto b = split_categories(d, {0.6, 0.2, 0.2}, 9);
  EXPECT_EQ(a.train, b.train);
  EXPECT_EQ(a.test, b.test);
  bool differs = false;
  for (std::uint64_t seed = 10; seed < 15 && !differs; ++seed) {
    differs = split_categories(d, {0.6, 0.2, 0.2}, seed).test != a.test;
  }
  EXPECT_TRUE(differs);
}

TEST(LabelEmbeddings, CachedFallbackAndStrictMode) {
  LabeledDataset d;
  d.feature_dimension = 1;
  d.categories.emplace("a", CategoryData{CategoryLabel{{"known"}}, {{0.0}}});
  d.categories.emplace("b", CategoryData{CategoryLabel{{"unknown"}}, {{0.0}}});
  EmbeddingTable table;
  table.insert("known", {0.5, 0.5, 0.5});
  const auto labels = LabelEmbeddings::resolve(d, table, 4);
  EXPECT_EQ(labels.at("a"), (std::vector<double>{0.5, 0.5, 0.5}));
  EXPECT_EQ(labels.random_fallbacks(), std::vector<CategoryId>{"b"});
  EXPECT_EQ(labels.at("b"), LabelEmbeddings::resolve(d, table, 4).at("b"));
  EXPECT_THROW(labels.at("c"), DataError);
  EXPECT_THROW(LabelEmbeddings::resolve(d, table, 4, 0, false), DataError);
}
