#pragma once

// Labeled feature datasets: on-disk format, validation, and category splits.
//
// Layout of a dataset root:
//   manifest          "#dim <n>" then one line per category:
//                     <category_id> TAB <annotation1|annotation2|...> TAB <relative feature file>
//   <feature files>   one sample per line, comma-separated decimals

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "am3/embedding.hpp"
#include "am3/errors.hpp"
#include "am3/text.hpp"

namespace am3 {

using CategoryId = std::string;
using FeatureVector = std::vector<double>;

struct CategoryData {
  CategoryLabel label;
  std::vector<FeatureVector> samples;

  friend bool operator==(const CategoryData&, const CategoryData&) = default;
};

struct LabeledDataset {
  std::size_t feature_dimension = 0;
  std::map<CategoryId, CategoryData> categories;

  const CategoryData& category(const CategoryId& id) const {
    auto it = categories.find(id);
    if (it == categories.end()) throw DataError("unknown category '" + id + "'");
    return it->second;
  }

  std::vector<CategoryId> ids() const {
    std::vector<CategoryId> out;
    out.reserve(categories.size());
    for (const auto& [id, _] : categories) out.push_back(id);
    return out;
  }

  /// Throws DataError on a feature-length mismatch and ConfigError when a
  /// category holds fewer than `min_samples` samples.
  void validate(std::size_t min_samples = 1) const {
    if (feature_dimension == 0) throw DataError("feature dimension must be positive");
    for (const auto& [id, cat] : categories) {
      if (cat.label.annotations.empty()) throw DataError("category '" + id + "' has no annotation");
      for (std::size_t r = 0; r < cat.samples.size(); ++r) {
        if (cat.samples[r].size() != feature_dimension) {
          throw DataError("category '" + id + "' row " + std::to_string(r + 1) + " has " +
                          std::to_string(cat.samples[r].size()) + " values, expected " +
                          std::to_string(feature_dimension));
        }
      }
      if (cat.samples.size() < min_samples) {
        throw ConfigError("category '" + id + "' has " + std::to_string(cat.samples.size()) +
                          " samples, needs at least " + std::to_string(min_samples));
      }
    }
  }

  friend bool operator==(const LabeledDataset&, const LabeledDataset&) = default;
};

inline std::string feature_file_name(const CategoryId& id) { return id + ".csv"; }

inline void write_dataset(const LabeledDataset& dataset, const std::filesystem::path& root) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(root, ec);
  if (ec) throw IoError("cannot create " + root.string() + ": " + ec.message());
  std::ofstream manifest(root / "manifest", std::ios::binary);
  if (!manifest) throw IoError("cannot write " + (root / "manifest").string());
  manifest << "#dim " << dataset.feature_dimension << '\n';
  for (const auto& [id, cat] : dataset.categories) {
    const std::string file = feature_file_name(id);
    manifest << id << '\t' << cat.label.joined() << '\t' << file << '\n';
    std::ofstream features(root / file, std::ios::binary);
    if (!features) throw IoError("cannot write " + (root / file).string());
    for (const auto& row : cat.samples) {
      for (std::size_t j = 0; j < row.size(); ++j) {
        if (j) features << ',';
        features << text::exact_decimal(row[j]);
      }
      features << '\n';
    }
    if (!features) throw IoError("failed writing " + (root / file).string());
  }
  if (!manifest) throw IoError("failed writing manifest");
}

inline LabeledDataset load_dataset(const std::filesystem::path& root) {
  const auto manifest_path = root / "manifest";
  std::ifstream manifest(manifest_path);
  if (!manifest) throw DataError("cannot open " + manifest_path.string());

  LabeledDataset dataset;
  std::string line;
  std::size_t line_no = 0;
  bool have_dim = false;
  while (std::getline(manifest, line)) {
    ++line_no;
    const auto trimmed = text::trim(line);
    if (trimmed.empty()) continue;
    if (!have_dim) {
      const auto fields = text::split_whitespace(trimmed);
      if (fields.size() != 2 || fields[0] != "#dim") throw ParseError("expected '#dim <n>' header", line_no);
      const auto dim = text::parse_double(fields[1]);
      if (!dim || *dim < 1 || *dim != std::floor(*dim)) throw ParseError("invalid dimension", line_no);
      dataset.feature_dimension = static_cast<std::size_t>(*dim);
      have_dim = true;
      continue;
    }
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto fields = text::split(line, '\t');
    if (fields.size() != 3) throw ParseError("expected 3 tab-separated fields", line_no);
    const CategoryId id(text::trim(fields[0]));
    if (id.empty()) throw ParseError("empty category id", line_no);
    if (dataset.categories.count(id)) throw ParseError("duplicate category '" + id + "'", line_no);
    CategoryData cat;
    try {
      cat.label = CategoryLabel::parse(fields[1]);
    } catch (const DataError& e) {
      throw ParseError(e.what(), line_no);
    }
    const auto feature_path = root / std::string(text::trim(fields[2]));
    std::ifstream features(feature_path);
    if (!features) throw DataError("category '" + id + "': missing feature file " + feature_path.string());
    std::string row;
    std::size_t row_no = 0;
    while (std::getline(features, row)) {
      ++row_no;
      const auto row_text = text::trim(row);
      if (row_text.empty()) continue;
      FeatureVector vec;
      for (auto field : text::split(row_text, ',')) {
        auto v = text::parse_double(text::trim(field));
        if (!v) {
          throw DataError("category '" + id + "' row " + std::to_string(row_no) + ": non-numeric value '" +
                          std::string(field) + "'");
        }
        vec.push_back(*v);
      }
      if (vec.size() != dataset.feature_dimension) {
        throw DataError("category '" + id + "' row " + std::to_string(row_no) + " has " +
                        std::to_string(vec.size()) + " values, expected " +
                        std::to_string(dataset.feature_dimension));
      }
      cat.samples.push_back(std::move(vec));
    }
    dataset.categories.emplace(id, std::move(cat));
  }
  if (!have_dim) throw ParseError("manifest is missing the '#dim <n>' header");
  dataset.validate();
  return dataset;
}

struct SplitFractions {
  double train = 0.6;
  double val = 0.2;
  double test = 0.2;
};

struct CategorySplit {
  std::vector<CategoryId> train;
  std::vector<CategoryId> val;
  std::vector<CategoryId> test;
};

/// Seeded partition of the category ids. Validation and test sizes are the
/// rounded fractions of the category count; training takes the remainder.
inline CategorySplit split_categories(const LabeledDataset& dataset, SplitFractions fractions, std::uint64_t seed,
                                      std::size_t min_per_split = 1) {
  if (!(fractions.train > 0 && fractions.val > 0 && fractions.test > 0)) {
    throw ConfigError("split fractions must be positive");
  }
  if (std::abs(fractions.train + fractions.val + fractions.test - 1.0) > 1e-9) {
    throw ConfigError("split fractions must sum to 1");
  }
  auto ids = dataset.ids();
  const auto n = ids.size();
  const auto n_val = static_cast<std::size_t>(std::llround(static_cast<double>(n) * fractions.val));
  const auto n_test = static_cast<std::size_t>(std::llround(static_cast<double>(n) * fractions.test));
  if (n_val + n_test >= n || n_val < min_per_split || n_test < min_per_split ||
      n - n_val - n_test < min_per_split) {
    throw ConfigError("cannot split " + std::to_string(n) + " categories so that every split holds at least " +
                      std::to_string(min_per_split));
  }
  std::mt19937_64 rng(seed);
  std::shuffle(ids.begin(), ids.end(), rng);
  CategorySplit split;
  split.train.assign(ids.begin(), ids.end() - static_cast<std::ptrdiff_t>(n_val + n_test));
  split.val.assign(ids.end() - static_cast<std::ptrdiff_t>(n_val + n_test), ids.end() - static_cast<std::ptrdiff_t>(n_test));
  split.test.assign(ids.end() - static_cast<std::ptrdiff_t>(n_test), ids.end());
  std::sort(split.train.begin(), split.train.end());
  std::sort(split.val.begin(), split.val.end());
  std::sort(split.test.begin(), split.test.end());
  return split;
}

/// Resolved label embeddings e_c for every category of a dataset, computed
/// once so training and evaluation see the same vectors.
class LabelEmbeddings {
 public:
  LabelEmbeddings() = default;

  /// With `allow_random_fallback` false, a category none of whose annotations
  /// resolve raises DataError.
  static LabelEmbeddings resolve(const LabeledDataset& dataset, const EmbeddingTable& table, std::uint64_t seed,
                                 std::size_t fallback_dimension = 0, bool allow_random_fallback = true) {
    LabelEmbeddings out;
    out.dimension_ = table.dimension().value_or(fallback_dimension);
    for (const auto& [id, cat] : dataset.categories) {
      auto res = resolve_label_embedding(cat.label, table, seed, fallback_dimension);
      if (!res.annotation) {
        if (!allow_random_fallback) throw DataError("no annotation of category '" + id + "' is in the vocabulary");
        out.random_.push_back(id);
      }
      out.vectors_.emplace(id, std::move(res.vector));
    }
    return out;
  }

  void set(const CategoryId& id, std::vector<double> vec) {
    if (dimension_ == 0) dimension_ = vec.size();
    if (vec.size() != dimension_) throw DimensionError("label embedding for '" + id + "' has wrong dimension");
    vectors_.insert_or_assign(id, std::move(vec));
  }

  const std::vector<double>& at(const CategoryId& id) const {
    auto it = vectors_.find(id);
    if (it == vectors_.end()) throw DataError("no label embedding for category '" + id + "'");
    return it->second;
  }

  std::size_t dimension() const noexcept { return dimension_; }
  std::size_t size() const noexcept { return vectors_.size(); }
  /// Categories that fell through to the random fallback.
  const std::vector<CategoryId>& random_fallbacks() const noexcept { return random_; }

 private:
  std::size_t dimension_ = 0;
  std::map<CategoryId, std::vector<double>> vectors_;
  std::vector<CategoryId> random_;
};

}  // namespace am3
