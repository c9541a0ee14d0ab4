#pragma once

// N-way K-shot episode sampling.

#include <algorithm>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "am3/autodiff.hpp"
#include "am3/dataset.hpp"
#include "am3/errors.hpp"

namespace am3 {

struct EpisodeConfig {
  std::size_t n_way = 5;
  std::size_t k_shot = 1;
  std::size_t k_query = 15;

  void validate() const {
    if (n_way < 1) throw ConfigError("n_way must be at least 1");
    if (k_shot < 1) throw ConfigError("k_shot must be at least 1");
    if (k_query < 1) throw ConfigError("k_query must be at least 1");
  }

  std::size_t samples_per_category() const { return k_shot + k_query; }

  friend bool operator==(const EpisodeConfig&, const EpisodeConfig&) = default;
};

struct EpisodeSample {
  FeatureVector features;
  std::size_t label = 0;         // 0..N-1 within the episode
  std::size_t source_index = 0;  // row within the category
};

/// Support and query sets, grouped by category in label order.
struct Episode {
  std::vector<CategoryId> category_ids;  // sorted; position is the label
  std::vector<EpisodeSample> support;
  std::vector<EpisodeSample> query;

  std::size_t n_way() const { return category_ids.size(); }

  friend bool operator==(const Episode& a, const Episode& b) {
    auto same = [](const std::vector<EpisodeSample>& x, const std::vector<EpisodeSample>& y) {
      if (x.size() != y.size()) return false;
      for (std::size_t i = 0; i < x.size(); ++i) {
        if (x[i].features != y[i].features || x[i].label != y[i].label || x[i].source_index != y[i].source_index) {
          return false;
        }
      }
      return true;
    };
    return a.category_ids == b.category_ids && same(a.support, b.support) && same(a.query, b.query);
  }
};

namespace detail {

// First `count` entries of a seeded Fisher-Yates shuffle of 0..n-1.
inline std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t count, Rng& rng) {
  std::vector<std::size_t> pool(n);
  for (std::size_t i = 0; i < n; ++i) pool[i] = i;
  for (std::size_t i = 0; i < count; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, n - 1);
    std::swap(pool[i], pool[pick(rng)]);
  }
  pool.resize(count);
  return pool;
}

}  // namespace detail

/// Draws N categories from `split`, then K support and K_Q query rows from
/// each without replacement. Labels follow the sorted order of the drawn ids.
inline Episode sample_episode(const LabeledDataset& dataset, const std::vector<CategoryId>& split,
                              const EpisodeConfig& config, Rng& rng) {
  config.validate();
  if (split.size() < config.n_way) {
    throw ConfigError("episode needs " + std::to_string(config.n_way) + " categories, split has " +
                      std::to_string(split.size()));
  }
  const std::size_t need = config.samples_per_category();
  for (const auto& id : split) {
    const auto have = dataset.category(id).samples.size();
    if (have < need) {
      throw ConfigError("category '" + id + "' has " + std::to_string(have) + " samples, episode needs " +
                        std::to_string(need) + " (short by " + std::to_string(need - have) + ")");
    }
  }

  Episode ep;
  for (std::size_t i : detail::sample_without_replacement(split.size(), config.n_way, rng)) {
    ep.category_ids.push_back(split[i]);
  }
  std::sort(ep.category_ids.begin(), ep.category_ids.end());
  ep.support.reserve(config.n_way * config.k_shot);
  ep.query.reserve(config.n_way * config.k_query);
  for (std::size_t label = 0; label < ep.category_ids.size(); ++label) {
    const auto& samples = dataset.category(ep.category_ids[label]).samples;
    const auto rows = detail::sample_without_replacement(samples.size(), need, rng);
    for (std::size_t j = 0; j < need; ++j) {
      EpisodeSample s{samples[rows[j]], label, rows[j]};
      (j < config.k_shot ? ep.support : ep.query).push_back(std::move(s));
    }
  }
  return ep;
}

/// Seeded sequence of independent episodes.
class EpisodeStream {
 public:
  EpisodeStream(const LabeledDataset& dataset, std::vector<CategoryId> split, EpisodeConfig config,
                std::uint64_t seed)
      : dataset_(&dataset), split_(std::move(split)), config_(config), rng_(seed) {}

  Episode next() { return sample_episode(*dataset_, split_, config_, rng_); }

 private:
  const LabeledDataset* dataset_;
  std::vector<CategoryId> split_;
  EpisodeConfig config_;
  Rng rng_;
};

inline std::vector<Episode> episode_stream(const LabeledDataset& dataset, const std::vector<CategoryId>& split,
                                           const EpisodeConfig& config, std::uint64_t seed, std::size_t count) {
  EpisodeStream stream(dataset, split, config, seed);
  std::vector<Episode> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) out.push_back(stream.next());
  return out;
}

}  // namespace am3
