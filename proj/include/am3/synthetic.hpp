#pragma once

// Seeded cross-modal benchmark generator.
//
// Each category has a latent vector z ~ N(0, I). Its visual centroid is z
// scaled so that centroids sit about `visual_separation` apart; samples are
// centroid + N(0, visual_spread^2). The label embedding is a random linear
// image of z blended with independent noise (weight `semantic_noise` on the
// variance), scaled so embeddings sit about `semantic_separation` apart.
// Semantic vectors therefore predict visual centroids only partially.

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "am3/dataset.hpp"
#include "am3/embedding.hpp"
#include "am3/errors.hpp"

namespace am3 {

struct SyntheticTaskSpec {
  std::size_t n_categories = 40;
  std::size_t visual_dim = 8;
  std::size_t semantic_dim = 8;
  double visual_spread = 1.5;
  double visual_separation = 4.0;
  double semantic_separation = 4.0;
  double semantic_noise = 0.1;
  std::size_t samples_per_category = 40;
  std::uint64_t seed = 0;

  void validate() const {
    if (n_categories == 0 || visual_dim == 0 || semantic_dim == 0 || samples_per_category == 0) {
      throw ConfigError("synthetic task counts must be positive");
    }
    if (!(visual_spread >= 0) || !(visual_separation >= 0) || !(semantic_separation >= 0)) {
      throw ConfigError("synthetic spreads and separations must be nonnegative");
    }
    if (!(semantic_noise >= 0 && semantic_noise <= 1)) throw ConfigError("semantic_noise must lie in [0, 1]");
  }
};

struct SyntheticTask {
  LabeledDataset dataset;
  EmbeddingTable embeddings;
};

inline std::string synthetic_category_id(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "c%03zu", i);
  return buf;
}

inline std::string synthetic_token(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "concept%03zu", i);
  return buf;
}

inline SyntheticTask generate_synthetic_crossmodal(const SyntheticTaskSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);

  const auto vd = spec.visual_dim;
  const auto sd = spec.semantic_dim;
  std::vector<double> projection(sd * vd);
  const double proj_scale = 1.0 / std::sqrt(static_cast<double>(vd));
  for (double& v : projection) v = gauss(rng) * proj_scale;

  const double centroid_scale = spec.visual_separation / std::sqrt(2.0 * static_cast<double>(vd));
  const double semantic_scale = spec.semantic_separation / std::sqrt(2.0 * static_cast<double>(sd));
  const double shared = std::sqrt(1.0 - spec.semantic_noise);
  const double private_part = std::sqrt(spec.semantic_noise);

  SyntheticTask task{LabeledDataset{vd, {}}, EmbeddingTable(sd)};
  for (std::size_t c = 0; c < spec.n_categories; ++c) {
    std::vector<double> latent(vd);
    for (double& v : latent) v = gauss(rng);

    std::vector<double> semantic(sd);
    for (std::size_t i = 0; i < sd; ++i) {
      double mapped = 0.0;
      for (std::size_t j = 0; j < vd; ++j) mapped += projection[i * vd + j] * latent[j];
      semantic[i] = semantic_scale * (shared * mapped + private_part * gauss(rng));
    }

    CategoryData cat;
    cat.label.annotations = {synthetic_token(c)};
    cat.samples.reserve(spec.samples_per_category);
    for (std::size_t s = 0; s < spec.samples_per_category; ++s) {
      FeatureVector x(vd);
      for (std::size_t j = 0; j < vd; ++j) x[j] = centroid_scale * latent[j] + spec.visual_spread * gauss(rng);
      cat.samples.push_back(std::move(x));
    }
    task.embeddings.insert(synthetic_token(c), std::move(semantic));
    task.dataset.categories.emplace(synthetic_category_id(c), std::move(cat));
  }
  return task;
}

}  // namespace am3
