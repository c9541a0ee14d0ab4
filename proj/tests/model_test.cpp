#include <cmath>
#include <numeric>
#include <random>

#include <gtest/gtest.h>

#include "am3/gradcheck.hpp"
#include "am3/model.hpp"
#include "am3/synthetic.hpp"

using namespace am3;

namespace {

ModelConfig toy_config(ConditioningMode mode = ConditioningMode::W, std::uint64_t seed = 0) {
  ModelConfig c;
  c.visual_dim = 4;
  c.word_dim = 4;
  c.proto_dim = 3;
  c.encoder_hidden = {5};
  c.semantic_hidden = 5;
  c.mixer_hidden = 5;
  c.mode = mode;
  c.seed = seed;
  return c;
}

// Single-layer identity encoder on 2-d features.
Am3Model identity_model(std::optional<double> lambda = std::nullopt) {
  ModelConfig c;
  c.visual_dim = 2;
  c.word_dim = 2;
  c.proto_dim = 2;
  c.encoder_hidden = {};
  c.semantic_hidden = 3;
  c.mixer_hidden = 3;
  c.lambda_fixed = lambda;
  Am3Model m(c);
  auto& w = m.encoder().layers()[0].weight.value;
  w = Tensor::matrix({{1, 0}, {0, 1}});
  return m;
}

void set_mixer_output_bias(Am3Model& m, double bias) {
  auto& last = m.mixer().layers().back();
  for (double& v : last.weight.value.values()) v = 0.0;
  last.bias.value[0] = bias;
}

struct Toy {
  LabeledDataset dataset;
  LabelEmbeddings labels;
};

Toy toy_task(std::size_t categories, std::size_t dim, std::uint64_t seed) {
  SyntheticTaskSpec spec;
  spec.n_categories = categories;
  spec.visual_dim = dim;
  spec.semantic_dim = dim;
  spec.samples_per_category = 12;
  spec.seed = seed;
  auto task = generate_synthetic_crossmodal(spec);
  auto labels = LabelEmbeddings::resolve(task.dataset, task.embeddings, 0);
  return {std::move(task.dataset), std::move(labels)};
}

Episode manual_episode(std::vector<CategoryId> ids, std::vector<std::pair<std::vector<double>, std::size_t>> support,
                       std::vector<std::pair<std::vector<double>, std::size_t>> query) {
  Episode ep;
  ep.category_ids = std::move(ids);
  for (std::size_t i = 0; i < support.size(); ++i) ep.support.push_back({support[i].first, support[i].second, i});
  for (std::size_t i = 0; i < query.size(); ++i) ep.query.push_back({query[i].first, query[i].second, i});
  return ep;
}

double norm_diff(const std::vector<double>& a, const std::vector<double>& b) {
  return std::sqrt(squared_euclidean(a, b));
}

}  // namespace

TEST(Encoder, IdentityWeightsReturnInput) {
  const auto m = identity_model();
  const Tensor out = m.encode_visual(Tensor::vector({1.5, -2.0}));
  EXPECT_EQ(out.storage(), (std::vector<double>{1.5, -2.0}));
}

TEST(Encoder, BatchMatchesPerRow) {
  const Am3Model m(toy_config());
  const Tensor batch = Tensor::matrix({{1, 2, 3, 4}, {-1, 0, 0.5, 2}, {0, 0, 0, 0}});
  const Tensor out = m.encode_visual(batch);
  for (std::size_t r = 0; r < 3; ++r) {
    const auto row = batch.row(r);
    const Tensor single = m.encode_visual(Tensor::vector(std::vector<double>(row.begin(), row.end())));
    for (std::size_t c = 0; c < 3; ++c) EXPECT_EQ(out.at(r, c), single[c]);
  }
}

TEST(Encoder, WrongWidthIsDimensionError) {
  const Am3Model m(toy_config());
  EXPECT_THROW(m.encode_visual(Tensor::vector({1, 2, 3})), DimensionError);
}

TEST(Prototype, VisualMean) {
  const std::vector<std::vector<double>> s{{1, 2}, {3, 4}};
  EXPECT_EQ(visual_prototype(s), (std::vector<double>{2, 3}));
  const std::vector<std::vector<double>> one{{5, -1}};
  EXPECT_EQ(visual_prototype(one), (std::vector<double>{5, -1}));
}

TEST(Semantic, ZeroWeightsGiveZeroVector) {
  Am3Model m(toy_config());
  for (auto& layer : m.semantic().layers()) {
    for (double& v : layer.weight.value.values()) v = 0.0;
  }
  const std::vector<double> e{1, 2, 3, 4};
  EXPECT_EQ(m.transform_semantic(e), (std::vector<double>{0, 0, 0}));
}

TEST(Semantic, ZeroShotPrototypeIsTransformedEmbedding) {
  const Am3Model m(toy_config());
  const std::vector<double> e{0.3, -0.1, 0.7, 0.2};
  EXPECT_EQ(m.zero_shot_prototype(e), m.transform_semantic(e));
}

TEST(Mixing, ZeroOutputGivesHalf) {
  Am3Model m(toy_config());
  set_mixer_output_bias(m, 0.0);
  EXPECT_EQ(m.mixing_coefficient(std::vector<double>{1, 2, 3}), 0.5);
}

TEST(Mixing, LargeBiasSaturatesBelowOne) {
  Am3Model m(toy_config());
  set_mixer_output_bias(m, 20.0);
  const double lambda = m.mixing_coefficient(std::vector<double>{1, 2, 3});
  EXPECT_GT(lambda, 0.9999);
  EXPECT_LT(lambda, 1.0);
  set_mixer_output_bias(m, 800.0);
  EXPECT_LT(m.mixing_coefficient(std::vector<double>{1, 2, 3}), 1.0);
  set_mixer_output_bias(m, -800.0);
  EXPECT_GT(m.mixing_coefficient(std::vector<double>{1, 2, 3}), 0.0);
}

TEST(Mixing, WrongWidthIsUsageError) {
  const Am3Model m(toy_config(ConditioningMode::E));
  EXPECT_THROW(m.mixing_coefficient(std::vector<double>{1, 2, 3}), UsageError);
  EXPECT_NO_THROW(m.mixing_coefficient(std::vector<double>{1, 2, 3, 4}));
}

TEST(CrossModal, Examples) {
  const std::vector<double> p{1, 0}, w{0, 1};
  EXPECT_EQ(cross_modal_prototype(p, w, 0.25), (std::vector<double>{0.25, 0.75}));
  EXPECT_EQ(cross_modal_prototype(p, w, 1.0), p);
  EXPECT_EQ(cross_modal_prototype(p, w, 0.0), w);
  EXPECT_THROW(cross_modal_prototype(p, std::vector<double>{1}, 0.5), DimensionError);
}

TEST(CrossModal, ConvexityBounds) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(-3, 3), l(0, 1);
  for (int t = 0; t < 200; ++t) {
    std::vector<double> p(5), w(5);
    for (auto& v : p) v = u(rng);
    for (auto& v : w) v = u(rng);
    const double lambda = l(rng);
    const auto mixed = cross_modal_prototype(p, w, lambda);
    const double span = norm_diff(w, p);
    EXPECT_LE(norm_diff(mixed, p), (1 - lambda) * span + 1e-10);
    EXPECT_LE(norm_diff(mixed, w), lambda * span + 1e-10);
  }
}

TEST(Alignment, Examples) {
  const std::vector<std::vector<double>> one{{1, 1}};
  EXPECT_EQ(alignment_prototype(one, std::vector<double>{3, 3}), (std::vector<double>{2, 2}));
  const std::vector<std::vector<double>> none;
  EXPECT_EQ(alignment_prototype(none, std::vector<double>{3, -1}), (std::vector<double>{3, -1}));
}

TEST(Alignment, IdenticalSupportsMatchFixedMixing) {
  const std::vector<double> r{0.3, -1.2, 2.5}, w{1.0, 0.4, -0.7};
  for (std::size_t n = 1; n <= 10; ++n) {
    const std::vector<std::vector<double>> supports(n, r);
    const auto a = alignment_prototype(supports, w);
    const auto b = cross_modal_prototype(r, w, double(n) / double(n + 1));
    for (std::size_t i = 0; i < r.size(); ++i) EXPECT_NEAR(a[i], b[i], 1e-12);
  }
}

TEST(Classify, TwoPrototypes) {
  const std::vector<std::vector<double>> protos{{0, 0}, {2, 0}};
  const auto p = classify(std::vector<double>{0, 0}, protos);
  EXPECT_NEAR(p[0], 0.982013790037908442, 1e-15);
  EXPECT_NEAR(p[1], 0.0179862099620915580, 1e-15);
  const auto q = classify(std::vector<double>{1, 0}, protos);
  EXPECT_EQ(q[0], 0.5);
  EXPECT_EQ(q[1], 0.5);
}

TEST(Classify, RelabelingPermutesOutputs) {
  const std::vector<std::vector<double>> protos{{0, 0}, {2, 1}, {-1, 3}};
  const std::vector<std::vector<double>> permuted{protos[2], protos[0], protos[1]};
  const std::vector<double> q{0.4, 1.1};
  const auto a = classify(q, protos);
  const auto b = classify(q, permuted);
  EXPECT_NEAR(b[0], a[2], 1e-15);
  EXPECT_NEAR(b[1], a[0], 1e-15);
  EXPECT_NEAR(b[2], a[1], 1e-15);
  EXPECT_NEAR(a[0] + a[1] + a[2], 1.0, 1e-12);
}

TEST(EpisodeLoss, SingleCategoryIsZero) {
  const auto m = identity_model();
  LabelEmbeddings labels;
  labels.set("a", {0.0, 0.0});
  const auto ep = manual_episode({"a"}, {{{1, 1}, 0}}, {{{3, -2}, 0}, {{0, 0}, 0}});
  EXPECT_EQ(m.episode_loss(ep, labels), 0.0);
}

TEST(EpisodeLoss, EquidistantQueryIsLogTwo) {
  const auto m = identity_model(1.0);
  LabelEmbeddings labels;
  labels.set("a", {0.0, 0.0});
  labels.set("b", {0.0, 0.0});
  const auto ep = manual_episode({"a", "b"}, {{{-1, 0}, 0}, {{1, 0}, 1}}, {{{0, 5}, 0}});
  EXPECT_NEAR(m.episode_loss(ep, labels), std::log(2.0), 1e-14);
}

TEST(EpisodeLoss, MatchesComponentwiseOracle) {
  // Rebuild each prototype from the public pieces and score queries directly.
  for (auto mode : {ConditioningMode::W, ConditioningMode::E, ConditioningMode::P}) {
    const Am3Model m(toy_config(mode, 3));
    const auto toy = toy_task(6, 4, 9);
    Rng rng(2);
    for (int trial = 0; trial < 5; ++trial) {
      const auto ep = sample_episode(toy.dataset, toy.dataset.ids(), {3, 2, 2}, rng);
      std::vector<std::vector<double>> protos;
      for (std::size_t c = 0; c < ep.n_way(); ++c) {
        std::vector<std::vector<double>> emb;
        for (const auto& s : ep.support) {
          if (s.label == c) emb.push_back(m.encode_visual(Tensor::vector(s.features)).storage());
        }
        const auto p = visual_prototype(emb);
        const auto& e = toy.labels.at(ep.category_ids[c]);
        const auto w = m.transform_semantic(e);
        const double lambda = m.mixing_coefficient(mode == ConditioningMode::W   ? w
                                                   : mode == ConditioningMode::E ? e
                                                                                 : p);
        protos.push_back(cross_modal_prototype(p, w, lambda));
      }
      double loss = 0.0;
      for (const auto& q : ep.query) {
        const auto probs = classify(m.encode_visual(Tensor::vector(q.features)).storage(), protos);
        loss -= std::log(probs[q.label]);
      }
      loss /= double(ep.query.size());
      EXPECT_NEAR(m.episode_loss(ep, toy.labels), loss, 1e-10) << to_string(mode);
    }
  }
}

TEST(EpisodeLoss, InvariantToQueryAndSupportOrder) {
  const Am3Model m(toy_config());
  const auto toy = toy_task(6, 4, 1);
  Rng rng(5);
  const auto ep = sample_episode(toy.dataset, toy.dataset.ids(), {3, 3, 4}, rng);
  Episode shuffled = ep;
  std::reverse(shuffled.query.begin(), shuffled.query.end());
  std::reverse(shuffled.support.begin(), shuffled.support.end());
  EXPECT_NEAR(m.episode_loss(ep, toy.labels), m.episode_loss(shuffled, toy.labels), 1e-12);
}

TEST(EpisodeLoss, RelabelingPermutesProbabilities) {
  const Am3Model m(toy_config());
  const auto toy = toy_task(6, 4, 1);
  Rng rng(6);
  const auto ep = sample_episode(toy.dataset, toy.dataset.ids(), {3, 1, 2}, rng);
  // New label of old category c is (c + 1) % 3.
  Episode moved = ep;
  moved.category_ids = {ep.category_ids[2], ep.category_ids[0], ep.category_ids[1]};
  for (auto* set : {&moved.support, &moved.query}) {
    for (auto& s : *set) s.label = (s.label + 1) % 3;
  }
  const Tensor a = m.classify_episode(ep, toy.labels);
  const Tensor b = m.classify_episode(moved, toy.labels);
  for (std::size_t r = 0; r < a.rows(); ++r) {
    for (std::size_t c = 0; c < 3; ++c) EXPECT_NEAR(b.at(r, (c + 1) % 3), a.at(r, c), 1e-12);
  }
  EXPECT_NEAR(m.episode_loss(ep, toy.labels), m.episode_loss(moved, toy.labels), 1e-12);
}

TEST(EpisodeLoss, LambdaOneIsPrototypicalNetwork) {
  ModelConfig c = toy_config();
  c.lambda_fixed = 1.0;
  const Am3Model m(c);
  const auto toy = toy_task(8, 4, 2);
  Rng rng(7);
  for (int i = 0; i < 20; ++i) {
    const auto ep = sample_episode(toy.dataset, toy.dataset.ids(), {4, 2, 3}, rng);
    std::vector<std::vector<double>> protos(ep.n_way());
    for (std::size_t k = 0; k < ep.n_way(); ++k) {
      std::vector<std::vector<double>> emb;
      for (const auto& s : ep.support) {
        if (s.label == k) emb.push_back(m.encode_visual(Tensor::vector(s.features)).storage());
      }
      protos[k] = visual_prototype(emb);
    }
    const Tensor probs = m.classify_episode(ep, toy.labels);
    for (std::size_t r = 0; r < ep.query.size(); ++r) {
      const auto expect = classify(m.encode_visual(Tensor::vector(ep.query[r].features)).storage(), protos);
      for (std::size_t k = 0; k < ep.n_way(); ++k) EXPECT_NEAR(probs.at(r, k), expect[k], 1e-12);
    }
  }
}

TEST(EpisodeLoss, SaturatedMixerAgreesWithVisualOnlyArgmax) {
  ModelConfig c = toy_config(ConditioningMode::W, 11);
  Am3Model am3(c);
  set_mixer_output_bias(am3, 20.0);
  ModelConfig v = c;
  v.lambda_fixed = 1.0;
  const Am3Model visual(v);  // same seed, hence the same f
  const auto toy = toy_task(10, 4, 3);
  const auto episodes = episode_stream(toy.dataset, toy.dataset.ids(), {5, 1, 2}, 8, 500);
  std::size_t agree = 0, total = 0;
  for (const auto& ep : episodes) {
    const Tensor a = am3.classify_episode(ep, toy.labels);
    const Tensor b = visual.classify_episode(ep, toy.labels);
    for (std::size_t r = 0; r < a.rows(); ++r) {
      const auto ra = a.row(r), rb = b.row(r);
      agree += (std::max_element(ra.begin(), ra.end()) - ra.begin()) ==
               (std::max_element(rb.begin(), rb.end()) - rb.begin());
      ++total;
    }
  }
  EXPECT_EQ(agree, total);
}

TEST(EpisodeLoss, AlignmentRuleUsesShotWeightedPrototype) {
  ModelConfig c;
  c.visual_dim = c.word_dim = c.proto_dim = 2;
  c.encoder_hidden = {};
  c.rule = PrototypeRule::Alignment;
  Am3Model m(c);
  m.encoder().layers()[0].weight.value = Tensor::matrix({{1, 0}, {0, 1}});
  LabelEmbeddings labels;
  labels.set("a", {1.0, 0.0});
  labels.set("b", {0.0, 1.0});
  const auto ep = manual_episode({"a", "b"}, {{{2, 0}, 0}, {{0, 2}, 1}}, {{{0.3, 0.1}, 0}, {{-1, 2}, 1}});
  std::vector<std::vector<double>> protos;
  for (std::size_t k = 0; k < 2; ++k) {
    const std::vector<std::vector<double>> sup{ep.support[k].features};
    protos.push_back(alignment_prototype(sup, m.transform_semantic(labels.at(ep.category_ids[k]))));
  }
  const Tensor probs = m.classify_episode(ep, labels);
  for (std::size_t r = 0; r < 2; ++r) {
    const auto expect = classify(ep.query[r].features, protos);
    for (std::size_t k = 0; k < 2; ++k) EXPECT_NEAR(probs.at(r, k), expect[k], 1e-12);
  }
}

TEST(EpisodeLoss, DimensionMismatchAgainstLabels) {
  const Am3Model m(toy_config());
  LabelEmbeddings labels;
  labels.set("a", {1.0, 2.0});
  const auto ep = manual_episode({"a"}, {{{1, 2, 3, 4}, 0}}, {{{1, 2, 3, 4}, 0}});
  EXPECT_THROW(m.episode_loss(ep, labels), DimensionError);
}

class GradientCheck : public ::testing::TestWithParam<std::tuple<ConditioningMode, DistanceKind, PrototypeRule>> {};

TEST_P(GradientCheck, AllParameterGroups) {
  auto [mode, distance, rule] = GetParam();
  const auto toy = toy_task(5, 4, 21);
  Rng rng(3);
  for (std::uint64_t seed = 0; seed < 4; ++seed) {
    ModelConfig c = toy_config(mode, seed);
    c.distance = distance;
    c.rule = rule;
    Am3Model m(c);
    // Nonzero biases keep hidden units off their kinks for all-zero inputs.
    std::uniform_real_distribution<double> jitter(-0.5, 0.5);
    for (auto& np : m.named_parameters()) {
      if (np.name.ends_with("bias")) {
        for (double& v : np.param->value.values()) v = jitter(rng);
      }
    }
    const auto ep = sample_episode(toy.dataset, toy.dataset.ids(), {2, 1, 2}, rng);
    const auto params = m.parameters();
    const double err = parameter_finite_difference_check(
        [&](Tape& tape) { return m.forward_episode(tape, ep, toy.labels).loss; }, params, 1e-5);
    EXPECT_LT(err, 1e-4) << "model seed " << seed;
  }
}

INSTANTIATE_TEST_SUITE_P(
    Modes, GradientCheck,
    ::testing::Values(std::make_tuple(ConditioningMode::W, DistanceKind::SquaredEuclidean, PrototypeRule::Adaptive),
                      std::make_tuple(ConditioningMode::E, DistanceKind::SquaredEuclidean, PrototypeRule::Adaptive),
                      std::make_tuple(ConditioningMode::P, DistanceKind::SquaredEuclidean, PrototypeRule::Adaptive),
                      std::make_tuple(ConditioningMode::WQ, DistanceKind::SquaredEuclidean, PrototypeRule::Adaptive),
                      std::make_tuple(ConditioningMode::W, DistanceKind::Euclidean, PrototypeRule::Adaptive),
                      std::make_tuple(ConditioningMode::W, DistanceKind::SquaredEuclidean, PrototypeRule::Alignment)));

TEST(ModelConfig, Validation) {
  ModelConfig c = toy_config();
  c.lambda_fixed = 1.5;
  EXPECT_THROW(Am3Model{c}, ConfigError);
  c = toy_config();
  c.proto_dim = 0;
  EXPECT_THROW(Am3Model{c}, ConfigError);
  EXPECT_THROW(parse_conditioning_mode("xyz"), UsageError);
  EXPECT_EQ(parse_conditioning_mode("wq"), ConditioningMode::WQ);
}

TEST(Model, NamedParametersCoverAllNetworks) {
  Am3Model m(toy_config());
  std::vector<std::string> names;
  for (auto& np : m.named_parameters()) names.push_back(np.name);
  EXPECT_EQ(names, (std::vector<std::string>{"f.0.weight", "f.0.bias", "f.1.weight", "f.1.bias", "g.0.weight",
                                             "g.0.bias", "g.1.weight", "g.1.bias", "h.0.weight", "h.0.bias",
                                             "h.1.weight", "h.1.bias"}));
}
