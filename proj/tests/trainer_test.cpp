#include <limits>

#include <gtest/gtest.h>

#include "am3/checkpoint.hpp"
#include "am3/synthetic.hpp"
#include "am3/trainer.hpp"

using namespace am3;

namespace {

struct Bench {
  SyntheticTask task;
  LabelEmbeddings labels;
  CategorySplit split;
};

Bench make_bench(std::uint64_t seed = 0, SyntheticTaskSpec spec = {}) {
  spec.seed = seed;
  Bench b{generate_synthetic_crossmodal(spec), {}, {}};
  b.labels = LabelEmbeddings::resolve(b.task.dataset, b.task.embeddings, 0);
  b.split = split_categories(b.task.dataset, {0.6, 0.2, 0.2}, seed, 5);
  return b;
}

ModelConfig bench_model(const Bench& b, std::uint64_t seed = 0) {
  ModelConfig c;
  c.visual_dim = b.task.dataset.feature_dimension;
  c.word_dim = b.labels.dimension();
  c.proto_dim = 16;
  c.encoder_hidden = {32};
  c.semantic_hidden = 32;
  c.mixer_hidden = 32;
  c.seed = seed;
  return c;
}

TrainConfig short_train(std::size_t iterations) {
  TrainConfig t;
  t.iterations = iterations;
  t.anneal_steps = default_anneal_steps(iterations);
  t.episode = {5, 1, 5};
  return t;
}

}  // namespace

TEST(LearningRate, StepAnnealing) {
  TrainConfig t;
  t.iterations = 20;
  t.initial_lr = 0.1;
  t.anneal_steps = {10};
  EXPECT_EQ(learning_rate_at(t, 1), 0.1);
  EXPECT_EQ(learning_rate_at(t, 9), 0.1);
  EXPECT_NEAR(learning_rate_at(t, 10), 0.01, 1e-18);
  EXPECT_NEAR(learning_rate_at(t, 20), 0.01, 1e-18);
  EXPECT_EQ(default_anneal_steps(600), (std::vector<std::size_t>{300, 450}));
  EXPECT_EQ(default_anneal_steps(1), (std::vector<std::size_t>{}));
}

TEST(TrainConfig, Validation) {
  TrainConfig t;
  t.anneal_steps = {450, 300};
  EXPECT_THROW(t.validate(), ConfigError);
  t = {};
  t.queries_per_batch = 7;
  EXPECT_THROW(t.validate(), ConfigError);
  t = {};
  t.momentum = 1.0;
  EXPECT_THROW(t.validate(), ConfigError);
  t = {};
  t.queries_per_batch = 20;
  EXPECT_EQ(t.training_episode().k_query, 4u);
}

TEST(Train, ZeroIterationsLeavesParametersUntouched) {
  const auto b = make_bench();
  Am3Model m(bench_model(b));
  const std::string before = serialize_checkpoint(m);
  TrainConfig t = short_train(0);
  t.dropout_keep = m.config().dropout_keep;
  EXPECT_TRUE(train(m, b.task.dataset, b.split.train, b.labels, t).empty());
  EXPECT_EQ(serialize_checkpoint(m), before);
}

TEST(Train, TraceRecordsScheduleAndLossFalls) {
  const auto b = make_bench(1);
  Am3Model m(bench_model(b));
  TrainConfig t = short_train(200);
  const auto trace = train(m, b.task.dataset, b.split.train, b.labels, t);
  ASSERT_EQ(trace.size(), 200u);
  EXPECT_EQ(trace.front().iteration, 1u);
  EXPECT_EQ(trace[98].learning_rate, t.initial_lr);
  EXPECT_NEAR(trace[99].learning_rate, t.initial_lr / 10, 1e-18);
  EXPECT_NEAR(trace[149].learning_rate, t.initial_lr / 100, 1e-18);
  double first = 0, last = 0;
  for (std::size_t i = 0; i < 20; ++i) {
    first += trace[i].batch_loss;
    last += trace[trace.size() - 1 - i].batch_loss;
  }
  EXPECT_LT(last, first);
}

TEST(Train, SameSeedSameWeights) {
  const auto b = make_bench(2);
  Am3Model a(bench_model(b)), c(bench_model(b));
  TrainConfig t = short_train(30);
  t.tasks_per_batch = 2;
  train(a, b.task.dataset, b.split.train, b.labels, t);
  train(c, b.task.dataset, b.split.train, b.labels, t);
  EXPECT_EQ(serialize_checkpoint(a), serialize_checkpoint(c));
}

TEST(Train, HugeLearningRateDiverges) {
  const auto b = make_bench(3);
  Am3Model m(bench_model(b));
  TrainConfig t = short_train(200);
  t.initial_lr = 1e6;
  t.anneal_steps = {};
  EXPECT_THROW(train(m, b.task.dataset, b.split.train, b.labels, t), TrainingDiverged);
}

TEST(Evaluate, DoesNotMutateModelAndIsRepeatable) {
  const auto b = make_bench(4);
  const Am3Model m(bench_model(b));
  const std::string before = serialize_checkpoint(m);
  const auto r1 = evaluate(m, b.task.dataset, b.split.test, b.labels, {5, 1, 1}, 40, 20, 7);
  const auto r2 = evaluate(m, b.task.dataset, b.split.test, b.labels, {5, 1, 1}, 40, 20, 7);
  EXPECT_EQ(serialize_checkpoint(m), before);
  EXPECT_EQ(r1, r2);
  EXPECT_EQ(r1.per_episode_accuracies.size(), 40u);
  EXPECT_TRUE(r1.ci95_defined);
}

TEST(Evaluate, SingleEpisodeFlagsInterval) {
  const auto b = make_bench(5);
  const Am3Model m(bench_model(b));
  const auto r = evaluate(m, b.task.dataset, b.split.test, b.labels, {5, 1, 1}, 1, 20, 0);
  EXPECT_FALSE(r.ci95_defined);
  EXPECT_EQ(r.ci95_halfwidth, 0.0);
}

TEST(Evaluate, QueriesMustSpreadEvenly) {
  const auto b = make_bench(5);
  const Am3Model m(bench_model(b));
  EXPECT_THROW(evaluate(m, b.task.dataset, b.split.test, b.labels, {5, 1, 1}, 10, 24, 0), ConfigError);
}

TEST(Evaluate, UntrainedModelWithUninformativeDataIsAtChance) {
  SyntheticTaskSpec spec;
  spec.visual_separation = 0.0;
  spec.semantic_separation = 0.0;
  const auto b = make_bench(6, spec);
  const Am3Model m(bench_model(b));
  const auto r = evaluate(m, b.task.dataset, b.split.test, b.labels, {5, 1, 1}, 500, 20, 3);
  EXPECT_GE(r.mean_accuracy, 0.15);
  EXPECT_LE(r.mean_accuracy, 0.25);
}

TEST(Evaluate, SeparableDataIsPerfect) {
  // Identity encoder, visual only, tiny spread: nearest centroid is always right.
  SyntheticTaskSpec spec;
  spec.visual_spread = 0.01;
  spec.visual_separation = 10.0;
  const auto b = make_bench(7, spec);
  ModelConfig c = bench_model(b);
  c.encoder_hidden = {};
  c.proto_dim = c.visual_dim;
  c.lambda_fixed = 1.0;
  Am3Model m(c);
  auto& w = m.encoder().layers()[0].weight.value;
  for (std::size_t i = 0; i < c.visual_dim; ++i) {
    for (std::size_t j = 0; j < c.visual_dim; ++j) w.at(i, j) = i == j ? 1.0 : 0.0;
  }
  const auto r = evaluate(m, b.task.dataset, b.split.test, b.labels, {5, 1, 1}, 100, 20, 0);
  EXPECT_EQ(r.mean_accuracy, 1.0);
  EXPECT_EQ(r.lambda_mean, 1.0);
  EXPECT_EQ(r.lambda_std, 0.0);
}

TEST(LambdaStatistics, FixedMixerGivesConstantRows) {
  const auto b = make_bench(8);
  ModelConfig c = bench_model(b);
  c.lambda_fixed = 0.3;
  const Am3Model m(c);
  const auto rows = lambda_statistics(m, b.task.dataset, b.split.test, b.labels, {1, 5}, 5, 2, 10, 0);
  ASSERT_EQ(rows.size(), 2u);
  for (const auto& row : rows) {
    EXPECT_NEAR(row.lambda_mean, 0.3, 1e-15);
    EXPECT_LT(row.lambda_std, 1e-15);
  }
  EXPECT_EQ(rows[1].k_shot, 5u);
}

TEST(Ablation, OneRowPerModeAndRepeatable) {
  const auto b = make_bench(9);
  Experiment e;
  e.dataset = &b.task.dataset;
  e.labels = &b.labels;
  e.split = b.split;
  e.model = bench_model(b);
  e.train = short_train(20);
  e.eval.n_episodes = 20;
  const auto one = ablation_run(e, {ConditioningMode::P});
  ASSERT_EQ(one.size(), 1u);
  EXPECT_EQ(one[0].mode, ConditioningMode::P);
  const auto twice = ablation_run(e, {ConditioningMode::W, ConditioningMode::W});
  ASSERT_EQ(twice.size(), 2u);
  EXPECT_EQ(twice[0].report, twice[1].report);
}
