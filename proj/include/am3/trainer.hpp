#pragma once

// Episodic training, evaluation with confidence intervals, mixing-coefficient
// statistics and conditioning-mode ablations.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "am3/autodiff.hpp"
#include "am3/dataset.hpp"
#include "am3/embedding.hpp"
#include "am3/episode.hpp"
#include "am3/errors.hpp"
#include "am3/model.hpp"
#include "am3/optim.hpp"
#include "am3/stats.hpp"

namespace am3 {

struct TrainConfig {
  std::size_t iterations = 600;
  double initial_lr = 0.005;
  double momentum = 0.9;
  std::vector<std::size_t> anneal_steps{300, 450};
  double anneal_factor = 10.0;
  std::size_t tasks_per_batch = 1;
  // Queries per task; when nonzero it overrides episode.k_query and must be
  // a multiple of n_way.
  std::size_t queries_per_batch = 0;
  EpisodeConfig episode{};
  double dropout_keep = 0.7;
  std::uint64_t seed = 0;

  void validate() const {
    episode.validate();
    if (!(initial_lr > 0.0)) throw ConfigError("initial learning rate must be positive");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must lie in [0, 1)");
    if (!(anneal_factor > 0.0)) throw ConfigError("anneal factor must be positive");
    if (tasks_per_batch == 0) throw ConfigError("tasks_per_batch must be positive");
    if (!(dropout_keep > 0.0 && dropout_keep <= 1.0)) throw ConfigError("dropout keep probability must lie in (0, 1]");
    if (queries_per_batch % episode.n_way != 0) {
      throw ConfigError("queries_per_batch " + std::to_string(queries_per_batch) + " is not a multiple of n_way " +
                        std::to_string(episode.n_way));
    }
    for (std::size_t i = 0; i < anneal_steps.size(); ++i) {
      if (anneal_steps[i] < 1 || anneal_steps[i] > std::max<std::size_t>(iterations, 1)) {
        throw ConfigError("anneal step " + std::to_string(anneal_steps[i]) + " outside [1, iterations]");
      }
      if (i > 0 && anneal_steps[i] <= anneal_steps[i - 1]) throw ConfigError("anneal steps must be strictly increasing");
    }
  }

  EpisodeConfig training_episode() const {
    EpisodeConfig ep = episode;
    if (queries_per_batch != 0) ep.k_query = queries_per_batch / ep.n_way;
    return ep;
  }

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

/// Anneal points at one half and three quarters of the run.
inline std::vector<std::size_t> default_anneal_steps(std::size_t iterations) {
  std::vector<std::size_t> steps;
  for (std::size_t s : {iterations / 2, iterations * 3 / 4}) {
    if (s >= 1 && (steps.empty() || s > steps.back())) steps.push_back(s);
  }
  return steps;
}

/// Learning rate in effect at 1-based `iteration`: divided by the anneal
/// factor once for every anneal step <= iteration.
inline double learning_rate_at(const TrainConfig& config, std::size_t iteration) {
  double lr = config.initial_lr;
  for (auto step : config.anneal_steps) {
    if (iteration >= step) lr /= config.anneal_factor;
  }
  return lr;
}

struct LossRecord {
  std::size_t iteration = 0;
  double learning_rate = 0.0;
  double batch_loss = 0.0;
};

using LossTrace = std::vector<LossRecord>;

namespace detail {

inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t x = seed ^ (stream * 0x9e3779b97f4a7c15ULL);
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace detail

/// Runs `iterations` SGD-with-momentum steps; each step averages the episode
/// loss over `tasks_per_batch` fresh episodes. Throws TrainingDiverged when a
/// batch loss is not finite.
inline LossTrace train(Am3Model& model, const LabeledDataset& dataset, const std::vector<CategoryId>& split,
                       const LabelEmbeddings& labels, const TrainConfig& config) {
  config.validate();
  const EpisodeConfig episode_config = config.training_episode();
  model.mutable_config().dropout_keep = config.dropout_keep;

  EpisodeStream episodes(dataset, split, episode_config, detail::derive_seed(config.seed, 1));
  Rng dropout_rng(detail::derive_seed(config.seed, 2));
  const auto params = model.parameters();

  LossTrace trace;
  trace.reserve(config.iterations);
  for (std::size_t it = 1; it <= config.iterations; ++it) {
    const double lr = learning_rate_at(config, it);
    Tape tape;
    std::optional<Var> total;
    for (std::size_t t = 0; t < config.tasks_per_batch; ++t) {
      const Episode ep = episodes.next();
      Var loss = model.forward_episode(tape, ep, labels, ForwardMode{true, &dropout_rng}).loss;
      total = total ? add(*total, loss) : loss;
    }
    Var batch = scale(*total, 1.0 / static_cast<double>(config.tasks_per_batch));
    const double batch_loss = batch.value().item();
    if (!std::isfinite(batch_loss)) throw TrainingDiverged(it, lr);
    tape.backward(batch);
    std::vector<Tensor> grads;
    grads.reserve(params.size());
    for (const Parameter* p : params) grads.push_back(tape.gradient(*p));
    sgd_momentum_step(params, grads, lr, config.momentum);
    trace.push_back({it, lr, batch_loss});
  }
  return trace;
}

struct EvalReport {
  std::size_t n_episodes = 0;
  std::size_t n_way = 0;
  std::size_t k_shot = 0;
  std::size_t queries_per_episode = 0;
  double mean_accuracy = 0.0;
  double ci95_halfwidth = 0.0;
  // False when fewer than two episodes were run; the half-width is then 0.
  bool ci95_defined = false;
  double lambda_mean = 0.0;
  double lambda_std = 0.0;
  std::vector<double> per_episode_accuracies;

  friend bool operator==(const EvalReport&, const EvalReport&) = default;
};

/// Fraction of queries whose highest score belongs to their own category.
inline double episode_accuracy(const Tensor& scores, const Episode& episode) {
  std::size_t correct = 0;
  for (std::size_t r = 0; r < episode.query.size(); ++r) {
    const auto row = scores.row(r);
    const auto best = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
    if (best == episode.query[r].label) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(episode.query.size());
}

/// Accuracy and mixing statistics over `n_episodes` seeded episodes, dropout
/// off. `queries_per_episode` is spread evenly over the N categories.
inline EvalReport evaluate(const Am3Model& model, const LabeledDataset& dataset, const std::vector<CategoryId>& split,
                           const LabelEmbeddings& labels, const EpisodeConfig& episode_config, std::size_t n_episodes,
                           std::size_t queries_per_episode, std::uint64_t seed) {
  if (n_episodes == 0) throw ConfigError("evaluation needs at least one episode");
  if (queries_per_episode == 0 || queries_per_episode % episode_config.n_way != 0) {
    throw ConfigError("queries per episode " + std::to_string(queries_per_episode) +
                      " must be a positive multiple of n_way " + std::to_string(episode_config.n_way));
  }
  EpisodeConfig ec = episode_config;
  ec.k_query = queries_per_episode / ec.n_way;

  EvalReport report;
  report.n_episodes = n_episodes;
  report.n_way = ec.n_way;
  report.k_shot = ec.k_shot;
  report.queries_per_episode = queries_per_episode;
  std::vector<double> lambdas;
  EpisodeStream stream(dataset, split, ec, seed);
  for (std::size_t i = 0; i < n_episodes; ++i) {
    const Episode ep = stream.next();
    Tape tape(false);
    const auto out = model.forward_episode(tape, ep, labels);
    report.per_episode_accuracies.push_back(episode_accuracy(out.scores.value(), ep));
    lambdas.insert(lambdas.end(), out.lambda.storage().begin(), out.lambda.storage().end());
  }
  report.mean_accuracy = mean(report.per_episode_accuracies);
  report.ci95_defined = n_episodes >= 2;
  report.ci95_halfwidth = ci95_halfwidth(report.per_episode_accuracies);
  report.lambda_mean = mean(lambdas);
  report.lambda_std = population_stddev(lambdas);
  return report;
}

struct LambdaRow {
  std::size_t k_shot = 0;
  double lambda_mean = 0.0;
  double lambda_std = 0.0;
};

/// Mixing coefficients over every category of `episodes` evaluation-mode
/// episodes, for each shot count in `shots`.
inline std::vector<LambdaRow> lambda_statistics(const Am3Model& model, const LabeledDataset& dataset,
                                                const std::vector<CategoryId>& split, const LabelEmbeddings& labels,
                                                const std::vector<std::size_t>& shots, std::size_t n_way,
                                                std::size_t k_query, std::size_t episodes, std::uint64_t seed) {
  std::vector<LambdaRow> rows;
  for (auto k : shots) {
    const auto report = evaluate(model, dataset, split, labels, EpisodeConfig{n_way, k, k_query}, episodes,
                                 n_way * k_query, seed);
    rows.push_back({k, report.lambda_mean, report.lambda_std});
  }
  return rows;
}

struct EvalSettings {
  EpisodeConfig episode{5, 1, 4};
  std::size_t n_episodes = 500;
  std::size_t queries_per_episode = 20;
  std::uint64_t seed = 0;
};

/// Everything needed to train one model and evaluate it on held-out categories.
struct Experiment {
  const LabeledDataset* dataset = nullptr;
  const LabelEmbeddings* labels = nullptr;
  CategorySplit split;
  ModelConfig model;
  TrainConfig train;
  EvalSettings eval;
};

struct ExperimentResult {
  Am3Model model;
  LossTrace trace;
  EvalReport report;
};

inline ExperimentResult run_experiment(const Experiment& exp) {
  if (!exp.dataset || !exp.labels) throw UsageError("experiment lacks a dataset or label embeddings");
  ExperimentResult result{Am3Model(exp.model), {}, {}};
  result.trace = train(result.model, *exp.dataset, exp.split.train, *exp.labels, exp.train);
  result.report = evaluate(result.model, *exp.dataset, exp.split.test, *exp.labels, exp.eval.episode,
                           exp.eval.n_episodes, exp.eval.queries_per_episode, exp.eval.seed);
  return result;
}

struct AblationRow {
  ConditioningMode mode;
  EvalReport report;
};

/// Trains and evaluates one model per conditioning mode with shared seeds.
inline std::vector<AblationRow> ablation_run(const Experiment& base, const std::vector<ConditioningMode>& modes) {
  std::vector<AblationRow> rows;
  for (auto mode : modes) {
    Experiment exp = base;
    exp.model.mode = mode;
    rows.push_back({mode, run_experiment(exp).report});
  }
  return rows;
}

}  // namespace am3
