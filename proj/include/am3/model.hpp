#pragma once

// Adaptive modality mixture model.
//
// A query is classified by a softmax over negative distances to per-category
// prototypes. Each prototype is a convex combination
//     p'_c = lambda_c * p_c + (1 - lambda_c) * w_c
// of the visual centroid p_c (mean encoded support) and the transformed label
// embedding w_c = g(e_c), with lambda_c = sigmoid(h(.)) produced by a small
// mixing network whose input depends on the conditioning mode.

#include <algorithm>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "am3/autodiff.hpp"
#include "am3/dataset.hpp"
#include "am3/episode.hpp"
#include "am3/errors.hpp"
#include "am3/optim.hpp"
#include "am3/tensor.hpp"

namespace am3 {

/// Input of the mixing network h.
enum class ConditioningMode {
  W,   // transformed label embedding w_c
  E,   // raw label embedding e_c
  P,   // visual prototype p_c
  WQ,  // (w_c, f(q_t)): one coefficient per category and query
};

enum class DistanceKind { SquaredEuclidean, Euclidean };

/// How category prototypes are formed.
enum class PrototypeRule {
  Adaptive,   // lambda_c from the mixing network (or a fixed override)
  Alignment,  // (sum of supports + w_c) / (K + 1), no mixing network
};

inline std::string to_string(ConditioningMode m) {
  switch (m) {
    case ConditioningMode::W: return "w";
    case ConditioningMode::E: return "e";
    case ConditioningMode::P: return "p";
    case ConditioningMode::WQ: return "wq";
  }
  return "?";
}

inline ConditioningMode parse_conditioning_mode(std::string_view s) {
  if (s == "w") return ConditioningMode::W;
  if (s == "e") return ConditioningMode::E;
  if (s == "p") return ConditioningMode::P;
  if (s == "wq") return ConditioningMode::WQ;
  throw UsageError("unknown conditioning mode '" + std::string(s) + "' (valid: w, e, p, wq)");
}

inline std::string to_string(DistanceKind d) {
  return d == DistanceKind::SquaredEuclidean ? "sq-euclid" : "euclid";
}

inline DistanceKind parse_distance_kind(std::string_view s) {
  if (s == "sq-euclid") return DistanceKind::SquaredEuclidean;
  if (s == "euclid") return DistanceKind::Euclidean;
  throw UsageError("unknown distance '" + std::string(s) + "' (valid: sq-euclid, euclid)");
}

inline std::string to_string(PrototypeRule r) { return r == PrototypeRule::Adaptive ? "adaptive" : "alignment"; }

inline PrototypeRule parse_prototype_rule(std::string_view s) {
  if (s == "adaptive") return PrototypeRule::Adaptive;
  if (s == "alignment") return PrototypeRule::Alignment;
  throw UsageError("unknown prototype rule '" + std::string(s) + "' (valid: adaptive, alignment)");
}

struct ModelConfig {
  std::size_t visual_dim = 16;  // n_v
  std::size_t word_dim = 16;    // n_w
  std::size_t proto_dim = 32;   // n_p
  std::vector<std::size_t> encoder_hidden{64};
  std::size_t semantic_hidden = 300;
  std::size_t mixer_hidden = 300;
  double dropout_keep = 0.7;
  ConditioningMode mode = ConditioningMode::W;
  DistanceKind distance = DistanceKind::SquaredEuclidean;
  PrototypeRule rule = PrototypeRule::Adaptive;
  // When set, every lambda_c takes this value and h is bypassed.
  std::optional<double> lambda_fixed;
  std::uint64_t seed = 0;

  void validate() const {
    if (visual_dim == 0 || word_dim == 0 || proto_dim == 0) throw ConfigError("model dimensions must be positive");
    if (semantic_hidden == 0 || mixer_hidden == 0) throw ConfigError("hidden widths must be positive");
    for (auto w : encoder_hidden) {
      if (w == 0) throw ConfigError("encoder hidden widths must be positive");
    }
    if (!(dropout_keep > 0.0 && dropout_keep <= 1.0)) throw ConfigError("dropout keep probability must lie in (0, 1]");
    if (lambda_fixed && !(*lambda_fixed >= 0.0 && *lambda_fixed <= 1.0)) {
      throw ConfigError("fixed lambda must lie in [0, 1]");
    }
  }

  /// Input width of the mixing network for the configured mode.
  std::size_t mixer_input_dim() const {
    switch (mode) {
      case ConditioningMode::W: return proto_dim;
      case ConditioningMode::E: return word_dim;
      case ConditioningMode::P: return proto_dim;
      case ConditioningMode::WQ: return 2 * proto_dim;
    }
    return proto_dim;
  }

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/// Training-time switches for a forward pass.
struct ForwardMode {
  bool training = false;
  Rng* rng = nullptr;  // dropout masks; required when training with keep < 1
};

struct DenseLayer {
  Parameter weight;  // [in, out]
  Parameter bias;    // [out]
};

/// Fully connected network with ReLU (and optional dropout) after each hidden layer.
class Mlp {
 public:
  Mlp() = default;

  Mlp(std::size_t in, const std::vector<std::size_t>& hidden, std::size_t out, Rng& rng) {
    std::size_t prev = in;
    auto widths = hidden;
    widths.push_back(out);
    for (auto w : widths) {
      layers_.push_back(DenseLayer{Parameter(glorot_uniform(prev, w, rng)), Parameter(Tensor({w}, 0.0))});
      prev = w;
    }
  }

  Var forward(Tape& tape, Var x, double keep, const ForwardMode& mode) const {
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      x = affine(x, tape.watch(layers_[i].weight), tape.watch(layers_[i].bias));
      if (i + 1 < layers_.size()) {
        x = relu(x);
        if (mode.training && keep < 1.0) {
          if (!mode.rng) throw UsageError("training-mode dropout needs a random source");
          x = dropout(x, keep, *mode.rng, true);
        }
      }
    }
    return x;
  }

  std::size_t input_dim() const { return layers_.front().weight.value.rows(); }
  std::size_t output_dim() const { return layers_.back().weight.value.cols(); }

  std::vector<DenseLayer>& layers() noexcept { return layers_; }
  const std::vector<DenseLayer>& layers() const noexcept { return layers_; }

 private:
  std::vector<DenseLayer> layers_;
};

struct NamedParameter {
  std::string name;
  Parameter* param;
};

struct EpisodeOutput {
  Var scores;     // [queries, N] negative distances
  Var loss;       // scalar mean negative log-likelihood
  Tensor lambda;  // [N] per category, or [queries * N] in mode WQ (query-major)
};

class Am3Model {
 public:
  Am3Model() = default;

  explicit Am3Model(ModelConfig config) : config_(std::move(config)) {
    config_.validate();
    Rng rng(config_.seed);
    encoder_ = Mlp(config_.visual_dim, config_.encoder_hidden, config_.proto_dim, rng);
    semantic_ = Mlp(config_.word_dim, {config_.semantic_hidden}, config_.proto_dim, rng);
    mixer_ = Mlp(config_.mixer_input_dim(), {config_.mixer_hidden}, 1, rng);
  }

  const ModelConfig& config() const noexcept { return config_; }
  ModelConfig& mutable_config() noexcept { return config_; }

  Mlp& encoder() noexcept { return encoder_; }
  Mlp& semantic() noexcept { return semantic_; }
  Mlp& mixer() noexcept { return mixer_; }
  const Mlp& encoder() const noexcept { return encoder_; }
  const Mlp& semantic() const noexcept { return semantic_; }
  const Mlp& mixer() const noexcept { return mixer_; }

  /// Every parameter with a stable name: f.<layer>.weight, g.0.bias, ...
  std::vector<NamedParameter> named_parameters() {
    std::vector<NamedParameter> out;
    auto add = [&out](const std::string& prefix, Mlp& net) {
      for (std::size_t i = 0; i < net.layers().size(); ++i) {
        out.push_back({prefix + "." + std::to_string(i) + ".weight", &net.layers()[i].weight});
        out.push_back({prefix + "." + std::to_string(i) + ".bias", &net.layers()[i].bias});
      }
    };
    add("f", encoder_);
    add("g", semantic_);
    add("h", mixer_);
    return out;
  }

  std::vector<std::pair<std::string, const Parameter*>> named_parameters() const {
    std::vector<std::pair<std::string, const Parameter*>> out;
    for (auto& np : const_cast<Am3Model*>(this)->named_parameters()) out.emplace_back(np.name, np.param);
    return out;
  }

  std::vector<Parameter*> parameters() {
    std::vector<Parameter*> out;
    for (auto& np : named_parameters()) out.push_back(np.param);
    return out;
  }

  // --- tape forward passes -------------------------------------------------

  Var encode(Tape& tape, const Var& x) const {
    check_cols(x.value(), config_.visual_dim, "visual features");
    return encoder_.forward(tape, x, 1.0, {});
  }

  Var transform_semantic(Tape& tape, const Var& e, const ForwardMode& mode = {}) const {
    check_cols(e.value(), config_.word_dim, "label embedding");
    return semantic_.forward(tape, e, config_.dropout_keep, mode);
  }

  /// sigmoid(h(input)), one coefficient per input row.
  Var mixing_coefficient(Tape& tape, const Var& input, const ForwardMode& mode = {}) const {
    if (input.value().rank() != 2 || input.value().cols() != config_.mixer_input_dim()) {
      throw UsageError("mixing network in mode " + to_string(config_.mode) + " expects rows of width " +
                       std::to_string(config_.mixer_input_dim()) + ", got " + shape_string(input.shape()));
    }
    return sigmoid(mixer_.forward(tape, input, config_.dropout_keep, mode));
  }

  /// Scores, loss and mixing coefficients for one episode.
  EpisodeOutput forward_episode(Tape& tape, const Episode& episode, const LabelEmbeddings& labels,
                                const ForwardMode& mode = {}) const {
    const std::size_t n = episode.n_way();
    if (n == 0 || episode.support.empty() || episode.query.empty()) throw UsageError("episode is empty");
    const std::size_t nq = episode.query.size();

    Var support_x = tape.constant(stack_features(episode.support, config_.visual_dim));
    Var query_x = tape.constant(stack_features(episode.query, config_.visual_dim));
    std::vector<double> e_values;
    e_values.reserve(n * config_.word_dim);
    for (const auto& id : episode.category_ids) {
      const auto& e = labels.at(id);
      if (e.size() != config_.word_dim) {
        throw DimensionError("label embedding of '" + id + "' has dimension " + std::to_string(e.size()) +
                             ", model expects " + std::to_string(config_.word_dim));
      }
      e_values.insert(e_values.end(), e.begin(), e.end());
    }
    Var label_e = tape.constant(Tensor({n, config_.word_dim}, std::move(e_values)));

    std::vector<std::size_t> support_labels, query_labels;
    for (const auto& s : episode.support) support_labels.push_back(s.label);
    for (const auto& q : episode.query) query_labels.push_back(q.label);

    Var support_f = encode(tape, support_x);
    Var query_f = encode(tape, query_x);
    Var semantic_w = transform_semantic(tape, label_e, mode);

    EpisodeOutput out;
    Var dist;
    if (config_.rule == PrototypeRule::Alignment) {
      // (sum_i r_i + w_c) / (K + 1): the label vector joins the support mean as one more sample.
      auto segments = support_labels;
      for (std::size_t c = 0; c < n; ++c) segments.push_back(c);
      Var protos = segment_mean(concat_rows(support_f, semantic_w), std::move(segments), n);
      dist = pairwise_sq_distance(query_f, protos);
      out.lambda = Tensor({n});
      std::vector<double> counts(n, 0.0);
      for (auto l : support_labels) counts[l] += 1.0;
      for (std::size_t c = 0; c < n; ++c) out.lambda[c] = counts[c] / (counts[c] + 1.0);
    } else {
      Var visual_p = segment_mean(support_f, support_labels, n);
      if (config_.mode == ConditioningMode::WQ && !config_.lambda_fixed) {
        std::vector<std::size_t> pair_query, pair_cat;
        for (std::size_t t = 0; t < nq; ++t) {
          for (std::size_t c = 0; c < n; ++c) {
            pair_query.push_back(t);
            pair_cat.push_back(c);
          }
        }
        Var q_rep = select_rows(query_f, std::move(pair_query));
        Var w_rep = select_rows(semantic_w, pair_cat);
        Var p_rep = select_rows(visual_p, std::move(pair_cat));
        Var lambda = mixing_coefficient(tape, concat_cols(w_rep, q_rep), mode);
        Var mixed = convex_mix(lambda, p_rep, w_rep);
        dist = reshape(rowwise_sq_distance(q_rep, mixed), {nq, n});
        out.lambda = lambda.value().reshaped({nq * n});
      } else {
        Var lambda;
        if (config_.lambda_fixed) {
          lambda = tape.constant(Tensor({n, 1}, *config_.lambda_fixed));
        } else {
          Var cond = config_.mode == ConditioningMode::W   ? semantic_w
                     : config_.mode == ConditioningMode::E ? label_e
                                                           : visual_p;
          lambda = mixing_coefficient(tape, cond, mode);
        }
        Var mixed = convex_mix(lambda, visual_p, semantic_w);
        dist = pairwise_sq_distance(query_f, mixed);
        out.lambda = lambda.value().reshaped({n});
      }
    }
    if (config_.distance == DistanceKind::Euclidean) dist = elementwise_sqrt(dist);
    out.scores = scale(dist, -1.0);
    out.loss = softmax_cross_entropy(out.scores, std::move(query_labels));
    return out;
  }

  // --- evaluation-mode conveniences ----------------------------------------

  /// f applied to each row of `x` ([rows, n_v] or a single [n_v] vector).
  Tensor encode_visual(const Tensor& x) const {
    Tape tape(false);
    const bool single = x.rank() == 1;
    Tensor in = single ? x.reshaped({1, x.size()}) : x;
    Tensor out = encode(tape, tape.constant(std::move(in))).value();
    return single ? out.reshaped({out.size()}) : out;
  }

  /// w_c = g(e_c) without dropout.
  std::vector<double> transform_semantic(std::span<const double> e) const {
    Tape tape(false);
    Var in = tape.constant(Tensor({1, e.size()}, std::vector<double>(e.begin(), e.end())));
    return transform_semantic(tape, in).value().storage();
  }

  /// lambda for a single conditioning row, evaluation mode.
  double mixing_coefficient(std::span<const double> input) const {
    Tape tape(false);
    Var in = tape.constant(Tensor({1, input.size()}, std::vector<double>(input.begin(), input.end())));
    return mixing_coefficient(tape, in).value().item();
  }

  /// Zero-shot prototype: the transformed label embedding alone.
  std::vector<double> zero_shot_prototype(std::span<const double> e) const { return transform_semantic(e); }

  /// Mean negative log-likelihood over the episode's queries.
  double episode_loss(const Episode& episode, const LabelEmbeddings& labels) const {
    Tape tape(false);
    return forward_episode(tape, episode, labels).loss.value().item();
  }

  /// Class probabilities per query, [queries, N], evaluation mode.
  Tensor classify_episode(const Episode& episode, const LabelEmbeddings& labels) const {
    Tape tape(false);
    const Tensor scores = forward_episode(tape, episode, labels).scores.value();
    Tensor probs(scores.shape());
    for (std::size_t r = 0; r < scores.rows(); ++r) {
      const auto p = softmax_from_scores(scores.row(r));
      std::copy(p.begin(), p.end(), probs.row(r).begin());
    }
    return probs;
  }

 private:
  static void check_cols(const Tensor& t, std::size_t expected, const char* what) {
    if (t.rank() != 2 || t.cols() != expected) {
      throw DimensionError(std::string(what) + " of shape " + shape_string(t.shape()) + " do not match width " +
                           std::to_string(expected));
    }
  }

  static Tensor stack_features(const std::vector<EpisodeSample>& samples, std::size_t dim) {
    std::vector<double> values;
    values.reserve(samples.size() * dim);
    for (const auto& s : samples) {
      if (s.features.size() != dim) {
        throw DimensionError("feature vector of length " + std::to_string(s.features.size()) +
                             " does not match model input " + std::to_string(dim));
      }
      values.insert(values.end(), s.features.begin(), s.features.end());
    }
    return Tensor({samples.size(), dim}, std::move(values));
  }

  ModelConfig config_;
  Mlp encoder_;
  Mlp semantic_;
  Mlp mixer_;
};

// ---------------------------------------------------------------------------
// Prototype arithmetic on plain vectors

/// Mean of the support embeddings of one category.
inline std::vector<double> visual_prototype(std::span<const std::vector<double>> embeddings) {
  if (embeddings.empty()) throw UsageError("visual prototype of an empty support set");
  std::vector<double> out(embeddings.front().size(), 0.0);
  for (const auto& e : embeddings) {
    if (e.size() != out.size()) throw DimensionError("support embeddings differ in length");
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += e[i];
  }
  for (double& v : out) v /= static_cast<double>(embeddings.size());
  return out;
}

/// lambda * p + (1 - lambda) * w.
inline std::vector<double> cross_modal_prototype(std::span<const double> p, std::span<const double> w, double lambda) {
  if (p.size() != w.size()) {
    throw DimensionError("cross_modal_prototype: lengths " + std::to_string(p.size()) + " and " +
                         std::to_string(w.size()));
  }
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw UsageError("mixing coefficient outside [0, 1]");
  std::vector<double> out(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) out[i] = lambda * p[i] + (1.0 - lambda) * w[i];
  return out;
}

/// (sum of supports + w) / (N + 1); with no supports this is w itself.
inline std::vector<double> alignment_prototype(std::span<const std::vector<double>> supports,
                                               std::span<const double> w) {
  std::vector<double> out(w.begin(), w.end());
  for (const auto& r : supports) {
    if (r.size() != w.size()) {
      throw DimensionError("alignment_prototype: support of length " + std::to_string(r.size()) +
                           " vs semantic vector of length " + std::to_string(w.size()));
    }
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += r[i];
  }
  const double denom = static_cast<double>(supports.size() + 1);
  for (double& v : out) v /= denom;
  return out;
}

/// Softmax over negative distances from `query` to each prototype.
inline std::vector<double> classify(std::span<const double> query, std::span<const std::vector<double>> prototypes,
                                    DistanceKind distance = DistanceKind::SquaredEuclidean) {
  if (prototypes.empty()) throw UsageError("classify needs at least one prototype");
  std::vector<double> scores;
  scores.reserve(prototypes.size());
  for (const auto& p : prototypes) {
    const double d = squared_euclidean(query, p);
    scores.push_back(-(distance == DistanceKind::Euclidean ? std::sqrt(d) : d));
  }
  return softmax_from_scores(scores);
}

}  // namespace am3
