#pragma once

// Word-embedding tables and category label resolution.

#include <cstdint>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "am3/errors.hpp"
#include "am3/text.hpp"

namespace am3 {

using WarningSink = std::function<void(const std::string&)>;

inline void warn_to_stderr(const std::string& message) { std::cerr << "warning: " << message << '\n'; }

/// Token -> vector dictionary. The dimension is fixed by the first entry.
class EmbeddingTable {
 public:
  EmbeddingTable() = default;
  explicit EmbeddingTable(std::size_t dimension) : dimension_(dimension) {}

  std::optional<std::size_t> dimension() const noexcept { return dimension_; }
  std::size_t size() const noexcept { return entries_.size(); }
  bool empty() const noexcept { return entries_.empty(); }

  /// Inserts or replaces. Returns true when the token was already present.
  bool insert(std::string token, std::vector<double> vec) {
    if (token.empty()) throw DataError("embedding token must be non-empty");
    for (char c : token) {
      if (text::is_space(c)) throw DataError("embedding token '" + token + "' contains whitespace");
    }
    if (!dimension_) {
      if (vec.empty()) throw DataError("embedding vector must be non-empty");
      dimension_ = vec.size();
    } else if (vec.size() != *dimension_) {
      throw DimensionError("embedding for '" + token + "' has dimension " + std::to_string(vec.size()) +
                           ", table dimension is " + std::to_string(*dimension_));
    }
    return !entries_.insert_or_assign(std::move(token), std::move(vec)).second;
  }

  const std::vector<double>* find(std::string_view token) const {
    auto it = entries_.find(std::string(token));
    return it == entries_.end() ? nullptr : &it->second;
  }

  bool contains(std::string_view token) const { return find(token) != nullptr; }

  /// Entries in token order.
  std::map<std::string, std::vector<double>> sorted() const { return {entries_.begin(), entries_.end()}; }

 private:
  std::optional<std::size_t> dimension_;
  std::unordered_map<std::string, std::vector<double>> entries_;
};

/// Reads `token v1 ... vn` lines. Blank lines are skipped; a repeated token
/// keeps its last vector and triggers a warning.
inline EmbeddingTable parse_embedding_file(std::istream& in, const WarningSink& warn = warn_to_stderr) {
  EmbeddingTable table;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto fields = text::split_whitespace(line);
    if (fields.empty()) continue;
    if (fields.size() < 2) throw ParseError("token '" + std::string(fields[0]) + "' has no vector", line_no);
    std::vector<double> vec;
    vec.reserve(fields.size() - 1);
    for (std::size_t i = 1; i < fields.size(); ++i) {
      auto v = text::parse_double(fields[i]);
      if (!v) throw ParseError("non-numeric field '" + std::string(fields[i]) + "'", line_no);
      vec.push_back(*v);
    }
    if (table.dimension() && vec.size() != *table.dimension()) {
      throw ParseError("dimension " + std::to_string(vec.size()) + " differs from " +
                           std::to_string(*table.dimension()),
                       line_no);
    }
    if (table.insert(std::string(fields[0]), std::move(vec)) && warn) {
      warn("duplicate token '" + std::string(fields[0]) + "' at line " + std::to_string(line_no) +
           "; keeping the last occurrence");
    }
  }
  return table;
}

/// Writes entries in token order, one per line, single-space separated.
inline void write_embedding_file(std::ostream& out, const EmbeddingTable& table) {
  for (const auto& [token, vec] : table.sorted()) {
    out << token;
    for (double v : vec) out << ' ' << text::exact_decimal(v);
    out << '\n';
  }
}

/// Ordered synonyms naming one category; each may contain several words.
struct CategoryLabel {
  std::vector<std::string> annotations;

  /// Parses `first|second|...`.
  static CategoryLabel parse(std::string_view joined) {
    CategoryLabel label;
    for (auto part : text::split(joined, '|')) {
      auto trimmed = text::trim(part);
      if (!trimmed.empty()) label.annotations.emplace_back(trimmed);
    }
    if (label.annotations.empty()) throw DataError("category label has no annotations");
    return label;
  }

  std::string joined() const {
    std::string out;
    for (std::size_t i = 0; i < annotations.size(); ++i) {
      if (i) out += '|';
      out += annotations[i];
    }
    return out;
  }

  friend bool operator==(const CategoryLabel&, const CategoryLabel&) = default;
};

struct LabelResolution {
  std::vector<double> vector;
  // Index of the annotation that resolved, or nullopt for the random fallback.
  std::optional<std::size_t> annotation;
};

namespace detail {

inline std::uint64_t fnv1a(std::string_view s, std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace detail

/// Mean of the word vectors of one annotation, or nullopt if any word is missing.
inline std::optional<std::vector<double>> annotation_embedding(std::string_view annotation,
                                                               const EmbeddingTable& table) {
  const auto words = text::split_whitespace(annotation);
  if (words.empty() || !table.dimension()) return std::nullopt;
  std::vector<double> acc(*table.dimension(), 0.0);
  for (auto word : words) {
    const auto* vec = table.find(word);
    if (!vec) return std::nullopt;
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += (*vec)[i];
  }
  const double n = static_cast<double>(words.size());
  for (double& v : acc) v /= n;
  return acc;
}

/// Uniform(-1, 1) per coordinate, seeded by (seed, label) so repeated calls agree.
inline std::vector<double> random_label_embedding(const CategoryLabel& label, std::uint64_t seed,
                                                  std::size_t dimension) {
  std::mt19937_64 rng(detail::splitmix64(seed ^ detail::fnv1a(label.joined())));
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  std::vector<double> out(dimension);
  for (double& v : out) {
    do {
      v = dist(rng);
    } while (v <= -1.0 || v >= 1.0);
  }
  return out;
}

/// Tries each annotation in order; all words of an annotation must be known.
/// Falls back to a seeded uniform(-1, 1) vector of the table dimension, or of
/// `fallback_dimension` when the table is empty.
inline LabelResolution resolve_label_embedding(const CategoryLabel& label, const EmbeddingTable& table,
                                               std::uint64_t seed, std::size_t fallback_dimension = 0) {
  for (std::size_t i = 0; i < label.annotations.size(); ++i) {
    if (auto vec = annotation_embedding(label.annotations[i], table)) return {std::move(*vec), i};
  }
  const std::size_t dim = table.dimension().value_or(fallback_dimension);
  if (dim == 0) throw DataError("cannot sample a fallback embedding for '" + label.joined() + "': dimension unknown");
  return {random_label_embedding(label, seed, dim), std::nullopt};
}

}  // namespace am3
