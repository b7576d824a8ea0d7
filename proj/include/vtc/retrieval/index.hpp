#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <unordered_map>
#include <vector>

#include "vtc/errors.hpp"
#include "vtc/model/example_set.hpp"
#include "vtc/model/transformer.hpp"
#include "vtc/numerics/ops.hpp"

namespace vtc {

enum class RankStage { embed_only, reranked };

inline const char* rank_stage_name(RankStage s) { return s == RankStage::embed_only ? "embed_only" : "reranked"; }

inline RankStage parse_rank_stage(const std::string& s) {
  if (s == "embed_only") return RankStage::embed_only;
  if (s == "reranked") return RankStage::reranked;
  throw FormatError("unknown ranking stage '" + s + "'");
}

/// Ranked candidate ids for one query, best first.
struct RankedResult {
  std::string query_id;
  std::vector<std::string> ids;
  std::vector<double> scores;
  RankStage stage = RankStage::embed_only;

  std::size_t size() const { return ids.size(); }
  friend bool operator==(const RankedResult&, const RankedResult&) = default;
};

/// Exact dot-product index over unit-norm candidate embeddings.
class CandidateIndex {
 public:
  CandidateIndex() = default;

  CandidateIndex(std::vector<std::string> ids, Tensor matrix) : ids_(std::move(ids)), matrix_(std::move(matrix)) {
    if (matrix_.rank() != 2 || matrix_.dim(0) != ids_.size()) {
      throw DimensionError("index matrix must have one row per id");
    }
    for (std::size_t r = 0; r < ids_.size(); ++r) {
      const double n = l2_norm(matrix_.row(r));
      if (std::abs(n - 1.0) > 1e-6) {
        throw ContractError("index row '" + ids_[r] + "' has norm " + std::to_string(n) + ", expected 1");
      }
      if (!position_.emplace(ids_[r], r).second) throw ContractError("duplicate index id '" + ids_[r] + "'");
    }
  }

  explicit CandidateIndex(const std::vector<Embedding>& embeddings) : CandidateIndex(ids_of(embeddings), stack(embeddings)) {}

  std::size_t size() const { return ids_.size(); }
  bool empty() const { return ids_.empty(); }
  std::size_t dim() const { return matrix_.rank() == 2 ? matrix_.dim(1) : 0; }
  const std::vector<std::string>& ids() const { return ids_; }
  const Tensor& matrix() const { return matrix_; }
  std::span<const double> row(std::size_t i) const { return matrix_.row(i); }
  bool contains(const std::string& id) const { return position_.count(id) > 0; }

  std::size_t position(const std::string& id) const {
    auto it = position_.find(id);
    if (it == position_.end()) throw ContractError("id '" + id + "' is not in the index");
    return it->second;
  }

  /// FNV-1a over ids and the raw row bytes.
  std::uint64_t content_hash() const {
    std::uint64_t h = 1469598103934665603ull;
    auto mix = [&h](const void* p, std::size_t n) {
      const auto* b = static_cast<const unsigned char*>(p);
      for (std::size_t i = 0; i < n; ++i) {
        h ^= b[i];
        h *= 1099511628211ull;
      }
    };
    for (const auto& id : ids_) mix(id.data(), id.size() + 1);
    mix(matrix_.data().data(), matrix_.size() * sizeof(double));
    return h;
  }

 private:
  static std::vector<std::string> ids_of(const std::vector<Embedding>& es) {
    std::vector<std::string> out;
    for (const auto& e : es) out.push_back(e.source_id);
    return out;
  }
  static Tensor stack(const std::vector<Embedding>& es) {
    if (es.empty()) return Tensor({0, 0});
    const std::size_t d = es.front().dim();
    Tensor m({es.size(), d});
    for (std::size_t r = 0; r < es.size(); ++r) {
      if (es[r].dim() != d) throw DimensionError("embeddings of different widths in one index");
      std::copy(es[r].vector.data().begin(), es[r].vector.data().end(), m.row(r).begin());
    }
    return m;
  }

  std::vector<std::string> ids_;
  Tensor matrix_;
  std::unordered_map<std::string, std::size_t> position_;
};

/// Exact top-K by dot product. Equal scores rank by ascending id.
inline RankedResult search(const CandidateIndex& index, std::span<const double> query, std::size_t k,
                           std::string query_id = {}) {
  if (index.empty()) throw StateError("search on an empty index");
  if (query.size() != index.dim()) {
    throw DimensionError("query width " + std::to_string(query.size()) + " does not match index width " +
                         std::to_string(index.dim()));
  }
  if (k > index.size()) {
    throw ParameterError("K = " + std::to_string(k) + " exceeds index size " + std::to_string(index.size()));
  }
  std::vector<double> scores(index.size());
  for (std::size_t r = 0; r < index.size(); ++r) scores[r] = dot(query, index.row(r));
  std::vector<std::size_t> order(index.size());
  std::iota(order.begin(), order.end(), 0);
  const auto& ids = index.ids();
  auto better = [&](std::size_t a, std::size_t b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return ids[a] < ids[b];
  };
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(), better);
  RankedResult out;
  out.query_id = std::move(query_id);
  for (std::size_t i = 0; i < k; ++i) {
    out.ids.push_back(ids[order[i]]);
    out.scores.push_back(scores[order[i]]);
  }
  return out;
}

inline RankedResult search(const CandidateIndex& index, const Embedding& query, std::size_t k,
                           std::string query_id = {}) {
  return search(index, query.vector.data(), k, query_id.empty() ? query.source_id : std::move(query_id));
}

/// Embeds every candidate with `model` and indexes the results.
inline CandidateIndex build_index(const Model& model, const std::vector<const MultimodalExample*>& candidates) {
  return CandidateIndex(embed_all(model, candidates));
}

inline CandidateIndex build_index(const Model& model, const ExampleSet& candidates) {
  return build_index(model, candidates.pointers());
}

}  // namespace vtc
