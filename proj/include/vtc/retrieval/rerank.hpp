#pragma once

#include <algorithm>
#include <numeric>
#include <string>
#include <vector>

#include "vtc/errors.hpp"
#include "vtc/model/example_set.hpp"
#include "vtc/model/transformer.hpp"
#include "vtc/retrieval/index.hpp"
#include "vtc/retrieval/metrics.hpp"

namespace vtc {

inline constexpr std::size_t kDefaultRerankDepth = 5;

/// Scores a (query, candidate) pair; larger means more relevant. May throw
/// LengthError when the pair does not fit the prompt.
class PairScorer {
 public:
  virtual ~PairScorer() = default;
  virtual double score(const MultimodalExample& query, const MultimodalExample& candidate) = 0;
};

/// logit(YES) - logit(NO) after the pointwise prompt.
class ModelReranker : public PairScorer {
 public:
  explicit ModelReranker(const Model& model) : session_(model) {}

  double score(const MultimodalExample& query, const MultimodalExample& candidate) override {
    Tensor logits = session_.next_token_logits(pointwise_prompt(query, candidate, session_.config()));
    return logits[TokenVocabulary::kYes] - logits[TokenVocabulary::kNo];
  }

 private:
  InferenceSession session_;
};

/// Scores +1 for judged-relevant pairs and -1 otherwise.
class QrelsScorer : public PairScorer {
 public:
  explicit QrelsScorer(const Qrels& qrels) : qrels_(qrels) {}

  double score(const MultimodalExample& query, const MultimodalExample& candidate) override {
    auto q = qrels_.find(query.id);
    if (q == qrels_.end()) return -1.0;
    auto c = q->second.find(candidate.id);
    return c != q->second.end() && c->second > 0 ? 1.0 : -1.0;
  }

 private:
  const Qrels& qrels_;
};

/// Reorders the first `depth` entries of an embed-only result by pointwise
/// score. Entries past `depth` keep their embedder order and scores. Equal
/// scores keep embedder order. A candidate whose prompt overflows keeps its
/// embedder score; its id is appended to `failures` when given.
inline RankedResult rerank_topk(const MultimodalExample& query, const RankedResult& result, const ExampleSet& corpus,
                                PairScorer& scorer, std::size_t depth = kDefaultRerankDepth,
                                std::vector<std::string>* failures = nullptr) {
  if (result.stage != RankStage::embed_only) throw StateError("rerank_topk expects an embed-only result");
  if (depth > result.size()) {
    throw ParameterError("rerank depth " + std::to_string(depth) + " exceeds result length " +
                         std::to_string(result.size()));
  }
  std::vector<double> scores(depth);
  for (std::size_t i = 0; i < depth; ++i) {
    try {
      scores[i] = scorer.score(query, corpus.at(result.ids[i]));
    } catch (const LengthError&) {
      scores[i] = result.scores[i];
      if (failures) failures->push_back(result.ids[i]);
    }
  }
  std::vector<std::size_t> order(depth);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  RankedResult out = result;
  out.stage = RankStage::reranked;
  for (std::size_t i = 0; i < depth; ++i) {
    out.ids[i] = result.ids[order[i]];
    out.scores[i] = scores[order[i]];
  }
  return out;
}

}  // namespace vtc
