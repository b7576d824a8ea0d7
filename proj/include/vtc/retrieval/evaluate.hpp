#pragma once

#include <string>
#include <vector>

#include "vtc/model/example_set.hpp"
#include "vtc/retrieval/index.hpp"
#include "vtc/retrieval/metrics.hpp"
#include "vtc/retrieval/rerank.hpp"

namespace vtc {

struct RetrievalMetrics {
  double precision_at_1 = 0.0;
  double ndcg_at_5 = 0.0;
  std::size_t queries = 0;
  friend bool operator==(const RetrievalMetrics&, const RetrievalMetrics&) = default;
};

/// Embed-only top-`k` results for every query, in query order.
inline std::vector<RankedResult> retrieve_all(const Model& model, const ExampleSet& queries,
                                              const CandidateIndex& index, std::size_t k) {
  InferenceSession session(model);
  std::vector<RankedResult> out;
  out.reserve(queries.size());
  for (const auto& q : queries) out.push_back(search(index, session.embed(q).vector.data(), k, q.id));
  return out;
}

/// Second stage: reranks the first `depth` entries of every result.
inline std::vector<RankedResult> rerank_all(const std::vector<RankedResult>& results, const ExampleSet& queries,
                                            const ExampleSet& corpus, PairScorer& scorer,
                                            std::size_t depth = kDefaultRerankDepth,
                                            std::vector<std::string>* failures = nullptr) {
  std::vector<RankedResult> out;
  out.reserve(results.size());
  for (const auto& r : results) out.push_back(rerank_topk(queries.at(r.query_id), r, corpus, scorer, depth, failures));
  return out;
}

inline RetrievalMetrics score_results(const std::vector<RankedResult>& results, const Qrels& qrels) {
  return {precision_at_1(results, qrels), ndcg_at_5(results, qrels), results.size()};
}

}  // namespace vtc
