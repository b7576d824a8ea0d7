#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "vtc/errors.hpp"
#include "vtc/retrieval/index.hpp"

namespace vtc {

/// query id -> candidate id -> graded relevance (> 0 means relevant).
using Qrels = std::map<std::string, std::map<std::string, int>>;

namespace detail {

inline const std::map<std::string, int>& judgments_for(const Qrels& qrels, const std::string& query_id) {
  auto it = qrels.find(query_id);
  if (it == qrels.end()) throw EvaluationError("query '" + query_id + "' has no relevance judgments");
  const bool any = std::any_of(it->second.begin(), it->second.end(), [](const auto& kv) { return kv.second > 0; });
  if (!any) throw EvaluationError("query '" + query_id + "' has no relevant candidate");
  return it->second;
}

inline int relevance_of(const std::map<std::string, int>& judged, const std::string& id) {
  auto it = judged.find(id);
  return it == judged.end() ? 0 : std::max(it->second, 0);
}

inline double mean_over(const std::vector<RankedResult>& results, const std::function<double(const RankedResult&)>& f) {
  if (results.empty()) throw EvaluationError("no results to evaluate");
  double sum = 0.0;
  for (const auto& r : results) sum += f(r);
  return sum / static_cast<double>(results.size());
}

}  // namespace detail

inline double precision_at_1(const RankedResult& r, const Qrels& qrels) {
  const auto& judged = detail::judgments_for(qrels, r.query_id);
  return !r.ids.empty() && detail::relevance_of(judged, r.ids.front()) > 0 ? 1.0 : 0.0;
}

/// DCG with gain 2^rel - 1 and discount log2(rank + 1), over the ideal DCG.
inline double ndcg_at(const RankedResult& r, const Qrels& qrels, std::size_t cutoff) {
  const auto& judged = detail::judgments_for(qrels, r.query_id);
  auto gain = [](int rel) { return std::exp2(static_cast<double>(rel)) - 1.0; };
  double dcg = 0.0;
  for (std::size_t i = 0; i < std::min(cutoff, r.ids.size()); ++i) {
    dcg += gain(detail::relevance_of(judged, r.ids[i])) / std::log2(static_cast<double>(i) + 2.0);
  }
  std::vector<int> ideal;
  for (const auto& [id, rel] : judged) {
    if (rel > 0) ideal.push_back(rel);
  }
  std::sort(ideal.rbegin(), ideal.rend());
  double idcg = 0.0;
  for (std::size_t i = 0; i < std::min(cutoff, ideal.size()); ++i) {
    idcg += gain(ideal[i]) / std::log2(static_cast<double>(i) + 2.0);
  }
  return dcg / idcg;
}

/// Fraction of the query's relevant candidates found in the first k.
inline double recall_at(const RankedResult& r, const Qrels& qrels, std::size_t k) {
  const auto& judged = detail::judgments_for(qrels, r.query_id);
  std::size_t relevant = 0, found = 0;
  for (const auto& [id, rel] : judged) relevant += rel > 0;
  for (std::size_t i = 0; i < std::min(k, r.ids.size()); ++i) found += detail::relevance_of(judged, r.ids[i]) > 0;
  return static_cast<double>(found) / static_cast<double>(relevant);
}

inline double precision_at_1(const std::vector<RankedResult>& results, const Qrels& qrels) {
  return detail::mean_over(results, [&](const RankedResult& r) { return precision_at_1(r, qrels); });
}

inline double ndcg_at_5(const std::vector<RankedResult>& results, const Qrels& qrels) {
  return detail::mean_over(results, [&](const RankedResult& r) { return ndcg_at(r, qrels, 5); });
}

inline double recall_at_k(const std::vector<RankedResult>& results, const Qrels& qrels, std::size_t k) {
  return detail::mean_over(results, [&](const RankedResult& r) { return recall_at(r, qrels, k); });
}

}  // namespace vtc
