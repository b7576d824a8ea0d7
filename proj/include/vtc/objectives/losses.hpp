#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "vtc/errors.hpp"
#include "vtc/model/example.hpp"
#include "vtc/model/transformer.hpp"
#include "vtc/numerics/tape.hpp"

namespace vtc {

/// Default InfoNCE temperature.
inline constexpr double kDefaultTemperature = 0.03;
/// Pointwise and listwise reranker losses are summed with unit weights.
inline constexpr double kPointwiseWeight = 1.0;
inline constexpr double kListwiseWeight = 1.0;
/// Tolerance used when checking that embeddings are unit-norm.
inline constexpr double kUnitNormTolerance = 1e-6;

/// Queries with parallel positives, optional per-query hard negatives and a
/// temperature. With in_batch_negatives, query i also contrasts against
/// every positive j != i.
struct ContrastiveBatch {
  std::vector<Embedding> queries;
  std::vector<Embedding> positives;
  std::vector<std::vector<Embedding>> extra_negatives;
  double temperature = kDefaultTemperature;
  bool in_batch_negatives = true;
};

/// Dense form of a contrastive batch: row-stacked embeddings plus, per
/// query, indices into the negative matrix. Positives that share a key with
/// query i's own positive are never used as its in-batch negatives.
struct InfoNceInputs {
  Tensor queries;    // [B x D]
  Tensor positives;  // [B x D]
  Tensor negatives;  // [M x D], M may be 0
  std::vector<std::vector<std::size_t>> negative_index;
  std::vector<std::string> positive_keys;  // optional, size B when present
  double temperature = kDefaultTemperature;
  bool in_batch_negatives = true;
};

struct InfoNceResult {
  double loss = 0.0;
  Tensor grad_queries, grad_positives, grad_negatives;
};

namespace detail {

inline void check_unit_rows(const Tensor& m, const char* what) {
  for (std::size_t r = 0; r < m.rows(); ++r) {
    const double n = l2_norm(m.row(r));
    if (std::abs(n - 1.0) > kUnitNormTolerance) {
      throw ContractError(std::string(what) + " row " + std::to_string(r) + " has norm " + std::to_string(n) +
                          ", expected a unit-norm embedding");
    }
  }
}

}  // namespace detail

/// Mean over queries of
///   -log( e^{q.p/t} / (e^{q.p/t} + sum_neg e^{q.n/t}) )
/// with gradients for every input row.
inline InfoNceResult info_nce_terms(const InfoNceInputs& in) {
  if (!(in.temperature > 0.0)) throw ParameterError("InfoNCE temperature must be positive");
  const std::size_t b = in.queries.rows();
  if (b == 0 || in.queries.size() == 0) throw ParameterError("InfoNCE needs at least one query");
  if (in.positives.rows() != b || in.positives.cols() != in.queries.cols()) {
    throw DimensionError("queries and positives must have matching shapes");
  }
  if (in.negative_index.size() != b) throw DimensionError("one negative list per query required");
  if (!in.positive_keys.empty() && in.positive_keys.size() != b) {
    throw DimensionError("positive_keys must be empty or one per query");
  }
  detail::check_unit_rows(in.queries, "query");
  detail::check_unit_rows(in.positives, "positive");
  if (in.negatives.size() > 0) detail::check_unit_rows(in.negatives, "negative");
  const std::size_t d = in.queries.cols();
  const double inv_t = 1.0 / in.temperature;

  InfoNceResult res;
  res.grad_queries = Tensor({b, d});
  res.grad_positives = Tensor({b, d});
  res.grad_negatives = Tensor(in.negatives.size() ? Shape{in.negatives.rows(), d} : Shape{0, d});
  const double inv_b = 1.0 / static_cast<double>(b);

  struct Term {
    const double* row;
    double* grad;
    double logit;
  };
  std::vector<Term> terms;
  for (std::size_t i = 0; i < b; ++i) {
    auto q = in.queries.row(i);
    terms.clear();
    auto add = [&](std::span<const double> row, std::span<double> grad) {
      terms.push_back({row.data(), grad.data(), dot(q, row) * inv_t});
    };
    add(in.positives.row(i), res.grad_positives.row(i));
    if (in.in_batch_negatives) {
      for (std::size_t j = 0; j < b; ++j) {
        if (j == i) continue;
        if (!in.positive_keys.empty() && in.positive_keys[j] == in.positive_keys[i]) continue;
        add(in.positives.row(j), res.grad_positives.row(j));
      }
    }
    for (std::size_t n : in.negative_index[i]) {
      if (n >= in.negatives.rows() || in.negatives.size() == 0) throw DimensionError("negative index out of range");
      add(in.negatives.row(n), res.grad_negatives.row(n));
    }
    double mx = -std::numeric_limits<double>::infinity();
    for (const auto& t : terms) mx = std::max(mx, t.logit);
    double z = 0.0;
    for (const auto& t : terms) z += std::exp(t.logit - mx);
    const double log_z = mx + std::log(z);
    res.loss += (log_z - terms.front().logit) * inv_b;
    auto gq = res.grad_queries.row(i);
    for (std::size_t k = 0; k < terms.size(); ++k) {
      const double w = std::exp(terms[k].logit - log_z) - (k == 0 ? 1.0 : 0.0);
      const double c = w * inv_t * inv_b;
      if (c == 0.0) continue;
      for (std::size_t e = 0; e < d; ++e) {
        gq[e] += c * terms[k].row[e];
        terms[k].grad[e] += c * q[e];
      }
    }
  }
  return res;
}

/// Row-stacks a contrastive batch.
inline InfoNceInputs to_inputs(const ContrastiveBatch& batch) {
  if (batch.queries.size() != batch.positives.size()) {
    throw DimensionError("contrastive batch has " + std::to_string(batch.queries.size()) + " queries but " +
                         std::to_string(batch.positives.size()) + " positives");
  }
  if (batch.queries.empty()) throw ParameterError("InfoNCE needs at least one query");
  if (!batch.extra_negatives.empty() && batch.extra_negatives.size() != batch.queries.size()) {
    throw DimensionError("extra_negatives must be empty or one list per query");
  }
  const std::size_t b = batch.queries.size(), d = batch.queries.front().dim();
  auto stack = [d](const std::vector<const Embedding*>& rows) {
    Tensor m({rows.size(), d});
    for (std::size_t r = 0; r < rows.size(); ++r) {
      if (rows[r]->dim() != d) throw DimensionError("embedding dimensions differ within a batch");
      std::copy(rows[r]->vector.data().begin(), rows[r]->vector.data().end(), m.row(r).begin());
    }
    return m;
  };
  std::vector<const Embedding*> qs, ps, ns;
  for (const auto& e : batch.queries) qs.push_back(&e);
  for (const auto& e : batch.positives) ps.push_back(&e);
  InfoNceInputs in;
  in.negative_index.resize(b);
  for (std::size_t i = 0; i < batch.extra_negatives.size(); ++i) {
    for (const auto& e : batch.extra_negatives[i]) {
      in.negative_index[i].push_back(ns.size());
      ns.push_back(&e);
    }
  }
  in.queries = stack(qs);
  in.positives = stack(ps);
  in.negatives = stack(ns);
  in.temperature = batch.temperature;
  in.in_batch_negatives = batch.in_batch_negatives;
  return in;
}

inline double info_nce(const ContrastiveBatch& batch) { return info_nce_terms(to_inputs(batch)).loss; }

namespace ad {

/// InfoNCE on the tape over row-stacked query/positive/negative embeddings.
inline Var info_nce(Var queries, Var positives, std::optional<Var> negatives,
                    std::vector<std::vector<std::size_t>> negative_index, std::vector<std::string> positive_keys,
                    double temperature, bool in_batch_negatives) {
  Tape& tape = *queries.tape;
  InfoNceInputs in;
  in.queries = queries.value();
  in.positives = positives.value();
  in.negatives = negatives ? negatives->value() : Tensor({0, in.queries.cols()});
  in.negative_index = std::move(negative_index);
  in.positive_keys = std::move(positive_keys);
  in.temperature = temperature;
  in.in_batch_negatives = in_batch_negatives;
  InfoNceResult r = info_nce_terms(in);
  bool rg = tape.requires_grad(queries) || tape.requires_grad(positives) || (negatives && tape.requires_grad(*negatives));
  const std::size_t self = tape.size();
  return tape.record(Tensor({1}, r.loss), rg, [queries, positives, negatives, self, r = std::move(r)](Tape& t) {
    const double go = t.grad(self)[0];
    auto acc = [&](Var v, const Tensor& g) {
      if (!t.requires_grad(v)) return;
      auto dst = t.grad(v);
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += go * g[i];
    };
    acc(queries, r.grad_queries);
    acc(positives, r.grad_positives);
    if (negatives) acc(*negatives, r.grad_negatives);
  });
}

}  // namespace ad

/// Next-token targets for a sequence whose response starts at token index
/// `response_start`: row t predicts token t+1, and only rows predicting a
/// response token are unmasked.
struct NtpTargets {
  std::vector<int> targets;
  std::vector<bool> mask;
};

inline NtpTargets ntp_targets(const TokenSequence& seq, std::size_t response_start) {
  if (response_start == 0 || response_start > seq.size()) {
    throw ParameterError("response must start after at least one input token");
  }
  NtpTargets t;
  t.targets.assign(seq.size(), TokenVocabulary::kPad);
  t.mask.assign(seq.size(), false);
  for (std::size_t i = 0; i + 1 < seq.size(); ++i) {
    t.targets[i] = seq.tokens[i + 1];
    t.mask[i] = i + 1 >= response_start;
  }
  return t;
}

/// Mean negative log-likelihood of masked targets under row-wise softmax.
inline double ntp_loss(const Tensor& logits, const std::vector<int>& targets, const std::vector<bool>& mask) {
  Tape tape;
  return ad::cross_entropy(tape.constant(logits), targets, mask).value()[0];
}

enum class RelevanceLabel { positive, negative };

inline int relevance_token(RelevanceLabel label) {
  return label == RelevanceLabel::positive ? TokenVocabulary::kYes : TokenVocabulary::kNo;
}

/// Allowed number of hard negatives in a listwise training instance.
inline constexpr std::size_t kListwiseMinNegatives = 2;
inline constexpr std::size_t kListwiseMaxNegatives = 5;

inline void check_listwise(std::size_t list_size, std::size_t position, bool relaxed) {
  if (list_size < 2) throw ParameterError("listwise instance needs at least two candidates");
  const std::size_t m = list_size - 1;
  if (!relaxed && (m < kListwiseMinNegatives || m > kListwiseMaxNegatives)) {
    throw ParameterError("listwise training uses M in [2, 5] negatives, got M = " + std::to_string(m));
  }
  if (list_size > 9) throw ParameterError("listwise lists are limited to 9 candidates");
  if (position < 1 || position > list_size) {
    throw ParameterError("positive position " + std::to_string(position) + " outside 1.." + std::to_string(list_size));
  }
}

namespace ad {

/// Cross-entropy of the YES/NO answer after a pointwise prompt.
inline Var pointwise_loss(const BoundWeights& w, const TokenSequence& prompt, RelevanceLabel label,
                          const ModelConfig& cfg) {
  return cross_entropy(forward::last_logits(w, prompt, cfg), {relevance_token(label)}, {true});
}

/// Cross-entropy of the digit naming the positive's 1-based position.
inline Var listwise_loss(const BoundWeights& w, const TokenSequence& prompt, std::size_t list_size,
                         std::size_t position, const ModelConfig& cfg, bool relaxed = false) {
  check_listwise(list_size, position, relaxed);
  return cross_entropy(forward::last_logits(w, prompt, cfg), {TokenVocabulary::digit(static_cast<int>(position))},
                       {true});
}

inline Var total_rerank_loss(Var point, Var list) {
  return sum_scalars({scale(point, kPointwiseWeight), scale(list, kListwiseWeight)});
}

/// Mean NTP loss of a response-bearing sequence.
inline Var ntp_loss(const BoundWeights& w, const TokenSequence& seq, std::size_t response_start,
                    const ModelConfig& cfg) {
  const NtpTargets t = ntp_targets(seq, response_start);
  return cross_entropy(forward::all_logits(w, seq, cfg), t.targets, t.mask);
}

}  // namespace ad

inline double pointwise_loss(const Model& model, const MultimodalExample& query, const MultimodalExample& candidate,
                             RelevanceLabel label) {
  Tape tape;
  BoundWeights w = bind(tape, model.weights(), false);
  return ad::pointwise_loss(w, pointwise_prompt(query, candidate, model.config()), label, model.config()).value()[0];
}

/// `candidates` is the ordered list; `position` is the 1-based index of the
/// positive within it.
inline double listwise_loss(const Model& model, const MultimodalExample& query,
                            const std::vector<const MultimodalExample*>& candidates, std::size_t position,
                            bool relaxed = false) {
  check_listwise(candidates.size(), position, relaxed);
  Tape tape;
  BoundWeights w = bind(tape, model.weights(), false);
  return ad::listwise_loss(w, listwise_prompt(query, candidates, model.config()), candidates.size(), position,
                           model.config(), relaxed)
      .value()[0];
}

inline double total_rerank_loss(double point, double list) {
  if (!std::isfinite(point) || !std::isfinite(list)) throw ParameterError("rerank losses must be finite");
  return kPointwiseWeight * point + kListwiseWeight * list;
}

}  // namespace vtc
