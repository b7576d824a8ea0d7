#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "vtc/errors.hpp"
#include "vtc/harness/templates.hpp"
#include "vtc/model/transformer.hpp"
#include "vtc/numerics/random.hpp"

namespace vtc {

enum class Verdict { relevant, irrelevant, tie };

inline const char* verdict_name(Verdict v) {
  switch (v) {
    case Verdict::relevant: return "relevant";
    case Verdict::irrelevant: return "irrelevant";
    case Verdict::tie: return "tie";
  }
  return "?";
}

inline Verdict parse_verdict(const std::string& s) {
  if (s == "relevant") return Verdict::relevant;
  if (s == "irrelevant") return Verdict::irrelevant;
  if (s == "tie") return Verdict::tie;
  throw FormatError("unknown verdict '" + s + "'");
}

inline Verdict verdict_from_logits(double logit_yes, double logit_no) {
  if (logit_yes > logit_no) return Verdict::relevant;
  if (logit_no > logit_yes) return Verdict::irrelevant;
  return Verdict::tie;
}

struct JudgeVerdict {
  std::string query_id;
  std::string candidate_id;
  double logit_yes = 0.0;
  double logit_no = 0.0;
  Verdict verdict = Verdict::tie;
  friend bool operator==(const JudgeVerdict&, const JudgeVerdict&) = default;
};

struct YesNoLogits {
  double yes = 0.0;
  double no = 0.0;
};

/// Produces YES/NO logits for a (query, candidate) pair. Throwing a vtc::Error
/// marks the pair as a judge failure.
class Judge {
 public:
  virtual ~Judge() = default;
  virtual YesNoLogits logits(const MultimodalExample& query, const MultimodalExample& candidate) = 0;
};

inline JudgeVerdict judge_pair(const MultimodalExample& query, const MultimodalExample& candidate, Judge& judge) {
  const YesNoLogits l = judge.logits(query, candidate);
  return {query.id, candidate.id, l.yes, l.no, verdict_from_logits(l.yes, l.no)};
}

/// Answers from latent class labels: relevant iff both ids carry the same
/// non-negative class. With probability `noise` per pair the answer flips.
class ClassOracleJudge : public Judge {
 public:
  ClassOracleJudge(std::unordered_map<std::string, int> labels, double noise = 0.0, std::uint64_t seed = 0)
      : labels_(std::move(labels)), noise_(noise), seed_(seed) {
    if (noise < 0.0 || noise >= 0.5) throw ParameterError("judge noise must lie in [0, 0.5)");
  }

  YesNoLogits logits(const MultimodalExample& query, const MultimodalExample& candidate) override {
    const int q = label(query.id), c = label(candidate.id);
    bool relevant = q >= 0 && q == c;
    if (noise_ > 0.0) {
      std::mt19937_64 rng(derive_seed(derive_seed(seed_, label_hash(query.id)), label_hash(candidate.id)));
      if (uniform_unit(rng) < noise_) relevant = !relevant;
    }
    return relevant ? YesNoLogits{1.0, 0.0} : YesNoLogits{0.0, 1.0};
  }

 private:
  int label(const std::string& id) const {
    auto it = labels_.find(id);
    if (it == labels_.end()) throw ContractError("judge has no class label for '" + id + "'");
    return it->second;
  }

  std::unordered_map<std::string, int> labels_;
  double noise_;
  std::uint64_t seed_;
};

/// Rule-based arm: every retrieved candidate is a negative.
class AlwaysIrrelevantJudge : public Judge {
 public:
  YesNoLogits logits(const MultimodalExample&, const MultimodalExample&) override { return {0.0, 1.0}; }
};

/// Reads YES/NO next-token logits of a model after the judgment prompt.
class ModelJudge : public Judge {
 public:
  ModelJudge(const Model& model, std::vector<int> instruction) : session_(model), instruction_(std::move(instruction)) {}

  ModelJudge(const Model& model, const TemplateEntry& entry)
      : ModelJudge(model, TokenVocabulary::tokenize(entry.judgment_instruction, static_cast<int>(model.config().vocab_size))) {}

  YesNoLogits logits(const MultimodalExample& query, const MultimodalExample& candidate) override {
    Tensor l = session_.next_token_logits(judge_prompt(query, candidate, instruction_, session_.config()));
    return {l[TokenVocabulary::kYes], l[TokenVocabulary::kNo]};
  }

 private:
  InferenceSession session_;
  std::vector<int> instruction_;
};

/// Judges one pair with `model` under the judgment instruction of `template_id`.
inline JudgeVerdict judge_pair(const MultimodalExample& query, const MultimodalExample& candidate, const Model& model,
                               const std::string& template_id,
                               const TemplateRegistry& registry = TemplateRegistry::builtin()) {
  ModelJudge judge(model, registry.at(template_id));
  return judge_pair(query, candidate, judge);
}

}  // namespace vtc
