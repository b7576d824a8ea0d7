#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "vtc/errors.hpp"
#include "vtc/harness/templates.hpp"
#include "vtc/model/example_set.hpp"
#include "vtc/numerics/random.hpp"
#include "vtc/retrieval/metrics.hpp"

namespace vtc {

/// Knobs of one synthetic retrieval task.
///
/// Every class c owns a grid prototype P_c and a token motif. The corpus holds
/// `members_per_class` relevant candidates per class; the remaining slots are
/// decoys attached to a host class h, whose grids mix rho * P_h with a
/// host-specific decoy signature and whose texts swap one motif token for a
/// marker. Decoys are relevant to no query.
struct SyntheticTaskSpec {
  TaskClass task = TaskClass::IT2I;
  std::size_t num_classes = 10;
  std::size_t corpus_size = 2000;
  std::size_t members_per_class = 40;
  std::size_t queries_per_class = 20;       // training queries
  std::size_t eval_queries_per_class = 10;  // held out, scored against qrels
  double noise_rate = 0.0;                  // fraction of training pairings pointed at a wrong class
  double member_noise = 0.5;
  double decoy_similarity = 0.8;
  std::size_t motif_length = 3;
  std::uint64_t seed = 0;

  std::size_t decoy_count() const { return corpus_size - num_classes * members_per_class; }

  void validate(const ModelConfig& cfg) const {
    if (num_classes == 0 || members_per_class == 0) throw ConfigError("need at least one class and one member");
    if (corpus_size < num_classes) throw ConfigError("corpus size must be at least the number of classes");
    if (num_classes * members_per_class > corpus_size) {
      throw ConfigError("corpus size " + std::to_string(corpus_size) + " cannot hold " +
                        std::to_string(num_classes) + " x " + std::to_string(members_per_class) + " members");
    }
    if (!(noise_rate >= 0.0 && noise_rate < 0.5)) throw ConfigError("noise rate must lie in [0, 0.5)");
    if (noise_rate > 0.0 && num_classes < 2) throw ConfigError("label noise needs at least two classes");
    if (!(decoy_similarity >= 0.0 && decoy_similarity <= 1.0)) throw ConfigError("decoy similarity must lie in [0, 1]");
    if (!(member_noise >= 0.0)) throw ConfigError("member noise must be non-negative");
    if (motif_length == 0) throw ConfigError("motif length must be positive");
    if (first_filler_token() >= static_cast<int>(cfg.vocab_size)) {
      throw ConfigError("vocabulary of " + std::to_string(cfg.vocab_size) + " cannot hold " +
                        std::to_string(num_classes) + " motifs of length " + std::to_string(motif_length));
    }
  }

  int motif_token(std::size_t cls, std::size_t j) const {
    return TokenVocabulary::kFirstDataToken + static_cast<int>(cls * motif_length + j);
  }
  int marker_token(std::size_t host) const {
    return TokenVocabulary::kFirstDataToken + static_cast<int>(num_classes * motif_length + host);
  }
  int first_filler_token() const { return marker_token(num_classes); }

  friend bool operator==(const SyntheticTaskSpec&, const SyntheticTaskSpec&) = default;
};

struct SyntheticDataset {
  TaskClass task = TaskClass::IT2I;
  ExampleSet candidates;
  ExampleSet train_queries;
  ExampleSet eval_queries;
  std::unordered_map<std::string, int> labels;        // every id -> class, -1 for decoys
  std::map<std::string, std::string> train_positive;  // training query -> ground-truth candidate
  std::map<std::string, std::vector<int>> captions;   // response tokens for the instruction corpus
  Qrels qrels;                                        // eval queries only

  /// (input, response) pairs for generative restoration: every candidate
  /// and training query paired with its caption.
  std::vector<InstructionExample> instruction_corpus() const {
    std::vector<InstructionExample> out;
    for (const ExampleSet* set : {&candidates, &train_queries}) {
      for (const auto& ex : *set) out.push_back({ex, captions.at(ex.id)});
    }
    return out;
  }
};

namespace synthetic_detail {

inline Tensor gaussian_grid(const ModelConfig& cfg, std::mt19937_64& rng) {
  Tensor t({cfg.grid_height, cfg.grid_width, cfg.vision_channels});
  for (double& x : t.data()) x = standard_normal(rng);
  return t;
}

inline std::vector<int> shuffled(std::vector<int> v, std::mt19937_64& rng) {
  shuffle_in_place(v, rng);
  return v;
}

}  // namespace synthetic_detail

/// Builds the task deterministically from `spec.seed`.
inline SyntheticDataset generate_corpus(const SyntheticTaskSpec& spec, const ModelConfig& cfg) {
  using namespace synthetic_detail;
  spec.validate(cfg);
  const SeedTree tree(spec.seed);
  const std::size_t k = spec.num_classes;
  const TemplateEntry& tmpl = TemplateRegistry::builtin().at(task_class_name(spec.task));
  const int vocab = static_cast<int>(cfg.vocab_size);
  const std::vector<int> query_instr = TokenVocabulary::tokenize(tmpl.query_instruction, vocab);
  const std::vector<int> target_instr = TokenVocabulary::tokenize(tmpl.target_instruction, vocab);
  const Modality qm = query_modality(spec.task), cm = candidate_modality(spec.task);
  const int filler_lo = spec.first_filler_token();
  const auto filler_span = static_cast<std::uint64_t>(vocab - filler_lo);

  std::vector<Tensor> prototype, signature;
  std::vector<std::vector<int>> motif(k);
  for (std::size_t c = 0; c < k; ++c) {
    auto r1 = tree.child("prototype").child(c).engine();
    prototype.push_back(gaussian_grid(cfg, r1));
    auto r2 = tree.child("decoy-signature").child(c).engine();
    signature.push_back(gaussian_grid(cfg, r2));
    for (std::size_t j = 0; j < spec.motif_length; ++j) motif[c].push_back(spec.motif_token(c, j));
  }

  const double rho = spec.decoy_similarity;
  const double mix = std::sqrt(1.0 - rho * rho);
  auto grid = [&](std::size_t cls, bool decoy, std::mt19937_64& rng) {
    Tensor g = gaussian_grid(cfg, rng);
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double base = decoy ? rho * prototype[cls][i] + mix * signature[cls][i] : prototype[cls][i];
      g[i] = base + spec.member_noise * g[i];
    }
    return Grid2D(std::move(g));
  };
  auto text = [&](std::size_t cls, bool decoy, std::mt19937_64& rng) {
    std::vector<int> t = motif[cls];
    if (decoy) t[uniform_index(rng, t.size())] = spec.marker_token(cls);
    t.push_back(filler_lo + static_cast<int>(uniform_index(rng, filler_span)));
    return shuffled(std::move(t), rng);
  };
  auto make = [&](std::string id, std::size_t cls, bool decoy, Role role, std::mt19937_64& rng) {
    const Modality m = role == Role::query ? qm : cm;
    MultimodalExample ex;
    ex.id = std::move(id);
    ex.role = role;
    ex.instruction = role == Role::query ? query_instr : target_instr;
    if (m.image) ex.visual = grid(cls, decoy, rng);
    if (m.text) ex.text = text(cls, decoy, rng);
    return ex;
  };

  SyntheticDataset ds;
  ds.task = spec.task;

  // Candidate slots: (class or host, is_decoy), in a seeded order.
  struct Slot {
    std::size_t cls;
    bool decoy;
    std::size_t ordinal;
  };
  std::vector<Slot> slots;
  for (std::size_t c = 0; c < k; ++c)
    for (std::size_t j = 0; j < spec.members_per_class; ++j) slots.push_back({c, false, slots.size()});
  for (std::size_t d = 0; d < spec.decoy_count(); ++d) slots.push_back({d % k, true, slots.size()});
  auto order_rng = tree.child("order").engine();
  shuffle_in_place(slots, order_rng);

  std::vector<std::vector<std::string>> members(k);
  char buf[32];
  for (std::size_t i = 0; i < slots.size(); ++i) {
    const Slot& s = slots[i];
    std::snprintf(buf, sizeof buf, "c%05zu", i);
    auto rng = tree.child("candidate").child(s.ordinal).engine();
    ds.candidates.add(make(buf, s.cls, s.decoy, Role::candidate, rng));
    ds.labels[buf] = s.decoy ? -1 : static_cast<int>(s.cls);
    std::vector<int> caption = motif[s.cls];
    if (s.decoy) caption.insert(caption.begin(), spec.marker_token(s.cls));
    ds.captions[buf] = std::move(caption);
    if (!s.decoy) members[s.cls].push_back(buf);
  }

  auto pos_rng = tree.child("positives").engine();
  std::vector<std::string> train_ids;
  for (std::size_t c = 0; c < k; ++c) {
    for (std::size_t j = 0; j < spec.queries_per_class; ++j) {
      std::snprintf(buf, sizeof buf, "tq%05zu", c * spec.queries_per_class + j);
      auto rng = tree.child("train-query").child(c * spec.queries_per_class + j).engine();
      ds.train_queries.add(make(buf, c, false, Role::query, rng));
      ds.labels[buf] = static_cast<int>(c);
      ds.captions[buf] = motif[c];
      ds.train_positive[buf] = members[c][uniform_index(pos_rng, members[c].size())];
      train_ids.push_back(buf);
    }
    for (std::size_t j = 0; j < spec.eval_queries_per_class; ++j) {
      std::snprintf(buf, sizeof buf, "eq%05zu", c * spec.eval_queries_per_class + j);
      auto rng = tree.child("eval-query").child(c * spec.eval_queries_per_class + j).engine();
      ds.eval_queries.add(make(buf, c, false, Role::query, rng));
      ds.labels[buf] = static_cast<int>(c);
      ds.captions[buf] = motif[c];
      for (const auto& m : members[c]) ds.qrels[buf][m] = 1;
    }
  }

  const auto flips = static_cast<std::size_t>(std::llround(spec.noise_rate * static_cast<double>(train_ids.size())));
  auto noise_rng = tree.child("noise").engine();
  for (std::size_t i : sample_without_replacement(noise_rng, train_ids.size(), flips)) {
    const auto c = static_cast<std::size_t>(ds.labels.at(train_ids[i]));
    const std::size_t other = (c + 1 + uniform_index(noise_rng, k - 1)) % k;
    ds.train_positive[train_ids[i]] = members[other][uniform_index(noise_rng, members[other].size())];
  }
  return ds;
}

}  // namespace vtc
