#pragma once

#include <algorithm>
#include <chrono>
#include <initializer_list>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "vtc/curation/curate.hpp"
#include "vtc/curation/mining.hpp"
#include "vtc/errors.hpp"
#include "vtc/model/checkpoint.hpp"
#include "vtc/model/example_set.hpp"
#include "vtc/numerics/random.hpp"
#include "vtc/objectives/losses.hpp"
#include "vtc/retrieval/index.hpp"
#include "vtc/trainer/optimizer.hpp"
#include "vtc/trainer/plan.hpp"

namespace vtc {

struct TrainingPair {
  std::string query_id;
  std::string positive_id;
};

/// Training pairs plus the example sets their ids point into.
struct RetrievalData {
  const ExampleSet* queries = nullptr;
  const ExampleSet* corpus = nullptr;
  std::vector<TrainingPair> pairs;

  const MultimodalExample& query(const std::string& id) const { return queries->at(id); }
  const MultimodalExample& candidate(const std::string& id) const { return corpus->at(id); }
};

namespace trainer_detail {

/// Seeded epoch-wise batches: each epoch is a fresh permutation cut into
/// full batches; a short tail is dropped so no batch repeats an item.
class BatchSampler {
 public:
  BatchSampler(std::size_t n, std::size_t batch, SeedTree tree) : n_(n), batch_(std::min(batch, n)), tree_(tree) {
    if (n == 0) throw ParameterError("cannot sample batches from an empty training set");
  }

  std::vector<std::size_t> next() {
    if (pos_ + batch_ > order_.size()) {
      order_.resize(n_);
      std::iota(order_.begin(), order_.end(), 0);
      auto rng = tree_.child(epoch_++).engine();
      shuffle_in_place(order_, rng);
      pos_ = 0;
    }
    std::vector<std::size_t> out(order_.begin() + static_cast<std::ptrdiff_t>(pos_),
                                 order_.begin() + static_cast<std::ptrdiff_t>(pos_ + batch_));
    pos_ += batch_;
    return out;
  }

 private:
  std::size_t n_, batch_;
  SeedTree tree_;
  std::vector<std::size_t> order_;
  std::size_t pos_ = 0;
  std::uint64_t epoch_ = 0;
};

inline void require_stage(const Checkpoint& ckpt, std::initializer_list<TrainingStage> allowed, TrainingStage target) {
  for (TrainingStage s : allowed) {
    if (ckpt.stage == s) return;
  }
  std::string names;
  for (TrainingStage s : allowed) names += (names.empty() ? "" : " or ") + std::string(stage_name(s));
  throw StateError(std::string(stage_name(target)) + " training needs a " + names + " checkpoint, got " +
                   stage_name(ckpt.stage));
}

inline Var batch_mean(const std::vector<Var>& losses) {
  return ad::scale(ad::sum_scalars(losses), 1.0 / static_cast<double>(losses.size()));
}

/// Runs `steps` Adam updates. `micro_loss(w, step)` builds the loss of one
/// micro-batch on a fresh tape; it is called grad_accum times per step in
/// a fixed order and the gradients are averaged.
template <class MicroLoss>
TrainReport train_loop(const StagePlan& plan, TrainingStage stage, std::size_t steps, Checkpoint& ckpt,
                       MicroLoss&& micro_loss) {
  const auto start = std::chrono::steady_clock::now();
  TrainReport report;
  report.stage = stage;
  report.config_hash = config_hash(plan);
  Model& model = ckpt.model;
  AdamOptimizer opt(model.weights(), LrSchedule{plan.peak_lr, plan.warmup_fraction, std::max<std::size_t>(steps, 1)});
  double initial = 0.0;
  std::size_t above = 0;
  for (std::size_t step = 0; step < steps; ++step) {
    std::optional<ModelWeights> grads;
    double loss = 0.0;
    for (std::size_t micro = 0; micro < plan.grad_accum; ++micro) {
      Tape tape;
      BoundWeights w = bind(tape, model.weights());
      Var l = micro_loss(w, step);
      const double value = l.value()[0];
      if (!std::isfinite(value)) {
        throw TrainingError(std::string(stage_name(stage)) + ": non-finite loss at step " + std::to_string(step));
      }
      loss += value;
      tape.backward(l);
      ModelWeights g = collect_gradients(tape, w);
      if (grads) {
        accumulate(*grads, g);
      } else {
        grads = std::move(g);
      }
    }
    if (plan.grad_accum > 1) {
      scale_in_place(*grads, 1.0 / static_cast<double>(plan.grad_accum));
      loss /= static_cast<double>(plan.grad_accum);
    }
    report.learning_rates.push_back(opt.next_lr());
    opt.step(model.weights(), *grads);
    report.losses.push_back(loss);
    if (step == 0) initial = loss;
    above = loss > plan.divergence_factor * initial ? above + 1 : 0;
    if (above >= plan.divergence_patience) {
      throw TrainingError(std::string(stage_name(stage)) + " diverged: loss " + std::to_string(loss) +
                          " has exceeded " + std::to_string(plan.divergence_factor) + "x the initial loss " +
                          std::to_string(initial) + " for " + std::to_string(above) + " consecutive steps (step " +
                          std::to_string(step) + ")");
    }
  }
  ckpt.stage = stage;
  if (!report.losses.empty()) report.final_loss = report.losses.back();
  if (!plan.output_checkpoint.empty()) {
    save_checkpoint(plan.output_checkpoint, model, stage);
    report.checkpoint_path = plan.output_checkpoint;
  }
  report.wall_clock_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

/// InfoNCE over one batch. Each distinct hard negative is embedded once and
/// shared by every query that lists it.
inline Var contrastive_loss(const BoundWeights& w, const ModelConfig& cfg,
                            const std::vector<const MultimodalExample*>& queries,
                            const std::vector<const MultimodalExample*>& positives,
                            const std::vector<std::vector<const MultimodalExample*>>& negatives, double temperature) {
  std::vector<Var> q, p, n;
  std::vector<std::string> keys;
  std::map<std::string, std::size_t> row_of;
  std::vector<std::vector<std::size_t>> index(queries.size());
  for (std::size_t i = 0; i < queries.size(); ++i) {
    q.push_back(forward::embed(w, serialize(*queries[i], cfg), cfg));
    p.push_back(forward::embed(w, serialize(*positives[i], cfg), cfg));
    keys.push_back(positives[i]->id);
  }
  for (std::size_t i = 0; i < negatives.size(); ++i) {
    for (const auto* ex : negatives[i]) {
      auto [it, fresh] = row_of.emplace(ex->id, n.size());
      if (fresh) n.push_back(forward::embed(w, serialize(*ex, cfg), cfg));
      index[i].push_back(it->second);
    }
  }
  std::optional<Var> neg;
  if (!n.empty()) neg = ad::concat_rows(n);
  return ad::info_nce(ad::concat_rows(q), ad::concat_rows(p), neg, std::move(index), std::move(keys), temperature,
                      true);
}

}  // namespace trainer_detail

/// Stage 1: next-token restoration on (input, response) pairs.
inline TrainReport run_stage1(const StagePlan& plan, Checkpoint& ckpt, const std::vector<InstructionExample>& corpus) {
  trainer_detail::require_stage(ckpt, {TrainingStage::initial, TrainingStage::restore}, TrainingStage::restore);
  plan.validate();
  const std::size_t steps = plan.resolve_steps(corpus.size());
  const ModelConfig cfg = ckpt.model.config();
  trainer_detail::BatchSampler sampler(corpus.size(), plan.batch_size, SeedTree(plan.seed).child("restore"));
  return trainer_detail::train_loop(plan, TrainingStage::restore, steps, ckpt, [&](const BoundWeights& w, std::size_t) {
    std::vector<Var> losses;
    for (std::size_t i : sampler.next()) {
      const InstructionExample& ex = corpus[i];
      const std::size_t response_start = serialize(ex.input, cfg).size();
      losses.push_back(ad::ntp_loss(w, serialize_with_response(ex.input, ex.response, cfg), response_start, cfg));
    }
    return trainer_detail::batch_mean(losses);
  });
}

/// Stage 2, phase A: InfoNCE with in-batch negatives only.
inline TrainReport run_warmup(const StagePlan& plan, Checkpoint& ckpt, const RetrievalData& data) {
  trainer_detail::require_stage(ckpt, {TrainingStage::restore}, TrainingStage::warmup);
  plan.validate();
  const std::size_t steps = plan.resolve_steps(data.pairs.size());
  const ModelConfig cfg = ckpt.model.config();
  trainer_detail::BatchSampler sampler(data.pairs.size(), plan.batch_size, SeedTree(plan.seed).child("warmup"));
  return trainer_detail::train_loop(plan, TrainingStage::warmup, steps, ckpt, [&](const BoundWeights& w, std::size_t) {
    std::vector<const MultimodalExample*> q, p;
    for (std::size_t i : sampler.next()) {
      q.push_back(&data.query(data.pairs[i].query_id));
      p.push_back(&data.candidate(data.pairs[i].positive_id));
    }
    return trainer_detail::contrastive_loss(w, cfg, q, p, {}, plan.temperature);
  });
}

/// Ranks the corpus for every training query with `model` and samples the
/// plan's mined negatives from its rank window.
inline std::vector<MinedNegatives> mine_stage2_negatives(const Model& model, const RetrievalData& data,
                                                         const StagePlan& plan) {
  const CandidateIndex index = build_index(model, *data.corpus);
  InferenceSession session(model);
  const std::uint64_t seed = SeedTree(plan.seed).child("mining").root();
  std::vector<MinedNegatives> out;
  out.reserve(data.pairs.size());
  for (const auto& pair : data.pairs) {
    const Embedding e = session.embed(data.query(pair.query_id));
    out.push_back(mine_global_negatives(pair.query_id, e.vector.data(), index, pair.positive_id, plan.mined_negatives,
                                        plan.window, seed));
  }
  return out;
}

/// Stage 2, phase B: InfoNCE with each query's mined negatives plus
/// in-batch negatives.
inline TrainReport run_global_hnm(const StagePlan& plan, Checkpoint& ckpt, const RetrievalData& data,
                                  const std::vector<MinedNegatives>& mined) {
  trainer_detail::require_stage(ckpt, {TrainingStage::warmup}, TrainingStage::global_hnm);
  plan.validate();
  std::map<std::string, const MinedNegatives*> by_query;
  for (const auto& m : mined) by_query[m.query_id] = &m;
  for (const auto& pair : data.pairs) {
    if (!by_query.count(pair.query_id)) throw ContractError("no mined negatives for query '" + pair.query_id + "'");
  }
  const std::size_t steps = plan.resolve_steps(data.pairs.size());
  const ModelConfig cfg = ckpt.model.config();
  trainer_detail::BatchSampler sampler(data.pairs.size(), plan.batch_size, SeedTree(plan.seed).child("global_hnm"));
  return trainer_detail::train_loop(
      plan, TrainingStage::global_hnm, steps, ckpt, [&](const BoundWeights& w, std::size_t) {
        std::vector<const MultimodalExample*> q, p;
        std::vector<std::vector<const MultimodalExample*>> n;
        for (std::size_t i : sampler.next()) {
          const TrainingPair& pair = data.pairs[i];
          q.push_back(&data.query(pair.query_id));
          p.push_back(&data.candidate(pair.positive_id));
          n.emplace_back();
          for (const auto& id : by_query.at(pair.query_id)->negative_ids) n.back().push_back(&data.candidate(id));
        }
        return trainer_detail::contrastive_loss(w, cfg, q, p, n, plan.temperature);
      });
}

struct Stage2Result {
  TrainReport warmup;
  Model warmup_model;
  std::vector<MinedNegatives> mined;
  TrainReport global_hnm;
};

/// Phase A, mining with the frozen phase-A model, then phase B. A phase-B
/// plan with neither steps nor epochs runs as many steps as phase A.
inline Stage2Result run_stage2(const StagePlan& warmup_plan, StagePlan hnm_plan, Checkpoint& ckpt,
                               const RetrievalData& data) {
  TrainReport a = run_warmup(warmup_plan, ckpt, data);
  Model frozen = ckpt.model;
  std::vector<MinedNegatives> mined = mine_stage2_negatives(frozen, data, hnm_plan);
  if (hnm_plan.steps == 0 && hnm_plan.epochs <= 0.0) hnm_plan.steps = a.losses.size();
  TrainReport b = run_global_hnm(hnm_plan, ckpt, data, mined);
  return {std::move(a), std::move(frozen), std::move(mined), std::move(b)};
}

/// Retrieves the top `k` corpus candidates for every training query with
/// `model` and judges them.
inline std::vector<CuratedSample> curate_training_set(const Model& model, const RetrievalData& data, Judge& judge,
                                                      std::size_t k = kDefaultJudgeDepth) {
  const CandidateIndex index = build_index(model, *data.corpus);
  InferenceSession session(model);
  std::vector<CuratedSample> out;
  out.reserve(data.pairs.size());
  for (const auto& pair : data.pairs) {
    const MultimodalExample& q = data.query(pair.query_id);
    const Embedding e = session.embed(q);
    out.push_back(retrieve_and_judge(q, pair.positive_id, e.vector.data(), index, *data.corpus, judge, k));
  }
  return out;
}

/// Stage 3: InfoNCE where each query contrasts its ground truth against up
/// to `hard_negatives` judge negatives plus in-batch negatives.
inline TrainReport run_stage3(const StagePlan& plan, Checkpoint& ckpt, const RetrievalData& data,
                              const std::vector<CuratedSample>& curated) {
  trainer_detail::require_stage(ckpt, {TrainingStage::global_hnm}, TrainingStage::judge_ft);
  plan.validate();
  const std::size_t steps = plan.resolve_steps(curated.size());
  const ModelConfig cfg = ckpt.model.config();
  const SeedTree tree = SeedTree(plan.seed).child("judge_ft");
  trainer_detail::BatchSampler sampler(curated.size(), plan.batch_size, tree.child("batches"));
  std::size_t short_instances = 0;
  TrainReport report = trainer_detail::train_loop(
      plan, TrainingStage::judge_ft, steps, ckpt, [&](const BoundWeights& w, std::size_t step) {
        std::vector<const MultimodalExample*> q, p;
        std::vector<std::vector<const MultimodalExample*>> n;
        const std::uint64_t seed = tree.child("negatives").child(step).root();
        for (std::size_t i : sampler.next()) {
          const Stage3Instance inst = build_stage3_batch(curated[i], plan.hard_negatives, seed);
          if (inst.in_batch_fill > 0) ++short_instances;
          q.push_back(&data.query(inst.query_id));
          p.push_back(&data.candidate(inst.positive_id));
          n.emplace_back();
          for (const auto& id : inst.hard_negative_ids) n.back().push_back(&data.candidate(id));
        }
        return trainer_detail::contrastive_loss(w, cfg, q, p, n, plan.temperature);
      });
  if (short_instances > 0) {
    report.log.push_back(std::to_string(short_instances) + " training instances had fewer than " +
                         std::to_string(plan.hard_negatives) + " judge negatives; in-batch negatives filled the rest");
  }
  return report;
}

/// Size and positive slot of one listwise training instance.
struct ListwiseDraw {
  std::size_t negatives = 0;  // M
  std::size_t position = 0;   // 1-based slot of the positive among M + 1
};

/// M uniform over {2..5} (capped by `available`), then the positive's slot
/// uniform over 1..M+1.
inline ListwiseDraw draw_listwise(std::mt19937_64& rng, std::size_t available) {
  if (available < kListwiseMinNegatives) {
    throw SamplingError("listwise instance needs at least " + std::to_string(kListwiseMinNegatives) +
                        " negatives, have " + std::to_string(available));
  }
  const std::size_t hi = std::min(kListwiseMaxNegatives, available);
  ListwiseDraw d;
  d.negatives = kListwiseMinNegatives + uniform_index(rng, hi - kListwiseMinNegatives + 1);
  d.position = 1 + uniform_index(rng, d.negatives + 1);
  return d;
}

/// Joint pointwise + listwise reranker training from the restore checkpoint.
/// Queries without judge negatives are skipped and logged. Queries with a
/// single judge negative contribute the pointwise term only.
inline TrainReport run_reranker(const StagePlan& plan, Checkpoint& ckpt, const RetrievalData& data,
                                const std::vector<CuratedSample>& curated) {
  trainer_detail::require_stage(ckpt, {TrainingStage::restore}, TrainingStage::reranker);
  plan.validate();
  std::vector<const CuratedSample*> eligible;
  std::vector<std::string> log;
  for (const auto& s : curated) {
    if (s.judge_negative_ids.empty()) {
      log.push_back("skipped query '" + s.query_id + "': no judge negatives");
    } else {
      eligible.push_back(&s);
    }
  }
  if (eligible.empty()) throw ParameterError("no curated query has judge negatives; nothing to train the reranker on");
  const std::size_t steps = plan.resolve_steps(eligible.size());
  const ModelConfig cfg = ckpt.model.config();
  const SeedTree tree = SeedTree(plan.seed).child("reranker");
  trainer_detail::BatchSampler sampler(eligible.size(), plan.batch_size, tree.child("batches"));
  std::size_t pointwise_only = 0;
  TrainReport report = trainer_detail::train_loop(
      plan, TrainingStage::reranker, steps, ckpt, [&](const BoundWeights& w, std::size_t step) {
        std::vector<Var> losses;
        const SeedTree draws = tree.child("draws").child(step);
        for (std::size_t i : sampler.next()) {
          const CuratedSample& s = *eligible[i];
          auto rng = draws.child(s.query_id).engine();
          const MultimodalExample& query = data.query(s.query_id);
          std::vector<std::string> pos = {s.gt_positive_id};
          pos.insert(pos.end(), s.judge_positive_ids.begin(), s.judge_positive_ids.end());
          const auto& neg = s.judge_negative_ids;
          const auto& p_ex = data.candidate(pos[uniform_index(rng, pos.size())]);
          const auto& n_ex = data.candidate(neg[uniform_index(rng, neg.size())]);
          Var point = ad::scale(
              ad::sum_scalars({ad::pointwise_loss(w, pointwise_prompt(query, p_ex, cfg), RelevanceLabel::positive, cfg),
                               ad::pointwise_loss(w, pointwise_prompt(query, n_ex, cfg), RelevanceLabel::negative, cfg)}),
              0.5);
          if (neg.size() < kListwiseMinNegatives) {
            ++pointwise_only;
            losses.push_back(point);
            continue;
          }
          const ListwiseDraw d = draw_listwise(rng, neg.size());
          std::vector<const MultimodalExample*> list;
          for (std::size_t j : sample_without_replacement(rng, neg.size(), d.negatives)) {
            list.push_back(&data.candidate(neg[j]));
          }
          const auto& l_pos = data.candidate(pos[uniform_index(rng, pos.size())]);
          list.insert(list.begin() + static_cast<std::ptrdiff_t>(d.position - 1), &l_pos);
          Var listwise = ad::listwise_loss(w, listwise_prompt(query, list, cfg), list.size(), d.position, cfg);
          losses.push_back(ad::total_rerank_loss(point, listwise));
        }
        return trainer_detail::batch_mean(losses);
      });
  report.skipped_items = curated.size() - eligible.size();
  report.log.insert(report.log.begin(), log.begin(), log.end());
  if (pointwise_only > 0) {
    report.log.push_back(std::to_string(pointwise_only) +
                         " sampled queries had a single judge negative and trained pointwise only");
  }
  return report;
}

struct JudgeTrainingPair {
  std::string query_id;
  std::string candidate_id;
  bool relevant = false;
};

/// Teaches a model to answer YES/NO after the judgment prompt. The stage
/// tag of the checkpoint is left unchanged.
inline TrainReport train_judge(const StagePlan& plan, Checkpoint& ckpt, const ExampleSet& queries,
                               const ExampleSet& corpus, const std::vector<JudgeTrainingPair>& pairs,
                               const std::vector<int>& instruction) {
  plan.validate();
  const std::size_t steps = plan.resolve_steps(pairs.size());
  const ModelConfig cfg = ckpt.model.config();
  trainer_detail::BatchSampler sampler(pairs.size(), plan.batch_size, SeedTree(plan.seed).child("judge"));
  return trainer_detail::train_loop(plan, ckpt.stage, steps, ckpt, [&](const BoundWeights& w, std::size_t) {
    std::vector<Var> losses;
    for (std::size_t i : sampler.next()) {
      const auto& p = pairs[i];
      const TokenSequence prompt = judge_prompt(queries.at(p.query_id), corpus.at(p.candidate_id), instruction, cfg);
      losses.push_back(ad::pointwise_loss(w, prompt, p.relevant ? RelevanceLabel::positive : RelevanceLabel::negative, cfg));
    }
    return trainer_detail::batch_mean(losses);
  });
}

}  // namespace vtc
