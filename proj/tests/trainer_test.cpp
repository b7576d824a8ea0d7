#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <map>
#include <set>

#include "vtc/harness/synthetic.hpp"
#include "vtc/retrieval/evaluate.hpp"
#include "vtc/trainer/stages.hpp"

using namespace vtc;

namespace {

ModelConfig small_config() {
  ModelConfig cfg;
  cfg.vocab_size = 64;
  cfg.embed_dim = 32;
  cfg.num_layers = 2;
  cfg.num_heads = 2;
  cfg.max_seq_len = 96;
  cfg.seed = 5;
  return cfg;
}

SyntheticTaskSpec text_task(std::size_t corpus, std::size_t members, std::uint64_t seed = 3) {
  SyntheticTaskSpec s;
  s.task = TaskClass::T2T;
  s.num_classes = 4;
  s.corpus_size = corpus;
  s.members_per_class = members;
  s.queries_per_class = 8;
  s.eval_queries_per_class = 5;
  s.seed = seed;
  return s;
}

RetrievalData training_data(const SyntheticDataset& ds) {
  RetrievalData d{&ds.train_queries, &ds.candidates, {}};
  for (const auto& [q, c] : ds.train_positive) d.pairs.push_back({q, c});
  return d;
}

StagePlan plan(TrainingStage stage, std::size_t steps, std::size_t batch, double lr, std::uint64_t seed = 1) {
  StagePlan p;
  p.stage = stage;
  p.steps = steps;
  p.batch_size = batch;
  p.peak_lr = lr;
  p.seed = seed;
  return p;
}

Checkpoint fresh(const ModelConfig& cfg) { return {Model(cfg), TrainingStage::initial}; }

Checkpoint at_stage(const ModelConfig& cfg, TrainingStage s) { return {Model(cfg), s}; }

bool same_weights(const ModelWeights& a, const ModelWeights& b) {
  std::vector<const Tensor*> x, y;
  a.visit([&](const std::string&, const Tensor& t) { x.push_back(&t); });
  b.visit([&](const std::string&, const Tensor& t) { y.push_back(&t); });
  for (std::size_t i = 0; i < x.size(); ++i)
    if (!std::ranges::equal(x[i]->data(), y[i]->data())) return false;
  return true;
}

}  // namespace

TEST(Stage1, FreshModelStartsNearUniformEntropy) {
  const ModelConfig cfg = small_config();
  const SyntheticDataset ds = generate_corpus(text_task(40, 10), cfg);
  Checkpoint ck = fresh(cfg);
  const TrainReport r = run_stage1(plan(TrainingStage::restore, 1, 8, 1e-6), ck, ds.instruction_corpus());
  ASSERT_EQ(r.losses.size(), 1u);
  EXPECT_NEAR(r.losses[0], std::log(static_cast<double>(cfg.vocab_size)), 0.05);
  EXPECT_EQ(ck.stage, TrainingStage::restore);
}

TEST(Stage1, OverfitsEightExamples) {
  const ModelConfig cfg = small_config();
  const SyntheticDataset ds = generate_corpus(text_task(40, 10), cfg);
  std::vector<InstructionExample> corpus = ds.instruction_corpus();
  corpus.resize(8);
  Checkpoint ck = fresh(cfg);
  const TrainReport r = run_stage1(plan(TrainingStage::restore, 1000, 8, 3e-3), ck, corpus);
  EXPECT_EQ(r.losses.size(), 1000u);
  EXPECT_LT(r.final_loss, 0.05);
}

TEST(Stage1, EqualSeedsGiveBitwiseEqualTraces) {
  const ModelConfig cfg = small_config();
  const SyntheticDataset ds = generate_corpus(text_task(40, 10), cfg);
  const auto corpus = ds.instruction_corpus();
  Checkpoint a = fresh(cfg), b = fresh(cfg), c = fresh(cfg);
  const TrainReport ra = run_stage1(plan(TrainingStage::restore, 15, 4, 1e-3, 9), a, corpus);
  const TrainReport rb = run_stage1(plan(TrainingStage::restore, 15, 4, 1e-3, 9), b, corpus);
  const TrainReport rc = run_stage1(plan(TrainingStage::restore, 15, 4, 1e-3, 10), c, corpus);
  EXPECT_EQ(ra.losses, rb.losses);
  EXPECT_EQ(ra.learning_rates, rb.learning_rates);
  EXPECT_TRUE(same_weights(a.model.weights(), b.model.weights()));
  EXPECT_NE(ra.losses, rc.losses);
  EXPECT_EQ(ra.config_hash, rb.config_hash);
  EXPECT_NE(ra.config_hash, rc.config_hash);
}

TEST(Stage1, DivergenceAbortsWithDiagnostic) {
  const ModelConfig cfg = small_config();
  const SyntheticDataset ds = generate_corpus(text_task(40, 10), cfg);
  StagePlan p = plan(TrainingStage::restore, 50, 4, 1e-3);
  // A threshold below the starting loss makes every step count as diverged.
  p.divergence_factor = 0.5;
  p.divergence_patience = 7;
  Checkpoint ck = fresh(cfg);
  try {
    run_stage1(p, ck, ds.instruction_corpus());
    FAIL() << "expected a divergence abort";
  } catch (const TrainingError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("diverged"), std::string::npos) << msg;
    EXPECT_NE(msg.find("7 consecutive steps"), std::string::npos) << msg;
  }
  EXPECT_EQ(ck.stage, TrainingStage::initial);
}

TEST(Stage1, GradientAccumulationKeepsOneTraceEntryPerStep) {
  const ModelConfig cfg = small_config();
  const SyntheticDataset ds = generate_corpus(text_task(40, 10), cfg);
  StagePlan p = plan(TrainingStage::restore, 6, 4, 1e-3);
  p.grad_accum = 3;
  Checkpoint a = fresh(cfg), b = fresh(cfg);
  const TrainReport ra = run_stage1(p, a, ds.instruction_corpus());
  const TrainReport rb = run_stage1(p, b, ds.instruction_corpus());
  EXPECT_EQ(ra.losses.size(), 6u);
  EXPECT_EQ(ra.losses, rb.losses);
}

TEST(Stage2, WarmupSeparatesCleanClasses) {
  const ModelConfig cfg = small_config();
  const SyntheticDataset ds = generate_corpus(text_task(80, 20), cfg);  // no decoys
  Checkpoint ck = at_stage(cfg, TrainingStage::restore);
  const TrainReport r = run_warmup(plan(TrainingStage::warmup, 200, 16, 1e-3), ck, training_data(ds));
  EXPECT_LT(r.final_loss, r.losses.front());
  const CandidateIndex index = build_index(ck.model, ds.candidates);
  const RetrievalMetrics m = score_results(retrieve_all(ck.model, ds.eval_queries, index, 5), ds.qrels);
  EXPECT_GT(m.precision_at_1, 0.9);
}

TEST(Stage2, PhaseBMinesTwoNegativesFromTheWindow) {
  const ModelConfig cfg = small_config();
  const SyntheticDataset ds = generate_corpus(text_task(160, 10), cfg);
  const RetrievalData data = training_data(ds);
  Checkpoint ck = at_stage(cfg, TrainingStage::restore);
  StagePlan hnm = plan(TrainingStage::global_hnm, 0, 8, 1e-3);
  const Stage2Result r = run_stage2(plan(TrainingStage::warmup, 10, 8, 1e-3), hnm, ck, data);
  EXPECT_EQ(ck.stage, TrainingStage::global_hnm);
  EXPECT_EQ(r.global_hnm.losses.size(), r.warmup.losses.size());
  ASSERT_EQ(r.mined.size(), data.pairs.size());

  // Oracle: rank the corpus with the frozen phase-A model by full sort.
  const CandidateIndex index = build_index(r.warmup_model, ds.candidates);
  InferenceSession session(r.warmup_model);
  for (std::size_t i = 0; i < data.pairs.size(); ++i) {
    const MinedNegatives& m = r.mined[i];
    EXPECT_EQ(m.query_id, data.pairs[i].query_id);
    EXPECT_EQ(m.window, (MiningWindow{50, 100}));
    ASSERT_EQ(m.negative_ids.size(), 2u);
    const Tensor q = session.embed(data.query(m.query_id)).vector;
    std::vector<std::pair<double, std::string>> all;
    for (std::size_t row = 0; row < index.size(); ++row) {
      if (index.ids()[row] == data.pairs[i].positive_id) continue;
      double s = 0.0;
      for (std::size_t d = 0; d < q.size(); ++d) s += q[d] * index.row(row)[d];
      all.emplace_back(-s, index.ids()[row]);
    }
    std::sort(all.begin(), all.end());
    for (std::size_t j = 0; j < 2; ++j) {
      EXPECT_NE(m.negative_ids[j], data.pairs[i].positive_id);
      EXPECT_GE(m.ranks[j], 50u);
      EXPECT_LE(m.ranks[j], 100u);
      EXPECT_EQ(all[m.ranks[j] - 1].second, m.negative_ids[j]);
    }
  }
}

TEST(Stage2, PhaseBReusesStoredMiningArtifacts) {
  const ModelConfig cfg = small_config();
  const SyntheticDataset ds = generate_corpus(text_task(160, 10), cfg);
  const RetrievalData data = training_data(ds);
  Checkpoint ck = at_stage(cfg, TrainingStage::restore);
  const StagePlan hnm = plan(TrainingStage::global_hnm, 6, 8, 1e-3);
  const Stage2Result r = run_stage2(plan(TrainingStage::warmup, 6, 8, 1e-3), hnm, ck, data);

  EXPECT_EQ(mine_stage2_negatives(r.warmup_model, data, hnm), r.mined);
  const auto path = std::filesystem::temp_directory_path() / "vtc_trainer_mined.jsonl";
  save_mined(path, r.mined);
  const auto loaded = load_mined(path);
  std::filesystem::remove(path);
  EXPECT_EQ(loaded, r.mined);

  Checkpoint replay{r.warmup_model, TrainingStage::warmup};
  const TrainReport again = run_global_hnm(hnm, replay, data, loaded);
  EXPECT_EQ(again.losses, r.global_hnm.losses);
  EXPECT_TRUE(same_weights(replay.model.weights(), ck.model.weights()));
}

TEST(Stage2, MissingMinedRecordIsAContractError) {
  const ModelConfig cfg = small_config();
  const SyntheticDataset ds = generate_corpus(text_task(40, 10), cfg);
  Checkpoint ck = at_stage(cfg, TrainingStage::warmup);
  EXPECT_THROW(run_global_hnm(plan(TrainingStage::global_hnm, 2, 4, 1e-3), ck, training_data(ds), {}), ContractError);
}

TEST(StageOrder, StagesRefuseOutOfOrderCheckpoints) {
  const ModelConfig cfg = small_config();
  const SyntheticDataset ds = generate_corpus(text_task(40, 10), cfg);
  const RetrievalData data = training_data(ds);
  std::vector<CuratedSample> curated = {{data.pairs[0].query_id, data.pairs[0].positive_id, {}, {"c00001"}, {}, {}}};

  Checkpoint ck = at_stage(cfg, TrainingStage::warmup);
  try {
    run_stage3(plan(TrainingStage::judge_ft, 1, 1, 1e-3), ck, data, curated);
    FAIL() << "judge_ft ran without a global_hnm checkpoint";
  } catch (const StateError& e) {
    EXPECT_NE(std::string(e.what()).find("global_hnm"), std::string::npos);
  }
  Checkpoint init = fresh(cfg);
  EXPECT_THROW(run_warmup(plan(TrainingStage::warmup, 1, 4, 1e-3), init, data), StateError);
  Checkpoint restore = at_stage(cfg, TrainingStage::restore);
  EXPECT_THROW(run_global_hnm(plan(TrainingStage::global_hnm, 1, 4, 1e-3), restore, data, {}), StateError);
  Checkpoint hnm = at_stage(cfg, TrainingStage::global_hnm);
  EXPECT_THROW(run_reranker(plan(TrainingStage::reranker, 1, 1, 1e-3), hnm, data, curated), StateError);
  Checkpoint done = at_stage(cfg, TrainingStage::judge_ft);
  EXPECT_THROW(run_stage1(plan(TrainingStage::restore, 1, 1, 1e-3), done, ds.instruction_corpus()), StateError);
}

TEST(Stage3, RuleArmNegativesAreTopKMinusPositive) {
  const ModelConfig cfg = small_config();
  const SyntheticDataset ds = generate_corpus(text_task(160, 10), cfg);
  const RetrievalData data = training_data(ds);
  const Model model(cfg);
  AlwaysIrrelevantJudge rule;
  const auto curated = curate_training_set(model, data, rule, 20);
  const CandidateIndex index = build_index(model, ds.candidates);
  InferenceSession session(model);
  for (std::size_t i = 0; i < curated.size(); ++i) {
    const auto top = search(index, session.embed(data.query(data.pairs[i].query_id)), 20);
    std::vector<std::string> expected;
    for (const auto& id : top.ids)
      if (id != data.pairs[i].positive_id) expected.push_back(id);
    EXPECT_EQ(curated[i].judge_negative_ids, expected);
    EXPECT_TRUE(curated[i].judge_positive_ids.empty());
  }
}

TEST(Stage3, HardNegativeCountIsConfigurable) {
  const ModelConfig cfg = small_config();
  const SyntheticDataset ds = generate_corpus(text_task(160, 10), cfg);
  const RetrievalData data = training_data(ds);
  const Model model(cfg);
  ClassOracleJudge judge(ds.labels);
  const auto curated = curate_training_set(model, data, judge, 20);
  for (std::size_t n : {0u, 4u, 8u, 12u, 16u, 20u}) {
    Checkpoint ck{model, TrainingStage::global_hnm};
    StagePlan p = plan(TrainingStage::judge_ft, 2, 4, 1e-3);
    p.hard_negatives = n;
    const TrainReport r = run_stage3(p, ck, data, curated);
    EXPECT_EQ(r.losses.size(), 2u) << n;
    EXPECT_EQ(ck.stage, TrainingStage::judge_ft);
    for (double l : r.losses) EXPECT_TRUE(std::isfinite(l));
  }
}

TEST(Reranker, ListwiseSizeAndPositionAreUniform) {
  std::mt19937_64 rng(2024);
  const std::size_t draws = 10000;
  std::map<std::size_t, std::map<std::size_t, std::size_t>> counts;
  std::map<std::size_t, std::size_t> sizes;
  for (std::size_t i = 0; i < draws; ++i) {
    const ListwiseDraw d = draw_listwise(rng, 12);
    ++sizes[d.negatives];
    ++counts[d.negatives][d.position];
  }
  auto chi2 = [](const std::map<std::size_t, std::size_t>& cells, std::size_t n_cells) {
    double total = 0.0;
    for (const auto& [k, v] : cells) total += static_cast<double>(v);
    const double e = total / static_cast<double>(n_cells);
    double x = 0.0;
    for (const auto& [k, v] : cells) x += (static_cast<double>(v) - e) * (static_cast<double>(v) - e) / e;
    x += static_cast<double>(n_cells - cells.size()) * e;
    return x;
  };
  // Upper 1% points of chi-square with 2..5 degrees of freedom.
  const std::map<std::size_t, double> critical = {{2, 9.210}, {3, 11.345}, {4, 13.277}, {5, 15.086}};
  ASSERT_EQ(sizes.size(), 4u);
  EXPECT_EQ(sizes.begin()->first, 2u);
  EXPECT_EQ(sizes.rbegin()->first, 5u);
  EXPECT_LT(chi2(sizes, 4), critical.at(3));
  for (const auto& [m, cells] : counts) {
    EXPECT_EQ(cells.begin()->first, 1u);
    EXPECT_EQ(cells.rbegin()->first, m + 1);
    EXPECT_LT(chi2(cells, m + 1), critical.at(m)) << "M = " << m;
  }
}

TEST(Reranker, ListwiseSizeIsCappedByAvailableNegatives) {
  std::mt19937_64 rng(7);
  std::set<std::size_t> seen;
  for (int i = 0; i < 200; ++i) seen.insert(draw_listwise(rng, 3).negatives);
  EXPECT_EQ(seen, (std::set<std::size_t>{2, 3}));
  EXPECT_THROW(draw_listwise(rng, 1), SamplingError);
}

TEST(Reranker, SkipsQueriesWithoutNegativesAndDefaultsToTwoEpochs) {
  const ModelConfig cfg = small_config();
  const SyntheticDataset ds = generate_corpus(text_task(160, 10), cfg);
  const RetrievalData data = training_data(ds);
  ClassOracleJudge judge(ds.labels);
  auto curated = curate_training_set(Model(cfg), data, judge, 20);
  curated.resize(9);
  curated[4].judge_negative_ids.clear();
  curated[5].judge_negative_ids.resize(1);
  StagePlan p = plan(TrainingStage::reranker, 0, 4, 1e-3);
  p.epochs = 2.0;
  Checkpoint ck = at_stage(cfg, TrainingStage::restore);
  const TrainReport r = run_reranker(p, ck, data, curated);
  EXPECT_EQ(r.losses.size(), 4u);  // ceil(2 * 8 / 4)
  EXPECT_EQ(r.skipped_items, 1u);
  ASSERT_FALSE(r.log.empty());
  EXPECT_NE(r.log.front().find(curated[4].query_id), std::string::npos);
  EXPECT_EQ(ck.stage, TrainingStage::reranker);
}

TEST(Reranker, LearnsToSeparateJudgedCandidates) {
  const ModelConfig cfg = small_config();
  const SyntheticDataset ds = generate_corpus(text_task(160, 10), cfg);
  const RetrievalData data = training_data(ds);
  ClassOracleJudge judge(ds.labels);
  const auto curated = curate_training_set(Model(cfg), data, judge, 20);
  Checkpoint ck = at_stage(cfg, TrainingStage::restore);
  const TrainReport r = run_reranker(plan(TrainingStage::reranker, 150, 8, 2e-3), ck, data, curated);
  double head = 0.0, tail = 0.0;
  for (std::size_t i = 0; i < 10; ++i) {
    head += r.losses[i];
    tail += r.losses[r.losses.size() - 1 - i];
  }
  EXPECT_LT(tail, 0.6 * head);
}

TEST(Judge, OverfitToyJudgeAgreesWithClassLabels) {
  const ModelConfig cfg = small_config();
  const SyntheticDataset ds = generate_corpus(text_task(80, 20), cfg);
  std::vector<JudgeTrainingPair> probe;
  std::mt19937_64 rng(11);
  const auto& qs = ds.train_queries.items();
  const auto& cs = ds.candidates.items();
  while (probe.size() < 100) {
    const auto& q = qs[uniform_index(rng, qs.size())];
    const auto& c = cs[uniform_index(rng, cs.size())];
    const bool rel = ds.labels.at(q.id) == ds.labels.at(c.id);
    if (rel != (probe.size() % 2 == 0)) continue;  // balance the probe
    probe.push_back({q.id, c.id, rel});
  }
  const TemplateEntry& entry = TemplateRegistry::builtin().at("T->T");
  const auto instr = TokenVocabulary::tokenize(entry.judgment_instruction, static_cast<int>(cfg.vocab_size));
  Checkpoint ck = at_stage(cfg, TrainingStage::restore);
  train_judge(plan(TrainingStage::restore, 800, 16, 2e-3), ck, ds.train_queries, ds.candidates, probe, instr);
  EXPECT_EQ(ck.stage, TrainingStage::restore);
  ModelJudge judge(ck.model, entry);
  std::size_t agree = 0;
  for (const auto& p : probe) {
    const JudgeVerdict v = judge_pair(ds.train_queries.at(p.query_id), ds.candidates.at(p.candidate_id), judge);
    agree += (v.verdict == (p.relevant ? Verdict::relevant : Verdict::irrelevant)) ? 1 : 0;
  }
  EXPECT_GE(agree, 95u);
}

TEST(Checkpointing, RoundTripReproducesProbeLossBitwise) {
  const ModelConfig cfg = small_config();
  const SyntheticDataset ds = generate_corpus(text_task(40, 10), cfg);
  const RetrievalData data = training_data(ds);
  Checkpoint ck = at_stage(cfg, TrainingStage::restore);
  StagePlan p = plan(TrainingStage::warmup, 5, 8, 1e-3);
  const auto path = std::filesystem::temp_directory_path() / "vtc_trainer_probe.ckpt";
  p.output_checkpoint = path.string();
  const TrainReport r = run_warmup(p, ck, data);
  EXPECT_EQ(r.checkpoint_path, path.string());
  const Checkpoint loaded = load_checkpoint(path);
  std::filesystem::remove(path);
  EXPECT_EQ(loaded.stage, TrainingStage::warmup);

  auto probe_loss = [&](const Model& m) {
    Tape tape;
    BoundWeights w = bind(tape, m.weights(), false);
    std::vector<const MultimodalExample*> q, c;
    for (std::size_t i = 0; i < 6; ++i) {
      q.push_back(&data.query(data.pairs[i].query_id));
      c.push_back(&data.candidate(data.pairs[i].positive_id));
    }
    return trainer_detail::contrastive_loss(w, cfg, q, c, {}, kDefaultTemperature).value()[0];
  };
  const double a = probe_loss(ck.model), b = probe_loss(loaded.model);
  EXPECT_EQ(std::memcmp(&a, &b, sizeof(double)), 0);
}

TEST(Reports, TraceCsvAndJsonAgree) {
  const ModelConfig cfg = small_config();
  const SyntheticDataset ds = generate_corpus(text_task(40, 10), cfg);
  Checkpoint ck = fresh(cfg);
  const TrainReport r = run_stage1(plan(TrainingStage::restore, 4, 4, 1e-3), ck, ds.instruction_corpus());
  const std::string csv = loss_csv(r);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 5);
  const auto j = to_json(r);
  EXPECT_EQ(j.at("steps").get<std::size_t>(), 4u);
  EXPECT_EQ(j.at("losses").get<std::vector<double>>(), r.losses);
  EXPECT_EQ(j.at("stage").get<std::string>(), "restore");
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "step,loss,learning_rate");
}

TEST(Plans, JsonRoundTripAndEpochResolution) {
  StagePlan p = plan(TrainingStage::judge_ft, 0, 8, 2e-4, 42);
  p.epochs = 1.5;
  p.hard_negatives = 4;
  p.window = {10, 30};
  const StagePlan back = plan_from_json(to_json(p));
  EXPECT_EQ(back, p);
  EXPECT_EQ(p.resolve_steps(20), 4u);  // ceil(1.5 * 20 / 8)
  StagePlan none;
  EXPECT_THROW(none.resolve_steps(10), ConfigError);
  EXPECT_THROW(plan_from_json({{"batch_size", 0}}), ConfigError);
  EXPECT_THROW(plan_from_json({{"stage", "nonsense"}}), ConfigError);
}
