#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <sstream>

#include "vtc/harness/config.hpp"
#include "vtc/harness/corpus_io.hpp"
#include "vtc/harness/experiment.hpp"
#include "vtc/harness/manifest.hpp"

using namespace vtc;
namespace fs = std::filesystem;

namespace {

SyntheticTaskSpec small_spec(TaskClass task = TaskClass::IT2I, std::uint64_t seed = 3) {
  SyntheticTaskSpec s;
  s.task = task;
  s.num_classes = 4;
  s.corpus_size = 60;
  s.members_per_class = 10;
  s.queries_per_class = 5;
  s.eval_queries_per_class = 3;
  s.seed = seed;
  return s;
}

std::string corpus_text(const SyntheticDataset& ds) {
  std::ostringstream out;
  write_corpus(out, ds);
  return out.str();
}

std::string qrels_text(const Qrels& q) {
  std::ostringstream out;
  write_qrels(out, q);
  return out.str();
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("vtc_harness_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

ExperimentConfig tiny_experiment() {
  ExperimentConfig c = experiment_preset("smoke");
  c.name = "tiny";
  c.seeds = {1, 2};
  c.data.num_classes = 4;
  c.data.corpus_size = 80;
  c.data.members_per_class = 10;
  c.data.queries_per_class = 6;
  c.data.eval_queries_per_class = 3;
  c.stage1.steps = 6;
  c.warmup.steps = 8;
  c.global_hnm.steps = 8;
  c.global_hnm.window = {5, 20};
  c.judge_ft.steps = 6;
  c.reranker.epochs = 0.0;
  c.reranker.steps = 3;
  c.judge_depth = 10;
  c.validate();
  return c;
}

}  // namespace

TEST(Templates, RegistryCoversAllNineTaskClasses) {
  const auto& reg = TemplateRegistry::builtin();
  EXPECT_EQ(reg.size(), 9u);
  for (TaskClass t : kAllTaskClasses) {
    ASSERT_TRUE(reg.contains(task_class_name(t))) << task_class_name(t);
    const auto& e = reg.at(task_class_name(t));
    EXPECT_FALSE(e.query_instruction.empty());
    EXPECT_FALSE(e.target_instruction.empty());
    EXPECT_FALSE(e.judgment_instruction.empty());
    EXPECT_EQ(parse_task_class(task_class_name(t)), t);
  }
  EXPECT_THROW(reg.at("V->V"), ConfigError);
}

TEST(Synthetic, SameSpecGivesByteIdenticalFiles) {
  const ModelConfig cfg;
  const auto a = generate_corpus(small_spec(), cfg), b = generate_corpus(small_spec(), cfg);
  EXPECT_EQ(corpus_text(a), corpus_text(b));
  EXPECT_EQ(qrels_text(a.qrels), qrels_text(b.qrels));
  EXPECT_NE(corpus_text(a), corpus_text(generate_corpus(small_spec(TaskClass::IT2I, 4), cfg)));
}

TEST(Synthetic, FusedQueryCarriesGridAndTextWhileCandidatesAreGridOnly) {
  const auto ds = generate_corpus(small_spec(TaskClass::IT2I), ModelConfig{});
  EXPECT_EQ(ds.candidates.size(), 60u);
  EXPECT_EQ(ds.train_queries.size(), 20u);
  EXPECT_EQ(ds.eval_queries.size(), 12u);
  for (const auto* set : {&ds.train_queries, &ds.eval_queries}) {
    for (const auto& q : *set) {
      EXPECT_TRUE(q.has_visual());
      EXPECT_FALSE(q.text.empty());
      EXPECT_EQ(q.role, Role::query);
    }
  }
  for (const auto& c : ds.candidates) {
    EXPECT_TRUE(c.has_visual());
    EXPECT_TRUE(c.text.empty());
    EXPECT_EQ(c.role, Role::candidate);
  }
}

TEST(Synthetic, EveryTaskClassPlantsItsModalities) {
  const ModelConfig cfg;
  for (TaskClass t : kAllTaskClasses) {
    const auto ds = generate_corpus(small_spec(t), cfg);
    const Modality qm = query_modality(t), cm = candidate_modality(t);
    for (const auto& q : ds.eval_queries) {
      EXPECT_EQ(q.has_visual(), qm.image) << task_class_name(t);
      EXPECT_EQ(!q.text.empty(), qm.text) << task_class_name(t);
      (void)serialize(q, cfg);
    }
    for (const auto& c : ds.candidates) {
      EXPECT_EQ(c.has_visual(), cm.image) << task_class_name(t);
      EXPECT_EQ(!c.text.empty(), cm.text) << task_class_name(t);
    }
  }
}

TEST(Synthetic, NearestCentroidOnRawFeaturesRetrievesPerfectly) {
  SyntheticTaskSpec spec;  // 10 classes, 2000 candidates, no label noise
  spec.seed = 11;
  const ModelConfig cfg;
  const auto ds = generate_corpus(spec, cfg);
  const std::size_t k = spec.num_classes, dim = ds.candidates[0].visual->values().size();

  // Class centroids of the training-query grids.
  std::vector<std::vector<double>> centroid(k, std::vector<double>(dim, 0.0));
  std::vector<double> count(k, 0.0);
  for (const auto& q : ds.train_queries) {
    const auto c = static_cast<std::size_t>(ds.labels.at(q.id));
    const auto& v = q.visual->values();
    for (std::size_t i = 0; i < dim; ++i) centroid[c][i] += v[i];
    count[c] += 1.0;
  }
  for (std::size_t c = 0; c < k; ++c)
    for (double& x : centroid[c]) x /= count[c];

  std::vector<RankedResult> results;
  for (const auto& q : ds.eval_queries) {
    // Class read off the text motif, candidates ranked by dot product with
    // that class centroid.
    std::size_t cls = k;
    for (std::size_t c = 0; c < k; ++c) {
      if (std::count(q.text.begin(), q.text.end(), spec.motif_token(c, 0)) > 0) cls = c;
    }
    ASSERT_LT(cls, k);
    RankedResult r{q.id, {}, {}};
    double best = -1e300;
    for (const auto& cand : ds.candidates) {
      const auto& v = cand.visual->values();
      double s = 0.0;
      for (std::size_t i = 0; i < dim; ++i) s += v[i] * centroid[cls][i];
      if (s > best) {
        best = s;
        r.ids = {cand.id};
        r.scores = {s};
      }
    }
    results.push_back(r);
  }
  EXPECT_EQ(precision_at_1(results, ds.qrels), 1.0);
}

TEST(Synthetic, QrelsListEveryMemberOfTheQueryClassAndNoDecoy) {
  const auto ds = generate_corpus(small_spec(), ModelConfig{});
  ASSERT_EQ(ds.qrels.size(), ds.eval_queries.size());
  for (const auto& q : ds.eval_queries) {
    const int cls = ds.labels.at(q.id);
    std::size_t members = 0;
    for (const auto& c : ds.candidates) {
      const bool same = ds.labels.at(c.id) == cls;
      members += same;
      EXPECT_EQ(ds.qrels.at(q.id).count(c.id) > 0, same);
    }
    EXPECT_EQ(members, 10u);
  }
  std::size_t decoys = 0;
  for (const auto& c : ds.candidates) decoys += ds.labels.at(c.id) == -1;
  EXPECT_EQ(decoys, 20u);
}

TEST(Synthetic, NoiseFlipsExactlyTheRequestedShareOfTrainingPairs) {
  for (double rate : {0.0, 0.2, 0.45}) {
    SyntheticTaskSpec spec = small_spec();
    spec.queries_per_class = 25;
    spec.noise_rate = rate;
    const auto ds = generate_corpus(spec, ModelConfig{});
    std::size_t flipped = 0;
    for (const auto& [q, c] : ds.train_positive) {
      EXPECT_GE(ds.labels.at(c), 0);
      flipped += ds.labels.at(q) != ds.labels.at(c);
    }
    EXPECT_EQ(flipped, static_cast<std::size_t>(std::llround(rate * 100.0))) << rate;
  }
}

TEST(Synthetic, RejectsInvalidSpecs) {
  const ModelConfig cfg;
  SyntheticTaskSpec s = small_spec();
  s.noise_rate = 0.5;
  EXPECT_THROW(generate_corpus(s, cfg), ConfigError);
  s = small_spec();
  s.corpus_size = 3;
  EXPECT_THROW(generate_corpus(s, cfg), ConfigError);
  s = small_spec();
  s.members_per_class = 20;
  EXPECT_THROW(generate_corpus(s, cfg), ConfigError);
  ModelConfig tiny_vocab;
  tiny_vocab.vocab_size = 30;
  EXPECT_THROW(generate_corpus(small_spec(), tiny_vocab), ConfigError);
}

TEST(CorpusIo, RoundTripIsLosslessAndEmbeddingsMatch) {
  const ModelConfig cfg;
  const auto ds = generate_corpus(small_spec(), cfg);
  const std::string text = corpus_text(ds);
  std::istringstream in(text);
  const auto back = read_corpus(in, cfg);
  EXPECT_EQ(corpus_text(back), text);
  EXPECT_EQ(back.qrels, ds.qrels);
  EXPECT_EQ(back.train_positive, ds.train_positive);
  EXPECT_EQ(back.labels, ds.labels);
  EXPECT_EQ(back.captions, ds.captions);

  const Model model(cfg);
  InferenceSession a(model), b(model);
  for (const auto* set : {&ds.candidates, &ds.eval_queries}) {
    for (const auto& ex : *set) {
      const Embedding x = a.embed(ex), y = b.embed(back.candidates.contains(ex.id) ? back.candidates.at(ex.id)
                                                                                   : back.eval_queries.at(ex.id));
      EXPECT_EQ(x.vector, y.vector) << ex.id;
    }
  }

  const fs::path dir = scratch("roundtrip");
  save_corpus(dir / "corpus.jsonl", ds);
  save_qrels(dir / "qrels.tsv", ds.qrels);
  EXPECT_EQ(corpus_text(load_corpus(dir / "corpus.jsonl", cfg)), text);
  EXPECT_EQ(load_qrels(dir / "qrels.tsv"), ds.qrels);
}

TEST(CorpusIo, TruncatedFileNamesTheLastGoodLine) {
  const ModelConfig cfg;
  const std::string text = corpus_text(generate_corpus(small_spec(), cfg));
  const std::size_t lines = static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n'));
  // Cut the final record in half.
  const std::size_t last_start = text.rfind('\n', text.size() - 2) + 1;
  std::istringstream in(text.substr(0, last_start + (text.size() - last_start) / 2));
  try {
    read_corpus(in, cfg);
    FAIL() << "truncated corpus loaded";
  } catch (const FormatError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("corpus line " + std::to_string(lines)), std::string::npos) << msg;
    EXPECT_NE(msg.find("last good line " + std::to_string(lines - 1)), std::string::npos) << msg;
  }
}

TEST(CorpusIo, EmptyFileIsAnEmptyCorpus) {
  std::istringstream in("");
  const auto ds = read_corpus(in, ModelConfig{});
  EXPECT_TRUE(ds.candidates.empty());
  EXPECT_TRUE(ds.train_queries.empty());
  EXPECT_TRUE(ds.eval_queries.empty());
  EXPECT_TRUE(ds.qrels.empty());
}

TEST(CorpusIo, SchemaMismatchIsAMigrationError) {
  const ModelConfig cfg;
  std::string text = corpus_text(generate_corpus(small_spec(), cfg));
  const std::string key = "\"schema_version\":1";
  const std::size_t second = text.find(key, text.find('\n'));
  ASSERT_NE(second, std::string::npos);
  text.replace(second, key.size(), "\"schema_version\":2");
  std::istringstream in(text);
  try {
    read_corpus(in, cfg);
    FAIL() << "version 2 record loaded";
  } catch (const MigrationError& e) {
    EXPECT_NE(std::string(e.what()).find("corpus line 2"), std::string::npos) << e.what();
  }
}

TEST(CorpusIo, ExampleInvariantsAreCheckedOnLoad) {
  const std::string text = corpus_text(generate_corpus(small_spec(), ModelConfig{}));
  ModelConfig other;
  other.grid_height = other.grid_width = 16;
  std::istringstream in(text);
  try {
    read_corpus(in, other);
    FAIL() << "8x8 grids accepted by a 16x16 model";
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("corpus line 1:"), std::string::npos) << e.what();
  }
}

TEST(Config, JsonRoundTripAndPresets) {
  for (const auto& name : experiment_preset_names()) {
    const ExperimentConfig c = experiment_preset(name);
    EXPECT_EQ(experiment_config_from_json(to_json(c)), c) << name;
  }
  EXPECT_EQ(experiment_preset("table4").kind, ExperimentKind::ablation);
  EXPECT_EQ(experiment_preset("table5").kind, ExperimentKind::sweep);
  EXPECT_EQ(experiment_preset("table5").sweep_n, (std::vector<std::size_t>{0, 4, 8, 12, 16, 20}));
  EXPECT_EQ(experiment_preset("table4").seeds.size(), 5u);
  EXPECT_THROW(experiment_preset("table9"), ConfigError);

  const nlohmann::json partial = {{"schema_version", 1}, {"seeds", {9}}, {"stages", {{"warmup", {{"steps", 17}}}}}};
  const ExperimentConfig c = experiment_config_from_json(partial, experiment_preset("table4"));
  EXPECT_EQ(c.seeds, std::vector<std::uint64_t>{9});
  EXPECT_EQ(c.warmup.steps, 17u);
  EXPECT_EQ(c.warmup.batch_size, 16u);
}

TEST(Config, ShippedConfigFilesMatchPresets) {
  const std::filesystem::path dir = std::filesystem::path(VTC_SOURCE_DIR) / "configs";
  for (const auto& name : experiment_preset_names()) {
    EXPECT_EQ(load_experiment_config(dir / (name + ".json")), experiment_preset(name)) << name;
  }
}

TEST(Config, SchemaVersionIsRequiredAndChecked) {
  EXPECT_THROW(experiment_config_from_json({{"seeds", {1}}}), ConfigError);
  EXPECT_THROW(experiment_config_from_json({{"schema_version", 2}}), MigrationError);
  EXPECT_THROW(experiment_config_from_json({{"schema_version", 1}, {"stages", {{"stage4", {}}}}}), ConfigError);
  EXPECT_THROW(experiment_config_from_json({{"schema_version", 1}, {"judge", "crowd"}}), ConfigError);
  EXPECT_THROW(experiment_config_from_json({{"schema_version", 1}, {"data", {{"noise_rate", 0.7}}}}), ConfigError);
  const fs::path dir = scratch("config");
  write_file_atomic(dir / "bad.json", "{not json");
  EXPECT_THROW(load_experiment_config(dir / "bad.json"), ConfigError);
}

TEST(Config, HashIgnoresCacheLocationButNotSeeds) {
  ExperimentConfig a = experiment_preset("table4"), b = a;
  b.cache_dir = "/tmp/elsewhere";
  EXPECT_EQ(config_hash(a), config_hash(b));
  b.seeds = {1, 2, 3, 4, 6};
  EXPECT_NE(config_hash(a), config_hash(b));
  const ExperimentConfig s = seeded(a, 42);
  EXPECT_EQ(s.model.seed, 42u);
  EXPECT_EQ(s.data.seed, 42u);
  EXPECT_EQ(s.judge_ft.seed, 42u);
}

TEST(Manifest, ContentIdUsesGitBlobFraming) {
  EXPECT_EQ(content_id("hello\n"), "2cf8d83d9ee29543b34a87727421fdecb7e3f3a183d337639025de576db9ebb4");
  const fs::path dir = scratch("manifest");
  write_file_atomic(dir / "out.txt", "hello\n");
  Manifest m;
  m.command = "gen-data";
  m.argv = {"vtc", "gen-data", "--seed", "3"};
  m.seed = 3;
  m.config = to_json(experiment_preset("smoke"));
  m.config_hash = config_hash(experiment_preset("smoke"));
  m.corpus_hash = "-";
  m.add_output(dir / "out.txt");
  save_manifest(dir / "manifest.json", m);
  const Manifest back = load_manifest(dir / "manifest.json");
  EXPECT_EQ(to_json(back), to_json(m));
  EXPECT_EQ(back.outputs.at(0).second, content_id("hello\n"));
}

TEST(Report, MedianOfPresentValues) {
  EXPECT_EQ(median({}), std::nullopt);
  EXPECT_EQ(median({0.3}), 0.3);
  EXPECT_EQ(median({0.5, 0.1, 0.9}), 0.5);
  EXPECT_EQ(median({0.4, 0.1, 0.9, 0.2}), 0.30000000000000004);
}

TEST(Experiment, AblationReportHasFourRowsWithPerSeedAndMedianColumns) {
  const ExperimentConfig c = tiny_experiment();
  const ExperimentReport r = run_experiment(c);
  ASSERT_TRUE(r.complete()) << r.failures.front();
  ASSERT_EQ(r.rows.size(), 4u);
  EXPECT_EQ(r.rows[0].label, "warmup");
  EXPECT_EQ(r.rows[1].label, "+global-HNM");
  EXPECT_EQ(r.rows[2].label, "+judge-FT");
  EXPECT_EQ(r.rows[3].label, "+reranker");
  ASSERT_EQ(r.reranker_rows.size(), 1u);
  for (const auto* table : {&r.rows, &r.reranker_rows}) {
    for (const auto& row : *table) {
      ASSERT_EQ(row.per_seed.size(), 2u);
      for (const auto& m : row.per_seed) {
        ASSERT_TRUE(m.has_value()) << row.label;
        EXPECT_EQ(m->queries, 12u);
      }
      EXPECT_EQ(row.median_p1(), median(row.values(&RetrievalMetrics::precision_at_1)));
    }
  }
  // The qrels reranker can only move relevant candidates up.
  for (std::size_t s = 0; s < 2; ++s) {
    EXPECT_GE(r.rows[3].per_seed[s]->precision_at_1, r.rows[2].per_seed[s]->precision_at_1);
  }
  EXPECT_EQ(r.traces.size(), 2u * 5u);
  const std::string md = experiment_markdown(r);
  EXPECT_NE(md.find("| config | seed 1 | seed 2 | median |"), std::string::npos);
  EXPECT_NE(md.find("| +reranker (trained) |"), std::string::npos);
  const std::string csv = experiment_csv(r);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "table,config,metric,seed_1,seed_2,median");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 1 + 2 * 5);
}

TEST(Experiment, RerunReproducesTracesAndMetricsBitwise) {
  ExperimentConfig c = tiny_experiment();
  c.seeds = {5};
  const ExperimentReport a = run_experiment(c), b = run_experiment(c);
  ASSERT_EQ(a.traces.size(), b.traces.size());
  for (std::size_t i = 0; i < a.traces.size(); ++i) EXPECT_EQ(a.traces[i].report.losses, b.traces[i].report.losses);
  EXPECT_EQ(result_digest(a), result_digest(b));
  EXPECT_EQ(experiment_csv(a), experiment_csv(b));
}

TEST(Experiment, StageFailureGivesPartialReport) {
  ExperimentConfig c = tiny_experiment();
  ExperimentHooks hooks;
  hooks.before_stage = [](std::uint64_t seed, const std::string& stage) {
    if (seed == 2 && stage == "judge_ft") throw TrainingError("injected");
  };
  const ExperimentReport r = run_experiment(c, hooks);
  ASSERT_EQ(r.failures.size(), 1u);
  EXPECT_EQ(r.failures[0], "seed 2, stage judge_ft: injected");
  EXPECT_TRUE(r.row(kRowWarmup).per_seed[1].has_value());
  EXPECT_TRUE(r.row(kRowGlobalHnm).per_seed[1].has_value());
  EXPECT_FALSE(r.row(kRowJudgeFt).per_seed[1].has_value());
  EXPECT_FALSE(r.row(kRowReranker).per_seed[1].has_value());
  EXPECT_FALSE(r.row(kRowTrainedReranker).per_seed[1].has_value());
  EXPECT_TRUE(r.row(kRowJudgeFt).per_seed[0].has_value());
  EXPECT_EQ(r.row(kRowJudgeFt).median_p1(), r.row(kRowJudgeFt).per_seed[0]->precision_at_1);

  const std::string md = experiment_markdown(r);
  EXPECT_NE(md.find("## Failures"), std::string::npos);
  EXPECT_NE(md.find(" | - | "), std::string::npos);
  EXPECT_NE(experiment_csv(r).find(",-,"), std::string::npos);
  EXPECT_FALSE(to_json(r).at("complete").get<bool>());

  hooks.before_stage = [](std::uint64_t, const std::string& stage) {
    if (stage == "data") throw ConfigError("no data");
  };
  const ExperimentReport none = run_experiment(c, hooks);
  EXPECT_EQ(none.failures.size(), 2u);
  EXPECT_EQ(none.row(kRowWarmup).median_p1(), std::nullopt);
  EXPECT_EQ(experiment_markdown(none).find("0.000"), std::string::npos);
}

TEST(Experiment, SweepHasBothArmsPerHardNegativeCount) {
  ExperimentConfig c = tiny_experiment();
  c.kind = ExperimentKind::sweep;
  c.seeds = {3};
  c.sweep_n = {0, 4};
  const ExperimentReport r = run_experiment(c);
  ASSERT_TRUE(r.complete()) << r.failures.front();
  ASSERT_EQ(r.rows.size(), 4u);
  EXPECT_EQ(r.rows[0].label, "MLLM-based n=0");
  EXPECT_EQ(r.rows[1].label, "rule-based n=0");
  EXPECT_EQ(r.rows[3].label, "rule-based n=4");
  // n = 0 leaves only in-batch negatives, so both arms train identically.
  EXPECT_EQ(r.rows[0].per_seed[0], r.rows[1].per_seed[0]);
  EXPECT_TRUE(r.reranker_rows.empty());
  EXPECT_NE(experiment_markdown(r).find("| n | MLLM-based | rule-based |"), std::string::npos);
}

TEST(Experiment, CachedStageTwoMatchesFreshRun) {
  ExperimentConfig c = tiny_experiment();
  c.seeds = {4};
  const ExperimentReport fresh = run_experiment(c);
  c.cache_dir = scratch("cache").string();
  const ExperimentReport first = run_experiment(c), second = run_experiment(c);
  EXPECT_EQ(result_digest(fresh), result_digest(first));
  EXPECT_TRUE(first.log.empty());
  ASSERT_EQ(second.log.size(), 1u);
  EXPECT_NE(second.log[0].find("loaded from"), std::string::npos);
  for (std::size_t i = 0; i < fresh.rows.size(); ++i) EXPECT_EQ(fresh.rows[i].per_seed, second.rows[i].per_seed);
  EXPECT_EQ(fresh.reranker_rows[0].per_seed, second.reranker_rows[0].per_seed);
}

TEST(Experiment, ReportFilesAreWritten) {
  ExperimentConfig c = tiny_experiment();
  c.seeds = {6};
  const ExperimentReport r = run_experiment(c);
  const fs::path dir = scratch("report");
  save_experiment_report(dir, r);
  EXPECT_EQ(read_file(dir / "report.md"), experiment_markdown(r));
  EXPECT_EQ(read_file(dir / "report.csv"), experiment_csv(r));
  const auto j = nlohmann::json::parse(read_file(dir / "report.json"));
  EXPECT_EQ(j.at("rows").size(), 4u);
  EXPECT_EQ(j.at("traces").at(0).at("losses").size(), 6u);
}
