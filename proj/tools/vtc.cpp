// vtc: command-line driver for data generation, training, curation,
// evaluation, profiling and experiments. Exit codes: 0 ok, 1 usage, 2 failure.

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "vtc/harness/config.hpp"
#include "vtc/harness/corpus_io.hpp"
#include "vtc/harness/experiment.hpp"
#include "vtc/harness/manifest.hpp"
#include "vtc/profiler/profiler.hpp"
#include "vtc/retrieval/evaluate.hpp"
#include "vtc/trainer/stages.hpp"

namespace fs = std::filesystem;
using namespace vtc;

namespace {

struct Common {
  std::optional<std::uint64_t> seed;
  std::string config;
  std::string preset = "table4";
  std::string out = ".";
};

void add_common(CLI::App* sub, Common& c) {
  sub->add_option("--seed", c.seed, "Run seed (overrides the config seeds)");
  sub->add_option("--config", c.config, "Experiment config JSON (schema_version 1)")->check(CLI::ExistingFile);
  sub->add_option("--out", c.out, "Output directory")->capture_default_str();
}

struct Run {
  std::string command;
  std::vector<std::string> argv;
  Common common;
  ExperimentConfig config;  // seeded for single-run commands
  std::uint64_t seed = 0;
  fs::path out;
  std::string corpus_hash = "-";
  std::vector<fs::path> outputs;

  void resolve(bool single_seed) {
    ExperimentConfig base = experiment_preset(common.preset);
    config = common.config.empty() ? base : load_experiment_config(common.config, base);
    if (common.seed) config.seeds = {*common.seed};
    seed = config.seeds.front();
    if (single_seed) config = seeded(config, seed);
    out = common.out;
    fs::create_directories(out);
  }

  SyntheticDataset corpus(const std::string& path, const ModelConfig& cfg) {
    corpus_hash = sha256_hex(read_file(path));
    return load_corpus(path, cfg);
  }

  fs::path output(const std::string& name) {
    outputs.push_back(out / name);
    return outputs.back();
  }

  void write(const std::string& name, const std::string& bytes) { write_file_atomic(output(name), bytes); }

  void finish() {
    Manifest m;
    m.command = command;
    m.argv = argv;
    m.seed = seed;
    m.config = to_json(config);
    m.config_hash = config_hash(config);
    m.corpus_hash = corpus_hash;
    for (const auto& p : outputs) m.add_output(p);
    save_manifest(out / "manifest.json", m);
    std::cout << "wrote " << outputs.size() << " file(s) and manifest.json to " << out.string() << "\n";
  }
};

RetrievalData retrieval_data(const SyntheticDataset& ds) {
  RetrievalData d{&ds.train_queries, &ds.candidates, {}};
  for (const auto& [q, c] : ds.train_positive) d.pairs.push_back({q, c});
  return d;
}

std::string metrics_csv(const RetrievalMetrics& m, RankStage stage) {
  return "stage,queries,precision_at_1,ndcg_at_5\n" + std::string(rank_stage_name(stage)) + "," +
         std::to_string(m.queries) + "," + tsv::format_double(m.precision_at_1) + "," +
         tsv::format_double(m.ndcg_at_5) + "\n";
}

std::string metrics_json(const RetrievalMetrics& m, RankStage stage) {
  return nlohmann::json{{"stage", rank_stage_name(stage)},
                        {"queries", m.queries},
                        {"precision_at_1", m.precision_at_1},
                        {"ndcg_at_5", m.ndcg_at_5}}
             .dump(2) +
         "\n";
}

std::string results_text(const std::vector<RankedResult>& results) {
  std::ostringstream out;
  write_results(out, results);
  return out.str();
}

std::unique_ptr<Judge> make_judge(const std::string& kind, const std::string& checkpoint, const SyntheticDataset& ds,
                                  const ExperimentConfig& cfg, std::optional<Model>& holder) {
  if (kind == "oracle") {
    return std::make_unique<ClassOracleJudge>(ds.labels, cfg.judge_noise, SeedTree(cfg.data.seed).child("judge").root());
  }
  if (kind == "rule") return std::make_unique<AlwaysIrrelevantJudge>();
  if (checkpoint.empty()) throw ConfigError("--judge model needs --judge-checkpoint");
  holder.emplace(load_checkpoint(checkpoint).model);
  return std::make_unique<ModelJudge>(*holder, TemplateRegistry::builtin().at(task_class_name(ds.task)));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Compressed multimodal embedding toolkit"};
  app.require_subcommand(1);
  Run run;
  for (int i = 0; i < argc; ++i) run.argv.emplace_back(argv[i]);

  std::string corpus, checkpoint, mined_path, curated_path, stage_name_arg, judge_kind = "oracle", judge_ckpt,
      pairs_path, reranker = "oracle", factors_arg = "1,2,4";
  std::size_t depth = 0, k = 20, trials = 10, grid = 16;
  std::string cache_dir;

  auto* gen = app.add_subcommand("gen-data", "Generate a synthetic corpus and qrels");
  add_common(gen, run.common);

  auto* train = app.add_subcommand("train", "Run one training stage");
  add_common(train, run.common);
  train->add_option("--stage", stage_name_arg, "restore, warmup, global_hnm, judge_ft, reranker or judge")
      ->required()
      ->check(CLI::IsMember({"restore", "warmup", "global_hnm", "judge_ft", "reranker", "judge"}));
  train->add_option("--corpus", corpus, "Corpus JSONL")->required()->check(CLI::ExistingFile);
  train->add_option("--checkpoint", checkpoint, "Input checkpoint")->check(CLI::ExistingFile);
  train->add_option("--mined", mined_path, "Mined negatives JSONL (global_hnm)")->check(CLI::ExistingFile);
  train->add_option("--curated", curated_path, "Curated samples JSONL (judge_ft, reranker)")->check(CLI::ExistingFile);

  auto* mine = app.add_subcommand("mine", "Mine global hard negatives with a warmup checkpoint");
  add_common(mine, run.common);
  mine->add_option("--corpus", corpus, "Corpus JSONL")->required()->check(CLI::ExistingFile);
  mine->add_option("--checkpoint", checkpoint, "Warmup checkpoint")->required()->check(CLI::ExistingFile);

  auto* judge = app.add_subcommand("judge", "Judge query-candidate pairs");
  add_common(judge, run.common);
  judge->add_option("--corpus", corpus, "Corpus JSONL")->required()->check(CLI::ExistingFile);
  judge->add_option("--pairs", pairs_path, "TSV of query_id, candidate_id (default: training ground truth)")
      ->check(CLI::ExistingFile);
  judge->add_option("--judge", judge_kind, "oracle, rule or model")->check(CLI::IsMember({"oracle", "rule", "model"}));
  judge->add_option("--judge-checkpoint", judge_ckpt, "Checkpoint for --judge model")->check(CLI::ExistingFile);

  auto* curate = app.add_subcommand("curate", "Retrieve and judge the top candidates of every training query");
  add_common(curate, run.common);
  curate->add_option("--corpus", corpus, "Corpus JSONL")->required()->check(CLI::ExistingFile);
  curate->add_option("--checkpoint", checkpoint, "Retriever checkpoint")->required()->check(CLI::ExistingFile);
  curate->add_option("--judge", judge_kind, "oracle, rule or model")->check(CLI::IsMember({"oracle", "rule", "model"}));
  curate->add_option("--judge-checkpoint", judge_ckpt, "Checkpoint for --judge model")->check(CLI::ExistingFile);
  curate->add_option("--depth", depth, "Candidates judged per query (default from config)");

  auto* eval = app.add_subcommand("eval", "Embed-only retrieval on the eval queries");
  add_common(eval, run.common);
  eval->add_option("--corpus", corpus, "Corpus JSONL")->required()->check(CLI::ExistingFile);
  eval->add_option("--checkpoint", checkpoint, "Embedder checkpoint")->required()->check(CLI::ExistingFile);
  eval->add_option("--k", k, "Results kept per query")->capture_default_str();

  auto* rerank = app.add_subcommand("rerank-eval", "Embed, then rerank the top candidates");
  add_common(rerank, run.common);
  rerank->add_option("--corpus", corpus, "Corpus JSONL")->required()->check(CLI::ExistingFile);
  rerank->add_option("--checkpoint", checkpoint, "Embedder checkpoint")->required()->check(CLI::ExistingFile);
  rerank->add_option("--reranker", reranker, "Reranker checkpoint, or 'oracle' for the qrels scorer")
      ->capture_default_str();
  rerank->add_option("--k", k, "Results kept per query")->capture_default_str();
  rerank->add_option("--depth", depth, "Reranked prefix length (default from config)");

  auto* profile = app.add_subcommand("profile", "Token counts and encode latency per compression factor");
  add_common(profile, run.common);
  profile->add_option("--factors", factors_arg, "Comma-separated compression factors")->capture_default_str();
  profile->add_option("--trials", trials, "Timed runs per input")->capture_default_str();
  profile->add_option("--grid", grid, "Square grid side")->capture_default_str();

  auto* experiment = app.add_subcommand("experiment", "Run an ablation or sweep and write the report");
  add_common(experiment, run.common);
  experiment->add_option("--preset", run.common.preset, "table4, table5 or smoke")
      ->capture_default_str()
      ->check(CLI::IsMember(experiment_preset_names()));
  experiment->add_option("--cache", cache_dir, "Directory for reusable stage 1-2 checkpoints");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n";
    const auto subs = app.get_subcommands();
    std::cerr << (subs.empty() ? app.help() : subs.front()->help());
    return 1;
  }

  try {
    CLI::App* sub = app.get_subcommands().front();
    run.command = sub->get_name();
    run.resolve(sub != experiment);
    ExperimentConfig& cfg = run.config;

    if (sub == gen) {
      const SyntheticDataset ds = generate_corpus(cfg.data, cfg.model);
      save_corpus(run.output("corpus.jsonl"), ds);
      save_qrels(run.output("qrels.tsv"), ds.qrels);
      run.corpus_hash = sha256_hex(read_file(run.out / "corpus.jsonl"));
    } else if (sub == train) {
      Checkpoint ck = checkpoint.empty() ? Checkpoint{Model(cfg.model), TrainingStage::initial} : load_checkpoint(checkpoint);
      const SyntheticDataset ds = run.corpus(corpus, ck.model.config());
      const RetrievalData data = retrieval_data(ds);
      TrainReport report;
      if (stage_name_arg == "restore") {
        report = run_stage1(cfg.stage1, ck, ds.instruction_corpus());
      } else if (stage_name_arg == "warmup") {
        report = run_warmup(cfg.warmup, ck, data);
      } else if (stage_name_arg == "global_hnm") {
        if (mined_path.empty()) throw ConfigError("global_hnm training needs --mined");
        StagePlan plan = cfg.global_hnm;
        if (plan.steps == 0 && plan.epochs <= 0.0) plan.steps = cfg.warmup.resolve_steps(data.pairs.size());
        report = run_global_hnm(plan, ck, data, load_mined(mined_path));
      } else if (stage_name_arg == "judge_ft") {
        if (curated_path.empty()) throw ConfigError("judge_ft training needs --curated");
        report = run_stage3(cfg.judge_ft, ck, data, load_curated(curated_path));
      } else if (stage_name_arg == "reranker") {
        if (curated_path.empty()) throw ConfigError("reranker training needs --curated");
        report = run_reranker(cfg.reranker, ck, data, load_curated(curated_path));
      } else {
        // Judge: ground truth as YES, one other-class candidate as NO.
        std::vector<JudgeTrainingPair> pairs;
        std::mt19937_64 rng = SeedTree(run.seed).child("judge-pairs").engine();
        for (const auto& [q, c] : ds.train_positive) {
          pairs.push_back({q, c, true});
          for (int tries = 0; tries < 64; ++tries) {
            const auto& other = ds.candidates[uniform_index(rng, ds.candidates.size())];
            if (ds.labels.at(other.id) != ds.labels.at(q)) {
              pairs.push_back({q, other.id, false});
              break;
            }
          }
        }
        const auto& entry = TemplateRegistry::builtin().at(task_class_name(ds.task));
        report = train_judge(cfg.reranker, ck, ds.train_queries, ds.candidates, pairs,
                             TokenVocabulary::tokenize(entry.judgment_instruction,
                                                       static_cast<int>(ck.model.config().vocab_size)));
      }
      save_checkpoint(run.output(stage_name_arg + ".ckpt"), ck.model, ck.stage);
      save_report(run.out / (stage_name_arg + "_report"), report);
      run.outputs.push_back(run.out / (stage_name_arg + "_report.json"));
      run.outputs.push_back(run.out / (stage_name_arg + "_report.csv"));
      std::cout << stage_name_arg << ": " << report.losses.size() << " steps, final loss " << report.final_loss << "\n";
    } else if (sub == mine) {
      const Checkpoint ck = load_checkpoint(checkpoint);
      const SyntheticDataset ds = run.corpus(corpus, ck.model.config());
      save_mined(run.output("mined.jsonl"), mine_stage2_negatives(ck.model, retrieval_data(ds), cfg.global_hnm));
    } else if (sub == judge) {
      ModelConfig mcfg = cfg.model;
      if (!judge_ckpt.empty()) mcfg = load_checkpoint(judge_ckpt).model.config();
      const SyntheticDataset ds = run.corpus(corpus, mcfg);
      std::optional<Model> holder;
      auto j = make_judge(judge_kind, judge_ckpt, ds, cfg, holder);
      std::vector<std::pair<std::string, std::string>> pairs;
      if (pairs_path.empty()) {
        for (const auto& [q, c] : ds.train_positive) pairs.emplace_back(q, c);
      } else {
        std::istringstream in(read_file(pairs_path));
        std::size_t n = 0;
        for (const auto& line : tsv::read_lines(in)) {
          ++n;
          const auto f = tsv::split(line);
          if (f.size() != 2) throw FormatError("pairs line " + std::to_string(n) + ": expected 2 fields");
          pairs.emplace_back(f[0], f[1]);
        }
      }
      std::string out = "query_id\tcandidate_id\tlogit_yes\tlogit_no\tverdict\n";
      const auto lookup = [&](const std::string& id) -> const MultimodalExample& {
        if (ds.train_queries.contains(id)) return ds.train_queries.at(id);
        if (ds.eval_queries.contains(id)) return ds.eval_queries.at(id);
        return ds.candidates.at(id);
      };
      for (const auto& [q, c] : pairs) {
        const JudgeVerdict v = judge_pair(lookup(q), ds.candidates.at(c), *j);
        out += q + "\t" + c + "\t" + tsv::format_double(v.logit_yes) + "\t" + tsv::format_double(v.logit_no) + "\t" +
               verdict_name(v.verdict) + "\n";
      }
      run.write("verdicts.tsv", out);
    } else if (sub == curate) {
      const Checkpoint ck = load_checkpoint(checkpoint);
      const SyntheticDataset ds = run.corpus(corpus, ck.model.config());
      std::optional<Model> holder;
      auto j = make_judge(judge_kind, judge_ckpt, ds, cfg, holder);
      save_curated(run.output("curated.jsonl"),
                   curate_training_set(ck.model, retrieval_data(ds), *j, depth ? depth : cfg.judge_depth));
    } else if (sub == eval || sub == rerank) {
      const Checkpoint ck = load_checkpoint(checkpoint);
      const SyntheticDataset ds = run.corpus(corpus, ck.model.config());
      std::vector<RankedResult> results =
          retrieve_all(ck.model, ds.eval_queries, build_index(ck.model, ds.candidates), k);
      RankStage stage = RankStage::embed_only;
      if (sub == rerank) {
        std::unique_ptr<PairScorer> scorer;
        std::optional<Model> rk;
        if (reranker == "oracle") {
          scorer = std::make_unique<QrelsScorer>(ds.qrels);
        } else {
          rk.emplace(load_checkpoint(reranker).model);
          scorer = std::make_unique<ModelReranker>(*rk);
        }
        std::vector<std::string> failed;
        results = rerank_all(results, ds.eval_queries, ds.candidates, *scorer, depth ? depth : cfg.rerank_depth, &failed);
        if (!failed.empty()) std::cerr << failed.size() << " rerank prompt(s) overflowed; embedder scores kept\n";
        stage = RankStage::reranked;
      }
      const RetrievalMetrics m = score_results(results, ds.qrels);
      const std::string tag = rank_stage_name(stage);
      run.write("results_" + tag + ".tsv", results_text(results));
      run.write("metrics_" + tag + ".csv", metrics_csv(m, stage));
      run.write("metrics_" + tag + ".json", metrics_json(m, stage));
      std::cout << tag << ": P@1 " << m.precision_at_1 << ", NDCG@5 " << m.ndcg_at_5 << " over " << m.queries
                << " queries\n";
    } else if (sub == profile) {
      std::vector<std::size_t> factors;
      for (const auto& f : CLI::detail::split(factors_arg, ',')) {
        try {
          factors.push_back(std::stoul(f));
        } catch (const std::exception&) {
          throw ConfigError("bad compression factor '" + f + "'");
        }
      }
      ModelConfig base = cfg.model;
      base.grid_height = base.grid_width = grid;
      base.compression = 1;
      base.max_seq_len = std::max(base.max_seq_len, grid * grid + 64);
      const auto rows = efficiency_rows(profile_factors(base, factors, trials, run.seed));
      run.write("efficiency.csv", efficiency_csv(rows));
      run.write("efficiency.md", efficiency_markdown(rows));
      std::cout << efficiency_markdown(rows);
    } else if (sub == experiment) {
      if (!cache_dir.empty()) cfg.cache_dir = cache_dir;
      ExperimentHooks hooks;
      hooks.on_progress = [](const std::string& s) { std::cerr << "[experiment] " << s << "\n"; };
      const ExperimentReport report = run_experiment(cfg, hooks);
      save_experiment_report(run.out, report);
      for (const char* f : {"report.md", "report.csv", "report.json"}) run.outputs.push_back(run.out / f);
      std::vector<std::string> hashes;
      for (const auto& h : report.corpus_hashes) hashes.push_back(h);
      run.corpus_hash = sha256_hex(nlohmann::json(hashes).dump());
      run.finish();
      std::cout << experiment_markdown(report);
      if (!report.complete()) {
        std::cerr << "experiment finished with " << report.failures.size() << " failure(s)\n";
        return 2;
      }
      return 0;
    }
    run.finish();
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "vtc " << run.command << ": " << e.what() << "\n";
    return 2;
  }
}
