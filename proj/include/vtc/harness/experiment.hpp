#pragma once

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "vtc/curation/judge.hpp"
#include "vtc/harness/config.hpp"
#include "vtc/harness/corpus_io.hpp"
#include "vtc/retrieval/evaluate.hpp"
#include "vtc/trainer/stages.hpp"

namespace vtc {

inline constexpr const char* kRowWarmup = "warmup";
inline constexpr const char* kRowGlobalHnm = "+global-HNM";
inline constexpr const char* kRowJudgeFt = "+judge-FT";
inline constexpr const char* kRowReranker = "+reranker";
inline constexpr const char* kRowTrainedReranker = "+reranker (trained)";
inline constexpr const char* kArmJudged = "MLLM-based";
inline constexpr const char* kArmRule = "rule-based";

inline std::string sweep_row_label(const std::string& arm, std::size_t n) { return arm + " n=" + std::to_string(n); }

inline std::optional<double> median(std::vector<double> v) {
  if (v.empty()) return std::nullopt;
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

/// One report row: a configuration measured under every seed.
struct ExperimentRow {
  std::string label;
  std::vector<std::optional<RetrievalMetrics>> per_seed;  // parallel to the report seeds

  std::vector<double> values(double RetrievalMetrics::*field) const {
    std::vector<double> out;
    for (const auto& m : per_seed) {
      if (m) out.push_back((*m).*field);
    }
    return out;
  }
  std::optional<double> median_p1() const { return median(values(&RetrievalMetrics::precision_at_1)); }
  std::optional<double> median_ndcg() const { return median(values(&RetrievalMetrics::ndcg_at_5)); }
};

struct NamedTrace {
  std::uint64_t seed = 0;
  std::string name;
  TrainReport report;
};

struct ExperimentReport {
  std::string name;
  ExperimentKind kind = ExperimentKind::ablation;
  std::vector<std::uint64_t> seeds;
  std::string config_hash;
  std::vector<ExperimentRow> rows;
  std::vector<ExperimentRow> reranker_rows;  // trained reranker, kept out of the main table
  std::vector<std::string> corpus_hashes;    // per seed, "-" when generation failed
  std::vector<NamedTrace> traces;
  std::vector<std::string> failures;
  std::vector<std::string> log;
  double wall_clock_seconds = 0.0;

  bool complete() const { return failures.empty(); }

  const ExperimentRow& row(const std::string& label) const {
    for (const auto* table : {&rows, &reranker_rows}) {
      for (const auto& r : *table) {
        if (r.label == label) return r;
      }
    }
    throw ContractError("report has no row '" + label + "'");
  }
};

/// Test and CLI hooks. `before_stage` may throw to inject a failure.
struct ExperimentHooks {
  std::function<void(const std::string&)> on_progress;
  std::function<void(std::uint64_t seed, const std::string& stage)> before_stage;
};

namespace experiment_detail {

inline ExperimentRow& find_row(std::vector<ExperimentRow>& rows, const std::string& label) {
  for (auto& r : rows) {
    if (r.label == label) return r;
  }
  throw ContractError("no report row '" + label + "'");
}

inline std::unique_ptr<Judge> make_judge(const ExperimentConfig& c, const SyntheticDataset& ds) {
  if (c.judge == "rule") return std::make_unique<AlwaysIrrelevantJudge>();
  return std::make_unique<ClassOracleJudge>(ds.labels, c.judge_noise, SeedTree(c.data.seed).child("judge").root());
}

inline std::string stage2_cache_key(const ExperimentConfig& c) {
  const nlohmann::json j = {{"model", to_json(c.model)},
                            {"data", to_json(c.data)},
                            {"restore", to_json(c.stage1)},
                            {"warmup", to_json(c.warmup)},
                            {"global_hnm", to_json(c.global_hnm)}};
  return sha256_hex(j.dump()).substr(0, 24);
}

struct Stage2Models {
  Checkpoint restore, warmup, global_hnm;
};

class SeedRun {
 public:
  SeedRun(const ExperimentConfig& c, std::size_t index, ExperimentReport& report, const ExperimentHooks& hooks)
      : c_(c), seed_(c.data.seed), index_(index), report_(report), hooks_(hooks) {}

  void run() {
    enter("data");
    ds_ = generate_corpus(c_.data, c_.model);
    std::ostringstream corpus;
    write_corpus(corpus, ds_);
    report_.corpus_hashes[index_] = sha256_hex(corpus.str());
    data_ = RetrievalData{&ds_.train_queries, &ds_.candidates, {}};
    for (const auto& [q, p] : ds_.train_positive) data_.pairs.push_back({q, p});

    const Stage2Models m = stage2();
    if (c_.kind == ExperimentKind::ablation) {
      ablation(m);
    } else {
      sweep(m);
    }
  }

  const std::string& stage() const { return stage_; }

 private:
  void enter(const std::string& stage) {
    stage_ = stage;
    if (hooks_.on_progress) hooks_.on_progress("seed " + std::to_string(seed_) + ": " + stage);
    if (hooks_.before_stage) hooks_.before_stage(seed_, stage);
  }

  void trace(const std::string& name, TrainReport r) { report_.traces.push_back({seed_, name, std::move(r)}); }

  std::vector<RankedResult> retrieve(const Model& model) const {
    const CandidateIndex index = build_index(model, ds_.candidates);
    return retrieve_all(model, ds_.eval_queries, index, c_.eval_depth);
  }

  void record(std::vector<ExperimentRow>& table, const std::string& label, const std::vector<RankedResult>& results) {
    find_row(table, label).per_seed[index_] = score_results(results, ds_.qrels);
  }

  Stage2Models stage2() {
    namespace fs = std::filesystem;
    fs::path dir;
    if (!c_.cache_dir.empty()) {
      dir = fs::path(c_.cache_dir) / ("stage2-" + stage2_cache_key(c_));
      if (fs::exists(dir / "global_hnm.ckpt")) {
        enter("cache");
        report_.log.push_back("seed " + std::to_string(seed_) + ": stages 1-2 loaded from " + dir.string());
        return {load_checkpoint(dir / "restore.ckpt"), load_checkpoint(dir / "warmup.ckpt"),
                load_checkpoint(dir / "global_hnm.ckpt")};
      }
    }
    enter("restore");
    Checkpoint ck{Model(c_.model), TrainingStage::initial};
    trace("restore", run_stage1(c_.stage1, ck, ds_.instruction_corpus()));
    Checkpoint restore = ck;

    enter("warmup");
    TrainReport a = run_warmup(c_.warmup, ck, data_);
    const std::size_t warmup_steps = a.losses.size();
    trace("warmup", std::move(a));
    Checkpoint warmup = ck;

    enter("mining");
    StagePlan hnm = c_.global_hnm;
    const std::vector<MinedNegatives> mined = mine_stage2_negatives(ck.model, data_, hnm);
    enter("global_hnm");
    if (hnm.steps == 0 && hnm.epochs <= 0.0) hnm.steps = warmup_steps;
    trace("global_hnm", run_global_hnm(hnm, ck, data_, mined));

    if (!dir.empty()) {
      save_checkpoint(dir / "restore.ckpt", restore.model, restore.stage);
      save_checkpoint(dir / "warmup.ckpt", warmup.model, warmup.stage);
      save_checkpoint(dir / "global_hnm.ckpt", ck.model, ck.stage);
    }
    return {std::move(restore), std::move(warmup), std::move(ck)};
  }

  void ablation(const Stage2Models& m) {
    enter("eval warmup");
    record(report_.rows, kRowWarmup, retrieve(m.warmup.model));
    enter("eval global_hnm");
    record(report_.rows, kRowGlobalHnm, retrieve(m.global_hnm.model));

    enter("curation");
    const auto judge = make_judge(c_, ds_);
    const std::vector<CuratedSample> curated =
        curate_training_set(m.global_hnm.model, data_, *judge, c_.judge_depth);

    enter("judge_ft");
    Checkpoint ck = m.global_hnm;
    trace("judge_ft", run_stage3(c_.judge_ft, ck, data_, curated));
    const std::vector<RankedResult> results = retrieve(ck.model);
    record(report_.rows, kRowJudgeFt, results);

    enter("rerank");
    QrelsScorer oracle(ds_.qrels);
    record(report_.rows, kRowReranker, rerank_all(results, ds_.eval_queries, ds_.candidates, oracle, c_.rerank_depth));

    if (c_.train_reranker) {
      enter("reranker");
      Checkpoint rk = m.restore;
      trace("reranker", run_reranker(c_.reranker, rk, data_, curated));
      ModelReranker scorer(rk.model);
      std::vector<std::string> failed;
      record(report_.reranker_rows, kRowTrainedReranker,
             rerank_all(results, ds_.eval_queries, ds_.candidates, scorer, c_.rerank_depth, &failed));
      if (!failed.empty()) {
        report_.log.push_back("seed " + std::to_string(seed_) + ": " + std::to_string(failed.size()) +
                              " rerank prompts overflowed and kept their embedder score");
      }
    }
  }

  void sweep(const Stage2Models& m) {
    enter("curation");
    const auto judge = make_judge(c_, ds_);
    AlwaysIrrelevantJudge rule;
    const std::vector<CuratedSample> judged = curate_training_set(m.global_hnm.model, data_, *judge, c_.judge_depth);
    const std::vector<CuratedSample> ruled = curate_training_set(m.global_hnm.model, data_, rule, c_.judge_depth);
    for (std::size_t n : c_.sweep_n) {
      for (const auto& [arm, curated] : {std::pair{kArmJudged, &judged}, std::pair{kArmRule, &ruled}}) {
        const std::string label = sweep_row_label(arm, n);
        enter("judge_ft " + label);
        StagePlan plan = c_.judge_ft;
        plan.hard_negatives = n;
        Checkpoint ck = m.global_hnm;
        trace("judge_ft " + label, run_stage3(plan, ck, data_, *curated));
        record(report_.rows, label, retrieve(ck.model));
      }
    }
  }

  const ExperimentConfig& c_;
  std::uint64_t seed_;
  std::size_t index_;
  ExperimentReport& report_;
  const ExperimentHooks& hooks_;
  std::string stage_ = "setup";
  SyntheticDataset ds_;
  RetrievalData data_;
};

}  // namespace experiment_detail

/// Runs the configured pipeline slice once per seed. A failing seed leaves
/// its remaining cells empty and adds a failure note; other seeds still run.
inline ExperimentReport run_experiment(const ExperimentConfig& config, const ExperimentHooks& hooks = {}) {
  config.validate();
  const auto start = std::chrono::steady_clock::now();
  ExperimentReport report;
  report.name = config.name;
  report.kind = config.kind;
  report.seeds = config.seeds;
  report.config_hash = config_hash(config);
  report.corpus_hashes.assign(config.seeds.size(), "-");

  std::vector<std::string> labels, reranker_labels;
  if (config.kind == ExperimentKind::ablation) {
    labels = {kRowWarmup, kRowGlobalHnm, kRowJudgeFt, kRowReranker};
    if (config.train_reranker) reranker_labels = {kRowTrainedReranker};
  } else {
    for (std::size_t n : config.sweep_n) {
      labels.push_back(sweep_row_label(kArmJudged, n));
      labels.push_back(sweep_row_label(kArmRule, n));
    }
  }
  const auto empty_row = [&](const std::string& l) {
    return ExperimentRow{l, std::vector<std::optional<RetrievalMetrics>>(config.seeds.size())};
  };
  for (const auto& l : labels) report.rows.push_back(empty_row(l));
  for (const auto& l : reranker_labels) report.reranker_rows.push_back(empty_row(l));

  for (std::size_t i = 0; i < config.seeds.size(); ++i) {
    const ExperimentConfig c = seeded(config, config.seeds[i]);
    experiment_detail::SeedRun run(c, i, report, hooks);
    try {
      run.run();
    } catch (const std::exception& e) {
      report.failures.push_back("seed " + std::to_string(config.seeds[i]) + ", stage " + run.stage() + ": " + e.what());
    }
  }
  report.wall_clock_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

namespace experiment_detail {

inline std::string cell(const std::optional<double>& v, int digits) {
  if (!v) return "-";
  std::ostringstream out;
  out.setf(std::ios::fixed);
  out.precision(digits);
  out << *v;
  return out.str();
}

inline std::string markdown_table(const ExperimentReport& r, const std::vector<ExperimentRow>& rows,
                                  double RetrievalMetrics::*field) {
  std::string out = "| config |";
  std::string rule = "|---|";
  for (auto s : r.seeds) {
    out += " seed " + std::to_string(s) + " |";
    rule += "---:|";
  }
  out += " median |\n" + rule + "---:|\n";
  for (const auto& row : rows) {
    out += "| " + row.label + " |";
    for (const auto& m : row.per_seed) out += " " + cell(m ? std::optional<double>((*m).*field) : std::nullopt, 3) + " |";
    out += " " + cell(median(row.values(field)), 3) + " |\n";
  }
  return out;
}

inline nlohmann::json optional_json(const std::optional<double>& v) {
  return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

inline nlohmann::json rows_json(const std::vector<ExperimentRow>& rows) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& row : rows) {
    nlohmann::json seeds = nlohmann::json::array();
    for (const auto& m : row.per_seed) {
      seeds.push_back(m ? nlohmann::json{{"precision_at_1", m->precision_at_1},
                                         {"ndcg_at_5", m->ndcg_at_5},
                                         {"queries", m->queries}}
                        : nlohmann::json(nullptr));
    }
    out.push_back({{"config", row.label},
                   {"per_seed", seeds},
                   {"median_precision_at_1", optional_json(row.median_p1())},
                   {"median_ndcg_at_5", optional_json(row.median_ndcg())}});
  }
  return out;
}

}  // namespace experiment_detail

/// Markdown report: P@1 and NDCG@5 tables with one column per seed and a
/// median column, the trained reranker apart, and any failures.
inline std::string experiment_markdown(const ExperimentReport& r) {
  using namespace experiment_detail;
  std::string out = "# " + r.name + " (" + experiment_kind_name(r.kind) + ")\n\n";
  out += "config hash `" + r.config_hash + "`\n\n";
  out += "## P@1\n\n" + markdown_table(r, r.rows, &RetrievalMetrics::precision_at_1) + "\n";
  out += "## NDCG@5\n\n" + markdown_table(r, r.rows, &RetrievalMetrics::ndcg_at_5) + "\n";
  if (r.kind == ExperimentKind::sweep) {
    out += "## Median P@1 by hard-negative count\n\n| n | " + std::string(kArmJudged) + " | " + kArmRule +
           " |\n|---:|---:|---:|\n";
    std::vector<std::string> seen;
    for (const auto& row : r.rows) {
      const std::string n = row.label.substr(row.label.find("n=") + 2);
      if (std::find(seen.begin(), seen.end(), n) != seen.end()) continue;
      seen.push_back(n);
      const auto at = [&](const char* arm) { return cell(r.row(std::string(arm) + " n=" + n).median_p1(), 3); };
      out += "| " + n + " | " + at(kArmJudged) + " | " + at(kArmRule) + " |\n";
    }
    out += "\n";
  }
  if (!r.reranker_rows.empty()) {
    out += "## Trained reranker over +judge-FT retrieval\n\n### P@1\n\n" +
           markdown_table(r, r.reranker_rows, &RetrievalMetrics::precision_at_1) + "\n### NDCG@5\n\n" +
           markdown_table(r, r.reranker_rows, &RetrievalMetrics::ndcg_at_5) + "\n";
  }
  if (!r.failures.empty()) {
    out += "## Failures\n\n";
    for (const auto& f : r.failures) out += "- " + f + "\n";
    out += "\n";
  }
  return out;
}

/// table,config,metric,seed_<s>...,median with "-" for missing cells.
inline std::string experiment_csv(const ExperimentReport& r) {
  std::string out = "table,config,metric";
  for (auto s : r.seeds) out += ",seed_" + std::to_string(s);
  out += ",median\n";
  const auto emit = [&](const char* table, const std::vector<ExperimentRow>& rows) {
    for (const auto& row : rows) {
      for (const auto& [metric, field] : {std::pair{"P@1", &RetrievalMetrics::precision_at_1},
                                          std::pair{"NDCG@5", &RetrievalMetrics::ndcg_at_5}}) {
        out += std::string(table) + "," + row.label + "," + metric;
        for (const auto& m : row.per_seed) out += "," + (m ? tsv::format_double((*m).*field) : std::string("-"));
        const auto med = median(row.values(field));
        out += "," + (med ? tsv::format_double(*med) : std::string("-")) + "\n";
      }
    }
  };
  emit("main", r.rows);
  emit("trained_reranker", r.reranker_rows);
  return out;
}

/// Full report. Wall-clock figures sit under "timing" so the rest can be
/// compared across reruns.
inline nlohmann::json to_json(const ExperimentReport& r) {
  using namespace experiment_detail;
  nlohmann::json traces = nlohmann::json::array(), timing = {{"total_seconds", r.wall_clock_seconds}};
  nlohmann::json stage_seconds = nlohmann::json::array();
  for (const auto& t : r.traces) {
    nlohmann::json j = to_json(t.report);
    j.erase("wall_clock_seconds");
    j["seed"] = t.seed;
    j["name"] = t.name;
    traces.push_back(std::move(j));
    stage_seconds.push_back({{"seed", t.seed}, {"name", t.name}, {"seconds", t.report.wall_clock_seconds}});
  }
  timing["stages"] = std::move(stage_seconds);
  return {{"name", r.name},
          {"kind", experiment_kind_name(r.kind)},
          {"seeds", r.seeds},
          {"config_hash", r.config_hash},
          {"corpus_hashes", r.corpus_hashes},
          {"rows", rows_json(r.rows)},
          {"reranker_rows", rows_json(r.reranker_rows)},
          {"traces", traces},
          {"failures", r.failures},
          {"log", r.log},
          {"complete", r.complete()},
          {"timing", timing}};
}

/// SHA-256 of the report without timing: equal digests mean equal loss
/// traces, metrics and corpora.
inline std::string result_digest(const ExperimentReport& r) {
  nlohmann::json j = to_json(r);
  j.erase("timing");
  return sha256_hex(j.dump());
}

/// Writes <dir>/report.md, report.csv and report.json.
inline void save_experiment_report(const std::filesystem::path& dir, const ExperimentReport& r) {
  write_file_atomic(dir / "report.md", experiment_markdown(r));
  write_file_atomic(dir / "report.csv", experiment_csv(r));
  write_file_atomic(dir / "report.json", to_json(r).dump(2) + "\n");
}

}  // namespace vtc
