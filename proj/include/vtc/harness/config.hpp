#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "vtc/digest.hpp"
#include "vtc/errors.hpp"
#include "vtc/fileio.hpp"
#include "vtc/harness/synthetic.hpp"
#include "vtc/model/config.hpp"
#include "vtc/trainer/plan.hpp"

namespace vtc {

inline constexpr int kConfigSchemaVersion = 1;

inline nlohmann::json to_json(const ModelConfig& c) {
  return {{"vocab_size", c.vocab_size},     {"embed_dim", c.embed_dim},
          {"num_layers", c.num_layers},     {"num_heads", c.num_heads},
          {"grid_height", c.grid_height},   {"grid_width", c.grid_width},
          {"vision_channels", c.vision_channels}, {"compression", c.compression},
          {"max_seq_len", c.max_seq_len},   {"seed", c.seed}};
}

inline ModelConfig model_config_from_json(const nlohmann::json& j, ModelConfig c = {}) {
  try {
    c.vocab_size = j.value("vocab_size", c.vocab_size);
    c.embed_dim = j.value("embed_dim", c.embed_dim);
    c.num_layers = j.value("num_layers", c.num_layers);
    c.num_heads = j.value("num_heads", c.num_heads);
    c.grid_height = j.value("grid_height", c.grid_height);
    c.grid_width = j.value("grid_width", c.grid_width);
    c.vision_channels = j.value("vision_channels", c.vision_channels);
    c.compression = j.value("compression", c.compression);
    c.max_seq_len = j.value("max_seq_len", c.max_seq_len);
    c.seed = j.value("seed", c.seed);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("model config: ") + e.what());
  }
  c.validate();
  return c;
}

inline nlohmann::json to_json(const SyntheticTaskSpec& s) {
  return {{"task", task_class_name(s.task)},
          {"num_classes", s.num_classes},
          {"corpus_size", s.corpus_size},
          {"members_per_class", s.members_per_class},
          {"queries_per_class", s.queries_per_class},
          {"eval_queries_per_class", s.eval_queries_per_class},
          {"noise_rate", s.noise_rate},
          {"member_noise", s.member_noise},
          {"decoy_similarity", s.decoy_similarity},
          {"motif_length", s.motif_length},
          {"seed", s.seed}};
}

inline SyntheticTaskSpec task_spec_from_json(const nlohmann::json& j, SyntheticTaskSpec s = {}) {
  try {
    if (j.contains("task")) s.task = parse_task_class(j.at("task").get<std::string>());
    s.num_classes = j.value("num_classes", s.num_classes);
    s.corpus_size = j.value("corpus_size", s.corpus_size);
    s.members_per_class = j.value("members_per_class", s.members_per_class);
    s.queries_per_class = j.value("queries_per_class", s.queries_per_class);
    s.eval_queries_per_class = j.value("eval_queries_per_class", s.eval_queries_per_class);
    s.noise_rate = j.value("noise_rate", s.noise_rate);
    s.member_noise = j.value("member_noise", s.member_noise);
    s.decoy_similarity = j.value("decoy_similarity", s.decoy_similarity);
    s.motif_length = j.value("motif_length", s.motif_length);
    s.seed = j.value("seed", s.seed);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("data config: ") + e.what());
  }
  return s;
}

/// ablation: cumulative stage rows. sweep: stage-3 runs over hard-negative
/// counts for the judged and rule-based arms.
enum class ExperimentKind { ablation, sweep };

inline const char* experiment_kind_name(ExperimentKind k) { return k == ExperimentKind::ablation ? "ablation" : "sweep"; }

inline ExperimentKind parse_experiment_kind(const std::string& s) {
  if (s == "ablation") return ExperimentKind::ablation;
  if (s == "sweep") return ExperimentKind::sweep;
  throw ConfigError("unknown experiment kind '" + s + "' (expected ablation or sweep)");
}

/// Everything a pipeline run needs. Per-seed runs overwrite the model,
/// data and plan seeds with the run seed.
struct ExperimentConfig {
  std::string name = "custom";
  ExperimentKind kind = ExperimentKind::ablation;
  std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};
  ModelConfig model;
  SyntheticTaskSpec data;
  StagePlan stage1, warmup, global_hnm, judge_ft, reranker;
  std::string judge = "oracle";  // oracle | rule
  double judge_noise = 0.0;
  std::size_t judge_depth = 20;
  std::size_t eval_depth = 20;
  std::size_t rerank_depth = 5;
  bool train_reranker = true;
  std::vector<std::size_t> sweep_n = {0, 4, 8, 12, 16, 20};
  std::string cache_dir;  // reuse stage 1-2 checkpoints across runs; empty disables

  void validate() const {
    if (seeds.empty()) throw ConfigError("experiment needs at least one seed");
    model.validate();
    data.validate(model);
    for (const StagePlan* p : {&stage1, &warmup, &global_hnm, &judge_ft, &reranker}) p->validate();
    if (judge != "oracle" && judge != "rule") throw ConfigError("judge must be oracle or rule, got '" + judge + "'");
    if (judge_depth == 0 || eval_depth == 0) throw ConfigError("judge and eval depth must be positive");
    if (kind == ExperimentKind::sweep && sweep_n.empty()) throw ConfigError("sweep needs at least one n");
  }

  friend bool operator==(const ExperimentConfig&, const ExperimentConfig&) = default;
};

inline nlohmann::json to_json(const ExperimentConfig& c) {
  return {{"schema_version", kConfigSchemaVersion},
          {"name", c.name},
          {"kind", experiment_kind_name(c.kind)},
          {"seeds", c.seeds},
          {"model", to_json(c.model)},
          {"data", to_json(c.data)},
          {"stages",
           {{"restore", to_json(c.stage1)},
            {"warmup", to_json(c.warmup)},
            {"global_hnm", to_json(c.global_hnm)},
            {"judge_ft", to_json(c.judge_ft)},
            {"reranker", to_json(c.reranker)}}},
          {"judge", c.judge},
          {"judge_noise", c.judge_noise},
          {"judge_depth", c.judge_depth},
          {"eval_depth", c.eval_depth},
          {"rerank_depth", c.rerank_depth},
          {"train_reranker", c.train_reranker},
          {"sweep_n", c.sweep_n},
          {"cache_dir", c.cache_dir}};
}

/// Unspecified fields keep the values of `base`.
inline ExperimentConfig experiment_config_from_json(const nlohmann::json& j, ExperimentConfig base = {}) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  if (!j.contains("schema_version")) throw ConfigError("config lacks schema_version");
  const int version = j.at("schema_version").is_number_integer() ? j.at("schema_version").get<int>() : -1;
  if (version != kConfigSchemaVersion) {
    throw MigrationError("config schema_version " + j.at("schema_version").dump() + " is not supported (expected " +
                         std::to_string(kConfigSchemaVersion) + ")");
  }
  ExperimentConfig c = std::move(base);
  try {
    c.name = j.value("name", c.name);
    if (j.contains("kind")) c.kind = parse_experiment_kind(j.at("kind").get<std::string>());
    c.seeds = j.value("seeds", c.seeds);
    if (j.contains("model")) c.model = model_config_from_json(j.at("model"), c.model);
    if (j.contains("data")) c.data = task_spec_from_json(j.at("data"), c.data);
    if (j.contains("stages")) {
      const auto& s = j.at("stages");
      for (const auto& [key, value] : s.items()) {
        if (key != "restore" && key != "warmup" && key != "global_hnm" && key != "judge_ft" && key != "reranker") {
          throw ConfigError("unknown stage '" + key + "' in config");
        }
      }
      if (s.contains("restore")) c.stage1 = plan_from_json(s.at("restore"), c.stage1);
      if (s.contains("warmup")) c.warmup = plan_from_json(s.at("warmup"), c.warmup);
      if (s.contains("global_hnm")) c.global_hnm = plan_from_json(s.at("global_hnm"), c.global_hnm);
      if (s.contains("judge_ft")) c.judge_ft = plan_from_json(s.at("judge_ft"), c.judge_ft);
      if (s.contains("reranker")) c.reranker = plan_from_json(s.at("reranker"), c.reranker);
    }
    c.judge = j.value("judge", c.judge);
    c.judge_noise = j.value("judge_noise", c.judge_noise);
    c.judge_depth = j.value("judge_depth", c.judge_depth);
    c.eval_depth = j.value("eval_depth", c.eval_depth);
    c.rerank_depth = j.value("rerank_depth", c.rerank_depth);
    c.train_reranker = j.value("train_reranker", c.train_reranker);
    c.sweep_n = j.value("sweep_n", c.sweep_n);
    c.cache_dir = j.value("cache_dir", c.cache_dir);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  c.validate();
  return c;
}

/// Training schedule the experiment presets share. The learning rate is
/// raised from the plan default; the toy model trains from scratch.
inline ExperimentConfig default_experiment_config() {
  ExperimentConfig c;
  c.stage1.stage = TrainingStage::restore;
  c.stage1.steps = 150;
  c.stage1.batch_size = 8;
  c.stage1.peak_lr = 1e-3;

  c.warmup.stage = TrainingStage::warmup;
  c.warmup.steps = 300;
  c.warmup.batch_size = 16;
  c.warmup.peak_lr = 1e-3;
  c.warmup.temperature = 0.05;

  c.global_hnm = c.warmup;
  c.global_hnm.stage = TrainingStage::global_hnm;

  c.judge_ft = c.warmup;
  c.judge_ft.stage = TrainingStage::judge_ft;
  c.judge_ft.steps = 150;
  c.judge_ft.batch_size = 8;
  c.judge_ft.peak_lr = 5e-4;

  c.reranker.stage = TrainingStage::reranker;
  c.reranker.epochs = 2.0;
  c.reranker.batch_size = 8;
  c.reranker.peak_lr = 1e-3;
  return c;
}

inline const std::vector<std::string>& experiment_preset_names() {
  static const std::vector<std::string> names = {"table4", "table5", "smoke"};
  return names;
}

/// table4: the cumulative ablation. table5: the hard-negative sweep.
/// smoke: a one-seed ablation on a small corpus, for quick checks.
inline ExperimentConfig experiment_preset(const std::string& name) {
  ExperimentConfig c = default_experiment_config();
  c.name = name;
  if (name == "table4") {
    c.kind = ExperimentKind::ablation;
  } else if (name == "table5") {
    c.kind = ExperimentKind::sweep;
    c.train_reranker = false;
  } else if (name == "smoke") {
    c.kind = ExperimentKind::ablation;
    c.seeds = {7};
    c.data.num_classes = 4;
    c.data.corpus_size = 160;
    c.data.members_per_class = 20;
    c.data.queries_per_class = 8;
    c.data.eval_queries_per_class = 4;
    c.stage1.steps = 20;
    c.warmup.steps = 30;
    c.global_hnm.steps = 30;
    c.global_hnm.window = {10, 30};
    c.judge_ft.steps = 20;
    c.reranker.epochs = 1.0;
  } else {
    throw ConfigError("unknown preset '" + name + "'");
  }
  c.validate();
  return c;
}

inline ExperimentConfig load_experiment_config(const std::filesystem::path& path, ExperimentConfig base = default_experiment_config()) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return experiment_config_from_json(j, std::move(base));
}

/// SHA-256 of the canonical config with the cache location left out.
inline std::string config_hash(const ExperimentConfig& c) {
  nlohmann::json j = to_json(c);
  j.erase("cache_dir");
  return sha256_hex(j.dump());
}

/// Per-seed copy: every seed field becomes `seed`.
inline ExperimentConfig seeded(const ExperimentConfig& c, std::uint64_t seed) {
  ExperimentConfig s = c;
  s.seeds = {seed};
  s.model.seed = seed;
  s.data.seed = seed;
  for (StagePlan* p : {&s.stage1, &s.warmup, &s.global_hnm, &s.judge_ft, &s.reranker}) p->seed = seed;
  return s;
}

}  // namespace vtc
