#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "vtc/curation/curate.hpp"
#include "vtc/curation/mining.hpp"
#include "vtc/digest.hpp"
#include "vtc/errors.hpp"
#include "vtc/fileio.hpp"
#include "vtc/model/checkpoint.hpp"
#include "vtc/objectives/losses.hpp"
#include "vtc/retrieval/io.hpp"

namespace vtc {

/// Settings for one training stage. `steps` wins over `epochs` when both
/// are set; one epoch is one pass over the stage's training items.
struct StagePlan {
  TrainingStage stage = TrainingStage::restore;
  std::size_t steps = 0;
  double epochs = 0.0;
  std::size_t batch_size = 8;
  double peak_lr = 3e-4;
  double warmup_fraction = 0.05;
  std::uint64_t seed = 0;
  std::size_t grad_accum = 1;
  double temperature = kDefaultTemperature;
  std::size_t mined_negatives = kDefaultMinedNegatives;
  MiningWindow window;
  std::size_t hard_negatives = kDefaultHardNegatives;
  double divergence_factor = 10.0;
  std::size_t divergence_patience = 100;
  std::string input_checkpoint;
  std::string output_checkpoint;

  std::size_t resolve_steps(std::size_t items) const {
    if (steps > 0) return steps;
    if (epochs <= 0.0) throw ConfigError(std::string(stage_name(stage)) + " plan sets neither steps nor epochs");
    const double per_step = static_cast<double>(batch_size * grad_accum);
    return static_cast<std::size_t>(std::ceil(epochs * static_cast<double>(items) / per_step));
  }

  void validate() const {
    if (batch_size == 0 || grad_accum == 0) throw ConfigError("batch size and gradient accumulation must be positive");
    if (!(peak_lr > 0.0)) throw ConfigError("peak learning rate must be positive");
    if (!(warmup_fraction >= 0.0 && warmup_fraction <= 1.0)) throw ConfigError("warmup fraction must lie in [0, 1]");
    if (!(temperature > 0.0)) throw ConfigError("temperature must be positive");
  }

  friend bool operator==(const StagePlan&, const StagePlan&) = default;
};

inline nlohmann::json to_json(const StagePlan& p) {
  return {{"stage", stage_name(p.stage)},
          {"steps", p.steps},
          {"epochs", p.epochs},
          {"batch_size", p.batch_size},
          {"peak_lr", p.peak_lr},
          {"warmup_fraction", p.warmup_fraction},
          {"seed", p.seed},
          {"grad_accum", p.grad_accum},
          {"temperature", p.temperature},
          {"mined_negatives", p.mined_negatives},
          {"window", {p.window.lo, p.window.hi}},
          {"hard_negatives", p.hard_negatives},
          {"divergence_factor", p.divergence_factor},
          {"divergence_patience", p.divergence_patience},
          {"input_checkpoint", p.input_checkpoint},
          {"output_checkpoint", p.output_checkpoint}};
}

/// Reads a plan, filling unspecified fields from `base`.
inline StagePlan plan_from_json(const nlohmann::json& j, StagePlan base = {}) {
  StagePlan p = base;
  try {
    if (j.contains("stage")) p.stage = parse_stage(j.at("stage").get<std::string>());
    p.steps = j.value("steps", p.steps);
    p.epochs = j.value("epochs", p.epochs);
    p.batch_size = j.value("batch_size", p.batch_size);
    p.peak_lr = j.value("peak_lr", p.peak_lr);
    p.warmup_fraction = j.value("warmup_fraction", p.warmup_fraction);
    p.seed = j.value("seed", p.seed);
    p.grad_accum = j.value("grad_accum", p.grad_accum);
    p.temperature = j.value("temperature", p.temperature);
    p.mined_negatives = j.value("mined_negatives", p.mined_negatives);
    if (j.contains("window")) p.window = {j.at("window").at(0).get<std::size_t>(), j.at("window").at(1).get<std::size_t>()};
    p.hard_negatives = j.value("hard_negatives", p.hard_negatives);
    p.divergence_factor = j.value("divergence_factor", p.divergence_factor);
    p.divergence_patience = j.value("divergence_patience", p.divergence_patience);
    p.input_checkpoint = j.value("input_checkpoint", p.input_checkpoint);
    p.output_checkpoint = j.value("output_checkpoint", p.output_checkpoint);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("stage plan: ") + e.what());
  }
  p.validate();
  return p;
}

/// SHA-256 of the plan's canonical JSON, with checkpoint paths left out so
/// the hash names the computation rather than where it was stored.
inline std::string config_hash(const StagePlan& p) {
  nlohmann::json j = to_json(p);
  j.erase("input_checkpoint");
  j.erase("output_checkpoint");
  return sha256_hex(j.dump());
}

struct TrainReport {
  TrainingStage stage = TrainingStage::restore;
  std::vector<double> losses;  // one entry per optimizer step
  std::vector<double> learning_rates;
  double final_loss = std::numeric_limits<double>::quiet_NaN();
  double wall_clock_seconds = 0.0;
  std::string checkpoint_path;
  std::string config_hash;
  std::size_t skipped_items = 0;
  std::vector<std::string> log;
};

inline nlohmann::json to_json(const TrainReport& r) {
  nlohmann::json j = {{"stage", stage_name(r.stage)},
                      {"steps", r.losses.size()},
                      {"losses", r.losses},
                      {"learning_rates", r.learning_rates},
                      {"wall_clock_seconds", r.wall_clock_seconds},
                      {"checkpoint_path", r.checkpoint_path},
                      {"config_hash", r.config_hash},
                      {"skipped_items", r.skipped_items},
                      {"log", r.log}};
  j["final_loss"] = std::isfinite(r.final_loss) ? nlohmann::json(r.final_loss) : nlohmann::json(nullptr);
  return j;
}

/// step,loss,learning_rate with lossless doubles.
inline std::string loss_csv(const TrainReport& r) {
  std::string out = "step,loss,learning_rate\n";
  for (std::size_t i = 0; i < r.losses.size(); ++i) {
    out += std::to_string(i) + "," + tsv::format_double(r.losses[i]) + "," + tsv::format_double(r.learning_rates[i]) +
           "\n";
  }
  return out;
}

/// Writes <prefix>.json and <prefix>.csv.
inline void save_report(const std::filesystem::path& prefix, const TrainReport& r) {
  write_file_atomic(prefix.string() + ".json", to_json(r).dump(2) + "\n");
  write_file_atomic(prefix.string() + ".csv", loss_csv(r));
}

}  // namespace vtc
