#pragma once

#include <filesystem>
#include <sstream>
#include <string>

#include "json.hpp"
#include "vtc/errors.hpp"
#include "vtc/fileio.hpp"
#include "vtc/harness/synthetic.hpp"
#include "vtc/retrieval/io.hpp"

namespace vtc {

inline constexpr int kCorpusSchemaVersion = 1;

namespace corpus_detail {

inline nlohmann::json example_record(const MultimodalExample& ex, const std::string& split, TaskClass task,
                                     const SyntheticDataset& ds) {
  nlohmann::json j = {{"schema_version", kCorpusSchemaVersion},
                      {"id", ex.id},
                      {"split", split},
                      {"task", task_class_name(task)},
                      {"class", ds.labels.at(ex.id)},
                      {"instruction", ex.instruction},
                      {"text", ex.text},
                      {"caption", ds.captions.at(ex.id)}};
  if (ex.has_visual()) {
    const Tensor& v = ex.visual->values();
    j["visual"] = {{"shape", v.shape()}, {"values", v.data()}};
  } else {
    j["visual"] = nullptr;
  }
  if (split == "train") j["positive_id"] = ds.train_positive.at(ex.id);
  return j;
}

}  // namespace corpus_detail

/// One JSON record per line: candidates, then training queries, then eval
/// queries. Doubles are written in shortest round-trip form.
inline void write_corpus(std::ostream& out, const SyntheticDataset& ds) {
  using corpus_detail::example_record;
  for (const auto& ex : ds.candidates) out << example_record(ex, "corpus", ds.task, ds).dump() << '\n';
  for (const auto& ex : ds.train_queries) out << example_record(ex, "train", ds.task, ds).dump() << '\n';
  for (const auto& ex : ds.eval_queries) out << example_record(ex, "eval", ds.task, ds).dump() << '\n';
}

/// Parses corpus records and checks every example against `cfg`. Qrels are
/// rebuilt from class labels: an eval query is relevant to every corpus
/// candidate of its class.
inline SyntheticDataset read_corpus(std::istream& in, const ModelConfig& cfg) {
  SyntheticDataset ds;
  std::string line;
  std::size_t n = 0, last_good = 0;
  bool task_seen = false;
  auto fail = [&](const std::string& what) -> FormatError {
    return FormatError("corpus line " + std::to_string(n) + ": " + what + " (last good line " +
                       std::to_string(last_good) + ")");
  };
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw fail(e.what());
    }
    try {
      const int version = j.at("schema_version").get<int>();
      if (version != kCorpusSchemaVersion) {
        throw MigrationError("corpus line " + std::to_string(n) + " has schema version " + std::to_string(version) +
                             "; this build reads version " + std::to_string(kCorpusSchemaVersion) +
                             " and has no migration for it");
      }
      MultimodalExample ex;
      ex.id = j.at("id").get<std::string>();
      const std::string split = j.at("split").get<std::string>();
      ex.role = split == "corpus" ? Role::candidate : Role::query;
      ex.instruction = j.at("instruction").get<std::vector<int>>();
      ex.text = j.at("text").get<std::vector<int>>();
      if (!j.at("visual").is_null()) {
        Tensor v(j.at("visual").at("shape").get<Shape>(), j.at("visual").at("values").get<std::vector<double>>());
        ex.visual = Grid2D(std::move(v));
      }
      const TaskClass task = parse_task_class(j.at("task").get<std::string>());
      if (task_seen && task != ds.task) throw fail("mixes task classes");
      ds.task = task;
      task_seen = true;
      (void)serialize(ex, cfg);  // validates grid shape, token range and length
      const int cls = j.at("class").get<int>();
      ds.labels[ex.id] = cls;
      ds.captions[ex.id] = j.at("caption").get<std::vector<int>>();
      if (split == "corpus") {
        ds.candidates.add(std::move(ex));
      } else if (split == "train") {
        ds.train_positive[ex.id] = j.at("positive_id").get<std::string>();
        ds.train_queries.add(std::move(ex));
      } else if (split == "eval") {
        ds.eval_queries.add(std::move(ex));
      } else {
        throw fail("unknown split '" + split + "'");
      }
    } catch (const MigrationError&) {
      throw;
    } catch (const FormatError&) {
      throw;
    } catch (const nlohmann::json::exception& e) {
      throw fail(e.what());
    } catch (const Error& e) {
      throw fail(e.what());
    }
    last_good = n;
  }
  for (const auto& q : ds.eval_queries) {
    const int cls = ds.labels.at(q.id);
    auto& row = ds.qrels[q.id];
    for (const auto& c : ds.candidates) {
      if (ds.labels.at(c.id) == cls) row[c.id] = 1;
    }
  }
  for (const auto& [q, c] : ds.train_positive) {
    if (!ds.candidates.contains(c)) throw FormatError("training query '" + q + "' points at unknown candidate '" + c + "'");
  }
  return ds;
}

inline void save_corpus(const std::filesystem::path& path, const SyntheticDataset& ds) {
  std::ostringstream out;
  write_corpus(out, ds);
  write_file_atomic(path, out.str());
}

inline SyntheticDataset load_corpus(const std::filesystem::path& path, const ModelConfig& cfg) {
  std::istringstream in(read_file(path));
  return read_corpus(in, cfg);
}

inline void save_qrels(const std::filesystem::path& path, const Qrels& qrels) {
  std::ostringstream out;
  write_qrels(out, qrels);
  write_file_atomic(path, out.str());
}

inline Qrels load_qrels(const std::filesystem::path& path) {
  std::istringstream in(read_file(path));
  return read_qrels(in);
}

}  // namespace vtc
