#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "vtc/curation/judge.hpp"
#include "vtc/errors.hpp"
#include "vtc/fileio.hpp"
#include "vtc/model/example_set.hpp"
#include "vtc/numerics/random.hpp"
#include "vtc/retrieval/index.hpp"

namespace vtc {

inline constexpr std::size_t kDefaultJudgeDepth = 20;
inline constexpr std::size_t kDefaultHardNegatives = 12;
/// Curation aborts when more than this fraction of judged pairs fail.
inline constexpr double kMaxJudgeFailureRate = 0.2;

struct CuratedSample {
  std::string query_id;
  std::string gt_positive_id;
  std::vector<std::string> judge_positive_ids;
  std::vector<std::string> judge_negative_ids;
  std::vector<JudgeVerdict> verdicts;  // every judged pair, in retrieval order
  std::vector<std::string> failed_ids;
  friend bool operator==(const CuratedSample&, const CuratedSample&) = default;
};

/// Retrieves the top `k` candidates for the query, judges each one except
/// the ground-truth positive, and splits them by verdict. Ties are dropped.
/// Pairs whose judge call throws are skipped; more than 20% failures abort.
inline CuratedSample retrieve_and_judge(const MultimodalExample& query, const std::string& gt_positive_id,
                                        std::span<const double> query_embedding, const CandidateIndex& index,
                                        const ExampleSet& corpus, Judge& judge,
                                        std::size_t k = kDefaultJudgeDepth) {
  if (k > index.size()) {
    throw ParameterError("judge depth " + std::to_string(k) + " exceeds corpus size " + std::to_string(index.size()));
  }
  CuratedSample s;
  s.query_id = query.id;
  s.gt_positive_id = gt_positive_id;
  const RankedResult top = search(index, query_embedding, k, query.id);
  std::size_t judged = 0;
  for (const auto& id : top.ids) {
    if (id == gt_positive_id) continue;
    ++judged;
    JudgeVerdict v;
    try {
      v = judge_pair(query, corpus.at(id), judge);
    } catch (const Error&) {
      s.failed_ids.push_back(id);
      continue;
    }
    if (v.verdict == Verdict::relevant) s.judge_positive_ids.push_back(id);
    if (v.verdict == Verdict::irrelevant) s.judge_negative_ids.push_back(id);
    s.verdicts.push_back(std::move(v));
  }
  if (judged > 0 && static_cast<double>(s.failed_ids.size()) > kMaxJudgeFailureRate * static_cast<double>(judged)) {
    throw CurationError("judge failed on " + std::to_string(s.failed_ids.size()) + " of " + std::to_string(judged) +
                        " pairs for query '" + query.id + "'");
  }
  return s;
}

/// Negatives for one stage-3 training instance.
struct Stage3Instance {
  std::string query_id;
  std::string positive_id;
  std::vector<std::string> hard_negative_ids;
  std::size_t in_batch_fill = 0;  // requested hard negatives left to in-batch negatives
};

/// Samples up to `n_hard` judge negatives without replacement. When fewer
/// exist all are used and the shortfall is left to in-batch negatives.
inline Stage3Instance build_stage3_batch(const CuratedSample& sample, std::size_t n_hard = kDefaultHardNegatives,
                                         std::uint64_t seed = 0) {
  Stage3Instance out{sample.query_id, sample.gt_positive_id, {}, 0};
  const auto& pool = sample.judge_negative_ids;
  if (pool.size() <= n_hard) {
    out.hard_negative_ids = pool;
    out.in_batch_fill = n_hard - pool.size();
    return out;
  }
  std::mt19937_64 rng(derive_seed(seed, label_hash(sample.query_id)));
  for (std::size_t i : sample_without_replacement(rng, pool.size(), n_hard)) out.hard_negative_ids.push_back(pool[i]);
  return out;
}

inline nlohmann::json to_json(const CuratedSample& s) {
  nlohmann::json judgments = nlohmann::json::array();
  for (const auto& v : s.verdicts) {
    judgments.push_back({{"candidate_id", v.candidate_id},
                         {"logit_yes", v.logit_yes},
                         {"logit_no", v.logit_no},
                         {"verdict", verdict_name(v.verdict)}});
  }
  return {{"query_id", s.query_id},
          {"gt_positive_id", s.gt_positive_id},
          {"judge_positive_ids", s.judge_positive_ids},
          {"judge_negative_ids", s.judge_negative_ids},
          {"failed_ids", s.failed_ids},
          {"judgments", judgments}};
}

inline CuratedSample curated_from_json(const nlohmann::json& j) {
  CuratedSample s;
  s.query_id = j.at("query_id").get<std::string>();
  s.gt_positive_id = j.at("gt_positive_id").get<std::string>();
  s.judge_positive_ids = j.at("judge_positive_ids").get<std::vector<std::string>>();
  s.judge_negative_ids = j.at("judge_negative_ids").get<std::vector<std::string>>();
  s.failed_ids = j.value("failed_ids", std::vector<std::string>{});
  for (const auto& v : j.at("judgments")) {
    s.verdicts.push_back({s.query_id, v.at("candidate_id").get<std::string>(), v.at("logit_yes").get<double>(),
                          v.at("logit_no").get<double>(), parse_verdict(v.at("verdict").get<std::string>())});
  }
  return s;
}

inline void write_curated(std::ostream& out, const std::vector<CuratedSample>& samples) {
  for (const auto& s : samples) out << to_json(s).dump() << '\n';
}

inline std::vector<CuratedSample> read_curated(std::istream& in) {
  std::vector<CuratedSample> out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    try {
      out.push_back(curated_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw FormatError("curated record line " + std::to_string(n) + ": " + e.what());
    }
  }
  return out;
}

inline void save_curated(const std::filesystem::path& path, const std::vector<CuratedSample>& samples) {
  std::ostringstream out;
  write_curated(out, samples);
  write_file_atomic(path, out.str());
}

inline std::vector<CuratedSample> load_curated(const std::filesystem::path& path) {
  std::istringstream in(read_file(path));
  return read_curated(in);
}

}  // namespace vtc
