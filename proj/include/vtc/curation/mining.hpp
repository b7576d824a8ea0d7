#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <sstream>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "vtc/errors.hpp"
#include "vtc/fileio.hpp"
#include "vtc/numerics/random.hpp"
#include "vtc/retrieval/index.hpp"

namespace vtc {

/// Inclusive 1-based rank bounds, counted after the positive is removed.
struct MiningWindow {
  std::size_t lo = 50;
  std::size_t hi = 100;
  friend bool operator==(const MiningWindow&, const MiningWindow&) = default;
};

inline constexpr std::size_t kDefaultMinedNegatives = 2;

struct MinedNegatives {
  std::string query_id;
  std::vector<std::string> negative_ids;
  std::vector<std::size_t> ranks;  // parallel to negative_ids
  MiningWindow window;             // bounds actually used
  std::uint64_t seed = 0;
  std::string warning;             // set when the window was shrunk
  friend bool operator==(const MinedNegatives&, const MinedNegatives&) = default;
};

/// Ranks the whole index against the query, drops the positive and samples
/// `n` ids uniformly without replacement from ranks [lo, hi]. When fewer
/// than `hi` candidates remain the window becomes [min(lo, m - n + 1), m].
inline MinedNegatives mine_global_negatives(const std::string& query_id, std::span<const double> query,
                                            const CandidateIndex& index, const std::string& positive_id,
                                            std::size_t n = kDefaultMinedNegatives, MiningWindow window = {},
                                            std::uint64_t seed = 0) {
  if (window.lo < 1 || window.lo > window.hi) {
    throw ParameterError("mining window [" + std::to_string(window.lo) + ", " + std::to_string(window.hi) +
                         "] is empty");
  }
  if (!index.contains(positive_id)) {
    throw ContractError("ground-truth positive '" + positive_id + "' is not in the corpus");
  }
  const std::size_t m = index.size() - 1;
  if (m < n) {
    throw SamplingError("corpus has " + std::to_string(m) + " candidates besides the positive, " +
                        std::to_string(n) + " negatives requested");
  }
  MinedNegatives out;
  out.query_id = query_id;
  out.seed = seed;
  out.window = window;
  if (window.hi > m) {
    out.window = {std::min(window.lo, m - n + 1), m};
    out.warning = "corpus of " + std::to_string(m) + " candidates is smaller than the window; using ranks [" +
                  std::to_string(out.window.lo) + ", " + std::to_string(out.window.hi) + "]";
  }
  const std::size_t width = out.window.hi - out.window.lo + 1;
  if (width < n) {
    throw SamplingError("window of " + std::to_string(width) + " ranks cannot supply " + std::to_string(n) +
                        " negatives");
  }
  RankedResult ranked = search(index, query, index.size(), query_id);
  std::vector<std::string> without;
  without.reserve(m);
  for (auto& id : ranked.ids) {
    if (id != positive_id) without.push_back(std::move(id));
  }
  std::mt19937_64 rng(derive_seed(seed, label_hash(query_id)));
  for (std::size_t pick : sample_without_replacement(rng, width, n)) {
    const std::size_t rank = out.window.lo + pick;
    out.ranks.push_back(rank);
    out.negative_ids.push_back(without[rank - 1]);
  }
  return out;
}

inline nlohmann::json to_json(const MinedNegatives& m) {
  return {{"query_id", m.query_id}, {"negative_ids", m.negative_ids}, {"ranks", m.ranks},
          {"window", {m.window.lo, m.window.hi}}, {"seed", m.seed}, {"warning", m.warning}};
}

inline MinedNegatives mined_from_json(const nlohmann::json& j) {
  MinedNegatives m;
  m.query_id = j.at("query_id").get<std::string>();
  m.negative_ids = j.at("negative_ids").get<std::vector<std::string>>();
  m.ranks = j.at("ranks").get<std::vector<std::size_t>>();
  m.window = {j.at("window").at(0).get<std::size_t>(), j.at("window").at(1).get<std::size_t>()};
  m.seed = j.at("seed").get<std::uint64_t>();
  m.warning = j.value("warning", std::string());
  if (m.ranks.size() != m.negative_ids.size()) throw FormatError("mined record for '" + m.query_id + "' has mismatched ranks");
  return m;
}

inline void save_mined(const std::filesystem::path& path, const std::vector<MinedNegatives>& mined) {
  std::ostringstream out;
  for (const auto& m : mined) out << to_json(m).dump() << '\n';
  write_file_atomic(path, out.str());
}

inline std::vector<MinedNegatives> load_mined(const std::filesystem::path& path) {
  std::istringstream in(read_file(path));
  std::vector<MinedNegatives> out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    try {
      out.push_back(mined_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw FormatError("mined record line " + std::to_string(n) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace vtc
