#pragma once

#include <chrono>
#include <cstddef>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "vtc/errors.hpp"
#include "vtc/model/transformer.hpp"
#include "vtc/numerics/random.hpp"
#include "vtc/retrieval/io.hpp"

namespace vtc {

enum class ProfileRole { query, candidate };

inline const char* profile_role_name(ProfileRole r) { return r == ProfileRole::query ? "query" : "candidate"; }

struct CostProfile {
  std::string config;  // row label in the efficiency table
  ProfileRole role = ProfileRole::candidate;
  std::size_t visual_tokens = 0;
  std::size_t text_tokens = 0;
  std::size_t tiles = 0;
  double attention_flops = 0.0;
  double wall_clock_ms = 0.0;
  std::size_t trials = 0;
  bool timer_warning = false;
};

/// Visual tokens for `tiles` images of the model grid: tiles * H * W / s^2.
inline std::size_t token_budget(const ModelConfig& cfg, std::size_t tiles, bool has_image) {
  if (!has_image) return 0;
  if (tiles < 1) throw ParameterError("an image-bearing input needs at least one tile");
  cfg.validate();
  return tiles * cfg.visual_tokens();
}

/// Multiply-accumulates of `layers` blocks on `seq_len` tokens, closed form
/// layers * (2 L^2 D + 8 L D^2): 2 L^2 D for attention scores plus the
/// weighted sum of values, 8 L D^2 for the projections and the MLP.
/// Softmax and normalisation are left out.
inline double attention_quadratic_term(std::size_t seq_len, std::size_t layers, std::size_t dim) {
  const double l = static_cast<double>(seq_len), d = static_cast<double>(dim);
  return static_cast<double>(layers) * 2.0 * l * l * d;
}

inline double attention_linear_term(std::size_t seq_len, std::size_t layers, std::size_t dim) {
  const double l = static_cast<double>(seq_len), d = static_cast<double>(dim);
  return static_cast<double>(layers) * 8.0 * l * d * d;
}

inline double attention_cost(std::size_t seq_len, std::size_t layers, std::size_t heads, std::size_t dim) {
  if (seq_len == 0 || layers == 0 || heads == 0 || dim == 0) {
    throw ParameterError("attention_cost needs positive length, layers, heads and width");
  }
  return attention_quadratic_term(seq_len, layers, dim) + attention_linear_term(seq_len, layers, dim);
}

/// Smallest positive step the steady clock reports, in milliseconds.
inline double timer_resolution_ms() {
  using clock = std::chrono::steady_clock;
  double best = 1e300;
  for (int i = 0; i < 5; ++i) {
    const auto a = clock::now();
    auto b = clock::now();
    while (b == a) b = clock::now();
    best = std::min(best, std::chrono::duration<double, std::milli>(b - a).count());
  }
  return best;
}

/// Mean single-threaded embed latency over `trials` runs after one
/// discarded warmup run, with token counts from the serialized input.
inline CostProfile measure_encode(const Model& model, const MultimodalExample& example, std::size_t trials,
                                  std::string config = {}, std::size_t tiles = 1) {
  if (trials < 3) throw ParameterError("measure_encode needs at least 3 trials, got " + std::to_string(trials));
  const ModelConfig& cfg = model.config();
  const TokenSequence seq = serialize(example, cfg);
  CostProfile p;
  p.config = std::move(config);
  p.role = example.role == Role::query ? ProfileRole::query : ProfileRole::candidate;
  p.tiles = example.has_visual() ? tiles : 0;
  p.visual_tokens = token_budget(cfg, tiles, example.has_visual());
  p.text_tokens = seq.size() - seq.visual_slots();
  p.attention_flops = attention_cost(seq.size(), cfg.num_layers, cfg.num_heads, cfg.embed_dim);
  p.trials = trials;

  InferenceSession session(model);
  (void)session.embed(seq);
  using clock = std::chrono::steady_clock;
  double total = 0.0;
  for (std::size_t t = 0; t < trials; ++t) {
    const auto start = clock::now();
    const Embedding e = session.embed(seq);
    total += std::chrono::duration<double, std::milli>(clock::now() - start).count();
    if (e.dim() == 0) throw StateError("empty embedding while profiling");
  }
  p.wall_clock_ms = total / static_cast<double>(trials);
  p.timer_warning = timer_resolution_ms() > 0.01 * p.wall_clock_ms;
  return p;
}

/// One efficiency-table row. Missing values render as "-".
struct EfficiencyRow {
  std::string config;
  std::optional<double> visual_tokens_query;
  std::optional<double> latency_query_ms;
  std::optional<double> visual_tokens_candidate;
  std::optional<double> latency_candidate_ms;
  friend bool operator==(const EfficiencyRow&, const EfficiencyRow&) = default;
};

/// Averages profiles per (config, role); rows keep first-seen config order.
inline std::vector<EfficiencyRow> efficiency_rows(const std::vector<CostProfile>& profiles) {
  if (profiles.empty()) throw ParameterError("efficiency table needs at least one profile");
  struct Acc {
    double vt = 0.0, ms = 0.0;
    std::size_t n = 0;
  };
  std::vector<std::string> order;
  std::map<std::string, std::map<ProfileRole, Acc>> acc;
  for (const auto& p : profiles) {
    if (!acc.count(p.config)) order.push_back(p.config);
    Acc& a = acc[p.config][p.role];
    a.vt += static_cast<double>(p.visual_tokens);
    a.ms += p.wall_clock_ms;
    ++a.n;
  }
  std::vector<EfficiencyRow> rows;
  for (const auto& c : order) {
    EfficiencyRow r;
    r.config = c;
    for (const auto& [role, a] : acc.at(c)) {
      const double n = static_cast<double>(a.n);
      if (role == ProfileRole::query) {
        r.visual_tokens_query = a.vt / n;
        r.latency_query_ms = a.ms / n;
      } else {
        r.visual_tokens_candidate = a.vt / n;
        r.latency_candidate_ms = a.ms / n;
      }
    }
    rows.push_back(std::move(r));
  }
  return rows;
}

namespace profiler_detail {

inline std::string cell(const std::optional<double>& v) { return v ? tsv::format_double(*v) : "-"; }

inline std::string fixed(const std::optional<double>& v, int digits) {
  if (!v) return "-";
  std::ostringstream out;
  out.setf(std::ios::fixed);
  out.precision(digits);
  out << *v;
  return out.str();
}

inline std::optional<double> parse_cell(const std::string& s, std::size_t line) {
  if (s == "-") return std::nullopt;
  return tsv::parse_number<double>(s, "efficiency value", line);
}

}  // namespace profiler_detail

inline constexpr const char* kEfficiencyCsvHeader = "config,vt_q,l_q_ms,vt_c,l_c_ms";

inline std::string efficiency_csv(const std::vector<EfficiencyRow>& rows) {
  using profiler_detail::cell;
  std::string out = std::string(kEfficiencyCsvHeader) + "\n";
  for (const auto& r : rows) {
    if (r.config.find(',') != std::string::npos) throw FormatError("config label '" + r.config + "' contains a comma");
    out += r.config + "," + cell(r.visual_tokens_query) + "," + cell(r.latency_query_ms) + "," +
           cell(r.visual_tokens_candidate) + "," + cell(r.latency_candidate_ms) + "\n";
  }
  return out;
}

inline std::string efficiency_markdown(const std::vector<EfficiencyRow>& rows) {
  using profiler_detail::fixed;
  std::string out = "| config | #VT_q | l_q (ms) | #VT_c | l_c (ms) |\n|---|---:|---:|---:|---:|\n";
  for (const auto& r : rows) {
    out += "| " + r.config + " | " + fixed(r.visual_tokens_query, 1) + " | " + fixed(r.latency_query_ms, 3) + " | " +
           fixed(r.visual_tokens_candidate, 1) + " | " + fixed(r.latency_candidate_ms, 3) + " |\n";
  }
  return out;
}

inline std::vector<EfficiencyRow> parse_efficiency_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::size_t n = 0;
  std::vector<EfficiencyRow> rows;
  while (std::getline(in, line)) {
    ++n;
    if (n == 1) {
      if (line != kEfficiencyCsvHeader) throw FormatError("efficiency CSV line 1: unexpected header '" + line + "'");
      continue;
    }
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::size_t start = 0;
    while (true) {
      const auto comma = line.find(',', start);
      f.push_back(line.substr(start, comma - start));
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    if (f.size() != 5) throw FormatError("efficiency CSV line " + std::to_string(n) + ": expected 5 fields");
    using profiler_detail::parse_cell;
    rows.push_back({f[0], parse_cell(f[1], n), parse_cell(f[2], n), parse_cell(f[3], n), parse_cell(f[4], n)});
  }
  return rows;
}

/// Profiles one image-bearing candidate and one text-only query per
/// compression factor. Every factor shares the same weights, so only the
/// visual sequence length differs between rows.
inline std::vector<CostProfile> profile_factors(const ModelConfig& base, const std::vector<std::size_t>& factors,
                                                std::size_t trials, std::uint64_t seed = 0) {
  if (factors.empty()) throw ParameterError("no compression factors to profile");
  const ModelWeights weights = init_weights(base);
  std::mt19937_64 rng(seed);
  Tensor grid({base.grid_height, base.grid_width, base.vision_channels});
  for (double& x : grid.data()) x = standard_normal(rng);
  const int first = TokenVocabulary::kFirstDataToken;
  MultimodalExample candidate{"profile-candidate", {first, first + 1, first + 2}, Grid2D(grid), {first + 3, first + 4},
                              Role::candidate};
  MultimodalExample query{"profile-query", {first, first + 5}, std::nullopt,
                          {first + 6, first + 7, first + 8, first + 9}, Role::query};
  std::vector<CostProfile> out;
  for (std::size_t s : factors) {
    ModelConfig cfg = base;
    cfg.compression = s;
    cfg.validate();
    const Model model(cfg, weights);
    const std::string label = "s=" + std::to_string(s);
    out.push_back(measure_encode(model, query, trials, label));
    out.push_back(measure_encode(model, candidate, trials, label));
  }
  return out;
}

}  // namespace vtc
