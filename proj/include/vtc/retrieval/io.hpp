#pragma once

#include <charconv>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "vtc/errors.hpp"
#include "vtc/fileio.hpp"
#include "vtc/retrieval/metrics.hpp"

namespace vtc {

namespace tsv {

/// Shortest decimal that parses back to the same double.
inline std::string format_double(double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto tab = line.find('\t', start);
    out.push_back(line.substr(start, tab - start));
    if (tab == std::string::npos) break;
    start = tab + 1;
  }
  return out;
}

template <class T>
T parse_number(const std::string& field, const std::string& what, std::size_t line_no) {
  T v{};
  auto res = std::from_chars(field.data(), field.data() + field.size(), v);
  if (res.ec != std::errc{} || res.ptr != field.data() + field.size()) {
    throw FormatError("line " + std::to_string(line_no) + ": bad " + what + " '" + field + "'");
  }
  return v;
}

inline std::vector<std::string> read_lines(std::istream& in) {
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) lines.push_back(line);
  return lines;
}

}  // namespace tsv

/// qrels: query_id <TAB> candidate_id <TAB> relevance, one judgment per line.
inline void write_qrels(std::ostream& out, const Qrels& qrels) {
  for (const auto& [q, judged] : qrels)
    for (const auto& [c, rel] : judged) out << q << '\t' << c << '\t' << rel << '\n';
}

inline Qrels read_qrels(std::istream& in) {
  Qrels qrels;
  std::size_t n = 0;
  for (const auto& line : tsv::read_lines(in)) {
    ++n;
    if (line.empty()) continue;
    const auto f = tsv::split(line);
    if (f.size() != 3) throw FormatError("qrels line " + std::to_string(n) + ": expected 3 fields");
    qrels[f[0]][f[1]] = tsv::parse_number<int>(f[2], "relevance", n);
  }
  return qrels;
}

/// results: query_id <TAB> rank <TAB> candidate_id <TAB> score <TAB> stage,
/// rank 1-based.
inline void write_results(std::ostream& out, const std::vector<RankedResult>& results) {
  for (const auto& r : results) {
    for (std::size_t i = 0; i < r.ids.size(); ++i) {
      out << r.query_id << '\t' << (i + 1) << '\t' << r.ids[i] << '\t' << tsv::format_double(r.scores[i]) << '\t'
          << rank_stage_name(r.stage) << '\n';
    }
  }
}

inline std::vector<RankedResult> read_results(std::istream& in) {
  std::vector<RankedResult> out;
  std::size_t n = 0;
  for (const auto& line : tsv::read_lines(in)) {
    ++n;
    if (line.empty()) continue;
    const auto f = tsv::split(line);
    if (f.size() != 5) throw FormatError("results line " + std::to_string(n) + ": expected 5 fields");
    const auto rank = tsv::parse_number<std::size_t>(f[1], "rank", n);
    const RankStage stage = parse_rank_stage(f[4]);
    if (out.empty() || out.back().query_id != f[0] || rank == 1) {
      if (rank != 1) throw FormatError("results line " + std::to_string(n) + ": ranking must start at rank 1");
      out.push_back({f[0], {}, {}, stage});
    }
    RankedResult& r = out.back();
    if (rank != r.ids.size() + 1 || stage != r.stage) {
      throw FormatError("results line " + std::to_string(n) + ": ranks must be consecutive within one stage");
    }
    r.ids.push_back(f[2]);
    r.scores.push_back(tsv::parse_number<double>(f[3], "score", n));
  }
  return out;
}

template <class T, class Writer>
void write_text_file(const std::filesystem::path& path, const T& value, Writer writer) {
  std::ostringstream out;
  writer(out, value);
  write_file_atomic(path, out.str());
}

}  // namespace vtc
