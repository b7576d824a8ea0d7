#pragma once

#include <algorithm>
#include <boost/rational.hpp>
#include <cmath>
#include <functional>
#include <span>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "vtc/retrieval/index.hpp"
#include "vtc/retrieval/metrics.hpp"

// Independent reference implementations shared by the unit tests and the
// acceptance runner.
namespace vtc::testing {

using Rational = boost::rational<long long>;

/// Exact per-site bilinear weights: source coordinate (i + 1/2) s - 1/2,
/// clamped at the far edge.
inline std::vector<Rational> rational_downsample(const std::vector<Rational>& grid, long long h, long long w,
                                                 long long c, long long s) {
  auto taps = [&](long long i, long long len) {
    Rational src = (Rational(i) + Rational(1, 2)) * s - Rational(1, 2);
    long long i0 = boost::rational_cast<long long>(src);  // src >= 0, so truncation == floor
    if (Rational(i0) > src) --i0;
    Rational frac = src - i0;
    long long i1 = std::min(i0 + 1, len - 1);
    return std::tuple{i0, i1, Rational(1) - frac, frac};
  };
  std::vector<Rational> out((h / s) * (w / s) * c);
  for (long long oy = 0; oy < h / s; ++oy)
    for (long long ox = 0; ox < w / s; ++ox) {
      auto [y0, y1, wy0, wy1] = taps(oy, h);
      auto [x0, x1, wx0, wx1] = taps(ox, w);
      for (long long ch = 0; ch < c; ++ch) {
        auto at = [&](long long y, long long x) { return grid[(y * w + x) * c + ch]; };
        out[(oy * (w / s) + ox) * c + ch] =
            wy0 * wx0 * at(y0, x0) + wy0 * wx1 * at(y0, x1) + wy1 * wx0 * at(y1, x0) + wy1 * wx1 * at(y1, x1);
      }
    }
  return out;
}

/// Metrics evaluator: explicit 1-based ranks, pow-based gains and
/// natural-log discounts.
struct BruteForce {
  static long double dcg(const std::vector<int>& rels) {
    long double s = 0;
    for (std::size_t rank = 1; rank <= rels.size() && rank <= 5; ++rank) {
      s += (std::pow(2.0L, rels[rank - 1]) - 1.0L) * std::log(2.0L) / std::log(static_cast<long double>(rank + 1));
    }
    return s;
  }
  static void evaluate(const std::vector<RankedResult>& results, const Qrels& qrels, long double& p1,
                       long double& ndcg) {
    p1 = ndcg = 0;
    for (const auto& r : results) {
      const auto& judged = qrels.at(r.query_id);
      std::vector<int> got;
      for (const auto& id : r.ids) got.push_back(judged.count(id) ? judged.at(id) : 0);
      std::vector<int> all;
      for (const auto& kv : judged) all.push_back(kv.second);
      std::sort(all.begin(), all.end(), std::greater<>());
      p1 += !got.empty() && got[0] > 0;
      ndcg += dcg(got) / dcg(all);
    }
    p1 /= results.size();
    ndcg /= results.size();
  }
};

/// Full sort of (score desc, id asc) with the positive removed.
inline std::vector<std::string> oracle_order(const CandidateIndex& index, std::span<const double> q,
                                             const std::string& positive) {
  std::vector<std::pair<double, std::string>> all;
  for (std::size_t r = 0; r < index.size(); ++r) {
    if (index.ids()[r] == positive) continue;
    double s = 0;
    for (std::size_t c = 0; c < q.size(); ++c) s += q[c] * index.row(r)[c];
    all.emplace_back(s, index.ids()[r]);
  }
  std::sort(all.begin(), all.end(), [](const auto& a, const auto& b) {
    return a.first != b.first ? a.first > b.first : a.second < b.second;
  });
  std::vector<std::string> out;
  for (auto& p : all) out.push_back(p.second);
  return out;
}

}  // namespace vtc::testing
