#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <span>
#include <utility>
#include <vector>

#include "vtc/errors.hpp"
#include "vtc/numerics/ops.hpp"
#include "vtc/numerics/tensor.hpp"

namespace vtc {

class Tape;

/// Handle to a value recorded on a Tape.
struct Var {
  Tape* tape = nullptr;
  std::size_t id = 0;

  const Tensor& value() const;
};

/// Reverse-mode gradient tape. Values are appended in evaluation order; a
/// backward sweep walks them in reverse, so every op's parents have smaller
/// ids than the op itself. Gradients live in each node value's grad buffer.
class Tape {
 public:
  using Backward = std::function<void(Tape&)>;

  Var leaf(Tensor value, bool requires_grad = true) {
    value.drop_grad();
    nodes_.push_back({std::move(value), {}, requires_grad});
    return {this, nodes_.size() - 1};
  }
  Var constant(Tensor value) { return leaf(std::move(value), false); }

  /// Appends an op result. `backward` runs only if the node requires grad.
  Var record(Tensor value, bool requires_grad, Backward backward) {
    value.drop_grad();
    nodes_.push_back({std::move(value), requires_grad ? std::move(backward) : Backward{}, requires_grad});
    return {this, nodes_.size() - 1};
  }

  const Tensor& value(Var v) const { return nodes_.at(v.id).value; }
  const Tensor& value(std::size_t id) const { return nodes_[id].value; }
  bool requires_grad(Var v) const { return nodes_.at(v.id).requires_grad; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }

  /// Gradient buffer of a node, zero-allocated on first access.
  std::span<double> grad(std::size_t id) { return nodes_[id].value.grad(); }
  std::span<double> grad(Var v) { return grad(v.id); }
  bool has_grad(Var v) const { return nodes_.at(v.id).value.has_grad(); }

  /// Gradient of a node as a tensor (zeros if no gradient reached it).
  Tensor gradient(Var v) const {
    const Tensor& t = nodes_.at(v.id).value;
    if (!t.has_grad()) return Tensor(t.shape());
    return Tensor(t.shape(), std::vector<double>(t.grad().begin(), t.grad().end()));
  }

  std::size_t size() const { return nodes_.size(); }

  /// Drops every node recorded after `mark` (for reusing bound parameters).
  void truncate(std::size_t mark) { nodes_.resize(mark); }

  /// Backpropagates from a scalar root with seed 1.
  void backward(Var root) {
    if (value(root).size() != 1) throw DimensionError("backward(root) needs a scalar root");
    backward({{root, Tensor(value(root).shape(), 1.0)}});
  }

  /// Backpropagates from several roots with explicit seed gradients.
  void backward(std::initializer_list<std::pair<Var, Tensor>> seeds) {
    backward(std::vector<std::pair<Var, Tensor>>(seeds));
  }

  void backward(const std::vector<std::pair<Var, Tensor>>& seeds) {
    std::size_t top = 0;
    for (const auto& [v, seed] : seeds) {
      if (seed.size() != value(v).size()) {
        throw DimensionError("seed gradient " + shape_string(seed.shape()) + " does not match " +
                             shape_string(value(v).shape()));
      }
      if (!requires_grad(v)) continue;
      auto g = grad(v);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += seed[i];
      top = std::max(top, v.id + 1);
    }
    for (std::size_t id = top; id-- > 0;) {
      Node& n = nodes_[id];
      if (n.backward && n.value.has_grad()) n.backward(*this);
    }
  }

 private:
  struct Node {
    Tensor value;
    Backward backward;
    bool requires_grad;
  };
  std::vector<Node> nodes_;
};

inline const Tensor& Var::value() const { return tape->value(*this); }

namespace ad {

namespace detail {
inline Tape& same_tape(Var a, Var b) {
  if (a.tape != b.tape || a.tape == nullptr) throw StateError("operands live on different tapes");
  return *a.tape;
}
inline void require_rank2(const Tensor& t, const char* what) {
  if (t.rank() != 2) throw DimensionError(std::string(what) + " expects a rank-2 tensor, got " + shape_string(t.shape()));
}
}  // namespace detail

/// [m x k] . [k x n]
inline Var matmul(Var a, Var b) {
  Tape& tape = detail::same_tape(a, b);
  Tensor out = vtc::matmul(a.value(), b.value());
  const bool rg = tape.requires_grad(a) || tape.requires_grad(b);
  const std::size_t self = tape.size();
  return tape.record(std::move(out), rg, [a, b, self](Tape& t) {
    const Tensor& av = t.value(a);
    const Tensor& bv = t.value(b);
    const std::size_t m = av.dim(0), k = av.dim(1), n = bv.dim(1);
    const auto go = t.grad(self);
    if (t.requires_grad(a)) {
      auto ga = t.grad(a);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          double s = 0.0;
          for (std::size_t j = 0; j < n; ++j) s += go[i * n + j] * bv[p * n + j];
          ga[i * k + p] += s;
        }
    }
    if (t.requires_grad(b)) {
      auto gb = t.grad(b);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          const double av_ip = av[i * k + p];
          for (std::size_t j = 0; j < n; ++j) gb[p * n + j] += av_ip * go[i * n + j];
        }
    }
  });
}

/// x . w + bias, with bias broadcast over rows.
inline Var linear(Var x, Var w, Var bias) {
  Tape& tape = detail::same_tape(x, w);
  detail::same_tape(x, bias);
  Tensor out = vtc::matmul(x.value(), w.value());
  const std::size_t n = out.dim(1);
  if (bias.value().size() != n) throw DimensionError("linear bias length does not match output width");
  for (std::size_t i = 0; i < out.dim(0); ++i)
    for (std::size_t j = 0; j < n; ++j) out(i, j) += bias.value()[j];
  const bool rg = tape.requires_grad(x) || tape.requires_grad(w) || tape.requires_grad(bias);
  const std::size_t self = tape.size();
  return tape.record(std::move(out), rg, [x, w, bias, self](Tape& t) {
    const Tensor& xv = t.value(x);
    const Tensor& wv = t.value(w);
    const std::size_t m = xv.dim(0), k = xv.dim(1), n = wv.dim(1);
    const auto go = t.grad(self);
    if (t.requires_grad(x)) {
      auto gx = t.grad(x);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          double s = 0.0;
          const double* wr = &wv[p * n];
          const double* gr = &go[i * n];
          for (std::size_t j = 0; j < n; ++j) s += gr[j] * wr[j];
          gx[i * k + p] += s;
        }
    }
    if (t.requires_grad(w)) {
      auto gw = t.grad(w);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          const double xv_ip = xv[i * k + p];
          if (xv_ip == 0.0) continue;
          double* gwr = &gw[p * n];
          const double* gr = &go[i * n];
          for (std::size_t j = 0; j < n; ++j) gwr[j] += xv_ip * gr[j];
        }
    }
    if (t.requires_grad(bias)) {
      auto gb = t.grad(bias);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) gb[j] += go[i * n + j];
    }
  });
}

/// Element-wise sum of equal-shaped values.
inline Var add(Var a, Var b) {
  Tape& tape = detail::same_tape(a, b);
  if (a.value().shape() != b.value().shape()) {
    throw DimensionError("add shapes differ: " + shape_string(a.value().shape()) + " vs " +
                         shape_string(b.value().shape()));
  }
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b.value()[i];
  const bool rg = tape.requires_grad(a) || tape.requires_grad(b);
  const std::size_t self = tape.size();
  return tape.record(std::move(out), rg, [a, b, self](Tape& t) {
    const auto go = t.grad(self);
    for (Var v : {a, b}) {
      if (!t.requires_grad(v)) continue;
      auto g = t.grad(v);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += go[i];
    }
  });
}

inline Var scale(Var a, double factor) {
  Tape& tape = *a.tape;
  Tensor out = a.value();
  for (double& v : out.data()) v *= factor;
  const std::size_t self = tape.size();
  return tape.record(std::move(out), tape.requires_grad(a), [a, factor, self](Tape& t) {
    const auto go = t.grad(self);
    auto g = t.grad(a);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += factor * go[i];
  });
}

/// tanh-approximated GELU.
inline Var gelu(Var x) {
  Tape& tape = *x.tape;
  constexpr double kC = 0.7978845608028654;  // sqrt(2/pi)
  Tensor out = x.value();
  for (double& v : out.data()) {
    const double u = kC * (v + 0.044715 * v * v * v);
    v = 0.5 * v * (1.0 + std::tanh(u));
  }
  const std::size_t self = tape.size();
  return tape.record(std::move(out), tape.requires_grad(x), [x, self](Tape& t) {
    const Tensor& xv = t.value(x);
    const auto go = t.grad(self);
    auto g = t.grad(x);
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double v = xv[i];
      const double u = kC * (v + 0.044715 * v * v * v);
      const double th = std::tanh(u);
      const double du = kC * (1.0 + 3.0 * 0.044715 * v * v);
      g[i] += go[i] * (0.5 * (1.0 + th) + 0.5 * v * (1.0 - th * th) * du);
    }
  });
}

/// Row-wise layer normalisation with learned gain and bias.
inline Var layer_norm(Var x, Var gain, Var bias, double eps = 1e-5) {
  Tape& tape = detail::same_tape(x, gain);
  const Tensor& xv = x.value();
  detail::require_rank2(xv, "layer_norm");
  const std::size_t m = xv.dim(0), d = xv.dim(1);
  Tensor out({m, d});
  std::vector<double> xhat(m * d), inv_std(m);
  for (std::size_t i = 0; i < m; ++i) {
    double mean = 0.0;
    for (std::size_t j = 0; j < d; ++j) mean += xv(i, j);
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) var += (xv(i, j) - mean) * (xv(i, j) - mean);
    var /= static_cast<double>(d);
    inv_std[i] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < d; ++j) {
      xhat[i * d + j] = (xv(i, j) - mean) * inv_std[i];
      out(i, j) = xhat[i * d + j] * gain.value()[j] + bias.value()[j];
    }
  }
  const bool rg = tape.requires_grad(x) || tape.requires_grad(gain) || tape.requires_grad(bias);
  const std::size_t self = tape.size();
  return tape.record(std::move(out), rg,
                     [x, gain, bias, self, m, d, xhat = std::move(xhat), inv_std = std::move(inv_std)](Tape& t) {
                       const auto go = t.grad(self);
                       const Tensor& gv = t.value(gain);
                       if (t.requires_grad(gain) || t.requires_grad(bias)) {
                         auto gg = t.grad(gain);
                         auto gb = t.grad(bias);
                         for (std::size_t i = 0; i < m; ++i)
                           for (std::size_t j = 0; j < d; ++j) {
                             gg[j] += go[i * d + j] * xhat[i * d + j];
                             gb[j] += go[i * d + j];
                           }
                       }
                       if (!t.requires_grad(x)) return;
                       auto gx = t.grad(x);
                       const double inv_d = 1.0 / static_cast<double>(d);
                       for (std::size_t i = 0; i < m; ++i) {
                         double sum_dy = 0.0, sum_dy_xhat = 0.0;
                         for (std::size_t j = 0; j < d; ++j) {
                           const double dy = go[i * d + j] * gv[j];
                           sum_dy += dy;
                           sum_dy_xhat += dy * xhat[i * d + j];
                         }
                         for (std::size_t j = 0; j < d; ++j) {
                           const double dy = go[i * d + j] * gv[j];
                           gx[i * d + j] += inv_std[i] * (dy - inv_d * sum_dy - xhat[i * d + j] * inv_d * sum_dy_xhat);
                         }
                       }
                     });
}

/// Causal attention probabilities for one head: row i is a softmax over
/// columns 0..i of (q_i . k_j) / sqrt(head_dim). Entries above the diagonal
/// are zero.
inline std::vector<double> causal_attention_probs(const Tensor& qkv, std::size_t heads, std::size_t head) {
  const std::size_t len = qkv.dim(0);
  const std::size_t d = qkv.dim(1) / 3;
  const std::size_t hd = d / heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(hd));
  std::vector<double> p(len * len, 0.0);
  for (std::size_t i = 0; i < len; ++i) {
    const double* q = &qkv[i * 3 * d + head * hd];
    for (std::size_t j = 0; j <= i; ++j) {
      const double* k = &qkv[j * 3 * d + d + head * hd];
      double s = 0.0;
      for (std::size_t c = 0; c < hd; ++c) s += q[c] * k[c];
      p[i * len + j] = s * inv_sqrt;
    }
    softmax_inplace(std::span<double>(&p[i * len], i + 1));
  }
  return p;
}

/// Multi-head causal self-attention over packed [L x 3D] projections
/// (query | key | value). Returns the concatenated head outputs, [L x D].
inline Var causal_attention(Var qkv, std::size_t heads) {
  Tape& tape = *qkv.tape;
  const Tensor& in = qkv.value();
  detail::require_rank2(in, "causal_attention");
  if (in.dim(1) % 3 != 0 || (in.dim(1) / 3) % heads != 0) {
    throw DimensionError("qkv width " + std::to_string(in.dim(1)) + " incompatible with " +
                         std::to_string(heads) + " heads");
  }
  const std::size_t len = in.dim(0), d = in.dim(1) / 3, hd = d / heads;
  Tensor out({len, d});
  std::vector<std::vector<double>> probs(heads);
  for (std::size_t h = 0; h < heads; ++h) {
    probs[h] = causal_attention_probs(in, heads, h);
    const auto& p = probs[h];
    for (std::size_t i = 0; i < len; ++i) {
      double* o = &out[i * d + h * hd];
      for (std::size_t j = 0; j <= i; ++j) {
        const double w = p[i * len + j];
        const double* v = &in[j * 3 * d + 2 * d + h * hd];
        for (std::size_t c = 0; c < hd; ++c) o[c] += w * v[c];
      }
    }
  }
  const std::size_t self = tape.size();
  return tape.record(std::move(out), tape.requires_grad(qkv),
                     [qkv, heads, self, len, d, hd, probs = std::move(probs)](Tape& t) {
                       const Tensor& in = t.value(qkv);
                       const auto go = t.grad(self);
                       auto gi = t.grad(qkv);
                       const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(hd));
                       std::vector<double> dp(len);
                       for (std::size_t h = 0; h < heads; ++h) {
                         const auto& p = probs[h];
                         for (std::size_t i = 0; i < len; ++i) {
                           const double* g = &go[i * d + h * hd];
                           double row_dot = 0.0;
                           for (std::size_t j = 0; j <= i; ++j) {
                             const double* v = &in[j * 3 * d + 2 * d + h * hd];
                             double* gv = &gi[j * 3 * d + 2 * d + h * hd];
                             double s = 0.0;
                             const double w = p[i * len + j];
                             for (std::size_t c = 0; c < hd; ++c) {
                               s += g[c] * v[c];
                               gv[c] += w * g[c];
                             }
                             dp[j] = s;
                             row_dot += s * w;
                           }
                           const double* q = &in[i * 3 * d + h * hd];
                           double* gq = &gi[i * 3 * d + h * hd];
                           for (std::size_t j = 0; j <= i; ++j) {
                             const double ds = p[i * len + j] * (dp[j] - row_dot) * inv_sqrt;
                             if (ds == 0.0) continue;
                             const double* k = &in[j * 3 * d + d + h * hd];
                             double* gk = &gi[j * 3 * d + d + h * hd];
                             for (std::size_t c = 0; c < hd; ++c) {
                               gq[c] += ds * k[c];
                               gk[c] += ds * q[c];
                             }
                           }
                         }
                       }
                     });
}

/// Rows of `table` selected by `ids`, as an [n x D] matrix.
inline Var gather_rows(Var table, const std::vector<int>& ids) {
  Tape& tape = *table.tape;
  const Tensor& tv = table.value();
  detail::require_rank2(tv, "gather_rows");
  const std::size_t d = tv.dim(1);
  Tensor out({ids.size(), d});
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= tv.dim(0)) {
      throw DimensionError("row index " + std::to_string(ids[i]) + " outside table of " +
                           std::to_string(tv.dim(0)) + " rows");
    }
    auto src = tv.row(static_cast<std::size_t>(ids[i]));
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  const std::size_t self = tape.size();
  return tape.record(std::move(out), tape.requires_grad(table), [table, ids, d, self](Tape& t) {
    const auto go = t.grad(self);
    auto g = t.grad(table);
    for (std::size_t i = 0; i < ids.size(); ++i) {
      double* dst = &g[static_cast<std::size_t>(ids[i]) * d];
      for (std::size_t c = 0; c < d; ++c) dst[c] += go[i * d + c];
    }
  });
}

/// Rows [begin, begin + count) of a matrix.
inline Var slice_rows(Var m, std::size_t begin, std::size_t count) {
  Tape& tape = *m.tape;
  const Tensor& mv = m.value();
  detail::require_rank2(mv, "slice_rows");
  if (begin + count > mv.dim(0)) throw DimensionError("slice_rows beyond matrix height");
  const std::size_t d = mv.dim(1);
  const auto first = mv.data().begin() + static_cast<std::ptrdiff_t>(begin * d);
  Tensor out({count, d}, std::vector<double>(first, first + static_cast<std::ptrdiff_t>(count * d)));
  const std::size_t self = tape.size();
  return tape.record(std::move(out), tape.requires_grad(m), [m, begin, d, self](Tape& t) {
    const auto go = t.grad(self);
    auto g = t.grad(m);
    for (std::size_t i = 0; i < go.size(); ++i) g[begin * d + i] += go[i];
  });
}

/// Vertical concatenation. Rank-1 parts count as single rows.
inline Var concat_rows(const std::vector<Var>& parts) {
  if (parts.empty()) throw DimensionError("concat_rows of nothing");
  Tape& tape = *parts.front().tape;
  const std::size_t d = parts.front().value().cols();
  std::size_t rows = 0;
  bool rg = false;
  for (Var p : parts) {
    if (p.tape != &tape) throw StateError("operands live on different tapes");
    if (p.value().cols() != d) throw DimensionError("concat_rows width mismatch");
    rows += p.value().rows();
    rg = rg || tape.requires_grad(p);
  }
  Tensor out({rows, d});
  std::size_t off = 0;
  for (Var p : parts) {
    const auto src = p.value().data();
    std::copy(src.begin(), src.end(), out.data().begin() + static_cast<std::ptrdiff_t>(off));
    off += src.size();
  }
  const std::size_t self = tape.size();
  return tape.record(std::move(out), rg, [parts, self](Tape& t) {
    const auto go = t.grad(self);
    std::size_t off = 0;
    for (Var p : parts) {
      const std::size_t n = t.value(p).size();
      if (t.requires_grad(p)) {
        auto g = t.grad(p);
        for (std::size_t i = 0; i < n; ++i) g[i] += go[off + i];
      }
      off += n;
    }
  });
}

/// Row i of a matrix as a rank-1 vector.
inline Var take_row(Var m, std::size_t i) {
  Tape& tape = *m.tape;
  const Tensor& mv = m.value();
  detail::require_rank2(mv, "take_row");
  if (i >= mv.dim(0)) throw DimensionError("take_row index out of range");
  const std::size_t d = mv.dim(1);
  auto src = mv.row(i);
  Tensor out({d}, std::vector<double>(src.begin(), src.end()));
  const std::size_t self = tape.size();
  return tape.record(std::move(out), tape.requires_grad(m), [m, i, d, self](Tape& t) {
    const auto go = t.grad(self);
    auto g = t.grad(m);
    for (std::size_t c = 0; c < d; ++c) g[i * d + c] += go[c];
  });
}

/// Unit-norm rescaling of a vector; zero vectors raise DegenerateInputError.
inline Var l2_normalize(Var v) {
  Tape& tape = *v.tape;
  Tensor out = vtc::l2_normalize(v.value());
  const double norm = l2_norm(v.value().data());
  const std::size_t self = tape.size();
  return tape.record(std::move(out), tape.requires_grad(v), [v, norm, self](Tape& t) {
    const Tensor& y = t.value(self);
    const auto go = t.grad(self);
    auto g = t.grad(v);
    double yd = 0.0;
    for (std::size_t i = 0; i < go.size(); ++i) yd += y[i] * go[i];
    for (std::size_t i = 0; i < go.size(); ++i) g[i] += (go[i] - y[i] * yd) / norm;
  });
}

/// Bilinear downsampling of a [H*W, C] site matrix; gradients flow back
/// through the transpose of the same sampling weights.
inline Var bilinear_downsample(Var sites, std::size_t height, std::size_t width, std::size_t factor) {
  Tape& tape = *sites.tape;
  Tensor out = bilinear_downsample_sites(sites.value(), height, width, factor);
  const std::size_t self = tape.size();
  return tape.record(std::move(out), tape.requires_grad(sites), [sites, height, width, factor, self](Tape& t) {
    const Tensor& og = t.value(self);
    Tensor go(og.shape(), std::vector<double>(og.grad().begin(), og.grad().end()));
    const Tensor back = bilinear_downsample_sites_backward(go, height, width, factor);
    auto g = t.grad(sites);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += back[i];
  });
}

/// Mean token cross-entropy over masked rows of a [T x V] logit matrix.
/// Row t is scored against targets[t].
inline Var cross_entropy(Var logits, const std::vector<int>& targets, const std::vector<bool>& mask) {
  Tape& tape = *logits.tape;
  const Tensor& lv = logits.value();
  detail::require_rank2(lv, "cross_entropy");
  const std::size_t rows = lv.dim(0), vocab = lv.dim(1);
  if (targets.size() != rows || mask.size() != rows) {
    throw DimensionError("cross_entropy: " + std::to_string(rows) + " logit rows but " +
                         std::to_string(targets.size()) + " targets and " + std::to_string(mask.size()) +
                         " mask entries");
  }
  std::size_t active = 0;
  for (bool m : mask) active += m ? 1 : 0;
  if (active == 0) throw ParameterError("cross_entropy mask selects no positions");
  std::vector<double> probs(rows * vocab, 0.0);
  double loss = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    if (!mask[r]) continue;
    if (targets[r] < 0 || static_cast<std::size_t>(targets[r]) >= vocab) {
      throw DimensionError("target token " + std::to_string(targets[r]) + " outside vocabulary");
    }
    std::span<double> p(&probs[r * vocab], vocab);
    auto src = lv.row(r);
    std::copy(src.begin(), src.end(), p.begin());
    double mx = p[0];
    for (double x : p) mx = std::max(mx, x);
    double sum = 0.0;
    for (double x : p) sum += std::exp(x - mx);
    const double log_z = mx + std::log(sum);
    loss += log_z - src[static_cast<std::size_t>(targets[r])];
    for (double& x : p) x = std::exp(x - log_z);
  }
  const double inv = 1.0 / static_cast<double>(active);
  const std::size_t self = tape.size();
  return tape.record(Tensor({1}, loss * inv), tape.requires_grad(logits),
                     [logits, targets, mask, vocab, inv, self, probs = std::move(probs)](Tape& t) {
                       const double go = t.grad(self)[0] * inv;
                       auto g = t.grad(logits);
                       for (std::size_t r = 0; r < mask.size(); ++r) {
                         if (!mask[r]) continue;
                         for (std::size_t c = 0; c < vocab; ++c) g[r * vocab + c] += go * probs[r * vocab + c];
                         g[r * vocab + static_cast<std::size_t>(targets[r])] -= go;
                       }
                     });
}

/// Sum of scalar values.
inline Var sum_scalars(const std::vector<Var>& parts) {
  if (parts.empty()) throw DimensionError("sum of nothing");
  Tape& tape = *parts.front().tape;
  double s = 0.0;
  bool rg = false;
  for (Var p : parts) {
    if (p.value().size() != 1) throw DimensionError("sum_scalars expects scalars");
    s += p.value()[0];
    rg = rg || tape.requires_grad(p);
  }
  const std::size_t self = tape.size();
  return tape.record(Tensor({1}, s), rg, [parts, self](Tape& t) {
    const double go = t.grad(self)[0];
    for (Var p : parts)
      if (t.requires_grad(p)) t.grad(p)[0] += go;
  });
}

}  // namespace ad
}  // namespace vtc
