#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <vector>

#include "vtc/errors.hpp"
#include "vtc/numerics/tensor.hpp"

namespace vtc {

/// Standard matrix product of [m x k] and [k x n] tensors.
inline Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2) {
    throw DimensionError("matmul expects rank-2 operands, got " + shape_string(a.shape()) + " and " +
                         shape_string(b.shape()));
  }
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    throw DimensionError("matmul inner dimensions differ: " + shape_string(a.shape()) + " x " +
                         shape_string(b.shape()));
  }
  Tensor c({m, n});
  const double* pa = a.data().data();
  const double* pb = b.data().data();
  double* pc = c.data().data();
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = pc + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = pa[i * k + p];
      if (av == 0.0) continue;
      const double* brow = pb + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
  return c;
}

/// In-place temperature softmax over a contiguous span.
inline void softmax_inplace(std::span<double> x, double temperature = 1.0) {
  if (!(temperature > 0.0)) throw ParameterError("softmax temperature must be positive");
  if (x.empty()) return;
  double mx = -std::numeric_limits<double>::infinity();
  for (double v : x) mx = std::max(mx, v);
  double sum = 0.0;
  for (double& v : x) {
    v = std::exp((v - mx) / temperature);
    sum += v;
  }
  for (double& v : x) v /= sum;
}

/// Softmax of (x / temperature) along the last axis.
inline Tensor softmax(const Tensor& x, double temperature = 1.0) {
  if (!(temperature > 0.0)) throw ParameterError("softmax temperature must be positive");
  if (x.rank() == 0 || x.size() == 0) throw DimensionError("softmax of an empty tensor");
  Tensor out = x;
  const std::size_t n = x.shape().back();
  for (std::size_t off = 0; off < out.size(); off += n) {
    softmax_inplace(out.data().subspan(off, n), temperature);
  }
  return out;
}

/// One bilinear tap along an axis: out[i] = w0 * in[i0] + w1 * in[i1].
struct ResampleTap {
  std::size_t i0;
  std::size_t i1;
  double w0;
  double w1;
};

/// Half-pixel-centred sampling plan for shrinking an axis of `length` sites by
/// `factor`. Output site i reads source coordinate (i + 0.5) * factor - 0.5.
inline std::vector<ResampleTap> downsample_taps(std::size_t length, std::size_t factor) {
  std::vector<ResampleTap> taps;
  const std::size_t out = length / factor;
  taps.reserve(out);
  for (std::size_t i = 0; i < out; ++i) {
    const double src = (static_cast<double>(i) + 0.5) * static_cast<double>(factor) - 0.5;
    const double fl = std::floor(src);
    const auto i0 = static_cast<std::size_t>(std::max(fl, 0.0));
    const double frac = src - fl;
    const std::size_t i1 = std::min(i0 + 1, length - 1);
    taps.push_back({i0, i1, 1.0 - frac, frac});
  }
  return taps;
}

inline void check_downsample_args(std::size_t height, std::size_t width, std::size_t factor) {
  if (factor < 1) throw ParameterError("compression factor must be >= 1");
  if (height % factor != 0 || width % factor != 0) {
    throw DimensionError("grid " + std::to_string(height) + "x" + std::to_string(width) +
                         " is not divisible by compression factor " + std::to_string(factor) +
                         " (height % s = " + std::to_string(height % factor) +
                         ", width % s = " + std::to_string(width % factor) + ")");
  }
}

/// Bilinear downsampling of a [H*W, C] site matrix to [(H/s)*(W/s), C].
inline Tensor bilinear_downsample_sites(const Tensor& sites, std::size_t height, std::size_t width,
                                        std::size_t factor) {
  check_downsample_args(height, width, factor);
  if (sites.rank() != 2 || sites.dim(0) != height * width) {
    throw DimensionError("site matrix " + shape_string(sites.shape()) + " does not match a " +
                         std::to_string(height) + "x" + std::to_string(width) + " grid");
  }
  const std::size_t channels = sites.dim(1);
  const auto ty = downsample_taps(height, factor);
  const auto tx = downsample_taps(width, factor);
  Tensor out({ty.size() * tx.size(), channels});
  for (std::size_t oy = 0; oy < ty.size(); ++oy) {
    const ResampleTap& a = ty[oy];
    for (std::size_t ox = 0; ox < tx.size(); ++ox) {
      const ResampleTap& b = tx[ox];
      auto dst = out.row(oy * tx.size() + ox);
      const std::size_t src[4] = {a.i0 * width + b.i0, a.i0 * width + b.i1, a.i1 * width + b.i0,
                                  a.i1 * width + b.i1};
      const double w[4] = {a.w0 * b.w0, a.w0 * b.w1, a.w1 * b.w0, a.w1 * b.w1};
      for (int t = 0; t < 4; ++t) {
        if (w[t] == 0.0) continue;
        auto s = sites.row(src[t]);
        for (std::size_t c = 0; c < channels; ++c) dst[c] += w[t] * s[c];
      }
    }
  }
  return out;
}

/// Transpose of bilinear_downsample_sites: scatters output-site gradients back
/// onto the source sites with the forward weights.
inline Tensor bilinear_downsample_sites_backward(const Tensor& grad_out, std::size_t height,
                                                 std::size_t width, std::size_t factor) {
  check_downsample_args(height, width, factor);
  const std::size_t channels = grad_out.cols();
  const auto ty = downsample_taps(height, factor);
  const auto tx = downsample_taps(width, factor);
  Tensor grad_in({height * width, channels});
  for (std::size_t oy = 0; oy < ty.size(); ++oy) {
    const ResampleTap& a = ty[oy];
    for (std::size_t ox = 0; ox < tx.size(); ++ox) {
      const ResampleTap& b = tx[ox];
      auto g = grad_out.row(oy * tx.size() + ox);
      const std::size_t dst[4] = {a.i0 * width + b.i0, a.i0 * width + b.i1, a.i1 * width + b.i0,
                                  a.i1 * width + b.i1};
      const double w[4] = {a.w0 * b.w0, a.w0 * b.w1, a.w1 * b.w0, a.w1 * b.w1};
      for (int t = 0; t < 4; ++t) {
        if (w[t] == 0.0) continue;
        auto d = grad_in.row(dst[t]);
        for (std::size_t c = 0; c < channels; ++c) d[c] += w[t] * g[c];
      }
    }
  }
  return grad_in;
}

/// Parameter-free spatial compression of a feature grid by factor s per axis.
/// Rejects grids whose sides are not multiples of s.
inline Grid2D bilinear_downsample(const Grid2D& input, std::size_t factor) {
  check_downsample_args(input.height(), input.width(), factor);
  Tensor sites = bilinear_downsample_sites(input.as_site_matrix(), input.height(), input.width(), factor);
  return Grid2D(std::move(sites).reshaped({input.height() / factor, input.width() / factor, input.channels()}));
}

inline double l2_norm(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

/// Scales v to unit Euclidean norm. Zero (or non-finite) norms are rejected.
inline Tensor l2_normalize(const Tensor& v) {
  const double n = l2_norm(v.data());
  if (!(n > 0.0) || !std::isfinite(n)) {
    throw DegenerateInputError("cannot l2-normalize a vector with norm " + std::to_string(n));
  }
  Tensor out = v;
  for (double& x : out.data()) x /= n;
  return out;
}

inline double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw DimensionError("dot product of unequal lengths");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace vtc
