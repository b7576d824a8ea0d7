#pragma once

#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "vtc/model/weights.hpp"
#include "vtc/numerics/tape.hpp"

namespace vtc::testing {

inline Tensor random_tensor(Shape shape, std::mt19937_64& rng, double stddev = 1.0) {
  std::normal_distribution<double> n(0.0, stddev);
  Tensor t(std::move(shape));
  for (double& x : t.data()) x = n(rng);
  return t;
}

/// Builds an output from leaves recorded on a fresh tape.
using TapeFn = std::function<Var(Tape&, const std::vector<Var>&)>;

/// Normwise relative error between the tape gradient of <r, f(inputs)> and
/// central differences, with r a fixed random projection of the output.
inline double gradient_error(const std::vector<Tensor>& inputs, const TapeFn& f, double step = 1e-5,
                             std::uint64_t seed = 7) {
  auto projected = [&](const std::vector<Tensor>& xs, const Tensor* proj, std::vector<Tensor>* grads) {
    Tape tape;
    std::vector<Var> leaves;
    for (const auto& x : xs) leaves.push_back(tape.leaf(x));
    Var out = f(tape, leaves);
    const Tensor& y = out.value();
    Tensor r = proj ? *proj : Tensor(y.shape(), 1.0);
    double s = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) s += r[i] * y[i];
    if (grads) {
      tape.backward({{out, r}});
      for (Var v : leaves) grads->push_back(tape.gradient(v));
    }
    return s;
  };
  // Output shape and projection.
  Tensor proj;
  {
    Tape tape;
    std::vector<Var> leaves;
    for (const auto& x : inputs) leaves.push_back(tape.leaf(x));
    Var out = f(tape, leaves);
    std::mt19937_64 rng(seed);
    proj = random_tensor(out.value().shape(), rng);
  }
  std::vector<Tensor> analytic;
  projected(inputs, &proj, &analytic);
  double diff2 = 0.0, a2 = 0.0, n2 = 0.0;
  std::vector<Tensor> xs = inputs;
  for (std::size_t k = 0; k < xs.size(); ++k) {
    for (std::size_t i = 0; i < xs[k].size(); ++i) {
      const double orig = xs[k][i];
      xs[k][i] = orig + step;
      const double up = projected(xs, &proj, nullptr);
      xs[k][i] = orig - step;
      const double down = projected(xs, &proj, nullptr);
      xs[k][i] = orig;
      const double numeric = (up - down) / (2.0 * step);
      const double a = analytic[k][i];
      diff2 += (a - numeric) * (a - numeric);
      a2 += a * a;
      n2 += numeric * numeric;
    }
  }
  const double denom = std::max(std::sqrt(std::max(a2, n2)), 1e-12);
  return std::sqrt(diff2) / denom;
}

/// Same check for a scalar loss of model weights, probing `probes` randomly
/// chosen coordinates across all parameter tensors.
using WeightsFn = std::function<Var(const BoundWeights&)>;

inline double weights_gradient_error(const ModelWeights& weights, const WeightsFn& f, std::size_t probes = 120,
                                     double step = 1e-5, std::uint64_t seed = 11) {
  ModelWeights grads;
  {
    Tape tape;
    BoundWeights w = bind(tape, weights);
    Var loss = f(w);
    tape.backward(loss);
    grads = collect_gradients(tape, w);
  }
  auto value = [&](const ModelWeights& ws) {
    Tape tape;
    return f(bind(tape, ws, false)).value()[0];
  };
  ModelWeights probe = weights;
  auto params = flatten(probe);
  auto gs = flatten(grads);
  std::size_t total = 0;
  for (Tensor* t : params) total += t->size();
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, total - 1);
  double diff2 = 0.0, a2 = 0.0, n2 = 0.0;
  for (std::size_t p = 0; p < probes; ++p) {
    std::size_t flat = pick(rng), k = 0;
    while (flat >= params[k]->size()) flat -= params[k++]->size();
    double& x = (*params[k])[flat];
    const double orig = x;
    x = orig + step;
    const double up = value(probe);
    x = orig - step;
    const double down = value(probe);
    x = orig;
    const double numeric = (up - down) / (2.0 * step);
    const double a = (*gs[k])[flat];
    diff2 += (a - numeric) * (a - numeric);
    a2 += a * a;
    n2 += numeric * numeric;
  }
  return std::sqrt(diff2) / std::max(std::sqrt(std::max(a2, n2)), 1e-12);
}

}  // namespace vtc::testing
