#pragma once

#include <cmath>
#include <cstddef>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "vtc/errors.hpp"
#include "vtc/model/weights.hpp"

namespace vtc {

/// Linear warmup to `peak`, then cosine decay to zero at `total_steps`.
struct LrSchedule {
  double peak = 3e-4;
  double warmup_fraction = 0.05;
  std::size_t total_steps = 1;

  std::size_t warmup_steps() const {
    return static_cast<std::size_t>(std::llround(warmup_fraction * static_cast<double>(total_steps)));
  }

  /// Learning rate for 0-based `step`.
  double at(std::size_t step) const {
    const std::size_t w = warmup_steps();
    if (step < w) return peak * static_cast<double>(step + 1) / static_cast<double>(w);
    if (total_steps <= w) return peak;
    const double progress = static_cast<double>(step - w) / static_cast<double>(total_steps - w);
    return peak * 0.5 * (1.0 + std::cos(std::numbers::pi * std::min(progress, 1.0)));
  }
};

struct AdamHyper {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// One bias-corrected Adam update on a flat parameter block. `t` is the
/// 1-based step count after this update.
inline void adam_update(std::span<double> param, std::span<const double> grad, std::span<double> m,
                        std::span<double> v, std::size_t t, double lr, const AdamHyper& h = {}) {
  const double c1 = 1.0 - std::pow(h.beta1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(h.beta2, static_cast<double>(t));
  for (std::size_t i = 0; i < param.size(); ++i) {
    m[i] = h.beta1 * m[i] + (1.0 - h.beta1) * grad[i];
    v[i] = h.beta2 * v[i] + (1.0 - h.beta2) * grad[i] * grad[i];
    const double mhat = m[i] / c1;
    const double vhat = v[i] / c2;
    param[i] -= lr * mhat / (std::sqrt(vhat) + h.epsilon);
  }
}

/// Adam with a warmup/cosine schedule over every model parameter.
class AdamOptimizer {
 public:
  AdamOptimizer(const ModelWeights& like, LrSchedule schedule, AdamHyper hyper = {})
      : schedule_(schedule), hyper_(hyper), m_(like), v_(like) {
    for (Tensor* t : flatten(m_)) std::fill(t->data().begin(), t->data().end(), 0.0);
    for (Tensor* t : flatten(v_)) std::fill(t->data().begin(), t->data().end(), 0.0);
  }

  std::size_t steps_taken() const { return step_; }
  double next_lr() const { return schedule_.at(step_); }
  const LrSchedule& schedule() const { return schedule_; }

  /// Applies one update. Rejects non-finite gradients, naming the parameter.
  void step(ModelWeights& params, const ModelWeights& grads) {
    std::vector<std::pair<std::string, const Tensor*>> named;
    grads.visit([&](const std::string& name, const Tensor& g) { named.emplace_back(name, &g); });
    for (const auto& [name, g] : named) {
      for (double x : g->data()) {
        if (!std::isfinite(x)) throw TrainingError("non-finite gradient in parameter '" + name + "'");
      }
    }
    const double lr = schedule_.at(step_);
    ++step_;
    auto ps = flatten(params);
    auto ms = flatten(m_);
    auto vs = flatten(v_);
    if (ps.size() != named.size()) throw DimensionError("gradient structure does not match parameters");
    for (std::size_t k = 0; k < ps.size(); ++k) {
      if (ps[k]->size() != named[k].second->size()) {
        throw DimensionError("gradient for '" + named[k].first + "' has the wrong size");
      }
      adam_update(ps[k]->data(), named[k].second->data(), ms[k]->data(), vs[k]->data(), step_, lr, hyper_);
    }
  }

 private:
  LrSchedule schedule_;
  AdamHyper hyper_;
  ModelWeights m_, v_;
  std::size_t step_ = 0;
};

/// Element-wise g += other.
inline void accumulate(ModelWeights& into, const ModelWeights& other) {
  auto a = flatten(into);
  std::vector<const Tensor*> b;
  other.visit([&](const std::string&, const Tensor& t) { b.push_back(&t); });
  for (std::size_t k = 0; k < a.size(); ++k)
    for (std::size_t i = 0; i < a[k]->size(); ++i) (*a[k])[i] += (*b[k])[i];
}

inline void scale_in_place(ModelWeights& w, double factor) {
  for (Tensor* t : flatten(w))
    for (double& x : t->data()) x *= factor;
}

}  // namespace vtc
