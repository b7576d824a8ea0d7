#pragma once

#include <cstddef>
#include <random>
#include <string>
#include <vector>

#include "vtc/model/config.hpp"
#include "vtc/numerics/random.hpp"
#include "vtc/numerics/tape.hpp"
#include "vtc/numerics/tensor.hpp"

namespace vtc {

template <class T>
struct LayerWeights {
  T ln1_gain, ln1_bias;
  T qkv_weight, qkv_bias;
  T out_weight, out_bias;
  T ln2_gain, ln2_bias;
  T fc_weight, fc_bias;
  T proj_weight, proj_bias;

  template <class F>
  void visit(const std::string& prefix, F&& f) {
    f(prefix + "ln1.gain", ln1_gain);
    f(prefix + "ln1.bias", ln1_bias);
    f(prefix + "attn.qkv.weight", qkv_weight);
    f(prefix + "attn.qkv.bias", qkv_bias);
    f(prefix + "attn.out.weight", out_weight);
    f(prefix + "attn.out.bias", out_bias);
    f(prefix + "ln2.gain", ln2_gain);
    f(prefix + "ln2.bias", ln2_bias);
    f(prefix + "mlp.fc.weight", fc_weight);
    f(prefix + "mlp.fc.bias", fc_bias);
    f(prefix + "mlp.proj.weight", proj_weight);
    f(prefix + "mlp.proj.bias", proj_bias);
  }
};

/// Every learned parameter of the model. Instantiated with Tensor for
/// storage/gradients/optimizer moments and with Var when bound to a tape.
template <class T>
struct Weights {
  T token_embedding;     // [V x D]
  T position_embedding;  // [max_seq_len x D]
  T patch_weight;        // [C x C] per-site patch embedding
  T patch_bias;          // [C]
  T connector_weight;    // [C x D]
  T connector_bias;      // [D]
  std::vector<LayerWeights<T>> layers;
  T final_gain, final_bias;  // [D]
  T head_weight;             // [D x V]

  /// Visits (name, member) pairs in a fixed order.
  template <class F>
  void visit(F&& f) {
    f(std::string("token_embedding"), token_embedding);
    f(std::string("position_embedding"), position_embedding);
    f(std::string("vision.patch.weight"), patch_weight);
    f(std::string("vision.patch.bias"), patch_bias);
    f(std::string("connector.weight"), connector_weight);
    f(std::string("connector.bias"), connector_bias);
    for (std::size_t l = 0; l < layers.size(); ++l) layers[l].visit("layers." + std::to_string(l) + ".", f);
    f(std::string("final_norm.gain"), final_gain);
    f(std::string("final_norm.bias"), final_bias);
    f(std::string("head.weight"), head_weight);
  }

  template <class F>
  void visit(F&& f) const {
    const_cast<Weights*>(this)->visit([&](const std::string& name, T& v) { f(name, static_cast<const T&>(v)); });
  }
};

using ModelWeights = Weights<Tensor>;
using BoundWeights = Weights<Var>;

/// Zero-valued weights with the shapes `cfg` implies.
inline ModelWeights zero_weights(const ModelConfig& cfg) {
  cfg.validate();
  const std::size_t d = cfg.embed_dim, c = cfg.vision_channels, v = cfg.vocab_size, h = cfg.mlp_dim();
  ModelWeights w;
  w.token_embedding = Tensor({v, d});
  w.position_embedding = Tensor({cfg.max_seq_len, d});
  w.patch_weight = Tensor({c, c});
  w.patch_bias = Tensor({c});
  w.connector_weight = Tensor({c, d});
  w.connector_bias = Tensor({d});
  w.layers.resize(cfg.num_layers);
  for (auto& l : w.layers) {
    l.ln1_gain = Tensor({d}, 1.0);
    l.ln1_bias = Tensor({d});
    l.qkv_weight = Tensor({d, 3 * d});
    l.qkv_bias = Tensor({3 * d});
    l.out_weight = Tensor({d, d});
    l.out_bias = Tensor({d});
    l.ln2_gain = Tensor({d}, 1.0);
    l.ln2_bias = Tensor({d});
    l.fc_weight = Tensor({d, h});
    l.fc_bias = Tensor({h});
    l.proj_weight = Tensor({h, d});
    l.proj_bias = Tensor({d});
  }
  w.final_gain = Tensor({d}, 1.0);
  w.final_bias = Tensor({d});
  w.head_weight = Tensor({d, v});
  return w;
}

/// Same shapes as `like`, every entry zero.
inline ModelWeights zeros_like(const ModelWeights& like) {
  ModelWeights w = like;
  w.visit([](const std::string&, Tensor& t) {
    std::fill(t.data().begin(), t.data().end(), 0.0);
    t.drop_grad();
  });
  return w;
}

/// normal(0, 0.02) for matrices, zeros for biases, ones for norm gains.
/// Seeded from cfg.seed.
inline ModelWeights init_weights(const ModelConfig& cfg) {
  ModelWeights w = zero_weights(cfg);
  std::mt19937_64 rng(derive_seed(cfg.seed, label_hash("init")));
  std::normal_distribution<double> normal(0.0, 0.02);
  w.visit([&](const std::string&, Tensor& t) {
    if (t.rank() == 2) {
      for (double& x : t.data()) x = normal(rng);
    }
  });
  return w;
}

/// Copies every parameter onto `tape` as a leaf.
inline BoundWeights bind(Tape& tape, const ModelWeights& w, bool requires_grad = true) {
  BoundWeights b;
  b.layers.resize(w.layers.size());
  std::vector<Var> leaves;
  w.visit([&](const std::string&, const Tensor& t) { leaves.push_back(tape.leaf(t, requires_grad)); });
  std::size_t i = 0;
  b.visit([&](const std::string&, Var& v) { v = leaves[i++]; });
  return b;
}

/// Gradients accumulated on the tape for each bound parameter.
inline ModelWeights collect_gradients(const Tape& tape, const BoundWeights& bound) {
  ModelWeights g;
  g.layers.resize(bound.layers.size());
  std::vector<Tensor> grads;
  bound.visit([&](const std::string&, const Var& v) { grads.push_back(tape.gradient(v)); });
  std::size_t i = 0;
  g.visit([&](const std::string&, Tensor& t) { t = std::move(grads[i++]); });
  return g;
}

/// Flat list of the tensors in visit order.
template <class T>
std::vector<T*> flatten(Weights<T>& w) {
  std::vector<T*> out;
  w.visit([&](const std::string&, T& t) { out.push_back(&t); });
  return out;
}

inline std::size_t parameter_count(const ModelWeights& w) {
  std::size_t n = 0;
  w.visit([&](const std::string&, const Tensor& t) { n += t.size(); });
  return n;
}

}  // namespace vtc
