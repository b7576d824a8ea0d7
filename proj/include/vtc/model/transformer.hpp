#pragma once

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "vtc/errors.hpp"
#include "vtc/model/config.hpp"
#include "vtc/model/example.hpp"
#include "vtc/model/weights.hpp"
#include "vtc/numerics/ops.hpp"
#include "vtc/numerics/tape.hpp"

namespace vtc {

/// Unit-norm embedding of one encoded example.
struct Embedding {
  Tensor vector;
  std::string source_id;

  std::size_t dim() const { return vector.size(); }
};

namespace forward {

/// Patch embedding -> bilinear compression by s -> connector, flattened
/// row-major. Returns [(H/s)*(W/s) x D].
inline Var encode_visual(const BoundWeights& w, const Grid2D& image, const ModelConfig& cfg) {
  detail::check_image(image, cfg);
  Tape& tape = *w.patch_weight.tape;
  Var sites = tape.constant(image.as_site_matrix());
  Var features = ad::linear(sites, w.patch_weight, w.patch_bias);
  Var compressed = ad::bilinear_downsample(features, cfg.grid_height, cfg.grid_width, cfg.compression);
  return ad::linear(compressed, w.connector_weight, w.connector_bias);
}

/// Token/visual embeddings plus learned positions, [L x D].
inline Var input_embeddings(const BoundWeights& w, const TokenSequence& seq, const ModelConfig& cfg) {
  if (seq.tokens.empty()) throw ParameterError("cannot run the model on an empty sequence");
  if (seq.size() > cfg.max_seq_len) {
    throw LengthError("sequence length " + std::to_string(seq.size()) + " exceeds max_seq_len " +
                      std::to_string(cfg.max_seq_len));
  }
  const std::size_t per_image = cfg.visual_tokens();
  if (seq.visual_slots() != per_image * seq.images.size()) {
    throw ContractError("sequence has " + std::to_string(seq.visual_slots()) + " image slots for " +
                        std::to_string(seq.images.size()) + " images of " + std::to_string(per_image) + " tokens");
  }
  Tape& tape = *w.token_embedding.tape;
  std::vector<Var> parts;
  std::vector<int> run;
  std::size_t image = 0;
  std::size_t i = 0;
  while (i < seq.size()) {
    if (seq.tokens[i] == TokenVocabulary::kImageSlot) {
      if (!run.empty()) {
        parts.push_back(ad::gather_rows(w.token_embedding, run));
        run.clear();
      }
      parts.push_back(encode_visual(w, seq.images[image++], cfg));
      i += per_image;
    } else {
      const int t = seq.tokens[i++];
      if (t < 0 || static_cast<std::size_t>(t) >= cfg.vocab_size) {
        throw ConfigError("token " + std::to_string(t) + " outside vocabulary");
      }
      run.push_back(t);
    }
  }
  if (!run.empty()) parts.push_back(ad::gather_rows(w.token_embedding, run));
  Var x = parts.size() == 1 ? parts.front() : ad::concat_rows(parts);
  (void)tape;
  return ad::add(x, ad::slice_rows(w.position_embedding, 0, seq.size()));
}

/// Pre-norm causal transformer trunk; returns the residual stream [L x D]
/// before the final norm.
inline Var trunk(const BoundWeights& w, const TokenSequence& seq, const ModelConfig& cfg) {
  Var x = input_embeddings(w, seq, cfg);
  for (const auto& l : w.layers) {
    Var a = ad::layer_norm(x, l.ln1_gain, l.ln1_bias);
    Var att = ad::causal_attention(ad::linear(a, l.qkv_weight, l.qkv_bias), cfg.num_heads);
    x = ad::add(x, ad::linear(att, l.out_weight, l.out_bias));
    Var b = ad::layer_norm(x, l.ln2_gain, l.ln2_bias);
    Var f = ad::gelu(ad::linear(b, l.fc_weight, l.fc_bias));
    x = ad::add(x, ad::linear(f, l.proj_weight, l.proj_bias));
  }
  return x;
}

/// Final-norm hidden state at one position, [1 x D].
inline Var hidden_at(const BoundWeights& w, Var stream, std::size_t position) {
  return ad::layer_norm(ad::slice_rows(stream, position, 1), w.final_gain, w.final_bias);
}

/// l2-normalised final hidden state of the last content token (trailing PAD
/// is ignored).
inline Var embed(const BoundWeights& w, const TokenSequence& seq, const ModelConfig& cfg) {
  Var stream = trunk(w, seq, cfg);
  return ad::l2_normalize(ad::take_row(hidden_at(w, stream, seq.last_content_position()), 0));
}

/// Next-token logits at the final position, [1 x V].
inline Var last_logits(const BoundWeights& w, const TokenSequence& seq, const ModelConfig& cfg) {
  Var stream = trunk(w, seq, cfg);
  Var h = hidden_at(w, stream, seq.size() - 1);
  Tape& tape = *w.head_weight.tape;
  return ad::linear(h, w.head_weight, tape.constant(Tensor({cfg.vocab_size})));
}

/// Next-token logits at every position, [L x V].
inline Var all_logits(const BoundWeights& w, const TokenSequence& seq, const ModelConfig& cfg) {
  Var stream = trunk(w, seq, cfg);
  Var h = ad::layer_norm(stream, w.final_gain, w.final_bias);
  Tape& tape = *w.head_weight.tape;
  return ad::linear(h, w.head_weight, tape.constant(Tensor({cfg.vocab_size})));
}

}  // namespace forward

/// Toy compressed multimodal transformer: configuration plus weights.
class Model {
 public:
  explicit Model(const ModelConfig& cfg) : cfg_(cfg), weights_(init_weights(cfg)) {}
  Model(const ModelConfig& cfg, ModelWeights weights) : cfg_(cfg), weights_(std::move(weights)) { cfg_.validate(); }

  const ModelConfig& config() const { return cfg_; }
  const ModelWeights& weights() const { return weights_; }
  ModelWeights& weights() { return weights_; }

 private:
  ModelConfig cfg_;
  ModelWeights weights_;
};

/// Binds the weights once (without gradients) and evaluates many inputs,
/// rewinding the tape between calls.
class InferenceSession {
 public:
  explicit InferenceSession(const Model& model)
      : cfg_(model.config()), bound_(bind(tape_, model.weights(), false)), mark_(tape_.size()) {}

  InferenceSession(const InferenceSession&) = delete;
  InferenceSession& operator=(const InferenceSession&) = delete;

  const ModelConfig& config() const { return cfg_; }

  Embedding embed(const MultimodalExample& ex) {
    Rewind r(*this);
    return {forward::embed(bound_, serialize(ex, cfg_), cfg_).value(), ex.id};
  }

  Embedding embed(const TokenSequence& seq, std::string id = {}) {
    Rewind r(*this);
    return {forward::embed(bound_, seq, cfg_).value(), std::move(id)};
  }

  Tensor next_token_logits(const TokenSequence& prefix) {
    if (prefix.tokens.empty()) throw ParameterError("next_token_logits needs a non-empty prefix");
    Rewind r(*this);
    return forward::last_logits(bound_, prefix, cfg_).value().reshaped({cfg_.vocab_size});
  }

  Tensor all_logits(const TokenSequence& seq) {
    Rewind r(*this);
    return forward::all_logits(bound_, seq, cfg_).value();
  }

  /// Compressed visual token embeddings for one image, [(H/s)*(W/s) x D].
  Tensor encode_visual(const Grid2D& image) {
    Rewind r(*this);
    return forward::encode_visual(bound_, image, cfg_).value();
  }

 private:
  struct Rewind {
    InferenceSession& s;
    explicit Rewind(InferenceSession& session) : s(session) {}
    ~Rewind() { s.tape_.truncate(s.mark_); }
  };

  ModelConfig cfg_;
  Tape tape_;
  BoundWeights bound_;
  std::size_t mark_;
};

inline Embedding embed(const Model& model, const MultimodalExample& ex) {
  InferenceSession s(model);
  return s.embed(ex);
}

inline Tensor next_token_logits(const Model& model, const TokenSequence& prefix) {
  InferenceSession s(model);
  return s.next_token_logits(prefix);
}

inline Tensor encode_visual(const Model& model, const Grid2D& image) {
  InferenceSession s(model);
  return s.encode_visual(image);
}

inline std::vector<Embedding> embed_all(const Model& model, const std::vector<const MultimodalExample*>& examples) {
  InferenceSession s(model);
  std::vector<Embedding> out;
  out.reserve(examples.size());
  for (const auto* ex : examples) out.push_back(s.embed(*ex));
  return out;
}

}  // namespace vtc
