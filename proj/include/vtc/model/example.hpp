#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "vtc/errors.hpp"
#include "vtc/model/config.hpp"
#include "vtc/model/vocabulary.hpp"
#include "vtc/numerics/tensor.hpp"

namespace vtc {

enum class Role { query, candidate };

inline const char* role_name(Role r) { return r == Role::query ? "query" : "candidate"; }

/// Instruction + optional visual grid + text, encoded as one sequence.
struct MultimodalExample {
  std::string id;
  std::vector<int> instruction;
  std::optional<Grid2D> visual;
  std::vector<int> text;
  Role role = Role::query;

  bool has_visual() const { return visual.has_value(); }
};

/// A multimodal input paired with the response tokens it should generate.
struct InstructionExample {
  MultimodalExample input;
  std::vector<int> response;
};

/// Token ids plus the images whose compressed tokens fill the image slots.
/// Image k occupies the k-th run of visual_tokens() consecutive slots.
struct TokenSequence {
  std::vector<int> tokens;
  std::vector<Grid2D> images;

  std::size_t size() const { return tokens.size(); }

  std::size_t visual_slots() const {
    std::size_t n = 0;
    for (int t : tokens) n += (t == TokenVocabulary::kImageSlot) ? 1 : 0;
    return n;
  }

  /// Index of the last non-padding token.
  std::size_t last_content_position() const {
    std::size_t n = tokens.size();
    while (n > 0 && tokens[n - 1] == TokenVocabulary::kPad) --n;
    if (n == 0) throw ParameterError("sequence has no content tokens");
    return n - 1;
  }

  friend bool operator==(const TokenSequence&, const TokenSequence&) = default;
};

namespace detail {

inline void check_image(const Grid2D& g, const ModelConfig& cfg) {
  if (g.height() != cfg.grid_height || g.width() != cfg.grid_width || g.channels() != cfg.vision_channels) {
    throw ConfigError("image grid " + shape_string(g.values().shape()) + " does not match model grid [" +
                      std::to_string(cfg.grid_height) + "x" + std::to_string(cfg.grid_width) + "x" +
                      std::to_string(cfg.vision_channels) + "]");
  }
}

inline void check_tokens(const std::vector<int>& tokens, const ModelConfig& cfg, const char* field) {
  for (int t : tokens) {
    if (t < 0 || static_cast<std::size_t>(t) >= cfg.vocab_size) {
      throw ConfigError(std::string(field) + " token " + std::to_string(t) + " outside vocabulary of " +
                        std::to_string(cfg.vocab_size));
    }
  }
}

inline void check_length(std::size_t length, const ModelConfig& cfg, const std::string& field) {
  if (length > cfg.max_seq_len) {
    throw LengthError("serialized length " + std::to_string(length) + " exceeds max_seq_len " +
                      std::to_string(cfg.max_seq_len) + " while adding " + field);
  }
}

/// Appends [VISUAL slots...] [TEXT text...] (and the instruction segment in
/// front when requested) without a terminator.
inline void append_body(TokenSequence& seq, const MultimodalExample& ex, const ModelConfig& cfg,
                        bool with_instruction, const std::string& label) {
  if (!ex.has_visual() && ex.text.empty()) {
    throw ContractError(label + ": example '" + ex.id + "' has neither visual nor text content");
  }
  if (with_instruction) {
    check_tokens(ex.instruction, cfg, "instruction");
    seq.tokens.push_back(TokenVocabulary::kInstruction);
    seq.tokens.insert(seq.tokens.end(), ex.instruction.begin(), ex.instruction.end());
    check_length(seq.size(), cfg, label + " instruction");
  }
  seq.tokens.push_back(TokenVocabulary::kVisual);
  if (ex.has_visual()) {
    check_image(*ex.visual, cfg);
    seq.tokens.insert(seq.tokens.end(), cfg.visual_tokens(), TokenVocabulary::kImageSlot);
    seq.images.push_back(*ex.visual);
  }
  check_length(seq.size(), cfg, label + " visual");
  check_tokens(ex.text, cfg, "text");
  seq.tokens.push_back(TokenVocabulary::kText);
  seq.tokens.insert(seq.tokens.end(), ex.text.begin(), ex.text.end());
  check_length(seq.size(), cfg, label + " text");
}

inline void append_token(TokenSequence& seq, int token, const ModelConfig& cfg, const std::string& label) {
  seq.tokens.push_back(token);
  check_length(seq.size(), cfg, label);
}

}  // namespace detail

/// Embedding-input layout:
///   INSTRUCTION instr... VISUAL slot... TEXT text... EOS
/// The VISUAL and TEXT delimiters are always present, even for empty parts.
inline TokenSequence serialize(const MultimodalExample& ex, const ModelConfig& cfg) {
  TokenSequence seq;
  detail::append_body(seq, ex, cfg, true, "");
  detail::append_token(seq, TokenVocabulary::kEos, cfg, "EOS");
  return seq;
}

/// Generation sequence: serialized input followed by response tokens and EOS.
inline TokenSequence serialize_with_response(const MultimodalExample& ex, const std::vector<int>& response,
                                             const ModelConfig& cfg) {
  TokenSequence seq = serialize(ex, cfg);
  detail::check_tokens(response, cfg, "response");
  seq.tokens.insert(seq.tokens.end(), response.begin(), response.end());
  detail::append_token(seq, TokenVocabulary::kEos, cfg, "response");
  return seq;
}

/// POINTWISE query-body SEP candidate-body ASK; answer is YES or NO.
inline TokenSequence pointwise_prompt(const MultimodalExample& query, const MultimodalExample& candidate,
                                      const ModelConfig& cfg) {
  TokenSequence seq;
  seq.tokens.push_back(TokenVocabulary::kPointwise);
  detail::append_body(seq, query, cfg, false, "pointwise query");
  detail::append_token(seq, TokenVocabulary::kSeparator, cfg, "pointwise separator");
  detail::append_body(seq, candidate, cfg, false, "pointwise candidate");
  detail::append_token(seq, TokenVocabulary::kAsk, cfg, "pointwise ask");
  return seq;
}

/// LISTWISE query-body, then "<digit j> candidate-body" per candidate, ASK;
/// the answer is the digit of the relevant candidate.
inline TokenSequence listwise_prompt(const MultimodalExample& query,
                                     const std::vector<const MultimodalExample*>& candidates,
                                     const ModelConfig& cfg) {
  if (candidates.empty() || candidates.size() > 9) {
    throw ParameterError("listwise prompts hold 1..9 candidates, got " + std::to_string(candidates.size()));
  }
  TokenSequence seq;
  seq.tokens.push_back(TokenVocabulary::kListwise);
  detail::append_body(seq, query, cfg, false, "listwise query");
  for (std::size_t j = 0; j < candidates.size(); ++j) {
    const std::string label = "listwise candidate " + std::to_string(j + 1);
    detail::append_token(seq, TokenVocabulary::digit(static_cast<int>(j + 1)), cfg, label);
    detail::append_body(seq, *candidates[j], cfg, false, label);
  }
  detail::append_token(seq, TokenVocabulary::kAsk, cfg, "listwise ask");
  return seq;
}

/// JUDGE judgment-instruction SEP query-body SEP candidate-body ASK.
inline TokenSequence judge_prompt(const MultimodalExample& query, const MultimodalExample& candidate,
                                  const std::vector<int>& judgment_instruction, const ModelConfig& cfg) {
  TokenSequence seq;
  seq.tokens.push_back(TokenVocabulary::kJudge);
  detail::check_tokens(judgment_instruction, cfg, "judgment instruction");
  seq.tokens.insert(seq.tokens.end(), judgment_instruction.begin(), judgment_instruction.end());
  detail::append_token(seq, TokenVocabulary::kSeparator, cfg, "judge instruction");
  detail::append_body(seq, query, cfg, false, "judge query");
  detail::append_token(seq, TokenVocabulary::kSeparator, cfg, "judge separator");
  detail::append_body(seq, candidate, cfg, false, "judge candidate");
  detail::append_token(seq, TokenVocabulary::kAsk, cfg, "judge ask");
  return seq;
}

}  // namespace vtc
