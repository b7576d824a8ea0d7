#pragma once

#include <cstddef>
#include <cstdint>
#include <string>

#include "vtc/errors.hpp"
#include "vtc/model/vocabulary.hpp"

namespace vtc {

/// Shape of the toy compressed multimodal transformer.
struct ModelConfig {
  std::size_t vocab_size = 128;
  std::size_t embed_dim = 32;
  std::size_t num_layers = 2;
  std::size_t num_heads = 2;
  std::size_t grid_height = 8;
  std::size_t grid_width = 8;
  std::size_t vision_channels = 4;
  std::size_t compression = 2;
  std::size_t max_seq_len = 256;
  std::uint64_t seed = 0;

  std::size_t mlp_dim() const { return 4 * embed_dim; }

  /// Visual tokens one image contributes after compression: H*W/s^2.
  std::size_t visual_tokens() const {
    return (grid_height / compression) * (grid_width / compression);
  }

  void validate() const {
    if (vocab_size <= static_cast<std::size_t>(TokenVocabulary::kFirstDataToken)) {
      throw ConfigError("vocab_size " + std::to_string(vocab_size) + " leaves no room after " +
                        std::to_string(TokenVocabulary::kFirstDataToken) + " reserved tokens");
    }
    if (embed_dim == 0 || num_layers == 0 || num_heads == 0 || max_seq_len == 0) {
      throw ConfigError("embed_dim, num_layers, num_heads and max_seq_len must be positive");
    }
    if (embed_dim % num_heads != 0) {
      throw ConfigError("embed_dim " + std::to_string(embed_dim) + " is not divisible by num_heads " +
                        std::to_string(num_heads));
    }
    if (grid_height == 0 || grid_width == 0 || vision_channels == 0 || compression == 0) {
      throw ConfigError("grid dimensions, channels and compression factor must be positive");
    }
    if (grid_height % compression != 0 || grid_width % compression != 0) {
      throw ConfigError("grid " + std::to_string(grid_height) + "x" + std::to_string(grid_width) +
                        " is not divisible by compression factor " + std::to_string(compression));
    }
  }

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

}  // namespace vtc
