#pragma once

#include <cctype>
#include <cstdint>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "vtc/errors.hpp"
#include "vtc/numerics/random.hpp"

namespace vtc {

/// Reserved token ids. Stable for the lifetime of the checkpoint format;
/// everything from kFirstDataToken upward is free for data.
struct TokenVocabulary {
  static constexpr int kPad = 0;
  static constexpr int kEos = 1;
  static constexpr int kYes = 2;
  static constexpr int kNo = 3;
  static constexpr int kDigitOne = 4;  // "1" .. "9" occupy 4..12
  static constexpr int kInstruction = 13;
  static constexpr int kVisual = 14;
  static constexpr int kImageSlot = 15;
  static constexpr int kText = 16;
  static constexpr int kSeparator = 17;
  static constexpr int kAsk = 18;
  static constexpr int kPointwise = 19;
  static constexpr int kListwise = 20;
  static constexpr int kJudge = 21;
  static constexpr int kCandidate = 22;
  static constexpr int kFirstDataToken = 23;

  static int digit(int k) {
    if (k < 1 || k > 9) throw ParameterError("digit tokens cover 1..9, got " + std::to_string(k));
    return kDigitOne + k - 1;
  }

  static constexpr bool is_digit(int token) { return token >= kDigitOne && token < kDigitOne + 9; }

  /// Deterministic word-level tokenizer for instruction text: each
  /// whitespace-separated, lower-cased word hashes into the data range.
  static std::vector<int> tokenize(std::string_view text, int vocab_size) {
    if (vocab_size <= kFirstDataToken) throw ConfigError("vocabulary leaves no data tokens");
    const auto span = static_cast<std::uint64_t>(vocab_size - kFirstDataToken);
    std::vector<int> out;
    std::istringstream in{std::string(text)};
    std::string word;
    while (in >> word) {
      std::string norm;
      for (char c : word) {
        if (std::isalnum(static_cast<unsigned char>(c))) norm.push_back(static_cast<char>(std::tolower(c)));
      }
      if (norm.empty()) continue;
      out.push_back(kFirstDataToken + static_cast<int>(label_hash(norm) % span));
    }
    return out;
  }
};

}  // namespace vtc
