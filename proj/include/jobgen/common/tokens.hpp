#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace jobgen {

using TokenId = std::uint32_t;
using Tokens = std::vector<TokenId>;

// Reserved ids shared by the vocabulary and every model.
inline constexpr TokenId kPadToken = 0;
inline constexpr TokenId kEosToken = 1;
inline constexpr TokenId kSepToken = 2;

// Drops trailing padding.
inline std::span<const TokenId> strip_padding(std::span<const TokenId> tokens) {
  std::size_t n = tokens.size();
  while (n > 0 && tokens[n - 1] == kPadToken) --n;
  return tokens.first(n);
}

}  // namespace jobgen
