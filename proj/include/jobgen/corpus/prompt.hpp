#pragma once

#include <span>
#include <vector>

#include "jobgen/corpus/world.hpp"

namespace jobgen::corpus {

struct PromptInstance {
  Tokens role;
  Tokens instruction;
  Tokens input;   // template input text with the CV spliced in, then the output marker
  Tokens output;  // empty at inference time
  Tokens tokens;  // role ++ instruction ++ input ++ output
  std::vector<bool> mask;  // true exactly on the output tokens

  // Everything before the output region.
  std::span<const TokenId> prompt() const { return std::span<const TokenId>(tokens).first(tokens.size() - output.size()); }
};

// Throws ShapeError when the assembly exceeds max_len.
PromptInstance assemble_prompt(const World& world, std::span<const TokenId> cv, std::span<const TokenId> output,
                               std::size_t max_len);

}  // namespace jobgen::corpus
