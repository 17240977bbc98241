#include "jobgen/corpus/prompt.hpp"

#include "jobgen/common/error.hpp"

namespace jobgen::corpus {

PromptInstance assemble_prompt(const World& world, std::span<const TokenId> cv, std::span<const TokenId> output,
                               std::size_t max_len) {
  const auto& tpl = world.prompt_template();
  const auto& vocab = world.vocabulary();
  PromptInstance p;
  p.role = vocab.encode(tpl.role);
  p.instruction = vocab.encode(tpl.instruction);
  for (const auto& w : split_words(tpl.input)) {
    if (w == "{cv}") {
      const auto body = strip_padding(cv);
      p.input.insert(p.input.end(), body.begin(), body.end());
    } else {
      p.input.push_back(vocab.id(w));
    }
  }
  for (TokenId t : vocab.encode(tpl.output_marker)) p.input.push_back(t);
  p.output.assign(output.begin(), output.end());

  for (const Tokens* part : {&p.role, &p.instruction, &p.input, &p.output}) {
    p.tokens.insert(p.tokens.end(), part->begin(), part->end());
  }
  if (p.tokens.size() > max_len) {
    throw ShapeError("prompt assembly: length " + std::to_string(p.tokens.size()) + " exceeds limit " +
                     std::to_string(max_len));
  }
  p.mask.assign(p.tokens.size(), false);
  for (std::size_t i = p.tokens.size() - p.output.size(); i < p.tokens.size(); ++i) p.mask[i] = true;
  return p;
}

}  // namespace jobgen::corpus
