#pragma once

#include <map>
#include <string>
#include <vector>

namespace textdestroyer {

// Conditioning prompt used during inversion to light up text regions.
inline const std::vector<std::string> kDefaultPromptWords{"text", "letter", "character"};

struct TokenizedPrompt {
  std::vector<int> tokens;
  // Tracked words in prompt order.
  std::vector<std::string> words;
  // Word -> token positions; a word split into sub-tokens owns several positions.
  std::map<std::string, std::vector<int>> tracked_positions;
  int end_position = -1;

  // Throws ContractViolation when a word has no positions or the end token
  // does not follow every tracked position.
  void validate() const;
};

}  // namespace textdestroyer
