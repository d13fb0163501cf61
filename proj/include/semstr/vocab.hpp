#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace semstr::seq2seq {

using TokenId = int;
using TokenSequence = std::vector<TokenId>;

// Character vocabulary of the corrector. Special tokens occupy the leading
// indices; ordinary characters follow in code-point order.
class Vocab {
 public:
  static constexpr TokenId kPad = 0;
  static constexpr TokenId kGo = 1;
  static constexpr TokenId kEnd = 2;
  static constexpr TokenId kSep = 3;
  static constexpr TokenId kUnk = 4;
  static constexpr TokenId kNumSpecials = 5;

  // Word separator rendered as a grave accent.
  static constexpr char32_t kSepChar = U'`';

  Vocab();
  explicit Vocab(std::u32string chars);

  // Collects every non-space character of the given phrases.
  static Vocab from_corpus(std::span<const std::string> phrases);

  std::size_t size() const { return kNumSpecials + chars_.size(); }
  TokenId id_of(char32_t c) const;
  // Printable form of a token; specials render as <pad>, <go>, <end>, `, <unk>.
  std::string token_text(TokenId id) const;
  const std::u32string& chars() const { return chars_; }

  bool operator==(const Vocab& other) const { return chars_ == other.chars_; }

 private:
  std::u32string chars_;
  std::unordered_map<char32_t, TokenId> index_;
};

// One token per character; every space becomes the separator token. GO and
// END are not included (the decoder adds them). Throws InputError when the
// phrase is blank.
TokenSequence preprocess(std::string_view phrase, const Vocab& vocab);

// Space-joined token rendering, e.g. "s i t t i n g ` r o o m".
std::string format_tokens(const TokenSequence& tokens, const Vocab& vocab);

// Inverse of preprocess: separators become spaces, decoding stops at END,
// PAD and GO are dropped and UNK renders as '?'.
std::string detokenize(std::span<const TokenId> tokens, const Vocab& vocab);

}  // namespace semstr::seq2seq
