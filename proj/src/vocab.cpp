#include "semstr/vocab.hpp"

#include <algorithm>
#include <set>

#include "semstr/errors.hpp"
#include "semstr/text.hpp"

namespace semstr::seq2seq {

Vocab::Vocab() = default;

Vocab::Vocab(std::u32string chars) : chars_(std::move(chars)) {
  for (size_t i = 0; i < chars_.size(); ++i) {
    const char32_t c = chars_[i];
    if (c == U' ' || c == kSepChar) throw InputError("vocabulary cannot contain space or grave accent");
    if (!index_.emplace(c, kNumSpecials + static_cast<TokenId>(i)).second)
      throw InputError("duplicate vocabulary character " + text::to_utf8(c));
  }
}

Vocab Vocab::from_corpus(std::span<const std::string> phrases) {
  std::set<char32_t> seen;
  for (const auto& p : phrases)
    for (char32_t c : text::to_code_points(p))
      if (c != U' ' && c != kSepChar) seen.insert(c);
  return Vocab(std::u32string(seen.begin(), seen.end()));
}

TokenId Vocab::id_of(char32_t c) const {
  if (c == U' ') return kSep;
  auto it = index_.find(c);
  return it == index_.end() ? kUnk : it->second;
}

std::string Vocab::token_text(TokenId id) const {
  switch (id) {
    case kPad: return "<pad>";
    case kGo: return "<go>";
    case kEnd: return "<end>";
    case kSep: return text::to_utf8(kSepChar);
    case kUnk: return "<unk>";
    default: break;
  }
  const auto idx = static_cast<size_t>(id - kNumSpecials);
  if (id < kNumSpecials || idx >= chars_.size()) throw InputError("token id out of range");
  return text::to_utf8(chars_[idx]);
}

TokenSequence preprocess(std::string_view phrase, const Vocab& vocab) {
  if (text::trim(phrase).empty()) throw InputError("cannot preprocess an empty phrase");
  TokenSequence out;
  for (char32_t c : text::to_code_points(phrase)) out.push_back(vocab.id_of(c));
  return out;
}

std::string format_tokens(const TokenSequence& tokens, const Vocab& vocab) {
  std::string out;
  for (size_t i = 0; i < tokens.size(); ++i) {
    if (i) out += ' ';
    out += vocab.token_text(tokens[i]);
  }
  return out;
}

std::string detokenize(std::span<const TokenId> tokens, const Vocab& vocab) {
  std::string out;
  for (TokenId t : tokens) {
    if (t == Vocab::kEnd) break;
    if (t == Vocab::kPad || t == Vocab::kGo) continue;
    if (t == Vocab::kSep) out += ' ';
    else if (t == Vocab::kUnk) out += '?';
    else out += vocab.token_text(t);
  }
  return out;
}

}  // namespace semstr::seq2seq
