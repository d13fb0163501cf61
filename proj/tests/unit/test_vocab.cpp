#include <doctest.h>

#include <string>
#include <vector>

#include "semstr/errors.hpp"
#include "semstr/vocab.hpp"

using namespace semstr;
using namespace semstr::seq2seq;

namespace {

Vocab fixture_vocab() {
  const std::vector<std::string> phrases{"sitting room", "black or yellow-red", "respect for all", "all lifes matter"};
  return Vocab::from_corpus(phrases);
}

}  // namespace

TEST_CASE("preprocessing fixtures") {
  const auto v = fixture_vocab();
  CHECK(format_tokens(preprocess("sitting room", v), v) == "s i t t i n g ` r o o m");
  CHECK(format_tokens(preprocess("black or yellow-red", v), v) == "b l a c k ` o r ` y e l l o w - r e d");
  CHECK(format_tokens(preprocess("respect for all", v), v) == "r e s p e c t ` f o r ` a l l");
  CHECK(format_tokens(preprocess("all lifes matter", v), v) == "a l l ` l i f e s ` m a t t e r");
}

TEST_CASE("special tokens and lookup") {
  const auto v = fixture_vocab();
  CHECK(preprocess("a", v).size() == 1);
  CHECK(v.id_of(U' ') == Vocab::kSep);
  CHECK(v.id_of(U'Z') == Vocab::kUnk);
  CHECK(v.token_text(Vocab::kSep) == "`");
  for (TokenId id = Vocab::kNumSpecials; id < static_cast<TokenId>(v.size()); ++id) {
    const auto text = v.token_text(id);
    CHECK(v.id_of(text[0]) == id);
  }
  CHECK_THROWS_AS(preprocess("   ", v), InputError);
  CHECK_THROWS_AS(preprocess("", v), InputError);
  CHECK_THROWS_AS(Vocab(U"ab`"), InputError);
}

TEST_CASE("detokenize inverts preprocess") {
  const auto v = fixture_vocab();
  for (const char* p : {"sitting room", "black or yellow-red", "all lifes matter"}) {
    auto t = preprocess(p, v);
    t.insert(t.begin(), Vocab::kGo);
    t.push_back(Vocab::kEnd);
    t.push_back(v.id_of(U'x'));
    CHECK(detokenize(t, v) == p);
  }
  CHECK(detokenize(std::vector<TokenId>{Vocab::kUnk, Vocab::kPad}, v) == "?");
}
