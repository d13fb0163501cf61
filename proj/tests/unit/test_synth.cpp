#include <doctest.h>

#include <random>
#include <set>

#include "semstr/ctc.hpp"
#include "semstr/errors.hpp"
#include "semstr/synth.hpp"
#include "semstr/text.hpp"

using namespace semstr;
using namespace semstr::synth;

TEST_CASE("confusion table") {
  const auto t = ConfusionTable::parse("# comment\nl i 1\nm n\n");
  CHECK(t.confusables(U'i') == std::vector<char32_t>{U'1', U'l'});
  CHECK(t.confusables(U'm') == std::vector<char32_t>{U'n'});
  CHECK(t.confusables(U'x').empty());
  CHECK(ConfusionTable::load(SEMSTR_DATA_DIR "/confusions.txt") == ConfusionTable::builtin());
  CHECK_THROWS_AS(ConfusionTable::parse("ab c\n"), InputError);
}

TEST_CASE("settings validation") {
  SynthSpec s;
  s.p_sub = 1.5;
  CHECK_THROWS_AS(s.validate(), InputError);
  s = SynthSpec{};
  s.lines_max = 0;
  CHECK_THROWS_AS(s.validate(), InputError);
}

TEST_CASE("single unjittered line") {
  SynthSpec s;
  s.blocks_min = s.blocks_max = 1;
  s.lines_min = s.lines_max = 1;
  s.words_min = s.words_max = 3;
  s.jitter_h = s.jitter_v = 0.0;
  const auto doc = gen_document(s);
  REQUIRE(doc.boxes.size() == 3);
  REQUIRE(doc.reading.size() == 1);
  double prev = -1;
  for (auto id : doc.reading[0]) {
    const auto& b = *std::find_if(doc.boxes.begin(), doc.boxes.end(), [&](const auto& x) { return x.id == id; });
    CHECK(b.rect.left > prev);
    prev = b.rect.left;
  }
}

TEST_CASE("documents are deterministic per seed and fit the page") {
  for (std::uint64_t seed : {1u, 2u, 99u}) {
    SynthSpec s;
    s.seed = seed;
    const auto a = gen_document(s), b = gen_document(s);
    REQUIRE(a.boxes.size() == b.boxes.size());
    for (size_t i = 0; i < a.boxes.size(); ++i) {
      CHECK(a.boxes[i].id == b.boxes[i].id);
      CHECK(a.boxes[i].rect.left == b.boxes[i].rect.left);
      CHECK(a.boxes[i].word == b.boxes[i].word);
      CHECK(a.boxes[i].rect.right <= s.page_width);
      CHECK(a.boxes[i].rect.bottom <= s.page_height);
    }
  }
  SynthSpec tiny;
  tiny.page_width = 50;
  CHECK_THROWS_AS(gen_document(tiny), InputError);
}

TEST_CASE("phrase blocks carry whole phrases") {
  SynthSpec s;
  s.block_text = BlockText::kPhrases;
  s.seed = 5;
  const auto doc = gen_document(s);
  const auto& phrases = builtin_phrases();
  for (const auto& text : doc.block_text) CHECK(std::find(phrases.begin(), phrases.end(), text) != phrases.end());
}

TEST_CASE("noise induction") {
  SynthSpec s;
  std::mt19937_64 rng(1);
  CHECK(induce_noise("welcome refugees", s, rng) == "welcome refugees");
  s.p_del = 1.0;
  CHECK(induce_noise("stop the war", s, rng) == "  ");

  s = SynthSpec{};
  s.p_sub = 0.1;
  std::string clean;
  while (text::to_code_points(clean).size() < 100000) clean += "peace and love ";
  const auto noisy = induce_noise(clean, s, rng);
  const auto a = text::to_code_points(clean), b = text::to_code_points(noisy);
  REQUIRE(a.size() == b.size());
  size_t letters = 0, changed = 0;
  for (size_t i = 0; i < a.size(); ++i) {
    if (a[i] == U' ') {
      CHECK(b[i] == U' ');
      continue;
    }
    ++letters;
    changed += a[i] != b[i];
  }
  CHECK(std::abs(static_cast<double>(changed) / static_cast<double>(letters) - 0.1) <= 0.01);

  s.p_sub = 0.2;
  s.p_del = 0.2;
  s.p_ins = 0.2;
  for (int i = 0; i < 200; ++i) CHECK(text::split(induce_noise("no human is illegal", s, rng), ' ').size() == 4);
}

TEST_CASE("rendered frames") {
  const auto alphabet = default_alphabet();
  SynthSpec s;
  std::mt19937_64 rng(3);
  const auto x = render_frame_probs("ab", alphabet, s, rng);
  CHECK(x.frames() == 5);
  CHECK(ctc::decode_label(ctc::greedy_decode(x), alphabet) == "ab");
  CHECK(ctc::log_prob(x, ctc::encode_label("ab", alphabet)) == 0.0);
  CHECK(ctc::decode_label(ctc::greedy_decode(render_frame_probs("book", alphabet, s, rng)), alphabet) == "book");
  CHECK_THROWS_AS(render_frame_probs("AB", alphabet, s, rng), InputError);

  s.temperature = 0.9;
  for (int i = 0; i < 50; ++i) {
    const auto y = render_frame_probs("illegal", alphabet, s, rng);
    CHECK(y.probs.minCoeff() >= 0.0);
    for (Eigen::Index r = 0; r < y.probs.rows(); ++r) CHECK(std::abs(y.probs.row(r).sum() - 1.0) <= 1e-12);
  }
}

TEST_CASE("greedy accuracy falls as temperature rises") {
  const auto alphabet = default_alphabet();
  const auto words = builtin_words();
  double prev = 1.1;
  for (double temp : {0.0, 0.3, 0.6, 0.9, 1.2}) {
    SynthSpec s;
    s.temperature = temp;
    std::mt19937_64 rng(77);
    size_t ok = 0;
    for (size_t i = 0; i < 500; ++i) {
      const auto& w = words[i % words.size()];
      ok += ctc::decode_label(ctc::greedy_decode(render_frame_probs(w, alphabet, s, rng)), alphabet) == w;
    }
    const double acc = static_cast<double>(ok) / 500.0;
    CHECK(acc <= prev);
    prev = acc;
  }
  CHECK(prev < 1.0);
}

TEST_CASE("noisy corpus") {
  SynthSpec s;
  s.seed = 4;
  s.p_sub = 0.1;
  const auto a = make_noisy_corpus(s, 50), b = make_noisy_corpus(s, 50);
  CHECK(a == b);
  const auto& phrases = builtin_phrases();
  for (const auto& [noisy, clean] : a) CHECK(std::find(phrases.begin(), phrases.end(), clean) != phrases.end());
}
