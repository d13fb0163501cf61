#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "semstr/ctc.hpp"
#include "semstr/geometry.hpp"
#include "semstr/layout.hpp"

namespace semstr::synth {

// Symmetric confusion relation between single characters.
class ConfusionTable {
 public:
  ConfusionTable() = default;

  // One group per line, characters separated by whitespace; '#' starts a
  // comment.
  static ConfusionTable parse(std::string_view text);
  static ConfusionTable load(const std::filesystem::path& path);
  static ConfusionTable builtin();

  // Sorted, excludes c itself.
  std::vector<char32_t> confusables(char32_t c) const;
  bool operator==(const ConfusionTable&) const = default;

 private:
  std::map<char32_t, std::vector<char32_t>> table_;
};

enum class BlockText { kRandomWords, kPhrases };

struct SynthSpec {
  std::uint64_t seed = 1;
  double page_width = 1240.0;
  double page_height = 1754.0;
  double margin = 40.0;

  int blocks_min = 1, blocks_max = 4;
  // kRandomWords: line and word counts per block.
  int lines_min = 3, lines_max = 6;
  int words_min = 2, words_max = 8;
  // kPhrases: each block holds one phrase wrapped at this many words per line.
  int phrase_words_per_line = 3;

  double box_height_min = 16.0, box_height_max = 24.0;
  // Total spread of the per-box offset, as a fraction of the box height.
  double jitter_v = 0.3;
  double jitter_h = 0.1;

  BlockText block_text = BlockText::kRandomWords;
  std::vector<std::string> phrases;  // empty: built-in phrase list

  // Character noise for corpus augmentation.
  double p_sub = 0.0, p_del = 0.0, p_ins = 0.0;

  // Softening of rendered frame probabilities; 0 renders one-hot rows.
  double temperature = 0.0;

  ConfusionTable confusions = ConfusionTable::builtin();

  // Throws InputError when a probability leaves [0,1] or a range is empty.
  void validate() const;
};

const std::vector<std::string>& builtin_phrases();
// Distinct words of the built-in phrases, sorted.
std::vector<std::string> builtin_words();
// Lower-case letters, digits and a little punctuation.
ctc::Alphabet default_alphabet();

struct SynthDocument {
  double width = 0.0;
  double height = 0.0;
  std::vector<layout::TextBox> boxes;               // sorted by id; ids do not follow reading order
  std::map<layout::BoxId, int> block_of;            // ground-truth group
  std::vector<std::vector<layout::BoxId>> reading;  // ground-truth order per block
  std::vector<std::string> block_text;              // words of each block joined by spaces
};

// Blocks flow top to bottom in columns, left to right. Throws InputError when
// the blocks cannot fit on the page.
SynthDocument gen_document(const SynthSpec& spec);

// Dark filled rectangles on a white page, one per box.
geometry::GrayImage render_page(const SynthDocument& doc);

// Per character: delete with p_del, otherwise substitute with a confusable
// (or a random letter when it has none) with p_sub; then insert a random
// letter after it with p_ins. Spaces are never touched.
std::string induce_noise(std::string_view phrase, const SynthSpec& spec, std::mt19937_64& rng);

// 2*len+1 frames alternating blank-dominant and character-dominant rows.
// Character rows mix a one-hot row with a random distribution over the
// character's confusables and blank, with weight temperature * U(0,1).
ctc::FrameProbs render_frame_probs(std::string_view word, const ctc::Alphabet& alphabet, const SynthSpec& spec,
                                   std::mt19937_64& rng);

std::vector<std::pair<std::string, std::string>> make_noisy_corpus(const SynthSpec& spec, std::size_t count);

}  // namespace semstr::synth
