#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include <Eigen/Core>

namespace semstr::ctc {

// Character classes; the blank class takes index size().
class Alphabet {
 public:
  Alphabet() = default;
  explicit Alphabet(std::u32string chars);
  static Alphabet from_utf8(std::string_view chars);

  std::size_t size() const { return chars_.size(); }
  std::size_t blank() const { return chars_.size(); }
  std::size_t num_classes() const { return chars_.size() + 1; }
  char32_t at(std::size_t index) const { return chars_.at(index); }
  bool contains(char32_t c) const { return index_.count(c) != 0; }
  // Throws InputError for characters outside the alphabet.
  std::size_t index_of(char32_t c) const;
  const std::u32string& chars() const { return chars_; }
  std::string utf8() const;

 private:
  std::u32string chars_;
  std::unordered_map<char32_t, std::size_t> index_;
};

using LabelSeq = std::vector<std::size_t>;

// Row-stochastic M x (|C|+1) matrix: one distribution per frame.
struct FrameProbs {
  Eigen::MatrixXd probs;

  std::size_t frames() const { return static_cast<std::size_t>(probs.rows()); }
  std::size_t classes() const { return static_cast<std::size_t>(probs.cols()); }
};

inline constexpr double kProbFloor = 1e-12;
inline constexpr double kRowSumTolerance = 1e-9;

// Throws InputError if a row leaves [0,1] or does not sum to 1 within 1e-9,
// or the column count differs from alphabet.num_classes().
void validate(const FrameProbs& x, const Alphabet& alphabet);

// Natural log of every entry, floored at kProbFloor.
Eigen::MatrixXd log_frames(const FrameProbs& x);

LabelSeq encode_label(std::string_view word, const Alphabet& alphabet);
std::string decode_label(const LabelSeq& label, const Alphabet& alphabet);

// Merge adjacent repeats, then drop blanks.
LabelSeq collapse(std::span<const std::size_t> path, std::size_t blank);

// log p(label | x) via the forward recursion over the blank-interleaved
// label, capped at 0. Returns -inf when no path can emit the label.
double log_prob(const FrameProbs& x, const LabelSeq& label);

// Mean negative log-probability over the batch; +inf if any member is
// impossible. Throws InputError on an empty batch.
double loss(std::span<const std::pair<FrameProbs, LabelSeq>> batch);

// Per-frame argmax (ties toward the lower index), then collapse.
LabelSeq greedy_decode(const FrameProbs& x);

// Prefix beam search. The surviving prefixes of every width 1..beam_width
// are rescored with log_prob and the most probable one is returned, so the
// result probability is nondecreasing in beam_width.
LabelSeq beam_decode(const FrameProbs& x, std::size_t beam_width);

}  // namespace semstr::ctc
