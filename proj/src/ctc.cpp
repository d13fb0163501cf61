#include "semstr/ctc.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include "semstr/errors.hpp"
#include "semstr/text.hpp"

namespace semstr::ctc {
namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double log_add(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  const double hi = std::max(a, b);
  return hi + std::log1p(std::exp(std::min(a, b) - hi));
}

}  // namespace

Alphabet::Alphabet(std::u32string chars) : chars_(std::move(chars)) {
  for (size_t i = 0; i < chars_.size(); ++i)
    if (!index_.emplace(chars_[i], i).second)
      throw InputError("duplicate character in alphabet: " + text::to_utf8(chars_[i]));
}

Alphabet Alphabet::from_utf8(std::string_view chars) { return Alphabet(text::to_code_points(chars)); }

std::size_t Alphabet::index_of(char32_t c) const {
  auto it = index_.find(c);
  if (it == index_.end()) throw InputError("character not in alphabet: " + text::to_utf8(c));
  return it->second;
}

std::string Alphabet::utf8() const { return text::to_utf8(chars_); }

void validate(const FrameProbs& x, const Alphabet& alphabet) {
  if (x.classes() != alphabet.num_classes())
    throw InputError("frame width " + std::to_string(x.classes()) + " does not match alphabet size + 1 = " +
                     std::to_string(alphabet.num_classes()));
  for (Eigen::Index r = 0; r < x.probs.rows(); ++r) {
    const auto row = x.probs.row(r);
    if (!row.allFinite() || row.minCoeff() < 0.0 || row.maxCoeff() > 1.0)
      throw InputError("frame " + std::to_string(r) + " has entries outside [0,1]");
    if (std::abs(row.sum() - 1.0) > kRowSumTolerance)
      throw InputError("frame " + std::to_string(r) + " does not sum to 1");
  }
}

Eigen::MatrixXd log_frames(const FrameProbs& x) {
  return x.probs.array().max(kProbFloor).log().matrix();
}

LabelSeq encode_label(std::string_view word, const Alphabet& alphabet) {
  LabelSeq out;
  for (char32_t c : text::to_code_points(word)) out.push_back(alphabet.index_of(c));
  return out;
}

std::string decode_label(const LabelSeq& label, const Alphabet& alphabet) {
  std::u32string cps;
  cps.reserve(label.size());
  for (size_t i : label) cps.push_back(alphabet.at(i));
  return text::to_utf8(cps);
}

LabelSeq collapse(std::span<const std::size_t> path, std::size_t blank) {
  LabelSeq out;
  size_t prev = blank;
  bool first = true;
  for (size_t s : path) {
    if ((first || s != prev) && s != blank) out.push_back(s);
    prev = s;
    first = false;
  }
  return out;
}

double log_prob(const FrameProbs& x, const LabelSeq& label) {
  const size_t blank = x.classes() - 1;
  for (size_t s : label)
    if (s >= blank) throw InputError("label symbol " + std::to_string(s) + " outside alphabet");

  const size_t frames = x.frames();
  const size_t ext = 2 * label.size() + 1;
  if (frames == 0) return label.empty() ? 0.0 : kNegInf;

  const Eigen::MatrixXd lp = log_frames(x);
  auto symbol = [&](size_t s) { return s % 2 == 0 ? blank : label[s / 2]; };

  std::vector<double> alpha(ext, kNegInf), next(ext, kNegInf);
  alpha[0] = lp(0, static_cast<Eigen::Index>(blank));
  if (ext > 1) alpha[1] = lp(0, static_cast<Eigen::Index>(symbol(1)));

  for (size_t t = 1; t < frames; ++t) {
    for (size_t s = 0; s < ext; ++s) {
      double acc = alpha[s];
      if (s >= 1) acc = log_add(acc, alpha[s - 1]);
      // Skipping the blank between two different labels.
      if (s >= 2 && s % 2 == 1 && symbol(s) != symbol(s - 2)) acc = log_add(acc, alpha[s - 2]);
      next[s] = acc == kNegInf ? kNegInf : acc + lp(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(symbol(s)));
    }
    std::swap(alpha, next);
  }
  const double total = ext > 1 ? log_add(alpha[ext - 1], alpha[ext - 2]) : alpha[0];
  // The floor can push a certain label a hair above probability 1.
  return std::min(0.0, total);
}

double loss(std::span<const std::pair<FrameProbs, LabelSeq>> batch) {
  if (batch.empty()) throw InputError("CTC loss needs a nonempty batch");
  double total = 0.0;
  for (const auto& [x, y] : batch) {
    const double lp = log_prob(x, y);
    if (lp == kNegInf) return std::numeric_limits<double>::infinity();
    total -= lp;
  }
  // Clamp the tiny negative values produced by the probability floor.
  return std::max(0.0, total / static_cast<double>(batch.size()));
}

LabelSeq greedy_decode(const FrameProbs& x) {
  std::vector<size_t> path(x.frames());
  for (Eigen::Index t = 0; t < x.probs.rows(); ++t) {
    Eigen::Index best = 0;
    for (Eigen::Index k = 1; k < x.probs.cols(); ++k)
      if (x.probs(t, k) > x.probs(t, best)) best = k;
    path[static_cast<size_t>(t)] = static_cast<size_t>(best);
  }
  return collapse(path, x.classes() - 1);
}

namespace {

struct BeamScore {
  double blank = kNegInf;
  double nonblank = kNegInf;
  double total() const { return log_add(blank, nonblank); }
};

// One prefix beam search pass. Sets pruned when the beam ever overflowed.
std::map<LabelSeq, BeamScore> prefix_beam(const Eigen::MatrixXd& lp, std::size_t width, bool& pruned) {
  const auto blank = static_cast<size_t>(lp.cols() - 1);
  // Ordered map keeps tie-breaking deterministic (lexicographic prefixes).
  std::map<LabelSeq, BeamScore> beams;
  beams[{}] = BeamScore{0.0, kNegInf};
  pruned = false;

  for (Eigen::Index t = 0; t < lp.rows(); ++t) {
    std::map<LabelSeq, BeamScore> next;
    const double p_blank = lp(t, static_cast<Eigen::Index>(blank));
    for (const auto& [prefix, score] : beams) {
      auto& same = next[prefix];
      same.blank = log_add(same.blank, score.total() + p_blank);
      for (size_t c = 0; c < blank; ++c) {
        const double p = lp(t, static_cast<Eigen::Index>(c));
        LabelSeq extended = prefix;
        extended.push_back(c);
        auto& ext = next[extended];
        if (!prefix.empty() && prefix.back() == c) {
          same.nonblank = log_add(same.nonblank, score.nonblank + p);
          ext.nonblank = log_add(ext.nonblank, score.blank + p);
        } else {
          ext.nonblank = log_add(ext.nonblank, score.total() + p);
        }
      }
    }
    std::vector<std::pair<LabelSeq, BeamScore>> ranked(next.begin(), next.end());
    if (ranked.size() > width) {
      pruned = true;
      std::stable_sort(ranked.begin(), ranked.end(),
                       [](const auto& a, const auto& b) { return a.second.total() > b.second.total(); });
      ranked.resize(width);
    }
    beams = std::map<LabelSeq, BeamScore>(ranked.begin(), ranked.end());
  }
  return beams;
}

}  // namespace

LabelSeq beam_decode(const FrameProbs& x, std::size_t beam_width) {
  if (beam_width < 1) throw InputError("beam width must be at least 1");
  const Eigen::MatrixXd lp = log_frames(x);

  LabelSeq best;
  double best_lp = kNegInf;
  bool have = false;
  // Widths 1..beam_width each contribute their rescored survivors, so the
  // result never gets worse as the width grows.
  for (size_t width = 1; width <= beam_width; ++width) {
    bool pruned = false;
    for (const auto& [prefix, score] : prefix_beam(lp, width, pruned)) {
      const double exact = log_prob(x, prefix);
      if (!have || exact > best_lp) {
        best = prefix;
        best_lp = exact;
        have = true;
      }
    }
    if (!pruned) break;
  }
  return best;
}

}  // namespace semstr::ctc
