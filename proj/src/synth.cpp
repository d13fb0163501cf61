#include "semstr/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "semstr/errors.hpp"
#include "semstr/text.hpp"

namespace semstr::synth {
namespace {

constexpr std::string_view kBuiltinConfusions = R"(# Visually confusable characters, one group per line.
# Every pair of characters within a group is treated as mutually confusable.
o 0
a o
l i 1
m n
n r
e c
u v
h b
t f
s 5
g q
z 2
)";

constexpr std::u32string_view kNoiseLetters = U"abcdefghijklmnopqrstuvwxyz";

double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

int uniform_int(std::mt19937_64& rng, int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); }

char32_t random_letter(std::mt19937_64& rng) {
  return kNoiseLetters[std::uniform_int_distribution<size_t>(0, kNoiseLetters.size() - 1)(rng)];
}

}  // namespace

ConfusionTable ConfusionTable::parse(std::string_view text) {
  ConfusionTable t;
  std::map<char32_t, std::set<char32_t>> sets;
  std::istringstream in{std::string(text)};
  std::string line;
  while (std::getline(in, line)) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    std::istringstream fields(line);
    std::vector<char32_t> group;
    std::string field;
    while (fields >> field) {
      const auto cps = text::to_code_points(field);
      if (cps.size() != 1) throw InputError("confusion entries must be single characters: '" + field + "'");
      group.push_back(cps[0]);
    }
    for (char32_t a : group)
      for (char32_t b : group)
        if (a != b) sets[a].insert(b);
  }
  for (auto& [c, s] : sets) t.table_[c] = std::vector<char32_t>(s.begin(), s.end());
  return t;
}

ConfusionTable ConfusionTable::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open confusion table " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

ConfusionTable ConfusionTable::builtin() { return parse(kBuiltinConfusions); }

std::vector<char32_t> ConfusionTable::confusables(char32_t c) const {
  auto it = table_.find(c);
  return it == table_.end() ? std::vector<char32_t>{} : it->second;
}

void SynthSpec::validate() const {
  auto prob = [](double p, const char* name) {
    if (!(p >= 0.0 && p <= 1.0)) throw InputError(std::string(name) + " must lie in [0,1]");
  };
  prob(p_sub, "p_sub");
  prob(p_del, "p_del");
  prob(p_ins, "p_ins");
  if (p_sub + p_del > 1.0) throw InputError("p_sub + p_del must not exceed 1");
  if (blocks_min < 1 || blocks_max < blocks_min) throw InputError("invalid block count range");
  if (lines_min < 1 || lines_max < lines_min) throw InputError("invalid lines-per-block range");
  if (words_min < 1 || words_max < words_min) throw InputError("invalid words-per-line range");
  if (phrase_words_per_line < 1) throw InputError("phrase_words_per_line must be positive");
  if (!(box_height_min > 0.0) || box_height_max < box_height_min) throw InputError("invalid box height range");
  if (!(jitter_v >= 0.0) || !(jitter_h >= 0.0)) throw InputError("jitter must be nonnegative");
  if (!(temperature >= 0.0)) throw InputError("temperature must be nonnegative");
  if (!(page_width > 0.0) || !(page_height > 0.0) || !(margin >= 0.0)) throw InputError("invalid page geometry");
}

const std::vector<std::string>& builtin_phrases() {
  static const std::vector<std::string> phrases = {
      "black lives matter",
      "all lives matter",
      "respect for all",
      "love trumps hate",
      "no justice no peace",
      "stop the war",
      "welcome refugees",
      "women rights are human rights",
      "save our planet",
      "science is real",
      "we are the people",
      "hands up do not shoot",
      "education not deportation",
      "no human is illegal",
      "climate justice now",
      "power to the people",
      "peace and love",
      "resist together",
      "water is life",
      "free speech for all",
      "end police brutality",
      "we will not be silent",
      "unity over division",
      "keep families together",
      "healthcare is a right",
      "votes for everyone",
      "sitting room",
      "living room sofa",
      "modern dining table",
      "oak coffee table",
      "black or yellow-red",
      "velvet armchair",
      "linen curtains",
      "ceramic table lamp",
      "wool area rug",
      "walnut bookcase",
      "marble side table",
      "outdoor lounge chair",
      "king size bed frame",
      "kitchen bar stool",
      "brass floor lamp",
      "bathroom vanity mirror",
      "round wall mirror",
      "storage bench",
      "office desk chair",
      "glass dining table",
      "cotton throw pillow",
      "leather sectional sofa",
  };
  return phrases;
}

std::vector<std::string> builtin_words() {
  std::set<std::string> words;
  for (const auto& p : builtin_phrases())
    for (auto& w : text::split(p, ' '))
      if (!w.empty()) words.insert(w);
  return {words.begin(), words.end()};
}

ctc::Alphabet default_alphabet() { return ctc::Alphabet::from_utf8("abcdefghijklmnopqrstuvwxyz0123456789-'"); }

SynthDocument gen_document(const SynthSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  const auto& phrases = spec.phrases.empty() ? builtin_phrases() : spec.phrases;
  const std::vector<std::string> words = spec.block_text == BlockText::kRandomWords
                                             ? (spec.phrases.empty() ? builtin_words() : [&] {
                                                 std::set<std::string> s;
                                                 for (const auto& p : spec.phrases)
                                                   for (auto& w : text::split(p, ' '))
                                                     if (!w.empty()) s.insert(w);
                                                 return std::vector<std::string>(s.begin(), s.end());
                                               }())
                                             : std::vector<std::string>{};
  if (spec.block_text == BlockText::kPhrases && phrases.empty()) throw InputError("no phrases to lay out");
  if (spec.block_text == BlockText::kRandomWords && words.empty()) throw InputError("no words to lay out");

  SynthDocument doc;
  doc.width = spec.page_width;
  doc.height = spec.page_height;

  const double hmax = spec.box_height_max;
  const double block_gap = 3.0 * hmax;
  const double column_gap = 4.0 * hmax;
  double x0 = spec.margin, y0 = spec.margin, column_width = 0.0;

  struct Placed {
    layout::Rect rect;
    std::string word;
    int block;
  };
  std::vector<Placed> placed;

  const int blocks = uniform_int(rng, spec.blocks_min, spec.blocks_max);
  for (int block = 0; block < blocks; ++block) {
    std::vector<std::vector<std::string>> lines;
    if (spec.block_text == BlockText::kPhrases) {
      const auto& phrase = phrases[std::uniform_int_distribution<size_t>(0, phrases.size() - 1)(rng)];
      std::vector<std::string> ws;
      for (auto& w : text::split(phrase, ' '))
        if (!w.empty()) ws.push_back(w);
      for (size_t i = 0; i < ws.size(); i += static_cast<size_t>(spec.phrase_words_per_line))
        lines.emplace_back(ws.begin() + static_cast<std::ptrdiff_t>(i),
                           ws.begin() + static_cast<std::ptrdiff_t>(
                                            std::min(ws.size(), i + static_cast<size_t>(spec.phrase_words_per_line))));
    } else {
      const int nlines = uniform_int(rng, spec.lines_min, spec.lines_max);
      for (int l = 0; l < nlines; ++l) {
        const int nwords = uniform_int(rng, spec.words_min, spec.words_max);
        std::vector<std::string> line;
        for (int w = 0; w < nwords; ++w)
          line.push_back(words[std::uniform_int_distribution<size_t>(0, words.size() - 1)(rng)]);
        lines.push_back(std::move(line));
      }
    }

    const double h = uniform(rng, spec.box_height_min, spec.box_height_max);
    const double char_w = 0.55 * h;
    const double word_gap = 0.6 * h;
    const double pitch = 1.4 * h;
    double block_w = 0.0;
    for (const auto& line : lines) {
      double w = 0.0;
      for (const auto& word : line)
        w += static_cast<double>(std::max<size_t>(1, text::to_code_points(word).size())) * char_w + word_gap;
      block_w = std::max(block_w, w - word_gap);
    }
    const double block_h = static_cast<double>(lines.size()) * pitch - (pitch - h);

    if (y0 + block_h > spec.page_height - spec.margin && y0 > spec.margin) {
      x0 += column_width + column_gap;
      y0 = spec.margin;
      column_width = 0.0;
    }
    if (x0 + block_w > spec.page_width - spec.margin || y0 + block_h > spec.page_height - spec.margin)
      throw InputError("synthetic document does not fit on the page");

    std::vector<std::string> block_words;
    for (size_t l = 0; l < lines.size(); ++l) {
      double x = x0;
      for (const auto& word : lines[l]) {
        const double w = static_cast<double>(std::max<size_t>(1, text::to_code_points(word).size())) * char_w;
        const double dx = spec.jitter_h * h * uniform(rng, -0.5, 0.5);
        const double dy = spec.jitter_v * h * uniform(rng, -0.5, 0.5);
        const double top = y0 + static_cast<double>(l) * pitch + dy;
        placed.push_back(Placed{layout::Rect{x + dx, top, x + dx + w, top + h}, word, block});
        block_words.push_back(word);
        x += w + word_gap;
      }
    }
    doc.block_text.push_back(text::join(block_words, " "));
    column_width = std::max(column_width, block_w);
    y0 += block_h + block_gap;
  }

  // Ids are a random permutation so that they carry no reading-order hint.
  std::vector<layout::BoxId> ids(placed.size());
  std::iota(ids.begin(), ids.end(), layout::BoxId{0});
  std::shuffle(ids.begin(), ids.end(), rng);

  doc.reading.assign(static_cast<size_t>(blocks), {});
  for (size_t i = 0; i < placed.size(); ++i) {
    doc.boxes.push_back(layout::TextBox{ids[i], placed[i].rect, placed[i].word});
    doc.block_of[ids[i]] = placed[i].block;
    doc.reading[static_cast<size_t>(placed[i].block)].push_back(ids[i]);
  }
  std::sort(doc.boxes.begin(), doc.boxes.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
  return doc;
}

geometry::GrayImage render_page(const SynthDocument& doc) {
  geometry::GrayImage img(static_cast<size_t>(std::ceil(doc.width)), static_cast<size_t>(std::ceil(doc.height)), 1.0);
  for (const auto& b : doc.boxes) {
    const auto x0 = static_cast<size_t>(std::max(0.0, std::floor(b.rect.left)));
    const auto y0 = static_cast<size_t>(std::max(0.0, std::floor(b.rect.top)));
    const auto x1 = std::min(img.width, static_cast<size_t>(std::max(0.0, std::ceil(b.rect.right))));
    const auto y1 = std::min(img.height, static_cast<size_t>(std::max(0.0, std::ceil(b.rect.bottom))));
    for (size_t y = y0; y < y1; ++y)
      for (size_t x = x0; x < x1; ++x) img.at(x, y) = 0.2;
  }
  return img;
}

std::string induce_noise(std::string_view phrase, const SynthSpec& spec, std::mt19937_64& rng) {
  spec.validate();
  std::u32string out;
  for (char32_t c : text::to_code_points(phrase)) {
    if (c == U' ') {
      out.push_back(c);
      continue;
    }
    const double r = uniform(rng, 0.0, 1.0);
    if (r < spec.p_del) {
      // deleted
    } else if (r < spec.p_del + spec.p_sub) {
      const auto options = spec.confusions.confusables(c);
      if (!options.empty()) {
        out.push_back(options[std::uniform_int_distribution<size_t>(0, options.size() - 1)(rng)]);
      } else {
        char32_t sub = random_letter(rng);
        while (sub == c) sub = random_letter(rng);
        out.push_back(sub);
      }
    } else {
      out.push_back(c);
    }
    if (spec.p_ins > 0.0 && uniform(rng, 0.0, 1.0) < spec.p_ins) out.push_back(random_letter(rng));
  }
  return text::to_utf8(out);
}

ctc::FrameProbs render_frame_probs(std::string_view word, const ctc::Alphabet& alphabet, const SynthSpec& spec,
                                   std::mt19937_64& rng) {
  const std::u32string cps = text::to_code_points(word);
  std::vector<size_t> labels;
  for (char32_t c : cps) labels.push_back(alphabet.index_of(c));

  const auto classes = static_cast<Eigen::Index>(alphabet.num_classes());
  const auto blank = static_cast<Eigen::Index>(alphabet.blank());
  const auto frames = static_cast<Eigen::Index>(2 * cps.size() + 1);
  ctc::FrameProbs x{Eigen::MatrixXd::Zero(frames, classes)};
  std::exponential_distribution<double> expo(1.0);

  for (Eigen::Index t = 0; t < frames; ++t) {
    // Draws happen regardless of temperature so that equal seeds give
    // common random numbers across temperatures.
    const double u = uniform(rng, 0.0, 1.0);
    if (t % 2 == 0) {
      const double w = std::min(0.5, 0.25 * spec.temperature * u);
      x.probs.row(t).setConstant(w / static_cast<double>(alphabet.size()));
      x.probs(t, blank) = 1.0 - w;
      continue;
    }
    const char32_t c = cps[static_cast<size_t>(t / 2)];
    std::vector<Eigen::Index> targets;
    for (char32_t k : spec.confusions.confusables(c))
      if (alphabet.contains(k)) targets.push_back(static_cast<Eigen::Index>(alphabet.index_of(k)));
    targets.push_back(blank);
    std::vector<double> q(targets.size());
    for (auto& v : q) v = expo(rng);
    const double qsum = std::accumulate(q.begin(), q.end(), 0.0);
    const double w = std::min(1.0, spec.temperature * u);
    x.probs(t, static_cast<Eigen::Index>(labels[static_cast<size_t>(t / 2)])) = 1.0 - w;
    for (size_t k = 0; k < targets.size(); ++k) x.probs(t, targets[k]) += w * q[k] / qsum;
  }
  return x;
}

std::vector<std::pair<std::string, std::string>> make_noisy_corpus(const SynthSpec& spec, std::size_t count) {
  spec.validate();
  const auto& phrases = spec.phrases.empty() ? builtin_phrases() : spec.phrases;
  if (phrases.empty()) throw InputError("no phrases for the corpus");
  std::mt19937_64 rng(spec.seed);
  std::vector<std::pair<std::string, std::string>> out;
  out.reserve(count);
  for (size_t i = 0; i < count; ++i) {
    const auto& clean = phrases[std::uniform_int_distribution<size_t>(0, phrases.size() - 1)(rng)];
    out.emplace_back(induce_noise(clean, spec, rng), clean);
  }
  return out;
}

}  // namespace semstr::synth
