// Acceptance run: one PASS/FAIL line per criterion.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "semstr/ctc.hpp"
#include "semstr/corrector.hpp"
#include "semstr/geometry.hpp"
#include "semstr/io.hpp"
#include "semstr/layout.hpp"
#include "semstr/pipeline.hpp"
#include "semstr/synth.hpp"
#include "semstr/trainer.hpp"
#include "semstr/vocab.hpp"
#include "../support/oracles.hpp"

using namespace semstr;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void criterion(int n, const char* name, double limit_s, const std::function<Outcome()>& body) {
  const auto t0 = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (limit_s > 0 && secs > limit_s) {
    o.pass = false;
    o.detail += " (over time limit)";
  }
  if (!o.pass) ++failures;
  std::printf("%s criterion %d: %s: %s [%.1fs]\n", o.pass ? "PASS" : "FAIL", n, name, o.detail.c_str(), secs);
  std::fflush(stdout);
}

std::string fmt(const char* f, double a, double b = 0, double c = 0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c);
  return buf;
}

Outcome ctc_exactness() {
  std::mt19937_64 rng(101);
  double worst_lp = 0.0, worst_mass = 0.0;
  int instances = 0;
  for (size_t m = 1; m <= 6; ++m)
    for (size_t c = 1; c <= 3; ++c)
      for (int k = 0; k < 40; ++k) {
        const ctc::FrameProbs x{oracle::random_rows(rng, m, c + 1)};
        double total = 0.0;
        for (const auto& [label, p] : oracle::path_sums(x.probs)) {
          const double lp = ctc::log_prob(x, label);
          worst_lp = std::max(worst_lp, std::abs(lp - std::log(p)));
          total += std::exp(lp);
        }
        worst_mass = std::max(worst_mass, std::abs(total - 1.0));
        ++instances;
      }
  return {instances >= 500 && worst_lp <= 1e-10 && worst_mass <= 1e-9,
          fmt("%.0f instances, max log error %.2e, max mass error %.2e", instances, worst_lp, worst_mass)};
}

Outcome gradient_keystone() {
  const auto m0 = seq2seq::CorrectorModel::random({2, 2, 2, 2, 0.0}, seq2seq::Vocab(U"ab"), 21, 0.5);
  auto m = m0;
  const std::vector<seq2seq::Example> batch{{seq2seq::preprocess("ab a", m.vocab), seq2seq::preprocess("ab", m.vocab)},
                                            {seq2seq::preprocess("b", m.vocab), seq2seq::preprocess("ba b", m.vocab)}};
  const auto g = seq2seq::backward(m, batch);
  auto grads = g.grads;
  auto gv = seq2seq::tensors(grads);
  auto pv = seq2seq::tensors(m.params);
  auto total = [&] {
    double s = 0.0;
    for (const auto& ex : batch) s += seq2seq::loss(m, ex.source, ex.target);
    return s;
  };
  const double eps = 1e-4;
  size_t bad = 0, n = 0;
  double worst = 0.0, worst_abs = 0.0;
  for (size_t k = 0; k < pv.size(); ++k)
    for (Eigen::Index i = 0; i < pv[k].size(); ++i) {
      double& w = pv[k].data[i];
      const double keep = w;
      w = keep + eps;
      const double up = total();
      w = keep - eps;
      const double down = total();
      w = keep;
      const double fd = (up - down) / (2 * eps), an = gv[k].data[i];
      const double diff = std::abs(fd - an);
      const double rel = diff / std::max({std::abs(fd), std::abs(an), 1e-300});
      worst_abs = std::max(worst_abs, diff);
      if (diff > 1e-8) worst = std::max(worst, rel);
      if (diff > 1e-8 && rel > 1e-4) ++bad;
      ++n;
    }
  const size_t count = seq2seq::parameter_count(m.params);
  return {count <= 500 && n == count && bad == 0,
          fmt("%.0f parameters, %.0f mismatches, ", static_cast<double>(count), static_cast<double>(bad)) +
              fmt("max abs difference %.2e, worst relative error above the floor %.2e", worst_abs, worst)};
}

Outcome grouping_oracle() {
  std::mt19937_64 rng(303);
  std::uniform_real_distribution<double> x(0, 600), y(0, 400), w(10, 60), h(10, 24);
  const layout::GroupingParams p;
  int agree = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<layout::TextBox> bs;
    for (int i = 0; i < 50; ++i) {
      const double l = x(rng), t = y(rng);
      bs.push_back({static_cast<layout::BoxId>(i * 5 + 2), {l, t, l + w(rng), t + h(rng)}, std::nullopt});
    }
    const double med = layout::median_height(bs);
    oracle::UnionFind uf(bs.size());
    for (size_t i = 0; i < bs.size(); ++i)
      for (size_t j = i + 1; j < bs.size(); ++j)
        if (layout::same_group(bs[i], bs[j], p, med)) uf.unite(i, j);
    const auto labels = layout::group(bs, p);
    std::vector<size_t> roots;
    std::vector<int> ours;
    for (size_t i = 0; i < bs.size(); ++i) {
      roots.push_back(uf.find(i));
      ours.push_back(labels.at(bs[i].id));
    }
    if (labels.size() == bs.size() && oracle::same_partition(roots, ours)) ++agree;
  }
  return {agree == 1000, fmt("%.0f/1000 trials match", agree)};
}

Outcome reading_order() {
  size_t blocks = 0, recovered = 0;
  for (std::uint64_t seed = 1; seed <= 1000; ++seed) {
    synth::SynthSpec spec;
    spec.seed = seed;
    spec.jitter_v = 0.3;
    const auto doc = synth::gen_document(spec);
    const auto lay = layout::analyze(doc.boxes, {});
    for (const auto& truth : doc.reading) {
      ++blocks;
      const auto label = static_cast<size_t>(lay.labels.at(truth.front()));
      if (lay.order[label] == truth) ++recovered;
    }
  }
  const double frac = static_cast<double>(recovered) / static_cast<double>(blocks);
  return {frac >= 0.99, fmt("%.0f/%.0f blocks (%.4f)", static_cast<double>(recovered), static_cast<double>(blocks), frac)};
}

Outcome homography() {
  std::mt19937_64 rng(505);
  std::uniform_real_distribution<double> c(50, 150), r(20, 60), jitter(-0.35, 0.35);
  double worst = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const double cx = c(rng), cy = c(rng), rx = r(rng), ry = r(rng);
    const double base[4] = {-2.356, -0.785, 0.785, 2.356};
    geometry::Quad q;
    for (size_t i = 0; i < 4; ++i) {
      const double a = base[i] + jitter(rng);
      q.corners[i] = {cx + rx * std::cos(a), cy + ry * std::sin(a)};
    }
    const auto H = geometry::compute_homography(q, 64, 16);
    const geometry::Point target[4] = {{0, 0}, {64, 0}, {64, 16}, {0, 16}};
    for (size_t i = 0; i < 4; ++i) {
      const auto p = H.apply(q.corners[i]);
      worst = std::max({worst, std::abs(p.x - target[i].x), std::abs(p.y - target[i].y)});
    }
  }
  const auto I = geometry::compute_homography(geometry::Quad::from_rect(0, 0, 10, 4), 10, 4).matrix();
  const double id_err = (I - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff();
  Eigen::Matrix3d shift = Eigen::Matrix3d::Identity();
  shift(0, 2) = -5;
  shift(1, 2) = -5;
  const auto T = geometry::compute_homography(geometry::Quad::from_rect(5, 5, 15, 9), 10, 4).matrix();
  const double tr_err = (T - shift).cwiseAbs().maxCoeff();
  return {worst <= 1e-9 && id_err <= 1e-12 && tr_err <= 1e-12,
          fmt("max corner residual %.2e, identity %.2e, translation %.2e", worst, id_err, tr_err)};
}

std::vector<seq2seq::PhrasePair> identity_corpus() {
  std::mt19937_64 rng(5);
  std::vector<seq2seq::PhrasePair> corpus;
  for (int i = 0; i < 500; ++i) {
    std::string s;
    const int n = 3 + static_cast<int>(rng() % 6);
    for (int k = 0; k < n; ++k) s += static_cast<char>('a' + rng() % 26);
    corpus.push_back({s, s});
  }
  return corpus;
}

seq2seq::Vocab vocab_of(const std::vector<seq2seq::PhrasePair>& corpus) {
  std::vector<std::string> clean;
  for (const auto& p : corpus) clean.push_back(p.clean);
  return seq2seq::Vocab::from_corpus(clean);
}

seq2seq::TrainConfig scaled_schedule(std::int64_t steps, std::int64_t batch) {
  seq2seq::TrainConfig cfg;
  cfg.max_steps = steps;
  cfg.batch_size = batch;
  cfg.decay_start = steps / 2;
  cfg.halve_every = steps / 10;
  cfg.seed = 11;
  return cfg;
}

Outcome copy_task() {
  const auto corpus = identity_corpus();
  const auto vocab = vocab_of(corpus);
  seq2seq::HyperParams hyper;
  hyper.dropout = 0.0;
  const auto init = seq2seq::CorrectorModel::random(hyper, vocab, 3);
  const auto examples = seq2seq::make_examples(corpus, vocab);
  const auto cfg = scaled_schedule(2000, 16);
  const double before = seq2seq::mean_loss(init, examples);
  const auto a = seq2seq::train(init, corpus, cfg);
  const double after = seq2seq::mean_loss(a.model, examples);
  const auto b = seq2seq::train(init, corpus, cfg);
  const bool same = a.losses == b.losses && io::format_checkpoint(a.model) == io::format_checkpoint(b.model);
  return {after < 0.1 * before && same,
          fmt("mean loss %.3f -> %.4f (ratio %.5f)", before, after, after / before) +
              (same ? ", rerun bit-exact" : ", rerun differs")};
}

constexpr double kTemperature = 0.57;

struct Experiment {
  std::vector<pipeline::PipelineInput> docs;
  seq2seq::CorrectorModel model;
};

std::vector<pipeline::PipelineInput> synth_docs(int count) {
  std::vector<pipeline::PipelineInput> docs;
  const auto alphabet = synth::default_alphabet();
  for (int s = 1; s <= count; ++s) {
    synth::SynthSpec spec;
    spec.seed = static_cast<std::uint64_t>(s);
    spec.block_text = synth::BlockText::kPhrases;
    spec.temperature = kTemperature;
    const auto doc = synth::gen_document(spec);
    pipeline::PipelineInput in;
    in.frames.alphabet = alphabet;
    std::mt19937_64 rng(spec.seed ^ 0x5deece66dULL);
    for (const auto& b : doc.boxes) {
      in.boxes.push_back({b, std::nullopt});
      in.frames.frames[b.id] = synth::render_frame_probs(*b.word, alphabet, spec, rng);
    }
    docs.push_back(std::move(in));
  }
  return docs;
}

seq2seq::CorrectorModel train_corrector(std::int64_t steps, std::size_t corpus_size) {
  synth::SynthSpec noise;
  noise.seed = 99;
  noise.p_sub = 0.04;
  noise.p_del = 0.02;
  noise.p_ins = 0.01;
  std::vector<seq2seq::PhrasePair> corpus;
  for (auto& [noisy, clean] : synth::make_noisy_corpus(noise, corpus_size)) corpus.push_back({noisy, clean});
  seq2seq::HyperParams hyper;
  hyper.dropout = 0.0;
  auto cfg = scaled_schedule(steps, 32);
  return seq2seq::train(seq2seq::CorrectorModel::random(hyper, vocab_of(corpus), 7), corpus, cfg).model;
}

Outcome end_to_end() {
  const auto docs = synth_docs(200);
  const auto model = train_corrector(600, 20000);
  size_t base = 0, corr = 0, total = 0;
  for (const auto& in : docs) {
    const auto out = pipeline::run(in, &model, {});
    base += out.report.baseline->overall.correct;
    corr += out.report.corrected->overall.correct;
    total += out.report.baseline->overall.total;
  }
  const double b = static_cast<double>(base) / static_cast<double>(total);
  const double c = static_cast<double>(corr) / static_cast<double>(total);
  return {c - b >= 0.05, "baseline " + pipeline::format_percent(b) + ", corrected " + pipeline::format_percent(c) +
                             fmt(", gain %.2f points over %.0f words", 100 * (c - b), static_cast<double>(total))};
}

Outcome preprocessing_fixtures() {
  const std::vector<std::string> phrases{"sitting room", "black or yellow-red", "respect for all", "all lifes matter"};
  const auto v = seq2seq::Vocab::from_corpus(phrases);
  const char* expected[] = {"s i t t i n g ` r o o m", "b l a c k ` o r ` y e l l o w - r e d",
                            "r e s p e c t ` f o r ` a l l", "a l l ` l i f e s ` m a t t e r"};
  int ok = 0;
  for (size_t i = 0; i < phrases.size(); ++i)
    if (seq2seq::format_tokens(seq2seq::preprocess(phrases[i], v), v) == expected[i]) ++ok;
  return {ok == 4, fmt("%.0f/4 tokenizations match", ok)};
}

Outcome determinism() {
  auto full_run = [] {
    const auto model = train_corrector(60, 2000);
    std::string report;
    for (const auto& in : synth_docs(10)) report += pipeline::format_report_json(pipeline::run(in, &model, {}).report);
    return std::pair{io::format_checkpoint(model), report};
  };
  const auto a = full_run();
  const auto b = full_run();
  const bool ckpt = a.first == b.first, rep = a.second == b.second;
  return {ckpt && rep, std::string("checkpoints ") + (ckpt ? "identical" : "differ") + ", reports " +
                           (rep ? "identical" : "differ") + fmt(" (%.0f report bytes)", static_cast<double>(a.second.size()))};
}

}  // namespace

int main() {
  criterion(1, "CTC exactness", 10, ctc_exactness);
  criterion(2, "gradient keystone", 60, gradient_keystone);
  criterion(3, "TGA grouping oracle", 0, grouping_oracle);
  criterion(4, "reading-order recovery", 0, reading_order);
  criterion(5, "homography round-trip", 0, homography);
  criterion(6, "copy-task learnability", 0, copy_task);
  criterion(7, "end-to-end improvement", 900, end_to_end);
  criterion(8, "preprocessing fixtures", 0, preprocessing_fixtures);
  criterion(9, "determinism", 0, determinism);
  std::printf("%d of 9 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
