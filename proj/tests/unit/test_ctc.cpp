#include <doctest.h>

#include <cmath>
#include <limits>
#include <random>

#include "semstr/ctc.hpp"
#include "semstr/errors.hpp"
#include "../support/oracles.hpp"

using namespace semstr;
using namespace semstr::ctc;

namespace {

FrameProbs rows(std::initializer_list<std::initializer_list<double>> r) {
  FrameProbs x{Eigen::MatrixXd(static_cast<Eigen::Index>(r.size()), static_cast<Eigen::Index>(r.begin()->size()))};
  Eigen::Index i = 0;
  for (const auto& row : r) {
    Eigen::Index j = 0;
    for (double v : row) x.probs(i, j++) = v;
    ++i;
  }
  return x;
}

FrameProbs one_hot(const std::vector<size_t>& path, size_t classes) {
  FrameProbs x{Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(path.size()), static_cast<Eigen::Index>(classes))};
  for (size_t t = 0; t < path.size(); ++t) x.probs(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(path[t])) = 1.0;
  return x;
}

}  // namespace

TEST_CASE("collapse") {
  // a=0, blank=1
  CHECK(collapse(std::vector<size_t>{0, 0, 1, 0}, 1) == LabelSeq{0, 0});
  CHECK(collapse(std::vector<size_t>{1, 1}, 1).empty());
  std::mt19937_64 rng(1);
  for (int i = 0; i < 2000; ++i) {
    std::vector<size_t> path(rng() % 7);
    for (auto& p : path) p = rng() % 4;
    CHECK(collapse(path, 3) == oracle::collapse(path, 3));
  }
}

TEST_CASE("alphabet and labels") {
  const auto a = Alphabet::from_utf8("abc");
  CHECK(a.blank() == 3);
  CHECK(encode_label("cab", a) == LabelSeq{2, 0, 1});
  CHECK(decode_label(LabelSeq{2, 0, 1}, a) == "cab");
  CHECK_THROWS_AS(encode_label("abd", a), InputError);
  CHECK_THROWS_AS(Alphabet::from_utf8("aba"), InputError);
}

TEST_CASE("log_prob trivial cases") {
  CHECK(log_prob(rows({{0.6, 0.4}}), LabelSeq{0}) == doctest::Approx(std::log(0.6)).epsilon(1e-14));
  const double third = 1.0 / 3.0;
  CHECK(log_prob(rows({{third, third, third}, {third, third, third}}), LabelSeq{}) ==
        doctest::Approx(2 * std::log(third)).epsilon(1e-14));
  CHECK(log_prob(rows({{0.5, 0.5}}), LabelSeq{0, 0}) == -std::numeric_limits<double>::infinity());
  CHECK_THROWS_AS(log_prob(rows({{0.5, 0.5}}), LabelSeq{1}), InputError);
}

TEST_CASE("log_prob equals exhaustive path enumeration and conserves probability") {
  std::mt19937_64 rng(42);
  for (int trial = 0; trial < 300; ++trial) {
    const size_t m = 1 + rng() % 6, c = 1 + rng() % 3;
    const FrameProbs x{oracle::random_rows(rng, m, c + 1)};
    const auto sums = oracle::path_sums(x.probs);
    double total = 0.0;
    for (const auto& [label, p] : sums) {
      REQUIRE(std::abs(log_prob(x, label) - std::log(p)) <= 1e-10);
      total += std::exp(log_prob(x, label));
    }
    REQUIRE(std::abs(total - 1.0) <= 1e-9);
  }
}

TEST_CASE("log_prob is invariant under a joint alphabet permutation") {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 100; ++trial) {
    const FrameProbs x{oracle::random_rows(rng, 6, 4)};
    const LabelSeq y{0, 2, 2, 1};
    // Swap classes 0 and 2 in frames and label.
    FrameProbs xp = x;
    xp.probs.col(0) = x.probs.col(2);
    xp.probs.col(2) = x.probs.col(0);
    const LabelSeq yp{2, 0, 0, 1};
    CHECK(std::abs(log_prob(x, y) - log_prob(xp, yp)) <= 1e-12);
  }
}

TEST_CASE("loss") {
  const auto certain = one_hot({0, 2, 1}, 3);
  std::vector<std::pair<FrameProbs, LabelSeq>> one{{certain, LabelSeq{0, 1}}};
  CHECK(loss(one) == 0.0);

  std::mt19937_64 rng(9);
  const FrameProbs z{oracle::random_rows(rng, 4, 3)};
  std::vector<std::pair<FrameProbs, LabelSeq>> single{{z, LabelSeq{1}}}, dup{{z, LabelSeq{1}}, {z, LabelSeq{1}}};
  CHECK(loss(single) == doctest::Approx(loss(dup)).epsilon(1e-15));

  std::vector<std::pair<FrameProbs, LabelSeq>> batch;
  double sum = 0.0;
  for (int i = 0; i < 8; ++i) {
    FrameProbs x{oracle::random_rows(rng, 5, 3)};
    LabelSeq y{static_cast<size_t>(i % 2), 1};
    sum -= log_prob(x, y);
    batch.emplace_back(x, y);
  }
  CHECK(std::abs(loss(batch) - sum / 8.0) <= 1e-12);
  CHECK(loss(batch) >= 0.0);

  batch.emplace_back(rows({{0.5, 0.5}}), LabelSeq{0, 0});
  CHECK(loss(batch) == std::numeric_limits<double>::infinity());
  CHECK_THROWS_AS(loss(std::vector<std::pair<FrameProbs, LabelSeq>>{}), InputError);
}

TEST_CASE("greedy decoding") {
  // a=0, b=1, blank=2
  CHECK(greedy_decode(one_hot({0, 0, 2, 1}, 3)) == LabelSeq{0, 1});
  CHECK(greedy_decode(rows({{0.1, 0.1, 0.8}, {0.2, 0.2, 0.6}})).empty());
  CHECK(greedy_decode(rows({{0.4, 0.4, 0.2}})) == LabelSeq{0});
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 500; ++trial) {
    const size_t m = 1 + rng() % 5, c = 1 + rng() % 3;
    const FrameProbs x{oracle::random_rows(rng, m, c + 1)};
    std::vector<size_t> path;
    for (Eigen::Index t = 0; t < x.probs.rows(); ++t) {
      size_t best = 0;
      for (size_t k = 1; k <= c; ++k)
        if (x.probs(t, static_cast<Eigen::Index>(k)) > x.probs(t, static_cast<Eigen::Index>(best))) best = k;
      path.push_back(best);
    }
    CHECK(greedy_decode(x) == oracle::collapse(path, c));
  }
}

TEST_CASE("beam decoding") {
  const auto det = one_hot({0, 2, 0, 1, 1}, 3);
  CHECK(beam_decode(det, 4) == greedy_decode(det));
  CHECK_THROWS_AS(beam_decode(det, 0), InputError);

  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 200; ++trial) {
    const size_t m = 1 + rng() % 5, c = 1 + rng() % 2;
    const FrameProbs x{oracle::random_rows(rng, m, c + 1)};
    const auto sums = oracle::path_sums(x.probs);
    double best = -1.0;
    for (const auto& [label, p] : sums) best = std::max(best, p);
    size_t width = 1;
    for (size_t i = 0; i < m; ++i) width *= c + 1;
    const auto got = beam_decode(x, width);
    CHECK(std::abs(std::exp(log_prob(x, got)) - best) <= 1e-12);
  }
}

TEST_CASE("beam result probability is nondecreasing in width") {
  std::mt19937_64 rng(23);
  for (int trial = 0; trial < 200; ++trial) {
    const size_t m = 3 + rng() % 6, c = 2 + rng() % 3;
    const FrameProbs x{oracle::random_rows(rng, m, c + 1)};
    double prev = -std::numeric_limits<double>::infinity();
    for (size_t w : {1, 2, 4, 8}) {
      const double lp = log_prob(x, beam_decode(x, w));
      CHECK(lp >= prev - 1e-12);
      prev = std::max(prev, lp);
    }
  }
}

TEST_CASE("frame validation") {
  const auto a = Alphabet::from_utf8("ab");
  CHECK_NOTHROW(validate(rows({{0.2, 0.3, 0.5}}), a));
  CHECK_THROWS_AS(validate(rows({{0.2, 0.3, 0.6}}), a), InputError);
  CHECK_THROWS_AS(validate(rows({{0.5, 0.5}}), a), InputError);
  CHECK_THROWS_AS(validate(rows({{-0.1, 0.6, 0.5}}), a), InputError);
}
