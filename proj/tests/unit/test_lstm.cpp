#include <doctest.h>

#include <cmath>
#include <random>

#include "semstr/lstm.hpp"

using namespace semstr::seq2seq;

namespace {

double sig(double z) { return 1.0 / (1.0 + std::exp(-z)); }

LstmParams random_params(std::mt19937_64& rng, int in, int hidden) {
  std::uniform_real_distribution<double> u(-0.8, 0.8);
  LstmParams p(in, hidden);
  for (Eigen::Index i = 0; i < p.weight.size(); ++i) p.weight.data()[i] = u(rng);
  for (Eigen::Index i = 0; i < p.bias.size(); ++i) p.bias[i] = u(rng);
  return p;
}

Mat random_mat(std::mt19937_64& rng, Eigen::Index r, Eigen::Index c) {
  std::uniform_real_distribution<double> u(-1, 1);
  Mat m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = u(rng);
  return m;
}

// One step, one scalar at a time.
void reference_step(const LstmParams& p, const Vec& x, const Vec& h, const Vec& c, Vec& h_out, Vec& c_out) {
  const auto H = p.hidden(), I = p.input();
  h_out.resize(H);
  c_out.resize(H);
  for (Eigen::Index k = 0; k < H; ++k) {
    double z[4];
    for (int gate = 0; gate < 4; ++gate) {
      const Eigen::Index row = gate * H + k;
      double s = p.bias[row];
      for (Eigen::Index j = 0; j < I; ++j) s += p.weight(row, j) * x[j];
      for (Eigen::Index j = 0; j < H; ++j) s += p.weight(row, I + j) * h[j];
      z[gate] = s;
    }
    c_out[k] = sig(z[1]) * c[k] + sig(z[0]) * std::tanh(z[2]);
    h_out[k] = sig(z[3]) * std::tanh(c_out[k]);
  }
}

}  // namespace

TEST_CASE("batched LSTM step matches the scalar reference") {
  std::mt19937_64 rng(1);
  const auto p = random_params(rng, 3, 4);
  const Mat x = random_mat(rng, 3, 5), h = random_mat(rng, 4, 5), c = random_mat(rng, 4, 5);
  const auto out = lstm_forward(p, x, h, c, nullptr);
  for (Eigen::Index b = 0; b < 5; ++b) {
    Vec ho, co;
    reference_step(p, x.col(b), h.col(b), c.col(b), ho, co);
    CHECK((out.h.col(b) - ho).cwiseAbs().maxCoeff() <= 1e-14);
    CHECK((out.c.col(b) - co).cwiseAbs().maxCoeff() <= 1e-14);
  }
}

TEST_CASE("zero parameters keep a zero state at zero") {
  LstmParams p(3, 2);
  const auto out = lstm_forward(p, Mat::Zero(3, 1), Mat::Zero(2, 1), Mat::Zero(2, 1), nullptr);
  CHECK(out.h.cwiseAbs().maxCoeff() == 0.0);
  CHECK(out.c.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("LSTM step gradients match finite differences") {
  std::mt19937_64 rng(2);
  auto p = random_params(rng, 3, 2);
  Mat x = random_mat(rng, 3, 2), h = random_mat(rng, 2, 2), c = random_mat(rng, 2, 2);
  const Mat wh = random_mat(rng, 2, 2), wc = random_mat(rng, 2, 2);
  auto objective = [&]() {
    const auto o = lstm_forward(p, x, h, c, nullptr);
    return (o.h.array() * wh.array()).sum() + (o.c.array() * wc.array()).sum();
  };
  LstmStepCache cache;
  lstm_forward(p, x, h, c, &cache);
  LstmParams grad(3, 2);
  const auto g = lstm_backward(p, cache, wh, wc, grad);

  const double eps = 1e-5;
  auto check = [&](double& v, double analytic) {
    const double keep = v;
    v = keep + eps;
    const double up = objective();
    v = keep - eps;
    const double down = objective();
    v = keep;
    CHECK(std::abs((up - down) / (2 * eps) - analytic) <= 1e-8);
  };
  for (Eigen::Index i = 0; i < p.weight.size(); ++i) check(p.weight.data()[i], grad.weight.data()[i]);
  for (Eigen::Index i = 0; i < p.bias.size(); ++i) check(p.bias.data()[i], grad.bias.data()[i]);
  for (Eigen::Index i = 0; i < x.size(); ++i) check(x.data()[i], g.dx.data()[i]);
  for (Eigen::Index i = 0; i < h.size(); ++i) check(h.data()[i], g.dh_prev.data()[i]);
  for (Eigen::Index i = 0; i < c.size(); ++i) check(c.data()[i], g.dc_prev.data()[i]);
}
