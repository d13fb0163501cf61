#include "semstr/lstm.hpp"

namespace semstr::seq2seq {
namespace {

Mat sigmoid(const Mat& z) { return (1.0 / (1.0 + (-z.array()).exp())).matrix(); }

}  // namespace

LstmStepOutput lstm_forward(const LstmParams& p, const Mat& x, const Mat& h_prev, const Mat& c_prev,
                            LstmStepCache* cache) {
  const Eigen::Index hidden = p.hidden();
  const Eigen::Index batch = x.cols();

  Mat xh(x.rows() + hidden, batch);
  xh.topRows(x.rows()) = x;
  xh.bottomRows(hidden) = h_prev;

  Mat z = p.weight * xh;
  z.colwise() += p.bias;

  Mat i = sigmoid(z.middleRows(0, hidden));
  Mat f = sigmoid(z.middleRows(hidden, hidden));
  Mat g = z.middleRows(2 * hidden, hidden).array().tanh().matrix();
  Mat o = sigmoid(z.middleRows(3 * hidden, hidden));

  LstmStepOutput out;
  out.c = (f.array() * c_prev.array() + i.array() * g.array()).matrix();
  Mat tc = out.c.array().tanh().matrix();
  out.h = (o.array() * tc.array()).matrix();

  if (cache) {
    cache->xh = std::move(xh);
    cache->in_gate = std::move(i);
    cache->forget_gate = std::move(f);
    cache->cell_gate = std::move(g);
    cache->out_gate = std::move(o);
    cache->c_prev = c_prev;
    cache->tanh_c = std::move(tc);
  }
  return out;
}

LstmStepGrads lstm_backward(const LstmParams& p, const LstmStepCache& cache, const Mat& dh,
                            const Mat& dc, LstmParams& grad) {
  const Eigen::Index hidden = p.hidden();
  const auto& i = cache.in_gate.array();
  const auto& f = cache.forget_gate.array();
  const auto& g = cache.cell_gate.array();
  const auto& o = cache.out_gate.array();
  const auto& tc = cache.tanh_c.array();

  const Eigen::ArrayXXd dc_total = dc.array() + dh.array() * o * (1.0 - tc * tc);

  Mat dz(4 * hidden, dh.cols());
  dz.middleRows(0, hidden) = (dc_total * g * i * (1.0 - i)).matrix();
  dz.middleRows(hidden, hidden) = (dc_total * cache.c_prev.array() * f * (1.0 - f)).matrix();
  dz.middleRows(2 * hidden, hidden) = (dc_total * i * (1.0 - g * g)).matrix();
  dz.middleRows(3 * hidden, hidden) = (dh.array() * tc * o * (1.0 - o)).matrix();

  grad.weight.noalias() += dz * cache.xh.transpose();
  grad.bias.noalias() += dz.rowwise().sum();

  const Mat dxh = p.weight.transpose() * dz;
  const Eigen::Index input = dxh.rows() - hidden;
  return LstmStepGrads{dxh.topRows(input), dxh.bottomRows(hidden), (dc_total * f).matrix()};
}

}  // namespace semstr::seq2seq
