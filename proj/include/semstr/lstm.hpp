#pragma once

#include <Eigen/Core>

namespace semstr::seq2seq {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

// One LSTM layer. Gate rows are stacked as input, forget, cell, output:
//   z = W [x; h_prev] + b
//   c = sigmoid(z_f) * c_prev + sigmoid(z_i) * tanh(z_g)
//   h = sigmoid(z_o) * tanh(c)
struct LstmParams {
  Mat weight;  // 4H x (input + H)
  Vec bias;    // 4H

  LstmParams() = default;
  LstmParams(Eigen::Index input, Eigen::Index hidden)
      : weight(Mat::Zero(4 * hidden, input + hidden)), bias(Vec::Zero(4 * hidden)) {}

  Eigen::Index hidden() const { return bias.size() / 4; }
  Eigen::Index input() const { return weight.cols() - hidden(); }
};

// Everything a step needs for its backward pass. Columns are batch items.
struct LstmStepCache {
  Mat xh;      // [x; h_prev]
  Mat in_gate, forget_gate, cell_gate, out_gate;
  Mat c_prev;
  Mat tanh_c;  // tanh of the new cell
};

struct LstmStepOutput {
  Mat h;
  Mat c;
};

LstmStepOutput lstm_forward(const LstmParams& p, const Mat& x, const Mat& h_prev, const Mat& c_prev,
                            LstmStepCache* cache);

struct LstmStepGrads {
  Mat dx;
  Mat dh_prev;
  Mat dc_prev;
};

// Accumulates into grad; dh and dc are gradients w.r.t. the step's outputs.
LstmStepGrads lstm_backward(const LstmParams& p, const LstmStepCache& cache, const Mat& dh,
                            const Mat& dc, LstmParams& grad);

}  // namespace semstr::seq2seq
