#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "semstr/lstm.hpp"
#include "semstr/vocab.hpp"

namespace semstr::seq2seq {

struct HyperParams {
  int embedding_dim = 32;
  int hidden_dim = 64;
  int encoder_layers = 2;
  int decoder_layers = 2;
  double dropout = 0.3;
};

// Maps the final encoder states of one encoder layer to a decoder layer's
// initial (h, c): h0 = tanh(Wh [h_fwd_last; h_bwd_first] + bh),
// c0 = Wc [c_fwd_last; c_bwd_first] + bc.
struct BridgeParams {
  Mat h_weight;
  Vec h_bias;
  Mat c_weight;
  Vec c_bias;
};

struct Parameters {
  Mat embedding;                   // |V| x E, one row per token
  std::vector<LstmParams> enc_fwd;  // per encoder layer
  std::vector<LstmParams> enc_bwd;
  std::vector<LstmParams> dec;      // per decoder layer; layer 0 reads [embed(y); context]
  std::vector<BridgeParams> bridge;  // per decoder layer
  Mat attn_key;                    // H x 2H, projects [h_fwd; h_bwd] for dot scoring
  Mat attn_out;                    // H x 2H, attentional state tanh(W [s; c])
  Mat gen_weight;                  // |V| x H
  Vec gen_bias;                    // |V|

  // Same shapes, every entry zero.
  Parameters zeros_like() const;
};

// Named view of one parameter tensor (column-major storage).
struct TensorView {
  std::string name;
  double* data;
  Eigen::Index rows;
  Eigen::Index cols;

  Eigen::Map<Mat> map() const { return Eigen::Map<Mat>(data, rows, cols); }
  Eigen::Index size() const { return rows * cols; }
};

// Stable, documented ordering of every tensor in a parameter set.
std::vector<TensorView> tensors(Parameters& p);
std::size_t parameter_count(const Parameters& p);

struct CorrectorModel {
  HyperParams hyper;
  Vocab vocab;
  Parameters params;

  // All tensors sized for (hyper, vocab) and zero-filled.
  static CorrectorModel zeros(const HyperParams& hyper, const Vocab& vocab);
  // Uniform(-scale, scale) initialization from a seeded generator.
  static CorrectorModel random(const HyperParams& hyper, const Vocab& vocab, std::uint64_t seed,
                               double scale = 0.1);

  // Throws InputError when tensor shapes disagree with (hyper, vocab) or any
  // entry is non-finite.
  void validate() const;
};

// Encoder outputs of the top layer for a single sequence.
struct EncoderStates {
  std::vector<Vec> fwd;  // h->_1 .. h->_t
  std::vector<Vec> bwd;  // h<-_1 .. h<-_t
  // Final (h, c) of every encoder layer: forward after the last position,
  // backward after the first.
  std::vector<Vec> final_h_fwd, final_c_fwd, final_h_bwd, final_c_bwd;
};

// Zero initial states; stacked layers read the concatenated directional
// outputs of the layer below. Inference mode (no dropout).
EncoderStates encode(const CorrectorModel& model, const TokenSequence& x);

struct Attention {
  Vec context;  // sum_j alpha_j (h<-_j + h->_j)
  Vec weights;  // alpha, sums to 1
};

// Dot score e_j = s_prev . (W_key [h->_j; h<-_j]), softmax over positions.
Attention attend(const CorrectorModel& model, const Vec& s_prev, const EncoderStates& enc);

struct DecoderState {
  std::vector<Vec> h;  // per decoder layer; h.back() is s
  std::vector<Vec> c;
};

DecoderState initial_state(const CorrectorModel& model, const EncoderStates& enc);

struct StepOutput {
  Vec probs;  // distribution over the vocabulary
  DecoderState next;
};

// LSTM step on [embed(y_prev); context], then tanh(W_out [s; context]) and a
// softmax generator.
StepOutput decode_step(const CorrectorModel& model, TokenId y_prev, const DecoderState& state,
                       const Vec& context);

// Sum over target steps (targets followed by END) of -log p(y_t | y_<t, x)
// under teacher forcing. PAD targets contribute nothing.
double loss(const CorrectorModel& model, const TokenSequence& x, const TokenSequence& y);

struct Example {
  TokenSequence source;
  TokenSequence target;
};

// Settings that only matter in training mode.
struct DropoutContext {
  double rate = 0.0;
  std::mt19937_64* rng = nullptr;
};

struct Gradients {
  double loss = 0.0;  // summed over the batch
  Parameters grads;
};

// Exact gradient of the summed batch loss w.r.t. every parameter tensor.
Gradients backward(const CorrectorModel& model, std::span<const Example> batch,
                   const DropoutContext& dropout = {});

struct Correction {
  std::string text;
  bool cap_hit = false;   // decoding stopped at the 4x input length cap
  bool degraded = false;  // input contained characters outside the vocabulary
};

// Greedy when beam_width == 1, beam search otherwise.
Correction correct(const CorrectorModel& model, std::string_view phrase, std::size_t beam_width = 1);

}  // namespace semstr::seq2seq
