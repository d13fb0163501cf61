#include "semstr/corrector.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <tuple>

#include "semstr/errors.hpp"
#include "semstr/text.hpp"

namespace semstr::seq2seq {
namespace {

using Index = Eigen::Index;
using Valid = std::vector<std::vector<char>>;  // [position][batch item]

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// ---------------------------------------------------------------------------
// Parameter plumbing

template <class F>
void visit(Parameters& p, F&& f) {
  f("embedding", p.embedding);
  for (size_t l = 0; l < p.enc_fwd.size(); ++l) {
    const std::string pre = "encoder." + std::to_string(l);
    f(pre + ".fwd.weight", p.enc_fwd[l].weight);
    f(pre + ".fwd.bias", p.enc_fwd[l].bias);
    f(pre + ".bwd.weight", p.enc_bwd[l].weight);
    f(pre + ".bwd.bias", p.enc_bwd[l].bias);
  }
  for (size_t l = 0; l < p.dec.size(); ++l) {
    const std::string pre = "decoder." + std::to_string(l);
    f(pre + ".weight", p.dec[l].weight);
    f(pre + ".bias", p.dec[l].bias);
  }
  for (size_t l = 0; l < p.bridge.size(); ++l) {
    const std::string pre = "bridge." + std::to_string(l);
    f(pre + ".h_weight", p.bridge[l].h_weight);
    f(pre + ".h_bias", p.bridge[l].h_bias);
    f(pre + ".c_weight", p.bridge[l].c_weight);
    f(pre + ".c_bias", p.bridge[l].c_bias);
  }
  f("attention.key", p.attn_key);
  f("attention.out", p.attn_out);
  f("generator.weight", p.gen_weight);
  f("generator.bias", p.gen_bias);
}

Mat gather_embeddings(const Mat& embedding, const std::vector<TokenId>& ids) {
  Mat x(embedding.cols(), static_cast<Index>(ids.size()));
  for (size_t b = 0; b < ids.size(); ++b) x.col(static_cast<Index>(b)) = embedding.row(ids[b]).transpose();
  return x;
}

void scatter_embeddings(Mat& grad, const std::vector<TokenId>& ids, const Mat& dx) {
  for (size_t b = 0; b < ids.size(); ++b) grad.row(ids[b]) += dx.col(static_cast<Index>(b)).transpose();
}

Mat stack(const Mat& top, const Mat& bottom) {
  Mat out(top.rows() + bottom.rows(), top.cols());
  out.topRows(top.rows()) = top;
  out.bottomRows(bottom.rows()) = bottom;
  return out;
}

Mat dropout_mask(Index rows, Index cols, const DropoutContext& dropout) {
  std::bernoulli_distribution keep(1.0 - dropout.rate);
  const double scale = 1.0 / (1.0 - dropout.rate);
  Mat m(rows, cols);
  for (Index c = 0; c < cols; ++c)
    for (Index r = 0; r < rows; ++r) m(r, c) = keep(*dropout.rng) ? scale : 0.0;
  return m;
}

bool dropout_active(const DropoutContext& d) { return d.rng != nullptr && d.rate > 0.0; }

// ---------------------------------------------------------------------------
// Padded batch

struct Batch {
  Index size = 0;
  Index src_len = 0;
  Index tgt_len = 0;
  std::vector<std::vector<TokenId>> src;      // [t][b]
  Valid src_valid;                            // [t][b]
  std::vector<std::vector<TokenId>> dec_in;   // [i][b], GO then targets
  std::vector<std::vector<TokenId>> dec_out;  // [i][b], targets then END, PAD padded
};

Batch make_batch(std::span<const Example> examples) {
  Batch batch;
  batch.size = static_cast<Index>(examples.size());
  size_t src_len = 0, tgt_len = 0;
  for (const auto& ex : examples) {
    if (ex.source.empty()) throw InputError("empty source sequence");
    src_len = std::max(src_len, ex.source.size());
    tgt_len = std::max(tgt_len, ex.target.size() + 1);
  }
  batch.src_len = static_cast<Index>(src_len);
  batch.tgt_len = static_cast<Index>(tgt_len);
  batch.src.assign(src_len, std::vector<TokenId>(examples.size(), Vocab::kPad));
  batch.src_valid.assign(src_len, std::vector<char>(examples.size(), 0));
  batch.dec_in.assign(tgt_len, std::vector<TokenId>(examples.size(), Vocab::kPad));
  batch.dec_out.assign(tgt_len, std::vector<TokenId>(examples.size(), Vocab::kPad));
  for (size_t b = 0; b < examples.size(); ++b) {
    const auto& ex = examples[b];
    for (size_t t = 0; t < ex.source.size(); ++t) {
      batch.src[t][b] = ex.source[t];
      batch.src_valid[t][b] = 1;
    }
    batch.dec_in[0][b] = Vocab::kGo;
    for (size_t t = 0; t < ex.target.size(); ++t) {
      batch.dec_in[t + 1][b] = ex.target[t];
      batch.dec_out[t][b] = ex.target[t];
    }
    batch.dec_out[ex.target.size()][b] = Vocab::kEnd;
  }
  return batch;
}

// ---------------------------------------------------------------------------
// Encoder

struct DirectionTrace {
  std::vector<LstmStepCache> steps;
  std::vector<Mat> h, c;  // state after each position (masked carry applied)
};

struct EncoderTrace {
  // Per layer.
  std::vector<DirectionTrace> fwd, bwd;
  std::vector<std::vector<Mat>> input_drop;  // layer >= 1, per position
  // Top layer attention memory.
  std::vector<Mat> memory;  // [h_fwd; h_bwd] per position
  std::vector<Mat> keys;    // attn_key * memory
  std::vector<Mat> values;  // h_fwd + h_bwd
};

Mat select_columns(const Mat& when_valid, const Mat& otherwise, const std::vector<char>& valid) {
  Mat out = otherwise;
  for (size_t b = 0; b < valid.size(); ++b)
    if (valid[b]) out.col(static_cast<Index>(b)) = when_valid.col(static_cast<Index>(b));
  return out;
}

void run_direction(const LstmParams& p, const std::vector<Mat>& inputs, const Valid& valid,
                   bool reverse, bool keep_cache, DirectionTrace& trace) {
  const Index n = static_cast<Index>(inputs.size());
  const Index hidden = p.hidden();
  const Index batch = inputs.front().cols();
  trace.h.assign(static_cast<size_t>(n), Mat());
  trace.c.assign(static_cast<size_t>(n), Mat());
  if (keep_cache) trace.steps.assign(static_cast<size_t>(n), LstmStepCache{});
  Mat h = Mat::Zero(hidden, batch), c = Mat::Zero(hidden, batch);
  for (Index k = 0; k < n; ++k) {
    const auto t = static_cast<size_t>(reverse ? n - 1 - k : k);
    auto out = lstm_forward(p, inputs[t], h, c, keep_cache ? &trace.steps[t] : nullptr);
    h = select_columns(out.h, h, valid[t]);
    c = select_columns(out.c, c, valid[t]);
    trace.h[t] = h;
    trace.c[t] = c;
  }
}

EncoderTrace encoder_forward(const CorrectorModel& model, const Batch& batch, const DropoutContext& dropout,
                             bool keep_cache) {
  const auto& p = model.params;
  const size_t layers = p.enc_fwd.size();
  const auto n = static_cast<size_t>(batch.src_len);
  EncoderTrace trace;
  trace.fwd.resize(layers);
  trace.bwd.resize(layers);
  trace.input_drop.resize(layers);

  std::vector<Mat> inputs(n);
  for (size_t t = 0; t < n; ++t) inputs[t] = gather_embeddings(p.embedding, batch.src[t]);

  for (size_t l = 0; l < layers; ++l) {
    if (l > 0) {
      for (size_t t = 0; t < n; ++t) {
        inputs[t] = stack(trace.fwd[l - 1].h[t], trace.bwd[l - 1].h[t]);
        if (dropout_active(dropout)) {
          trace.input_drop[l].push_back(dropout_mask(inputs[t].rows(), inputs[t].cols(), dropout));
          inputs[t].array() *= trace.input_drop[l].back().array();
        }
      }
    }
    run_direction(p.enc_fwd[l], inputs, batch.src_valid, false, keep_cache, trace.fwd[l]);
    run_direction(p.enc_bwd[l], inputs, batch.src_valid, true, keep_cache, trace.bwd[l]);
  }

  trace.memory.resize(n);
  trace.keys.resize(n);
  trace.values.resize(n);
  for (size_t t = 0; t < n; ++t) {
    trace.memory[t] = stack(trace.fwd.back().h[t], trace.bwd.back().h[t]);
    trace.keys[t] = p.attn_key * trace.memory[t];
    trace.values[t] = trace.fwd.back().h[t] + trace.bwd.back().h[t];
  }
  return trace;
}

// ---------------------------------------------------------------------------
// Bridge

size_t bridge_source_layer(const CorrectorModel& model, size_t dec_layer) {
  return std::min(dec_layer, model.params.enc_fwd.size() - 1);
}

struct BridgeTrace {
  std::vector<Mat> h_in, c_in;  // [h_fwd_last; h_bwd_first], [c_fwd_last; c_bwd_first]
  std::vector<Mat> h0, c0;
};

BridgeTrace bridge_forward(const CorrectorModel& model, const EncoderTrace& enc) {
  const auto& p = model.params;
  BridgeTrace tr;
  for (size_t l = 0; l < p.dec.size(); ++l) {
    const size_t k = bridge_source_layer(model, l);
    const auto& f = enc.fwd[k];
    const auto& b = enc.bwd[k];
    tr.h_in.push_back(stack(f.h.back(), b.h.front()));
    tr.c_in.push_back(stack(f.c.back(), b.c.front()));
    Mat zh = p.bridge[l].h_weight * tr.h_in.back();
    zh.colwise() += p.bridge[l].h_bias;
    tr.h0.push_back(zh.array().tanh().matrix());
    Mat c0 = p.bridge[l].c_weight * tr.c_in.back();
    c0.colwise() += p.bridge[l].c_bias;
    tr.c0.push_back(std::move(c0));
  }
  return tr;
}

// ---------------------------------------------------------------------------
// Attention and decoder cell (batched, columns are items)

struct AttentionOut {
  Mat alpha;    // positions x batch
  Mat context;  // H x batch
};

AttentionOut attention_forward(const std::vector<Mat>& keys, const std::vector<Mat>& values, const Valid& valid,
                               const Mat& s_prev) {
  const Index n = static_cast<Index>(keys.size());
  const Index batch = s_prev.cols();
  Mat scores(n, batch);
  for (Index j = 0; j < n; ++j) {
    scores.row(j) = (keys[static_cast<size_t>(j)].array() * s_prev.array()).colwise().sum().matrix();
    for (Index b = 0; b < batch; ++b)
      if (!valid[static_cast<size_t>(j)][static_cast<size_t>(b)]) scores(j, b) = kNegInf;
  }
  AttentionOut out;
  out.alpha.resize(n, batch);
  for (Index b = 0; b < batch; ++b) {
    const double hi = scores.col(b).maxCoeff();
    Eigen::ArrayXd e = (scores.col(b).array() - hi).exp();
    out.alpha.col(b) = (e / e.sum()).matrix();
  }
  out.context = Mat::Zero(values.front().rows(), batch);
  for (Index j = 0; j < n; ++j)
    out.context.array() += values[static_cast<size_t>(j)].array().rowwise() * out.alpha.row(j).array();
  return out;
}

struct CellTrace {
  std::vector<LstmStepCache> lstm;  // per layer
  std::vector<Mat> drop;            // per layer >= 1 (empty when inactive)
  Mat s_ctx;                        // [s; context]
  Mat attentional;                  // tanh(attn_out [s; context])
  Mat probs;                        // |V| x batch
};

struct CellOut {
  Mat probs;
  std::vector<Mat> h, c;
};

CellOut cell_forward(const CorrectorModel& model, const std::vector<TokenId>& y_prev, const std::vector<Mat>& h,
                     const std::vector<Mat>& c, const Mat& context, const DropoutContext& dropout,
                     CellTrace* trace) {
  const auto& p = model.params;
  const size_t layers = p.dec.size();
  CellOut out;
  out.h.resize(layers);
  out.c.resize(layers);
  if (trace) {
    trace->lstm.assign(layers, LstmStepCache{});
    trace->drop.assign(layers, Mat());
  }
  Mat input = stack(gather_embeddings(p.embedding, y_prev), context);
  for (size_t l = 0; l < layers; ++l) {
    if (l > 0) {
      input = out.h[l - 1];
      if (dropout_active(dropout)) {
        Mat mask = dropout_mask(input.rows(), input.cols(), dropout);
        input.array() *= mask.array();
        if (trace) trace->drop[l] = std::move(mask);
      }
    }
    auto step = lstm_forward(p.dec[l], input, h[l], c[l], trace ? &trace->lstm[l] : nullptr);
    out.h[l] = std::move(step.h);
    out.c[l] = std::move(step.c);
  }
  Mat s_ctx = stack(out.h.back(), context);
  Mat attentional = (p.attn_out * s_ctx).array().tanh().matrix();
  Mat logits = p.gen_weight * attentional;
  logits.colwise() += p.gen_bias;
  out.probs.resize(logits.rows(), logits.cols());
  for (Index b = 0; b < logits.cols(); ++b) {
    Eigen::ArrayXd e = (logits.col(b).array() - logits.col(b).maxCoeff()).exp();
    out.probs.col(b) = (e / e.sum()).matrix();
  }
  if (trace) {
    trace->s_ctx = std::move(s_ctx);
    trace->attentional = std::move(attentional);
    trace->probs = out.probs;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Full teacher-forced pass

struct StepTrace {
  Mat s_prev;
  AttentionOut attn;
  CellTrace cell;
};

struct ForwardTrace {
  Batch batch;
  EncoderTrace enc;
  BridgeTrace bridge;
  std::vector<StepTrace> steps;
  double loss = 0.0;
};

ForwardTrace forward(const CorrectorModel& model, std::span<const Example> examples, const DropoutContext& dropout,
                     bool keep_cache) {
  ForwardTrace tr;
  tr.batch = make_batch(examples);
  tr.enc = encoder_forward(model, tr.batch, dropout, keep_cache);
  tr.bridge = bridge_forward(model, tr.enc);

  std::vector<Mat> h = tr.bridge.h0, c = tr.bridge.c0;
  const auto steps = static_cast<size_t>(tr.batch.tgt_len);
  if (keep_cache) tr.steps.resize(steps);
  double total = 0.0;
  for (size_t i = 0; i < steps; ++i) {
    StepTrace local;
    StepTrace& st = keep_cache ? tr.steps[i] : local;
    st.s_prev = h.back();
    st.attn = attention_forward(tr.enc.keys, tr.enc.values, tr.batch.src_valid, st.s_prev);
    auto out = cell_forward(model, tr.batch.dec_in[i], h, c, st.attn.context, dropout,
                            keep_cache ? &st.cell : nullptr);
    for (Index b = 0; b < tr.batch.size; ++b) {
      const TokenId target = tr.batch.dec_out[i][static_cast<size_t>(b)];
      if (target != Vocab::kPad) total -= std::log(out.probs(target, b));
    }
    h = std::move(out.h);
    c = std::move(out.c);
  }
  tr.loss = total;
  return tr;
}

// Gradient of the masked-carry step: splits an incoming gradient into the
// part that reaches the LSTM output and the part that skips the step.
void split_masked(const Mat& d, const std::vector<char>& valid, Mat& d_new, Mat& d_skip) {
  d_new = Mat::Zero(d.rows(), d.cols());
  d_skip = Mat::Zero(d.rows(), d.cols());
  for (size_t b = 0; b < valid.size(); ++b) {
    const auto col = static_cast<Index>(b);
    if (valid[b]) d_new.col(col) = d.col(col);
    else d_skip.col(col) = d.col(col);
  }
}

// Backward through one encoder direction. d_out[t] is the gradient w.r.t.
// the state after position t; d_final_h/c w.r.t. the direction's final state.
std::vector<Mat> direction_backward(const LstmParams& p, const DirectionTrace& trace, const Valid& valid,
                                    bool reverse, std::vector<Mat> d_out, const Mat& d_final_h,
                                    const Mat& d_final_c, LstmParams& grad) {
  const Index n = static_cast<Index>(trace.h.size());
  const Index hidden = p.hidden();
  const Index batch = d_out.front().cols();
  std::vector<Mat> dx(static_cast<size_t>(n));
  Mat dh_carry = d_final_h;
  Mat dc_carry = d_final_c;
  if (dh_carry.size() == 0) dh_carry = Mat::Zero(hidden, batch);
  if (dc_carry.size() == 0) dc_carry = Mat::Zero(hidden, batch);
  // Visit positions in the reverse of processing order.
  for (Index k = n - 1; k >= 0; --k) {
    const auto t = static_cast<size_t>(reverse ? n - 1 - k : k);
    Mat dh = d_out[t] + dh_carry;
    Mat dh_new, dh_skip, dc_new, dc_skip;
    split_masked(dh, valid[t], dh_new, dh_skip);
    split_masked(dc_carry, valid[t], dc_new, dc_skip);
    auto g = lstm_backward(p, trace.steps[t], dh_new, dc_new, grad);
    dx[t] = std::move(g.dx);
    dh_carry = dh_skip + g.dh_prev;
    dc_carry = dc_skip + g.dc_prev;
  }
  return dx;
}

}  // namespace

// ---------------------------------------------------------------------------
// Public API

Parameters Parameters::zeros_like() const {
  Parameters z = *this;
  visit(z, [](const std::string&, auto& t) { t.setZero(); });
  return z;
}

std::vector<TensorView> tensors(Parameters& p) {
  std::vector<TensorView> out;
  visit(p, [&out](const std::string& name, auto& t) {
    out.push_back(TensorView{name, t.data(), t.rows(), t.cols()});
  });
  return out;
}

std::size_t parameter_count(const Parameters& p) {
  size_t n = 0;
  visit(const_cast<Parameters&>(p), [&n](const std::string&, auto& t) { n += static_cast<size_t>(t.size()); });
  return n;
}

CorrectorModel CorrectorModel::zeros(const HyperParams& hyper, const Vocab& vocab) {
  if (hyper.embedding_dim < 1 || hyper.hidden_dim < 1 || hyper.encoder_layers < 1 || hyper.decoder_layers < 1)
    throw InputError("corrector dimensions and layer counts must be positive");
  if (!(hyper.dropout >= 0.0 && hyper.dropout < 1.0)) throw InputError("dropout must lie in [0, 1)");
  const Index v = static_cast<Index>(vocab.size());
  const Index e = hyper.embedding_dim;
  const Index h = hyper.hidden_dim;

  CorrectorModel m;
  m.hyper = hyper;
  m.vocab = vocab;
  auto& p = m.params;
  p.embedding = Mat::Zero(v, e);
  for (int l = 0; l < hyper.encoder_layers; ++l) {
    const Index in = l == 0 ? e : 2 * h;
    p.enc_fwd.emplace_back(in, h);
    p.enc_bwd.emplace_back(in, h);
  }
  for (int l = 0; l < hyper.decoder_layers; ++l) {
    p.dec.emplace_back(l == 0 ? e + h : h, h);
    p.bridge.push_back(BridgeParams{Mat::Zero(h, 2 * h), Vec::Zero(h), Mat::Zero(h, 2 * h), Vec::Zero(h)});
  }
  p.attn_key = Mat::Zero(h, 2 * h);
  p.attn_out = Mat::Zero(h, 2 * h);
  p.gen_weight = Mat::Zero(v, h);
  p.gen_bias = Vec::Zero(v);
  return m;
}

CorrectorModel CorrectorModel::random(const HyperParams& hyper, const Vocab& vocab, std::uint64_t seed,
                                      double scale) {
  CorrectorModel m = zeros(hyper, vocab);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(-scale, scale);
  for (auto& t : tensors(m.params)) {
    auto map = t.map();
    for (Index i = 0; i < map.size(); ++i) map.data()[i] = dist(rng);
  }
  return m;
}

void CorrectorModel::validate() const {
  const CorrectorModel reference = zeros(hyper, vocab);
  auto expected = tensors(const_cast<Parameters&>(reference.params));
  auto actual = tensors(const_cast<Parameters&>(params));
  if (expected.size() != actual.size()) throw InputError("corrector has the wrong number of tensors");
  for (size_t i = 0; i < expected.size(); ++i) {
    if (expected[i].rows != actual[i].rows || expected[i].cols != actual[i].cols)
      throw InputError("tensor " + actual[i].name + " has shape " + std::to_string(actual[i].rows) + "x" +
                       std::to_string(actual[i].cols) + ", expected " + std::to_string(expected[i].rows) + "x" +
                       std::to_string(expected[i].cols));
    if (!actual[i].map().allFinite()) throw InputError("tensor " + actual[i].name + " has non-finite entries");
  }
}

EncoderStates encode(const CorrectorModel& model, const TokenSequence& x) {
  if (x.empty()) throw InputError("cannot encode an empty sequence");
  for (TokenId t : x)
    if (t < 0 || static_cast<size_t>(t) >= model.vocab.size()) throw InputError("token id outside vocabulary");
  const Example ex{x, {}};
  const Batch batch = make_batch(std::span<const Example>(&ex, 1));
  const EncoderTrace tr = encoder_forward(model, batch, {}, false);
  EncoderStates out;
  for (size_t t = 0; t < x.size(); ++t) {
    out.fwd.push_back(tr.fwd.back().h[t].col(0));
    out.bwd.push_back(tr.bwd.back().h[t].col(0));
  }
  for (size_t l = 0; l < tr.fwd.size(); ++l) {
    out.final_h_fwd.push_back(tr.fwd[l].h.back().col(0));
    out.final_c_fwd.push_back(tr.fwd[l].c.back().col(0));
    out.final_h_bwd.push_back(tr.bwd[l].h.front().col(0));
    out.final_c_bwd.push_back(tr.bwd[l].c.front().col(0));
  }
  return out;
}

Attention attend(const CorrectorModel& model, const Vec& s_prev, const EncoderStates& enc) {
  if (enc.fwd.empty()) throw InputError("attention needs encoder states");
  std::vector<Mat> keys, values;
  for (size_t j = 0; j < enc.fwd.size(); ++j) {
    keys.push_back(model.params.attn_key * stack(enc.fwd[j], enc.bwd[j]));
    values.push_back(enc.fwd[j] + enc.bwd[j]);
  }
  const Valid valid(enc.fwd.size(), std::vector<char>(1, 1));
  const AttentionOut a = attention_forward(keys, values, valid, s_prev);
  return Attention{a.context.col(0), a.alpha.col(0)};
}

DecoderState initial_state(const CorrectorModel& model, const EncoderStates& enc) {
  const auto& p = model.params;
  DecoderState s;
  for (size_t l = 0; l < p.dec.size(); ++l) {
    const size_t k = bridge_source_layer(model, l);
    Vec hin(2 * model.hyper.hidden_dim), cin(2 * model.hyper.hidden_dim);
    hin << enc.final_h_fwd[k], enc.final_h_bwd[k];
    cin << enc.final_c_fwd[k], enc.final_c_bwd[k];
    s.h.push_back((p.bridge[l].h_weight * hin + p.bridge[l].h_bias).array().tanh().matrix());
    s.c.push_back(p.bridge[l].c_weight * cin + p.bridge[l].c_bias);
  }
  return s;
}

StepOutput decode_step(const CorrectorModel& model, TokenId y_prev, const DecoderState& state,
                       const Vec& context) {
  if (y_prev < 0 || static_cast<size_t>(y_prev) >= model.vocab.size()) throw InputError("token id outside vocabulary");
  if (state.h.size() != model.params.dec.size() || state.c.size() != model.params.dec.size())
    throw InputError("decoder state has the wrong number of layers");
  std::vector<Mat> h(state.h.begin(), state.h.end()), c(state.c.begin(), state.c.end());
  auto out = cell_forward(model, {y_prev}, h, c, context, {}, nullptr);
  StepOutput res;
  res.probs = out.probs.col(0);
  for (size_t l = 0; l < out.h.size(); ++l) {
    res.next.h.push_back(out.h[l].col(0));
    res.next.c.push_back(out.c[l].col(0));
  }
  return res;
}

double loss(const CorrectorModel& model, const TokenSequence& x, const TokenSequence& y) {
  const Example ex{x, y};
  return forward(model, std::span<const Example>(&ex, 1), {}, false).loss;
}

Gradients backward(const CorrectorModel& model, std::span<const Example> batch_examples,
                   const DropoutContext& dropout) {
  if (batch_examples.empty()) throw InputError("backward needs a nonempty batch");
  const auto& p = model.params;
  ForwardTrace tr = forward(model, batch_examples, dropout, true);
  const Batch& batch = tr.batch;
  const Index hidden = model.hyper.hidden_dim;
  const Index emb_dim = model.hyper.embedding_dim;
  const size_t dec_layers = p.dec.size();
  const auto src_len = static_cast<size_t>(batch.src_len);

  Gradients out;
  out.loss = tr.loss;
  out.grads = p.zeros_like();
  Parameters& g = out.grads;

  std::vector<Mat> dkeys(src_len, Mat::Zero(hidden, batch.size));
  std::vector<Mat> dvalues(src_len, Mat::Zero(hidden, batch.size));
  std::vector<Mat> dh(dec_layers, Mat::Zero(hidden, batch.size));
  std::vector<Mat> dc(dec_layers, Mat::Zero(hidden, batch.size));

  for (size_t i = tr.steps.size(); i-- > 0;) {
    const StepTrace& st = tr.steps[i];
    const CellTrace& cell = st.cell;

    Mat dlogits = cell.probs;
    for (Index b = 0; b < batch.size; ++b) {
      const TokenId target = batch.dec_out[i][static_cast<size_t>(b)];
      if (target == Vocab::kPad) dlogits.col(b).setZero();
      else dlogits(target, b) -= 1.0;
    }
    g.gen_weight.noalias() += dlogits * cell.attentional.transpose();
    g.gen_bias.noalias() += dlogits.rowwise().sum();
    const Mat dattentional = p.gen_weight.transpose() * dlogits;
    const Mat dz = (dattentional.array() * (1.0 - cell.attentional.array().square())).matrix();
    g.attn_out.noalias() += dz * cell.s_ctx.transpose();
    const Mat ds_ctx = p.attn_out.transpose() * dz;
    Mat dcontext = ds_ctx.bottomRows(hidden);
    dh.back() += ds_ctx.topRows(hidden);

    // Decoder layers, top to bottom.
    for (size_t l = dec_layers; l-- > 0;) {
      auto lg = lstm_backward(p.dec[l], cell.lstm[l], dh[l], dc[l], g.dec[l]);
      dh[l] = std::move(lg.dh_prev);
      dc[l] = std::move(lg.dc_prev);
      if (l > 0) {
        Mat dinput = std::move(lg.dx);
        if (cell.drop[l].size() != 0) dinput.array() *= cell.drop[l].array();
        dh[l - 1] += dinput;
      } else {
        scatter_embeddings(g.embedding, batch.dec_in[i], lg.dx.topRows(emb_dim));
        dcontext += lg.dx.bottomRows(hidden);
      }
    }

    // Attention: context = sum_j alpha_j v_j, alpha = softmax(e), e_j = s_prev . k_j.
    const Mat& alpha = st.attn.alpha;
    Mat dalpha(alpha.rows(), alpha.cols());
    for (size_t j = 0; j < src_len; ++j) {
      const auto row = static_cast<Index>(j);
      dalpha.row(row) = (dcontext.array() * tr.enc.values[j].array()).colwise().sum().matrix();
      dvalues[j].array() += dcontext.array().rowwise() * alpha.row(row).array();
    }
    const Eigen::RowVectorXd weighted = (alpha.array() * dalpha.array()).colwise().sum().matrix();
    const Mat de = (alpha.array() * (dalpha.array().rowwise() - weighted.array())).matrix();
    Mat ds_prev = Mat::Zero(hidden, batch.size);
    for (size_t j = 0; j < src_len; ++j) {
      const auto row = static_cast<Index>(j);
      ds_prev.array() += tr.enc.keys[j].array().rowwise() * de.row(row).array();
      dkeys[j].array() += st.s_prev.array().rowwise() * de.row(row).array();
    }
    dh.back() += ds_prev;
  }

  // Bridge: dh/dc now hold gradients w.r.t. the initial decoder state.
  const size_t enc_layers = p.enc_fwd.size();
  std::vector<Mat> d_final_hf(enc_layers), d_final_cf(enc_layers), d_final_hb(enc_layers),
      d_final_cb(enc_layers);
  for (size_t l = 0; l < enc_layers; ++l) {
    d_final_hf[l] = d_final_cf[l] = d_final_hb[l] = d_final_cb[l] = Mat::Zero(hidden, batch.size);
  }
  for (size_t l = 0; l < dec_layers; ++l) {
    const size_t k = bridge_source_layer(model, l);
    const Mat dzh = (dh[l].array() * (1.0 - tr.bridge.h0[l].array().square())).matrix();
    g.bridge[l].h_weight.noalias() += dzh * tr.bridge.h_in[l].transpose();
    g.bridge[l].h_bias.noalias() += dzh.rowwise().sum();
    const Mat dhin = p.bridge[l].h_weight.transpose() * dzh;
    g.bridge[l].c_weight.noalias() += dc[l] * tr.bridge.c_in[l].transpose();
    g.bridge[l].c_bias.noalias() += dc[l].rowwise().sum();
    const Mat dcin = p.bridge[l].c_weight.transpose() * dc[l];
    d_final_hf[k] += dhin.topRows(hidden);
    d_final_hb[k] += dhin.bottomRows(hidden);
    d_final_cf[k] += dcin.topRows(hidden);
    d_final_cb[k] += dcin.bottomRows(hidden);
  }

  // Attention memory back to the top encoder layer outputs.
  std::vector<Mat> d_fwd(src_len), d_bwd(src_len);
  for (size_t j = 0; j < src_len; ++j) {
    g.attn_key.noalias() += dkeys[j] * tr.enc.memory[j].transpose();
    const Mat dmem = p.attn_key.transpose() * dkeys[j];
    d_fwd[j] = dmem.topRows(hidden) + dvalues[j];
    d_bwd[j] = dmem.bottomRows(hidden) + dvalues[j];
  }

  for (size_t l = enc_layers; l-- > 0;) {
    auto dx_f = direction_backward(p.enc_fwd[l], tr.enc.fwd[l], batch.src_valid, false, std::move(d_fwd),
                                   d_final_hf[l], d_final_cf[l], g.enc_fwd[l]);
    auto dx_b = direction_backward(p.enc_bwd[l], tr.enc.bwd[l], batch.src_valid, true, std::move(d_bwd),
                                   d_final_hb[l], d_final_cb[l], g.enc_bwd[l]);
    if (l > 0) {
      d_fwd.assign(src_len, Mat());
      d_bwd.assign(src_len, Mat());
      for (size_t t = 0; t < src_len; ++t) {
        Mat dinput = dx_f[t] + dx_b[t];
        if (!tr.enc.input_drop[l].empty()) dinput.array() *= tr.enc.input_drop[l][t].array();
        d_fwd[t] = dinput.topRows(hidden);
        d_bwd[t] = dinput.bottomRows(hidden);
      }
    } else {
      for (size_t t = 0; t < src_len; ++t) scatter_embeddings(g.embedding, batch.src[t], dx_f[t] + dx_b[t]);
    }
  }
  return out;
}

Correction correct(const CorrectorModel& model, std::string_view phrase, std::size_t beam_width) {
  if (beam_width < 1) throw InputError("beam width must be at least 1");
  const TokenSequence x = preprocess(phrase, model.vocab);
  Correction result;
  result.degraded = std::find(x.begin(), x.end(), Vocab::kUnk) != x.end();

  const Example ex{x, {}};
  const Batch batch1 = make_batch(std::span<const Example>(&ex, 1));
  const EncoderTrace enc = encoder_forward(model, batch1, {}, false);
  const BridgeTrace bridge = bridge_forward(model, enc);
  const size_t cap = 4 * x.size();

  struct Hyp {
    TokenSequence tokens;
    double logp = 0.0;
    std::vector<Mat> h, c;  // single-column states
  };
  std::vector<Hyp> live{Hyp{{}, 0.0, bridge.h0, bridge.c0}};
  std::vector<Hyp> finished;

  for (size_t step = 0; step < cap && !live.empty(); ++step) {
    const auto width = static_cast<Index>(live.size());
    // Batch the live hypotheses as columns.
    std::vector<Mat> h(model.params.dec.size()), c(model.params.dec.size());
    for (size_t l = 0; l < h.size(); ++l) {
      h[l].resize(model.hyper.hidden_dim, width);
      c[l].resize(model.hyper.hidden_dim, width);
      for (Index b = 0; b < width; ++b) {
        h[l].col(b) = live[static_cast<size_t>(b)].h[l];
        c[l].col(b) = live[static_cast<size_t>(b)].c[l];
      }
    }
    std::vector<TokenId> y_prev;
    for (const auto& hyp : live) y_prev.push_back(hyp.tokens.empty() ? Vocab::kGo : hyp.tokens.back());
    std::vector<Mat> keys, values;
    for (size_t j = 0; j < enc.keys.size(); ++j) {
      keys.push_back(enc.keys[j].replicate(1, width));
      values.push_back(enc.values[j].replicate(1, width));
    }
    const Valid valid(enc.keys.size(), std::vector<char>(static_cast<size_t>(width), 1));
    const AttentionOut attn = attention_forward(keys, values, valid, h.back());
    const CellOut out = cell_forward(model, y_prev, h, c, attn.context, {}, nullptr);

    // (score, hypothesis index, token), ranked by score then by index/token.
    std::vector<std::tuple<double, size_t, TokenId>> candidates;
    for (Index b = 0; b < width; ++b) {
      for (Index v = 0; v < out.probs.rows(); ++v) {
        const double lp = live[static_cast<size_t>(b)].logp + std::log(out.probs(v, b));
        candidates.emplace_back(lp, static_cast<size_t>(b), static_cast<TokenId>(v));
      }
    }
    const size_t keep = std::min(candidates.size(), beam_width);
    std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(keep), candidates.end(),
                      [](const auto& a, const auto& b) {
                        if (std::get<0>(a) != std::get<0>(b)) return std::get<0>(a) > std::get<0>(b);
                        return std::make_pair(std::get<1>(a), std::get<2>(a)) <
                               std::make_pair(std::get<1>(b), std::get<2>(b));
                      });
    std::vector<Hyp> next;
    for (size_t k = 0; k < keep; ++k) {
      const auto [lp, b, token] = candidates[k];
      Hyp hyp;
      hyp.tokens = live[b].tokens;
      hyp.tokens.push_back(token);
      hyp.logp = lp;
      if (token == Vocab::kEnd) {
        finished.push_back(std::move(hyp));
        continue;
      }
      for (size_t l = 0; l < out.h.size(); ++l) {
        hyp.h.push_back(out.h[l].col(static_cast<Index>(b)));
        hyp.c.push_back(out.c[l].col(static_cast<Index>(b)));
      }
      next.push_back(std::move(hyp));
    }
    live = std::move(next);
    // Stop once the best finished hypothesis beats every live one.
    if (!finished.empty()) {
      double best_finished = kNegInf;
      for (const auto& f : finished) best_finished = std::max(best_finished, f.logp);
      bool any_better = false;
      for (const auto& l : live) any_better = any_better || l.logp > best_finished;
      if (!any_better) live.clear();
    }
  }

  const Hyp* best = nullptr;
  for (const auto& f : finished)
    if (!best || f.logp > best->logp) best = &f;
  if (!best) {
    result.cap_hit = true;
    for (const auto& l : live)
      if (!best || l.logp > best->logp) best = &l;
  }
  if (best) result.text = detokenize(best->tokens, model.vocab);
  return result;
}

}  // namespace semstr::seq2seq
