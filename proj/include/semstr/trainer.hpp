#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "semstr/corrector.hpp"

namespace semstr::seq2seq {

struct TrainConfig {
  double lr0 = 1.0;
  // Full-scale runs use decay_start 50000 and halve_every 10000; desk-scale
  // runs shrink both proportionally.
  std::int64_t decay_start = 5000;
  std::int64_t halve_every = 1000;
  std::int64_t batch_size = 64;
  double clip_norm = 5.0;
  std::int64_t max_steps = 10000;
  std::uint64_t seed = 1;
};

struct PhrasePair {
  std::string noisy;
  std::string clean;
};

struct TrainResult {
  CorrectorModel model;
  std::vector<double> losses;  // mean per-sequence loss of each step's batch
};

// lr0 before decay_start, then halved every halve_every steps.
double learning_rate(const TrainConfig& cfg, std::int64_t step);

// Throws InputError on invalid settings.
void validate(const TrainConfig& cfg);

std::vector<Example> make_examples(std::span<const PhrasePair> corpus, const Vocab& vocab);

// Mean per-sequence loss over the examples, dropout off.
double mean_loss(const CorrectorModel& model, std::span<const Example> examples);

// Scales the whole gradient so its global L2 norm is at most max_norm.
// Returns the norm before clipping.
double clip_global_norm(Parameters& grads, double max_norm);

using StepCallback = std::function<void(std::int64_t step, double loss, double lr)>;

// Minibatch SGD over epochs of a seeded shuffle, with global-norm clipping
// and the step schedule of learning_rate(). Deterministic for a given seed.
// Throws DivergenceError when a batch loss is not finite.
TrainResult train(CorrectorModel model, std::span<const PhrasePair> corpus, const TrainConfig& cfg,
                  const StepCallback& on_step = {});

}  // namespace semstr::seq2seq
