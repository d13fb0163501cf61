#include "semstr/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "semstr/errors.hpp"

namespace semstr::seq2seq {

double learning_rate(const TrainConfig& cfg, std::int64_t step) {
  if (step < cfg.decay_start) return cfg.lr0;
  const std::int64_t halvings = (step - cfg.decay_start) / cfg.halve_every;
  return std::ldexp(cfg.lr0, -static_cast<int>(std::min<std::int64_t>(halvings, 1000)));
}

void validate(const TrainConfig& cfg) {
  if (!(cfg.lr0 > 0.0)) throw InputError("lr0 must be positive");
  if (cfg.decay_start < 1 || cfg.halve_every < 1) throw InputError("decay_start and halve_every must be positive");
  if (cfg.batch_size < 1) throw InputError("batch_size must be positive");
  if (!(cfg.clip_norm > 0.0)) throw InputError("clip_norm must be positive");
  if (cfg.max_steps < 0) throw InputError("max_steps must be nonnegative");
}

std::vector<Example> make_examples(std::span<const PhrasePair> corpus, const Vocab& vocab) {
  std::vector<Example> out;
  out.reserve(corpus.size());
  for (const auto& pair : corpus) out.push_back(Example{preprocess(pair.noisy, vocab), preprocess(pair.clean, vocab)});
  return out;
}

double mean_loss(const CorrectorModel& model, std::span<const Example> examples) {
  if (examples.empty()) throw InputError("mean_loss needs examples");
  double total = 0.0;
  for (const auto& ex : examples) total += loss(model, ex.source, ex.target);
  return total / static_cast<double>(examples.size());
}

double clip_global_norm(Parameters& grads, double max_norm) {
  double sq = 0.0;
  auto views = tensors(grads);
  for (const auto& t : views) sq += t.map().squaredNorm();
  const double norm = std::sqrt(sq);
  if (norm > max_norm) {
    const double scale = max_norm / norm;
    for (auto& t : views) t.map() *= scale;
  }
  return norm;
}

TrainResult train(CorrectorModel model, std::span<const PhrasePair> corpus, const TrainConfig& cfg,
                  const StepCallback& on_step) {
  validate(cfg);
  TrainResult result{std::move(model), {}};
  if (cfg.max_steps == 0) return result;
  if (corpus.empty()) throw InputError("training corpus is empty");

  const std::vector<Example> examples = make_examples(corpus, result.model.vocab);
  std::mt19937_64 order_rng(cfg.seed);
  std::mt19937_64 dropout_rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
  const DropoutContext dropout{result.model.hyper.dropout, &dropout_rng};

  std::vector<size_t> order(examples.size());
  std::iota(order.begin(), order.end(), size_t{0});
  size_t cursor = order.size();
  const auto batch_size = static_cast<size_t>(cfg.batch_size);

  std::vector<Example> batch;
  batch.reserve(batch_size);
  result.losses.reserve(static_cast<size_t>(cfg.max_steps));
  for (std::int64_t step = 0; step < cfg.max_steps; ++step) {
    batch.clear();
    while (batch.size() < batch_size) {
      if (cursor == order.size()) {
        std::shuffle(order.begin(), order.end(), order_rng);
        cursor = 0;
      }
      batch.push_back(examples[order[cursor++]]);
    }

    Gradients g = backward(result.model, batch, dropout);
    const double batch_loss = g.loss / static_cast<double>(batch.size());
    if (!std::isfinite(batch_loss))
      throw DivergenceError("training diverged at step " + std::to_string(step) + " (loss " +
                            std::to_string(batch_loss) + ")");

    auto grad_views = tensors(g.grads);
    for (auto& t : grad_views) t.map() /= static_cast<double>(batch.size());
    clip_global_norm(g.grads, cfg.clip_norm);

    const double lr = learning_rate(cfg, step);
    auto param_views = tensors(result.model.params);
    for (size_t i = 0; i < param_views.size(); ++i) param_views[i].map() -= lr * grad_views[i].map();

    result.losses.push_back(batch_loss);
    if (on_step) on_step(step, batch_loss, lr);
  }
  return result;
}

}  // namespace semstr::seq2seq
