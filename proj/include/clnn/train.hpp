#pragma once

#include <chrono>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "clnn/adam.hpp"
#include "clnn/corpus.hpp"
#include "clnn/model.hpp"

namespace clnn {

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double mean_loss = 0.0;
  double seconds = 0.0;
};

struct TrainingTrace {
  double initial_loss = 0.0;  // eval-mode loss before any update
  std::vector<EpochRecord> epochs;
  std::string config_hash;
  std::size_t best_epoch = 0;

  friend void to_json(nlohmann::json& j, const TrainingTrace& t) {
    auto rows = nlohmann::json::array();
    for (const auto& e : t.epochs) rows.push_back({{"epoch", e.epoch}, {"mean_loss", e.mean_loss}, {"seconds", e.seconds}});
    j = {{"initial_loss", t.initial_loss}, {"epochs", rows}, {"config_hash", t.config_hash}, {"best_epoch", t.best_epoch}};
  }
};

/// Token-weighted mean loss over the examples with dropout disabled.
template <class T>
double corpus_loss(CLNNModel<T>& m, const std::vector<SentenceExample>& examples) {
  std::mt19937_64 rng(0);
  double total = 0.0;
  std::size_t count = 0;
  for (const auto& b : make_batches(examples, m.config.batch_size, m.config.max_len, 0)) {
    const auto n = b.valid_count();
    total += batch_loss(m, b, false, rng, false) * static_cast<double>(n);
    count += n;
  }
  return total / static_cast<double>(count);
}

/// Adam over shuffled mini-batches; epoch e reshuffles with seed + e. Dropout
/// draws come from one stream seeded from config.seed, so a run is
/// reproducible bit for bit.
template <class T>
TrainingTrace train(CLNNModel<T>& m, const std::vector<SentenceExample>& examples,
                    const std::function<void(const EpochRecord&)>& on_epoch = {}) {
  if (examples.empty()) throw ConfigError("training corpus is empty");
  m.config.validate();
  for (const auto& ex : examples)
    for (auto id : ex.labels)
      if (id >= m.vocab_size) throw ShapeError("label id outside the model vocabulary");

  TrainingTrace trace;
  trace.config_hash = m.config.hash();
  trace.initial_loss = corpus_loss(m, examples);
  AdamState<T> adam;
  auto params = m.params();
  std::mt19937_64 dropout_rng(m.config.seed ^ 0x9e3779b97f4a7c15ULL);
  double best = std::numeric_limits<double>::infinity();

  for (std::size_t epoch = 1; epoch <= m.config.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    double total = 0.0;
    std::size_t count = 0;
    for (const auto& batch : make_batches(examples, m.config.batch_size, m.config.max_len, m.config.seed + epoch)) {
      m.zero_grad();
      const double loss = batch_loss(m, batch, true, dropout_rng, true);
      if (!std::isfinite(loss))
        throw NumericError("non-finite loss at epoch " + std::to_string(epoch));
      adam_step(params, adam, m.config.lr);
      const auto n = batch.valid_count();
      total += loss * static_cast<double>(n);
      count += n;
    }
    EpochRecord rec{epoch, total / static_cast<double>(count),
                    std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count()};
    if (rec.mean_loss < best) best = rec.mean_loss, trace.best_epoch = epoch;
    trace.epochs.push_back(rec);
    if (on_epoch) on_epoch(rec);
  }
  return trace;
}

}  // namespace clnn
