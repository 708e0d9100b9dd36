#pragma once

#include <algorithm>
#include <cstdint>
#include <optional>
#include <vector>

#include "semq/core.hpp"
#include "semq/losses.hpp"
#include "semq/quantizer.hpp"
#include "semq/rng.hpp"

namespace semq {

enum class InitScheme { kmeans_pp, random_sample };

/// Codeword update rule. sgd: fixed-step gradient descent on the full
/// objective. lloyd: exact centroid updates, the gamma = omega = 0 sanity
/// mode with guaranteed non-increasing quantization loss.
enum class UpdateRule { sgd, lloyd };

struct TrainConfig {
  std::size_t epochs = 100;
  double step_size = 0.05;
  std::size_t batch_size = 0;  // 0 = full batch
  double temperature = 1.0;    // soft-assignment temperature for the entropy gradient
  std::uint64_t seed = 1;
  // usage fraction below which a codeword is re-seeded; default 1/(4K)
  std::optional<double> dead_threshold;
  InitScheme init = InitScheme::kmeans_pp;
  UpdateRule update = UpdateRule::sgd;

  void validate() const {
    if (epochs == 0) throw ValidationError("TrainConfig: epochs must be >= 1");
    if (!(step_size > 0.0)) throw ValidationError("TrainConfig: step_size must be > 0");
    if (!(temperature > 0.0)) throw ValidationError("TrainConfig: temperature must be > 0");
    if (dead_threshold && !(*dead_threshold >= 0.0 && *dead_threshold < 1.0))
      throw ValidationError("TrainConfig: dead_threshold must be in [0, 1)");
  }
};

struct EpochRecord {
  double quantization_loss = 0.0;
  double entropy_nats = 0.0;
  double channel_loss = 0.0;
  double total_loss = 0.0;
  std::size_t dead_resets = 0;
};

struct TrainReport {
  std::vector<EpochRecord> epochs;
};

namespace detail {

inline std::vector<double> kmeans_pp_init(const FeatureSet& z, Index k, CounterRng& rng) {
  const std::size_t n = z.dim();
  std::vector<double> words;
  words.reserve(std::size_t{k} * n);
  const auto first = z.row(rng.uniform_index(z.size()));
  words.insert(words.end(), first.begin(), first.end());
  std::vector<double> dist(z.size());
  for (std::size_t m = 0; m < z.size(); ++m)
    dist[m] = squared_distance(z.row(m), {words.data(), n});
  for (Index c = 1; c < k; ++c) {
    double total = 0.0;
    for (double d : dist) total += d;
    std::size_t chosen;
    if (total <= 0.0) {
      chosen = rng.uniform_index(z.size());
    } else {
      const double target = rng.uniform01() * total;
      double acc = 0.0;
      chosen = z.size() - 1;
      for (std::size_t m = 0; m < z.size(); ++m) {
        acc += dist[m];
        if (acc > target) {
          chosen = m;
          break;
        }
      }
    }
    const auto row = z.row(chosen);
    words.insert(words.end(), row.begin(), row.end());
    for (std::size_t m = 0; m < z.size(); ++m)
      dist[m] = std::min(dist[m], squared_distance(z.row(m), row));
  }
  return words;
}

inline std::vector<double> random_sample_init(const FeatureSet& z, Index k, CounterRng& rng) {
  std::vector<std::size_t> order(z.size());
  for (std::size_t m = 0; m < z.size(); ++m) order[m] = m;
  for (Index i = 0; i < k; ++i) {
    const auto j = i + rng.uniform_index(z.size() - i);
    std::swap(order[i], order[j]);
  }
  std::vector<double> words;
  words.reserve(std::size_t{k} * z.dim());
  for (Index i = 0; i < k; ++i) {
    const auto row = z.row(order[i]);
    words.insert(words.end(), row.begin(), row.end());
  }
  return words;
}

}  // namespace detail

/// Train a codebook of size k on the given features. Alternates hard
/// assignment, a codeword update (gradient step or Lloyd centroid), and a
/// dead-codeword reset that re-seeds starved codewords to random data rows.
/// Deterministic for a fixed seed and config.
///
/// In Lloyd mode only codewords with exactly zero usage are re-seeded (moving
/// an unused codeword cannot increase the loss, so monotonicity is kept);
/// the dead_threshold fraction applies to gradient mode. Lloyd mode always
/// runs full-batch.
inline std::pair<Codebook, TrainReport> train_codebook(const FeatureSet& z, Index k,
                                                       const LossWeights& weights,
                                                       const ChannelSpec& ch,
                                                       const TrainConfig& config) {
  config.validate();
  weights.validate();
  if (k < 2) throw ValidationError("train_codebook: K must be >= 2");
  if (z.size() < k)
    throw ValidationError("train_codebook: need at least K rows to seed distinct codewords");

  const std::size_t n = z.dim();
  const double threshold =
      config.dead_threshold ? *config.dead_threshold : 1.0 / (4.0 * static_cast<double>(k));

  CounterRng init_rng(CounterRng::derive_key(config.seed, "train-init"));
  std::vector<double> words = config.init == InitScheme::kmeans_pp
                                  ? detail::kmeans_pp_init(z, k, init_rng)
                                  : detail::random_sample_init(z, k, init_rng);

  const bool lloyd = config.update == UpdateRule::lloyd;
  TrainReport report;
  report.epochs.reserve(config.epochs);

  std::vector<std::size_t> order(z.size());
  for (std::size_t m = 0; m < z.size(); ++m) order[m] = m;

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    if (lloyd) {
      const Codebook cb(n, words);
      const IndexSequence s = quantize_batch(z, cb);
      std::vector<double> sums(std::size_t{k} * n, 0.0);
      std::vector<std::uint64_t> counts(k, 0);
      for (std::size_t m = 0; m < z.size(); ++m) {
        const auto row = z.row(m);
        double* dst = sums.data() + std::size_t{s[m]} * n;
        for (std::size_t j = 0; j < n; ++j) dst[j] += row[j];
        ++counts[s[m]];
      }
      for (Index c = 0; c < k; ++c) {
        if (counts[c] == 0) continue;  // empty cluster: keep the word, reset below
        double* dst = words.data() + std::size_t{c} * n;
        for (std::size_t j = 0; j < n; ++j)
          dst[j] = sums[std::size_t{c} * n + j] / static_cast<double>(counts[c]);
      }
    } else if (config.batch_size == 0 || config.batch_size >= z.size()) {
      const Codebook cb(n, words);
      const std::vector<double> grad = codeword_gradients(z, cb, weights, ch, config.temperature);
      for (std::size_t i = 0; i < words.size(); ++i) words[i] -= config.step_size * grad[i];
    } else {
      CounterRng shuffle_rng(CounterRng::derive_key(config.seed, "train-shuffle", epoch));
      for (std::size_t i = 0; i + 1 < order.size(); ++i) {
        const auto j = i + shuffle_rng.uniform_index(order.size() - i);
        std::swap(order[i], order[j]);
      }
      for (std::size_t start = 0; start < z.size(); start += config.batch_size) {
        const std::size_t stop = std::min(start + config.batch_size, z.size());
        std::vector<double> batch;
        batch.reserve((stop - start) * n);
        for (std::size_t i = start; i < stop; ++i) {
          const auto row = z.row(order[i]);
          batch.insert(batch.end(), row.begin(), row.end());
        }
        const FeatureSet bz(n, std::move(batch));
        const Codebook cb(n, words);
        const std::vector<double> grad =
            codeword_gradients(bz, cb, weights, ch, config.temperature);
        for (std::size_t i = 0; i < words.size(); ++i) words[i] -= config.step_size * grad[i];
      }
    }

    // dead-codeword reset against full-data usage after the update
    std::size_t resets = 0;
    {
      const Codebook cb(n, words);
      const UsageStats stats = usage_frequencies(quantize_batch(z, cb), k);
      CounterRng reset_rng(CounterRng::derive_key(config.seed, "train-reset", epoch));
      for (Index c = 0; c < k; ++c) {
        const bool dead = lloyd ? stats.counts[c] == 0 : stats.frequencies[c] < threshold;
        if (!dead) continue;
        const auto row = z.row(reset_rng.uniform_index(z.size()));
        std::copy(row.begin(), row.end(), words.begin() + std::size_t{c} * n);
        ++resets;
      }
    }

    const Codebook cb(n, words);
    const IndexSequence s = quantize_batch(z, cb);
    const UsageStats stats = usage_frequencies(s, k);
    EpochRecord rec;
    rec.dead_resets = resets;
    double q = 0.0;
    for (std::size_t m = 0; m < z.size(); ++m)
      q += squared_distance(z.row(m), cb.word(s[m]));
    rec.quantization_loss = q / static_cast<double>(z.size());
    rec.entropy_nats = empirical_entropy(stats);
    rec.channel_loss = weights.omega > 0.0 ? channel_loss(cb, stats, ch) : 0.0;
    rec.total_loss = rec.quantization_loss + weights.omega * rec.channel_loss -
                     weights.gamma * rec.entropy_nats;
    report.epochs.push_back(rec);
  }

  return {Codebook(n, std::move(words)), std::move(report)};
}

}  // namespace semq
