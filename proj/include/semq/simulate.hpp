#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "semq/analytics.hpp"
#include "semq/channel.hpp"
#include "semq/core.hpp"
#include "semq/losses.hpp"
#include "semq/quantizer.hpp"
#include "semq/rng.hpp"

namespace semq {

struct LinkSimReport {
  double mse_mean = 0.0;
  double mse_stderr = 0.0;
  double index_error_rate = 0.0;
  double analytic_pe = 0.0;
  double d_quant = 0.0;
  double d_channel = 0.0;
  double d_total = 0.0;
  double entropy_nats = 0.0;
  double entropy_bits = 0.0;
  std::uint64_t trials = 0;
  std::size_t symbols_per_trial = 0;
};

/// Monte Carlo run of the full link: quantize once, then push the index
/// stream through the channel `trials` times with independent noise.
/// Reports the empirical end-to-end MSE next to the analytic split.
inline LinkSimReport simulate_link(const FeatureSet& z, const Codebook& cb,
                                   const ChannelSpec& channel, std::uint64_t trials,
                                   std::uint64_t seed) {
  if (trials == 0) throw ValidationError("trials must be positive");
  if (z.dim() != cb.dim()) throw ValidationError("feature/codebook dimension mismatch");
  if (channel.labeling().size() != cb.size())
    throw ValidationError("bit labeling sized for a different codebook");

  const std::size_t m_count = z.size();
  const IndexSequence sent = quantize_batch(z, cb);
  const UsageStats stats = usage_frequencies(sent, cb.size());

  // Quantization error per row is fixed across trials; channel errors only
  // perturb the rows whose index flipped, so each trial starts from the
  // clean-sum and applies per-row corrections.
  std::vector<double> q_err(m_count);
  double clean_sum = 0.0;
  for (std::size_t m = 0; m < m_count; ++m) {
    q_err[m] = squared_distance(z.row(m), cb.word(sent[m]));
    clean_sum += q_err[m];
  }

  double mean_acc = 0.0;
  double sq_acc = 0.0;
  std::uint64_t flipped_symbols = 0;

  for (std::uint64_t t = 0; t < trials; ++t) {
    const std::uint64_t trial_seed = CounterRng::derive_key(seed, "trial", t);
    const IndexSequence received = transmit_indices(sent, channel, trial_seed);
    double sum = clean_sum;
    for (std::size_t m = 0; m < m_count; ++m) {
      if (received[m] != sent[m]) {
        sum += squared_distance(z.row(m), cb.word(received[m])) - q_err[m];
        ++flipped_symbols;
      }
    }
    const double trial_mse = sum / static_cast<double>(m_count);
    mean_acc += trial_mse;
    sq_acc += trial_mse * trial_mse;
  }

  LinkSimReport rep;
  rep.trials = trials;
  rep.symbols_per_trial = m_count;
  rep.mse_mean = mean_acc / static_cast<double>(trials);
  if (trials > 1) {
    const double var =
        (sq_acc - mean_acc * mean_acc / static_cast<double>(trials)) /
        static_cast<double>(trials - 1);
    rep.mse_stderr = std::sqrt(std::max(0.0, var) / static_cast<double>(trials));
  }
  rep.index_error_rate =
      static_cast<double>(flipped_symbols) /
      (static_cast<double>(trials) * static_cast<double>(m_count));

  const std::size_t bits = bits_per_index(cb.size());
  double pe = 0.0;
  for (const auto& wp : channel.effective_p_set())
    pe += wp.weight * index_error_probability(bits, wp.p);
  rep.analytic_pe = pe;
  rep.d_quant = quantization_loss(z, cb);
  rep.d_channel = channel_loss(cb, stats, channel);
  rep.d_total = rep.d_quant + rep.d_channel;
  rep.entropy_nats = empirical_entropy(stats);
  rep.entropy_bits = nats_to_bits(rep.entropy_nats);
  return rep;
}

}  // namespace semq
