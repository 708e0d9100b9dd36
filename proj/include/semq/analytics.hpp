#pragma once

#include <cmath>
#include <future>
#include <span>
#include <vector>

#include "semq/channel.hpp"
#include "semq/core.hpp"
#include "semq/losses.hpp"
#include "semq/quantizer.hpp"
#include "semq/train.hpp"

namespace semq {

/// Closed-form distortion decomposition of one (codebook, flip probability)
/// operating point. d_total = d_quant + d_channel by construction.
struct DistortionReport {
  double d_quant = 0.0;
  double d_channel = 0.0;
  double d_total = 0.0;
  double p = 0.0;
  Index k = 0;
  double bit_rate = 0.0;  // M * log2(K), real-valued
};

/// Expected squared codeword jump under the uniform confusion model:
/// P_e(p, L(K)) * sum_k pi_k * mean_pairwise_sq(k).
inline double channel_distortion(const Codebook& cb, const UsageStats& stats, double p) {
  if (!(p >= 0.0 && p <= 0.5)) throw ValidationError("channel_distortion: p out of range");
  if (stats.frequencies.size() != cb.size())
    throw ValidationError("channel_distortion: usage stats size mismatch");
  const double pe = index_error_probability(bits_per_index(cb.size()), p);
  if (pe == 0.0) return 0.0;
  double spread = 0.0;
  for (Index k = 0; k < cb.size(); ++k)
    spread += stats.frequencies[k] * mean_pairwise_sq(cb, k);
  return pe * spread;
}

/// Real-valued information rate of M indices drawn from K symbols.
inline double bit_rate(Index k, std::size_t m) {
  if (k < 2) throw ValidationError("bit_rate: K must be >= 2");
  if (m < 1) throw ValidationError("bit_rate: M must be >= 1");
  return static_cast<double>(m) * std::log2(static_cast<double>(k));
}

/// Bits actually put on the wire: M * ceil(log2 K).
inline double payload_bit_rate(Index k, std::size_t m) {
  if (m < 1) throw ValidationError("payload_bit_rate: M must be >= 1");
  return static_cast<double>(m) * static_cast<double>(bits_per_index(k));
}

/// Quantization distortion plus channel-induced distortion of transmitting
/// these features through this codebook at flip probability p. Frequencies
/// are taken from the evaluation set itself.
inline DistortionReport total_semantic_distortion(const FeatureSet& z, const Codebook& cb,
                                                  double p) {
  const IndexSequence s = quantize_batch(z, cb);
  const UsageStats stats = usage_frequencies(s, cb.size());
  DistortionReport rep;
  rep.k = cb.size();
  rep.p = p;
  double q = 0.0;
  for (std::size_t m = 0; m < z.size(); ++m)
    q += squared_distance(z.row(m), cb.word(s[m]));
  rep.d_quant = q / static_cast<double>(z.size());
  rep.d_channel = channel_distortion(cb, stats, p);
  rep.d_total = rep.d_quant + rep.d_channel;
  rep.bit_rate = bit_rate(cb.size(), z.size());
  return rep;
}

struct SweepRow {
  Index k = 0;
  double d_quant = 0.0;
  double d_channel = 0.0;
  double d_total = 0.0;
  double rate_real = 0.0;
  double rate_payload = 0.0;
  double objective = 0.0;  // d_total + lambda * rate_real
};

struct SweepResult {
  std::vector<SweepRow> rows;          // sorted by K ascending
  std::vector<Codebook> codebooks;     // trained codebook per row
  std::vector<TrainReport> reports;    // training report per row
  Index chosen_k = 0;                  // argmin objective, smallest K on ties
};

/// Codebook-size selection: train one codebook per candidate K on the same
/// data (seeds derived per K), evaluate D_S(K, p) + lambda * M log2 K, and
/// pick the minimizer. Legs run concurrently; each leg's randomness is an
/// isolated stream, so the result is independent of scheduling.
inline SweepResult optimal_codebook_size(const FeatureSet& z, std::span<const Index> candidates,
                                         double p, double lambda, const LossWeights& weights,
                                         const TrainConfig& base_config) {
  if (candidates.empty()) throw ValidationError("optimal_codebook_size: no candidate sizes");
  std::vector<Index> ks(candidates.begin(), candidates.end());
  std::sort(ks.begin(), ks.end());
  for (std::size_t i = 0; i + 1 < ks.size(); ++i) {
    if (ks[i] == ks[i + 1])
      throw ValidationError("optimal_codebook_size: duplicate candidate K");
  }
  for (Index k : ks) {
    if (k < 2) throw ValidationError("optimal_codebook_size: candidate K must be >= 2");
    if (k > z.size())
      throw ValidationError("optimal_codebook_size: candidate K exceeds sample count");
  }
  if (!(p >= 0.0 && p <= 0.5)) throw ValidationError("optimal_codebook_size: p out of range");
  if (!(lambda >= 0.0)) throw ValidationError("optimal_codebook_size: lambda must be >= 0");

  auto run_leg = [&](Index k) {
    TrainConfig cfg = base_config;
    cfg.seed = CounterRng::derive_key(base_config.seed, "sweep-leg", k);
    const ChannelSpec ch(p, ConfusionModel::uniform_approx, BitLabeling::natural(k));
    return train_codebook(z, k, weights, ch, cfg);
  };

  std::vector<std::future<std::pair<Codebook, TrainReport>>> legs;
  legs.reserve(ks.size());
  for (Index k : ks)
    legs.push_back(std::async(std::launch::async, run_leg, k));

  SweepResult result;
  result.rows.reserve(ks.size());
  for (std::size_t i = 0; i < ks.size(); ++i) {
    auto [cb, rep] = legs[i].get();
    const DistortionReport d = total_semantic_distortion(z, cb, p);
    SweepRow row;
    row.k = ks[i];
    row.d_quant = d.d_quant;
    row.d_channel = d.d_channel;
    row.d_total = d.d_total;
    row.rate_real = bit_rate(ks[i], z.size());
    row.rate_payload = payload_bit_rate(ks[i], z.size());
    row.objective = row.d_total + lambda * row.rate_real;
    result.rows.push_back(row);
    result.codebooks.push_back(std::move(cb));
    result.reports.push_back(std::move(rep));
  }
  result.chosen_k = result.rows.front().k;
  double best = result.rows.front().objective;
  for (const SweepRow& row : result.rows) {
    if (row.objective < best) {
      best = row.objective;
      result.chosen_k = row.k;
    }
  }
  return result;
}

}  // namespace semq
