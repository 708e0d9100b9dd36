#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <vector>

#include "semq/core.hpp"

namespace semq {

/// Nearest-codeword index by exhaustive scan over squared Euclidean distance.
/// Ties break toward the smallest index, so the result is deterministic.
inline Index quantize(std::span<const double> z, const Codebook& cb) {
  if (z.size() != cb.dim()) throw ValidationError("quantize: dimension mismatch");
  if (!all_finite(z)) throw ValidationError("quantize: non-finite input");
  double best = std::numeric_limits<double>::infinity();
  Index best_k = 0;
  for (Index k = 0; k < cb.size(); ++k) {
    const double d = squared_distance(z, cb.word(k));
    if (d < best) {
      best = d;
      best_k = k;
    }
  }
  return best_k;
}

/// Row-wise quantization, order-preserving. Rows are independent, so a
/// parallel implementation would produce the same output; this one is
/// sequential for simplicity.
inline IndexSequence quantize_batch(const FeatureSet& z, const Codebook& cb) {
  if (z.dim() != cb.dim()) throw ValidationError("quantize_batch: dimension mismatch");
  std::vector<Index> out(z.size());
  for (std::size_t m = 0; m < z.size(); ++m) out[m] = quantize(z.row(m), cb);
  return IndexSequence(std::move(out), cb.size());
}

/// Voronoi cell membership: true iff codeword k is at least as close to z as
/// every other codeword. Points on cell boundaries belong to multiple cells;
/// quantize() resolves those by its tie rule.
inline bool is_in_cell(std::span<const double> z, Index k, const Codebook& cb) {
  if (z.size() != cb.dim()) throw ValidationError("is_in_cell: dimension mismatch");
  if (k >= cb.size()) throw ValidationError("is_in_cell: index out of range");
  const double dk = squared_distance(z, cb.word(k));
  for (Index j = 0; j < cb.size(); ++j) {
    if (j == k) continue;
    if (squared_distance(z, cb.word(j)) < dk) return false;
  }
  return true;
}

/// Receiver-side lookup: row m of the result is the codeword named by index m.
inline FeatureSet reconstruct(const IndexSequence& s, const Codebook& cb) {
  if (s.codebook_size() > cb.size())
    throw ValidationError("reconstruct: index sequence refers to a larger codebook");
  std::vector<double> rows;
  rows.reserve(s.size() * cb.dim());
  for (std::size_t m = 0; m < s.size(); ++m) {
    const auto w = cb.word(s[m]);
    rows.insert(rows.end(), w.begin(), w.end());
  }
  return FeatureSet(cb.dim(), std::move(rows), "reconstructed");
}

/// Empirical index frequencies over a sequence: counts / total.
inline UsageStats usage_frequencies(const IndexSequence& s, Index k) {
  if (s.codebook_size() > k) throw ValidationError("usage_frequencies: index out of range");
  UsageStats st;
  st.counts.assign(k, 0);
  for (std::size_t m = 0; m < s.size(); ++m) ++st.counts[s[m]];
  st.total = s.size();
  st.frequencies.resize(k);
  for (Index i = 0; i < k; ++i)
    st.frequencies[i] = static_cast<double>(st.counts[i]) / static_cast<double>(st.total);
  return st;
}

/// Shannon entropy in nats of a frequency vector, with 0*ln(0) = 0.
/// Bounded by ln(K); report layers convert to bits with 1/ln(2).
inline double entropy_nats(std::span<const double> freq) {
  double h = 0.0;
  for (double f : freq) {
    if (f > 0.0) h -= f * std::log(f);
  }
  return h;
}

inline double empirical_entropy(const UsageStats& stats) {
  return entropy_nats(stats.frequencies);
}

constexpr double nats_to_bits(double nats) { return nats / 0.693147180559945309417232121458176568; }

/// Estimated mutual information between features and their quantized indices.
/// Quantization is deterministic, so this equals the index entropy.
inline double mutual_information_estimate(const FeatureSet& z, const Codebook& cb) {
  return empirical_entropy(usage_frequencies(quantize_batch(z, cb), cb.size()));
}

/// Soft assignment frequencies: softmax over negative squared distances at
/// temperature tau, averaged over rows. Strictly positive for every codeword,
/// which is what makes the entropy gradient usable when hard usage has zeros.
inline std::vector<double> soft_usage_frequencies(const FeatureSet& z, const Codebook& cb,
                                                  double tau) {
  if (z.dim() != cb.dim()) throw ValidationError("soft_usage_frequencies: dimension mismatch");
  if (!(tau > 0.0)) throw ValidationError("soft_usage_frequencies: temperature must be > 0");
  const Index k = cb.size();
  std::vector<double> acc(k, 0.0);
  std::vector<double> logits(k);
  for (std::size_t m = 0; m < z.size(); ++m) {
    double max_logit = -std::numeric_limits<double>::infinity();
    for (Index j = 0; j < k; ++j) {
      logits[j] = -squared_distance(z.row(m), cb.word(j)) / tau;
      max_logit = std::max(max_logit, logits[j]);
    }
    double denom = 0.0;
    for (Index j = 0; j < k; ++j) {
      logits[j] = std::exp(logits[j] - max_logit);
      denom += logits[j];
    }
    for (Index j = 0; j < k; ++j) acc[j] += logits[j] / denom;
  }
  for (Index j = 0; j < k; ++j) acc[j] /= static_cast<double>(z.size());
  return acc;
}

}  // namespace semq
