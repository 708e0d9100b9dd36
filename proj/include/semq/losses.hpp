#pragma once

#include <cmath>
#include <limits>
#include <span>
#include <vector>

#include "semq/channel.hpp"
#include "semq/core.hpp"
#include "semq/quantizer.hpp"

namespace semq {

/// Trade-off weights of the codebook objective: gamma scales the index-entropy
/// bonus, omega scales the channel-aware distortion penalty.
struct LossWeights {
  double gamma = 0.1;
  double omega = 0.1;

  void validate() const {
    if (!(gamma >= 0.0)) throw ValidationError("LossWeights: gamma must be >= 0");
    if (omega != 0.0 && !(omega > 0.0 && omega < 1.0))
      throw ValidationError("LossWeights: omega must be in (0,1) when the channel loss is active");
  }
};

/// Mean squared quantization error: (1/M) sum_m ||z_m - c_{q(z_m)}||^2.
/// The mean keeps gamma and omega meaningful across batch sizes.
inline double quantization_loss(const FeatureSet& z, const Codebook& cb) {
  if (z.dim() != cb.dim()) throw ValidationError("quantization_loss: dimension mismatch");
  double acc = 0.0;
  for (std::size_t m = 0; m < z.size(); ++m)
    acc += squared_distance(z.row(m), cb.word(quantize(z.row(m), cb)));
  return acc / static_cast<double>(z.size());
}

/// Quantization loss minus gamma times the index entropy (nats).
inline double regularized_loss(const FeatureSet& z, const Codebook& cb, double gamma) {
  if (!(gamma >= 0.0)) throw ValidationError("regularized_loss: gamma must be >= 0");
  const double q = quantization_loss(z, cb);
  const double h = empirical_entropy(usage_frequencies(quantize_batch(z, cb), cb.size()));
  return q - gamma * h;
}

/// Gradient of the negative entropy with respect to each frequency:
/// 1 + ln(pi_k). Zero-usage entries get -inf; gradient-based callers must go
/// through the soft-assignment path instead.
inline std::vector<double> entropy_grad_wrt_pi(const UsageStats& stats) {
  std::vector<double> g(stats.frequencies.size());
  for (std::size_t k = 0; k < g.size(); ++k) {
    g[k] = stats.frequencies[k] > 0.0 ? 1.0 + std::log(stats.frequencies[k])
                                      : -std::numeric_limits<double>::infinity();
  }
  return g;
}

/// Mean squared distance from codeword k to the other K-1 codewords.
inline double mean_pairwise_sq(const Codebook& cb, Index k) {
  if (k >= cb.size()) throw ValidationError("mean_pairwise_sq: index out of range");
  double acc = 0.0;
  for (Index l = 0; l < cb.size(); ++l) {
    if (l == k) continue;
    acc += squared_distance(cb.word(k), cb.word(l));
  }
  return acc / static_cast<double>(cb.size() - 1);
}

/// Channel-aware distortion loss: the expectation over the channel's flip
/// probabilities of P_e * sum_k pi_k * mean_pairwise_sq(k). Under the uniform
/// confusion model this is exactly the expected squared codeword jump.
inline double channel_loss(const Codebook& cb, const UsageStats& stats, const ChannelSpec& ch) {
  if (stats.frequencies.size() != cb.size())
    throw ValidationError("channel_loss: usage stats size mismatch");
  if (ch.labeling().size() != cb.size())
    throw ValidationError("channel_loss: channel labeling does not match codebook size");
  const unsigned bits = ch.labeling().bits();
  double pe = 0.0;
  for (const auto& wp : ch.effective_p_set()) pe += wp.weight * index_error_probability(bits, wp.p);
  if (pe == 0.0) return 0.0;
  double spread = 0.0;
  for (Index k = 0; k < cb.size(); ++k)
    spread += stats.frequencies[k] * mean_pairwise_sq(cb, k);
  return pe * spread;
}

/// Full codebook objective: quantization loss + omega * channel loss
/// - gamma * index entropy (nats).
inline double total_codebook_loss(const FeatureSet& z, const Codebook& cb,
                                  const LossWeights& weights, const ChannelSpec& ch) {
  weights.validate();
  const IndexSequence s = quantize_batch(z, cb);
  const UsageStats stats = usage_frequencies(s, cb.size());
  double total = 0.0;
  for (std::size_t m = 0; m < z.size(); ++m)
    total += squared_distance(z.row(m), cb.word(s[m]));
  total /= static_cast<double>(z.size());
  if (weights.omega > 0.0) total += weights.omega * channel_loss(cb, stats, ch);
  if (weights.gamma > 0.0) total -= weights.gamma * empirical_entropy(stats);
  return total;
}

/// Analytic gradient of the codebook objective with respect to every codeword,
/// row-major K x N. Hard assignments and hard frequencies are held fixed for
/// the quantization and channel terms (their dependence on cell boundaries is
/// measure-zero); the entropy term flows through soft assignments at the given
/// temperature, with 1 + ln(pi) as the upstream frequency gradient.
inline std::vector<double> codeword_gradients(const FeatureSet& z, const Codebook& cb,
                                              const LossWeights& weights, const ChannelSpec& ch,
                                              double temperature = 1.0) {
  weights.validate();
  if (z.dim() != cb.dim()) throw ValidationError("codeword_gradients: dimension mismatch");
  const Index kk = cb.size();
  const std::size_t n = cb.dim();
  const auto m_count = static_cast<double>(z.size());
  std::vector<double> grad(std::size_t{kk} * n, 0.0);

  const IndexSequence s = quantize_batch(z, cb);
  const UsageStats stats = usage_frequencies(s, kk);

  // quantization term: (2/M) sum over members of (c_k - z_m)
  for (std::size_t m = 0; m < z.size(); ++m) {
    const auto row = z.row(m);
    const auto word = cb.word(s[m]);
    double* g = grad.data() + std::size_t{s[m]} * n;
    for (std::size_t j = 0; j < n; ++j) g[j] += 2.0 / m_count * (word[j] - row[j]);
  }

  // channel term: omega * P_e * (2/(K-1)) * sum_{l != k} (pi_k + pi_l)(c_k - c_l),
  // rewritten with codeword sums so it costs O(KN) instead of O(K^2 N)
  if (weights.omega > 0.0) {
    if (ch.labeling().size() != kk)
      throw ValidationError("codeword_gradients: channel labeling does not match codebook size");
    double pe = 0.0;
    for (const auto& wp : ch.effective_p_set())
      pe += wp.weight * index_error_probability(ch.labeling().bits(), wp.p);
    if (pe > 0.0) {
      std::vector<double> sum_c(n, 0.0), sum_pic(n, 0.0);
      for (Index k = 0; k < kk; ++k) {
        const auto w = cb.word(k);
        for (std::size_t j = 0; j < n; ++j) {
          sum_c[j] += w[j];
          sum_pic[j] += stats.frequencies[k] * w[j];
        }
      }
      const double scale = weights.omega * pe * 2.0 / static_cast<double>(kk - 1);
      for (Index k = 0; k < kk; ++k) {
        const auto w = cb.word(k);
        const double pik = stats.frequencies[k];
        double* g = grad.data() + std::size_t{k} * n;
        for (std::size_t j = 0; j < n; ++j) {
          const double sum_other = sum_c[j] - w[j];
          const double sum_pic_other = sum_pic[j] - pik * w[j];
          g[j] += scale * ((static_cast<double>(kk - 1) * pik + 1.0 - pik) * w[j] -
                           pik * sum_other - sum_pic_other);
        }
      }
    }
  }

  // entropy term through soft assignments:
  // d(-gamma H)/dc_k = gamma * (2/(M tau)) sum_m a_mk ((1+ln pi_k) - b_m)(z_m - c_k)
  // with b_m = sum_j a_mj (1+ln pi_j) and pi the soft frequencies.
  if (weights.gamma > 0.0) {
    if (!(temperature > 0.0))
      throw ValidationError("codeword_gradients: temperature must be > 0");
    const std::vector<double> soft_pi = soft_usage_frequencies(z, cb, temperature);
    std::vector<double> up(kk);
    for (Index k = 0; k < kk; ++k) up[k] = 1.0 + std::log(soft_pi[k]);
    std::vector<double> a(kk);
    for (std::size_t m = 0; m < z.size(); ++m) {
      const auto row = z.row(m);
      double max_logit = -std::numeric_limits<double>::infinity();
      for (Index k = 0; k < kk; ++k) {
        a[k] = -squared_distance(row, cb.word(k)) / temperature;
        max_logit = std::max(max_logit, a[k]);
      }
      double denom = 0.0;
      for (Index k = 0; k < kk; ++k) {
        a[k] = std::exp(a[k] - max_logit);
        denom += a[k];
      }
      double b = 0.0;
      for (Index k = 0; k < kk; ++k) {
        a[k] /= denom;
        b += a[k] * up[k];
      }
      const double prefix = weights.gamma * 2.0 / (m_count * temperature);
      for (Index k = 0; k < kk; ++k) {
        const double coeff = prefix * a[k] * (up[k] - b);
        if (coeff == 0.0) continue;
        const auto word = cb.word(k);
        double* g = grad.data() + std::size_t{k} * n;
        for (std::size_t j = 0; j < n; ++j) g[j] += coeff * (row[j] - word[j]);
      }
    }
  }

  for (double g : grad) {
    if (!std::isfinite(g)) throw ValidationError("codeword_gradients: non-finite gradient");
  }
  return grad;
}

}  // namespace semq
