#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "semq/core.hpp"
#include "semq/rng.hpp"

namespace semq {

/// Bits needed to address K indices: smallest L with 2^L >= K.
inline unsigned bits_per_index(Index k) {
  if (k < 2) throw ValidationError("bits_per_index: K must be >= 2");
  return static_cast<unsigned>(std::bit_width(std::uint32_t{k} - 1));
}

enum class LabelScheme { natural_binary, random_permutation };

/// Injective map from indices [0, K) to L-bit patterns, plus the decode table
/// for all 2^L received patterns. When K < 2^L, a received pattern that is not
/// a valid label decodes to the valid index at minimum Hamming distance,
/// smallest index on ties.
class BitLabeling {
public:
  static constexpr unsigned kMaxBits = 20;

  static BitLabeling natural(Index k) {
    BitLabeling lab(k, LabelScheme::natural_binary);
    for (Index i = 0; i < k; ++i) lab.labels_[i] = i;
    lab.build_decode_table();
    return lab;
  }

  static BitLabeling random_perm(Index k, std::uint64_t seed) {
    BitLabeling lab(k, LabelScheme::random_permutation);
    const std::uint32_t patterns = 1u << lab.bits_;
    std::vector<std::uint32_t> pool(patterns);
    for (std::uint32_t i = 0; i < patterns; ++i) pool[i] = i;
    CounterRng rng(CounterRng::derive_key(seed, "bit-labeling"));
    // partial Fisher-Yates: only the first K slots are needed
    for (Index i = 0; i < k; ++i) {
      const auto j = i + rng.uniform_index(patterns - i);
      std::swap(pool[i], pool[j]);
      lab.labels_[i] = pool[i];
    }
    lab.build_decode_table();
    return lab;
  }

  Index size() const { return k_; }
  unsigned bits() const { return bits_; }
  LabelScheme scheme() const { return scheme_; }
  std::uint32_t pattern(Index k) const { return labels_[k]; }
  Index decode(std::uint32_t pattern) const { return decode_[pattern]; }

private:
  BitLabeling(Index k, LabelScheme scheme)
      : k_(k), bits_(bits_per_index(k)), scheme_(scheme), labels_(k) {
    if (bits_ > kMaxBits) throw ValidationError("BitLabeling: codebook too large for bit tables");
  }

  void build_decode_table() {
    const std::uint32_t patterns = 1u << bits_;
    decode_.assign(patterns, 0);
    if (k_ == patterns) {
      for (Index i = 0; i < k_; ++i) decode_[labels_[i]] = i;
      return;
    }
    for (std::uint32_t r = 0; r < patterns; ++r) {
      unsigned best = bits_ + 1;
      Index best_k = 0;
      for (Index i = 0; i < k_; ++i) {
        const unsigned d = static_cast<unsigned>(std::popcount(r ^ labels_[i]));
        if (d < best) {
          best = d;
          best_k = i;
        }
      }
      decode_[r] = best_k;
    }
  }

  Index k_;
  unsigned bits_;
  LabelScheme scheme_;
  std::vector<std::uint32_t> labels_;
  std::vector<Index> decode_;
};

/// How index confusion is modeled. uniform_approx: an index error lands
/// uniformly on the other K-1 indices, the random-labeling abstraction.
/// exact_bsc: per-bit flips through the concrete labeling.
enum class ConfusionModel { uniform_approx, exact_bsc };

struct WeightedFlipProbability {
  double p = 0.0;
  double weight = 1.0;
};

/// Memoryless binary symmetric channel acting on index bits.
/// flip_probability is the per-bit error rate, capped at 0.5 (a BSC beyond
/// 0.5 is the same channel with relabeled outputs). An optional weighted set
/// of flip probabilities drives the outer expectation of the channel-aware
/// training loss; when absent the single operating point is used.
class ChannelSpec {
public:
  ChannelSpec(double flip_probability, ConfusionModel model, BitLabeling labeling,
              std::optional<std::vector<WeightedFlipProbability>> p_set = std::nullopt)
      : p_(flip_probability),
        model_(model),
        labeling_(std::move(labeling)),
        p_set_(std::move(p_set)) {
    check_p(p_);
    if (p_set_) {
      if (p_set_->empty()) throw ValidationError("ChannelSpec: empty flip-probability set");
      double wsum = 0.0;
      for (const auto& wp : *p_set_) {
        check_p(wp.p);
        if (wp.weight < 0.0) throw ValidationError("ChannelSpec: negative weight");
        wsum += wp.weight;
      }
      if (std::abs(wsum - 1.0) > 1e-9)
        throw ValidationError("ChannelSpec: flip-probability weights must sum to 1");
    }
  }

  double flip_probability() const { return p_; }
  ConfusionModel model() const { return model_; }
  const BitLabeling& labeling() const { return labeling_; }

  std::vector<WeightedFlipProbability> effective_p_set() const {
    if (p_set_) return *p_set_;
    return {{p_, 1.0}};
  }

private:
  static void check_p(double p) {
    if (!(p >= 0.0 && p <= 0.5))
      throw ValidationError("ChannelSpec: flip probability must be in [0, 0.5]");
  }

  double p_;
  ConfusionModel model_;
  BitLabeling labeling_;
  std::optional<std::vector<WeightedFlipProbability>> p_set_;
};

/// P(exactly w of L bits flip) = C(L,w) p^w (1-p)^(L-w).
inline double error_weight_pmf(unsigned l, double p, unsigned w) {
  if (w > l) throw ValidationError("error_weight_pmf: weight exceeds bit length");
  if (!(p >= 0.0 && p <= 0.5)) throw ValidationError("error_weight_pmf: p out of range");
  double binom = 1.0;
  for (unsigned i = 0; i < w; ++i)
    binom = binom * static_cast<double>(l - i) / static_cast<double>(i + 1);
  return binom * std::pow(p, static_cast<double>(w)) *
         std::pow(1.0 - p, static_cast<double>(l - w));
}

/// Probability that at least one of the L index bits flips: 1 - (1-p)^L.
inline double index_error_probability(unsigned l, double p) {
  return 1.0 - std::pow(1.0 - p, static_cast<double>(l));
}

/// P(received index = l | sent index = k) under the channel's confusion model.
inline double confusion_probability(Index k, Index l, const ChannelSpec& ch) {
  const Index n = ch.labeling().size();
  if (k >= n || l >= n) throw ValidationError("confusion_probability: index out of range");
  const unsigned bits = ch.labeling().bits();
  const double p = ch.flip_probability();
  if (ch.model() == ConfusionModel::uniform_approx) {
    const double pe = index_error_probability(bits, p);
    return l == k ? 1.0 - pe : pe / static_cast<double>(n - 1);
  }
  // exact BSC: sum the probability of every received pattern decoding to l
  const std::uint32_t sent = ch.labeling().pattern(k);
  const std::uint32_t patterns = 1u << bits;
  double total = 0.0;
  for (std::uint32_t r = 0; r < patterns; ++r) {
    if (ch.labeling().decode(r) != l) continue;
    const unsigned d = static_cast<unsigned>(std::popcount(sent ^ r));
    total += std::pow(p, static_cast<double>(d)) *
             std::pow(1.0 - p, static_cast<double>(bits - d));
  }
  return total;
}

/// Full K x K confusion matrix, row-major; each row sums to 1.
inline std::vector<double> confusion_matrix(const ChannelSpec& ch) {
  const Index n = ch.labeling().size();
  std::vector<double> mat(std::size_t{n} * n);
  for (Index k = 0; k < n; ++k)
    for (Index l = 0; l < n; ++l) mat[std::size_t{k} * n + l] = confusion_probability(k, l, ch);
  return mat;
}

/// Push an index sequence through the channel once. Each symbol position gets
/// its own counter-based stream keyed by (seed, position), so the result is
/// reproducible and independent of any parallel split.
///
/// exact_bsc: label -> per-bit flips -> decode (min-Hamming for invalid
/// patterns). uniform_approx: the bit flips decide whether the index errors;
/// an erroneous index lands uniformly on one of the other K-1, realizing the
/// random-labeling confusion model directly.
inline IndexSequence transmit_indices(const IndexSequence& s, const ChannelSpec& ch,
                                      std::uint64_t seed) {
  if (s.codebook_size() > ch.labeling().size())
    throw ValidationError("transmit_indices: sequence indices exceed labeling size");
  const unsigned bits = ch.labeling().bits();
  const double p = ch.flip_probability();
  const Index n = ch.labeling().size();
  std::vector<Index> out(s.size());
  for (std::size_t m = 0; m < s.size(); ++m) {
    CounterRng rng(CounterRng::derive_key(seed, "bsc-symbol", m));
    if (ch.model() == ConfusionModel::exact_bsc) {
      std::uint32_t pattern = ch.labeling().pattern(s[m]);
      for (unsigned b = 0; b < bits; ++b) {
        if (rng.bernoulli(p)) pattern ^= (1u << b);
      }
      out[m] = ch.labeling().decode(pattern);
    } else {
      bool flipped = false;
      for (unsigned b = 0; b < bits; ++b) flipped |= rng.bernoulli(p);
      if (!flipped) {
        out[m] = s[m];
      } else {
        const auto r = static_cast<Index>(rng.uniform_index(n - 1));
        out[m] = r >= s[m] ? r + 1 : r;
      }
    }
  }
  return IndexSequence(std::move(out), n);
}

enum class Fading { awgn, rayleigh };

/// Operating point given as SNR instead of a raw flip probability.
/// snr_db is the symbol SNR Es/N0 in dB.
struct SnrSpec {
  double snr_db = 10.0;
  unsigned modulation_order = 64;  // square QAM: 4, 16, 64, 256
  Fading fading = Fading::awgn;
};

namespace detail {

/// Exact BER of Gray-coded square M-QAM over AWGN (Cho & Yoon closed form),
/// as a sum of weighted erfc terms. erfc_avg lets the caller substitute the
/// Rayleigh-averaged erfc, which turns the same sum into the average BER over
/// an exponentially distributed instantaneous SNR.
template <typename ErfcFn>
double gray_qam_ber(unsigned m, double es_n0, ErfcFn&& erfc_term) {
  const auto sqrt_m = static_cast<unsigned>(std::lround(std::sqrt(static_cast<double>(m))));
  if (sqrt_m * sqrt_m != m || m < 4) throw ValidationError("gray_qam_ber: not a square QAM order");
  const unsigned q = static_cast<unsigned>(std::bit_width(sqrt_m)) - 1;  // log2(sqrt(M))
  const double c = 3.0 * es_n0 / (2.0 * static_cast<double>(m - 1));
  double total = 0.0;
  for (unsigned k = 1; k <= q; ++k) {
    const unsigned upper = ((1u << k) - 1) * sqrt_m / (1u << k);  // (1 - 2^-k) sqrt(M)
    for (unsigned i = 0; i < upper; ++i) {
      const unsigned shifted = i * (1u << (k - 1));
      const double sign = (shifted / sqrt_m) % 2 == 0 ? 1.0 : -1.0;
      const auto weight = static_cast<double>((1u << (k - 1)) - (2 * shifted + sqrt_m) / (2 * sqrt_m));
      const double u = static_cast<double>(2 * i + 1) * static_cast<double>(2 * i + 1) * c;
      total += sign * weight * erfc_term(u);
    }
  }
  return total / (static_cast<double>(q) * static_cast<double>(sqrt_m));
}

}  // namespace detail

/// Gray-coded square M-QAM bit error rate over AWGN at symbol SNR Es/N0.
inline double qam_ber_awgn(unsigned m, double es_n0_linear) {
  return detail::gray_qam_ber(m, es_n0_linear,
                              [](double u) { return std::erfc(std::sqrt(u)); });
}

/// Average BER over Rayleigh fading with mean symbol SNR Es/N0: each erfc
/// term is replaced by its exponential average, E[erfc(sqrt(u g))] =
/// 1 - sqrt(u gbar / (1 + u gbar)) for g ~ Exp(mean gbar).
inline double qam_ber_rayleigh(unsigned m, double mean_es_n0_linear) {
  return detail::gray_qam_ber(m, mean_es_n0_linear, [](double u) {
    return 1.0 - std::sqrt(u / (1.0 + u));
  });
}

/// Map an SNR operating point to the BSC flip probability, clamped to
/// [0, 0.5]. Monotone nonincreasing in snr_db.
inline double snr_to_flip_probability(const SnrSpec& spec) {
  const unsigned m = spec.modulation_order;
  if (m != 4 && m != 16 && m != 64 && m != 256)
    throw ValidationError("snr_to_flip_probability: unsupported modulation order");
  const double es_n0 = std::pow(10.0, spec.snr_db / 10.0);
  const double ber =
      spec.fading == Fading::awgn ? qam_ber_awgn(m, es_n0) : qam_ber_rayleigh(m, es_n0);
  return std::clamp(ber, 0.0, 0.5);
}

}  // namespace semq
