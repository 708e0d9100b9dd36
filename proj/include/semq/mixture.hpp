#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "semq/core.hpp"
#include "semq/rng.hpp"

namespace semq {

/// One diagonal-covariance Gaussian component.
struct MixtureComponent {
  double weight = 1.0;
  std::vector<double> mean;
  std::vector<double> variance;  // per-dimension, >= 0 (0 collapses to the mean)
};

/// Synthetic feature source: a Gaussian mixture with per-component weights.
/// Stands in for learned feature extractors so tests can construct regimes
/// (skew, separation) on demand.
struct MixtureSpec {
  std::size_t dim = 0;
  std::size_t count = 0;
  std::uint64_t seed = 0;
  std::vector<MixtureComponent> components;

  void validate() const {
    if (dim == 0) throw ValidationError("MixtureSpec: dim must be >= 1");
    if (count == 0) throw ValidationError("MixtureSpec: count must be >= 1");
    if (components.empty()) throw ValidationError("MixtureSpec: needs at least one component");
    double wsum = 0.0;
    for (const auto& c : components) {
      if (!(c.weight > 0.0)) throw ValidationError("MixtureSpec: component weight must be > 0");
      if (c.mean.size() != dim || c.variance.size() != dim)
        throw ValidationError("MixtureSpec: component mean/variance dimension mismatch");
      for (double v : c.variance) {
        if (!(v >= 0.0)) throw ValidationError("MixtureSpec: variance must be >= 0");
      }
      if (!all_finite(c.mean) || !all_finite(c.variance))
        throw ValidationError("MixtureSpec: non-finite component parameter");
      wsum += c.weight;
    }
    if (std::abs(wsum - 1.0) > 1e-9)
      throw ValidationError("MixtureSpec: component weights must sum to 1");
  }
};

/// Draw count samples: component first (CDF walk), then one Gaussian per
/// dimension. Deterministic for a fixed seed; also returns the generating
/// component of each row for oracle-style tests.
inline std::pair<FeatureSet, std::vector<Index>> generate_mixture_labeled(const MixtureSpec& spec) {
  spec.validate();
  CounterRng rng(CounterRng::derive_key(spec.seed, "mixture"));
  std::vector<double> data;
  data.reserve(spec.count * spec.dim);
  std::vector<Index> labels(spec.count);
  for (std::size_t m = 0; m < spec.count; ++m) {
    const double u = rng.uniform01();
    std::size_t c = spec.components.size() - 1;
    double acc = 0.0;
    for (std::size_t i = 0; i < spec.components.size(); ++i) {
      acc += spec.components[i].weight;
      if (u < acc) {
        c = i;
        break;
      }
    }
    labels[m] = static_cast<Index>(c);
    const auto& comp = spec.components[c];
    for (std::size_t j = 0; j < spec.dim; ++j)
      data.push_back(comp.mean[j] + std::sqrt(comp.variance[j]) * rng.normal());
  }
  return {FeatureSet(spec.dim, std::move(data), "mixture"), std::move(labels)};
}

inline FeatureSet generate_mixture(const MixtureSpec& spec) {
  return generate_mixture_labeled(spec).first;
}

}  // namespace semq
