#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace semq {

using Index = std::uint32_t;

/// Input or configuration violates a documented precondition.
class ValidationError : public std::runtime_error {
public:
  explicit ValidationError(const std::string& what) : std::runtime_error(what) {}
};

/// File could not be read, written, or parsed.
class IoError : public std::runtime_error {
public:
  explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

inline bool all_finite(std::span<const double> xs) {
  for (double x : xs) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

/// Squared Euclidean distance, accumulated in f64 in index order.
/// Fixed order keeps results bit-identical across runs.
inline double squared_distance(std::span<const double> a, std::span<const double> b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    acc += d * d;
  }
  return acc;
}

/// M feature vectors of dimension N, row-major. Immutable after construction;
/// safe to share across threads. A single feature vector is represented as a
/// span over one row (all components finite, N >= 1).
class FeatureSet {
public:
  FeatureSet(std::size_t dim, std::vector<double> data, std::string source_tag = {})
      : dim_(dim), data_(std::move(data)), source_tag_(std::move(source_tag)) {
    if (dim_ == 0) throw ValidationError("FeatureSet: dimension must be >= 1");
    if (data_.empty() || data_.size() % dim_ != 0)
      throw ValidationError("FeatureSet: data size must be a positive multiple of dim");
    if (!all_finite(data_)) throw ValidationError("FeatureSet: non-finite component");
  }

  std::size_t size() const { return data_.size() / dim_; }
  std::size_t dim() const { return dim_; }
  const std::string& source_tag() const { return source_tag_; }

  std::span<const double> row(std::size_t m) const {
    return {data_.data() + m * dim_, dim_};
  }
  std::span<const double> data() const { return data_; }

private:
  std::size_t dim_;
  std::vector<double> data_;
  std::string source_tag_;
};

/// K codewords of dimension N, row-major. The shared knowledge base of the
/// link: both ends of a simulated transmission hold the same codebook.
/// Immutable after construction.
class Codebook {
public:
  Codebook(std::size_t dim, std::vector<double> words) : dim_(dim), words_(std::move(words)) {
    if (dim_ == 0) throw ValidationError("Codebook: dimension must be >= 1");
    if (words_.size() % dim_ != 0)
      throw ValidationError("Codebook: word data size must be a multiple of dim");
    if (words_.size() / dim_ < 2) throw ValidationError("Codebook: needs at least 2 codewords");
    if (!all_finite(words_)) throw ValidationError("Codebook: non-finite codeword component");
  }

  Index size() const { return static_cast<Index>(words_.size() / dim_); }
  std::size_t dim() const { return dim_; }

  std::span<const double> word(Index k) const { return {words_.data() + std::size_t{k} * dim_, dim_}; }
  std::span<const double> data() const { return words_; }

private:
  std::size_t dim_;
  std::vector<double> words_;
};

/// The discrete transmission payload: M indices, each in [0, K).
/// Indices are 0-based everywhere, including on disk.
class IndexSequence {
public:
  IndexSequence(std::vector<Index> indices, Index codebook_size)
      : indices_(std::move(indices)), codebook_size_(codebook_size) {
    if (indices_.empty()) throw ValidationError("IndexSequence: empty");
    for (Index s : indices_) {
      if (s >= codebook_size_) throw ValidationError("IndexSequence: index out of range");
    }
  }

  std::size_t size() const { return indices_.size(); }
  Index codebook_size() const { return codebook_size_; }
  Index operator[](std::size_t m) const { return indices_[m]; }
  const std::vector<Index>& values() const { return indices_; }

private:
  std::vector<Index> indices_;
  Index codebook_size_;
};

/// Per-codeword usage counts and empirical frequencies over one index sequence.
struct UsageStats {
  std::vector<std::uint64_t> counts;
  std::vector<double> frequencies;  // counts / total, sums to 1
  std::uint64_t total = 0;
};

}  // namespace semq
