#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace sammd {

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

class InvalidInputError : public Error {
 public:
  using Error::Error;
};

class UnequalSampleError : public Error {
 public:
  using Error::Error;
};

class NumericalError : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  using Error::Error;
};

// ---------------------------------------------------------------------------
// FeatureMatrix
// ---------------------------------------------------------------------------

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// An n x d table of finite observation vectors, one observation per row.
/// Construction validates shape (n >= 1, d >= 1) and finiteness, so every
/// live FeatureMatrix satisfies both.
class FeatureMatrix {
 public:
  explicit FeatureMatrix(RowMatrix data);
  FeatureMatrix(std::size_t rows, std::size_t dims, std::span<const double> values);

  [[nodiscard]] std::size_t rows() const { return static_cast<std::size_t>(data_.rows()); }
  [[nodiscard]] std::size_t dims() const { return static_cast<std::size_t>(data_.cols()); }

  [[nodiscard]] std::span<const double> row(std::size_t i) const {
    return {data_.data() + i * dims(), dims()};
  }
  [[nodiscard]] double operator()(std::size_t i, std::size_t j) const {
    return data_(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
  }
  [[nodiscard]] const RowMatrix& matrix() const { return data_; }

  /// Rows in the given order; indices may repeat.
  [[nodiscard]] FeatureMatrix select_rows(std::span<const std::size_t> indices) const;

  /// Rows of `top` followed by rows of `bottom`.
  static FeatureMatrix stack(const FeatureMatrix& top, const FeatureMatrix& bottom);

  friend bool operator==(const FeatureMatrix& a, const FeatureMatrix& b) {
    return a.data_.rows() == b.data_.rows() && a.data_.cols() == b.data_.cols() &&
           a.data_ == b.data_;
  }

 private:
  RowMatrix data_;
};

// ---------------------------------------------------------------------------
// Random streams
// ---------------------------------------------------------------------------

using Rng = std::mt19937_64;

/// Split rule for independent RNG streams: stream k of master seed s is seeded
/// with splitmix64(s ^ splitmix64(k + 1)). Anything parallel (trials,
/// resamples, attacked rows) owns one stream per index, so results do not
/// depend on scheduling.
std::uint64_t splitmix64(std::uint64_t x);
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index);
Rng make_stream(std::uint64_t master, std::uint64_t index);

/// Uniform sample of k distinct indices from [0, n), in draw order.
std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k, Rng& rng);

// ---------------------------------------------------------------------------
// Parallelism
// ---------------------------------------------------------------------------

/// Worker count: SAMMD_THREADS if set to a positive integer, otherwise the
/// hardware concurrency.
std::size_t worker_count();

/// Runs body(i) for i in [0, n). Each index must write only its own output
/// slot; the first exception thrown by any body is rethrown after all workers
/// join.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace sammd
