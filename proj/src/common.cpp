#include "sammd/common.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <numeric>
#include <thread>

namespace sammd {

namespace {

void validate_matrix(const RowMatrix& m) {
  if (m.rows() < 1 || m.cols() < 1) {
    throw InvalidInputError("FeatureMatrix requires at least one row and one column");
  }
  if (!m.allFinite()) {
    throw InvalidInputError("FeatureMatrix entries must be finite");
  }
}

}  // namespace

FeatureMatrix::FeatureMatrix(RowMatrix data) : data_(std::move(data)) { validate_matrix(data_); }

FeatureMatrix::FeatureMatrix(std::size_t rows, std::size_t dims, std::span<const double> values) {
  if (values.size() != rows * dims) {
    throw DimensionError("FeatureMatrix: expected " + std::to_string(rows * dims) +
                         " values, got " + std::to_string(values.size()));
  }
  data_.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(dims));
  std::copy(values.begin(), values.end(), data_.data());
  validate_matrix(data_);
}

FeatureMatrix FeatureMatrix::select_rows(std::span<const std::size_t> indices) const {
  RowMatrix out(static_cast<Eigen::Index>(indices.size()), data_.cols());
  for (std::size_t r = 0; r < indices.size(); ++r) {
    if (indices[r] >= rows()) throw InvalidInputError("select_rows: index out of range");
    out.row(static_cast<Eigen::Index>(r)) = data_.row(static_cast<Eigen::Index>(indices[r]));
  }
  return FeatureMatrix(std::move(out));
}

FeatureMatrix FeatureMatrix::stack(const FeatureMatrix& top, const FeatureMatrix& bottom) {
  if (top.dims() != bottom.dims()) {
    throw DimensionError("stack: column counts differ");
  }
  RowMatrix out(top.data_.rows() + bottom.data_.rows(), top.data_.cols());
  out.topRows(top.data_.rows()) = top.data_;
  out.bottomRows(bottom.data_.rows()) = bottom.data_;
  return FeatureMatrix(std::move(out));
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) {
  return splitmix64(master ^ splitmix64(index + 1));
}

Rng make_stream(std::uint64_t master, std::uint64_t index) { return Rng(derive_seed(master, index)); }

std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k, Rng& rng) {
  if (k > n) throw InvalidInputError("cannot draw more indices than available");
  std::vector<std::size_t> pool(n);
  std::iota(pool.begin(), pool.end(), std::size_t{0});
  // Partial Fisher-Yates.
  for (std::size_t i = 0; i < k; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, n - 1);
    std::swap(pool[i], pool[pick(rng)]);
  }
  pool.resize(k);
  return pool;
}

std::size_t worker_count() {
  if (const char* env = std::getenv("SAMMD_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v > 0) return static_cast<std::size_t>(v);
  }
  return std::max<std::size_t>(1, std::thread::hardware_concurrency());
}

namespace {
// Nested parallel_for calls run inline on the calling worker.
thread_local bool inside_worker = false;
}  // namespace

void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body) {
  const std::size_t workers = inside_worker ? 1 : std::min(worker_count(), n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto run = [&] {
    const bool outer = inside_worker;
    inside_worker = true;
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        body(i);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next = n;
      }
    }
    inside_worker = outer;
  };
  {
    std::vector<std::jthread> pool;
    pool.reserve(workers - 1);
    for (std::size_t t = 1; t < workers; ++t) pool.emplace_back(run);
    run();
  }
  if (failure) std::rethrow_exception(failure);
}

}  // namespace sammd
