#pragma once

#include <optional>
#include <span>
#include <string>
#include <variant>

#include "sammd/common.hpp"

namespace sammd {

/// Gaussian bandwidth stored as log(sigma), so any real value is feasible.
struct GaussianBandwidth {
  double log_sigma = 0.0;

  [[nodiscard]] double sigma() const { return std::exp(log_sigma); }
  static GaussianBandwidth from_sigma(double sigma);
};

/// Parameters of the semantic-aware deep kernel
///   k(x, y) = [(1 - eps0) * kappa(phi(x), phi(y)) + eps0] * q(x, y)
/// with kappa, q Gaussian at sigma_phi (feature space) and sigma_q (raw space).
/// eps0 is stored as a logit.
struct DeepKernelParams {
  double eps0_logit = 0.0;
  GaussianBandwidth sigma_phi;
  GaussianBandwidth sigma_q;
  std::string featurizer_id;

  [[nodiscard]] double eps0() const;
};

/// exp(-||x - y||^2 / (2 sigma^2)).
double gaussian_kernel(std::span<const double> x, std::span<const double> y, GaussianBandwidth bw);

double deep_kernel(std::span<const double> x_raw, std::span<const double> y_raw,
                   std::span<const double> x_feat, std::span<const double> y_feat,
                   const DeepKernelParams& params);

/// A set of observations: raw inputs and, for the deep kernel, their featurizer
/// outputs (row i of `features` belongs to row i of `raw`).
struct Sample {
  FeatureMatrix raw;
  std::optional<FeatureMatrix> features;

  explicit Sample(FeatureMatrix raw_rows) : raw(std::move(raw_rows)) {}
  Sample(FeatureMatrix raw_rows, FeatureMatrix feature_rows);

  [[nodiscard]] std::size_t size() const { return raw.rows(); }
  [[nodiscard]] Sample select_rows(std::span<const std::size_t> indices) const;
  [[nodiscard]] static Sample stack(const Sample& top, const Sample& bottom);
};

struct GaussianKernel {
  GaussianBandwidth bandwidth;
};

struct DeepKernel {
  DeepKernelParams params;
};

using KernelSpec = std::variant<GaussianKernel, DeepKernel>;

/// Cached kernel evaluations for one (S_X, S_Y, kernel) triple.
struct GramBundle {
  Eigen::MatrixXd k_xx;
  Eigen::MatrixXd k_yy;
  Eigen::MatrixXd k_xy;

  [[nodiscard]] std::size_t n() const { return static_cast<std::size_t>(k_xx.rows()); }
  [[nodiscard]] std::size_t m() const { return static_cast<std::size_t>(k_yy.rows()); }
};

/// Pairwise squared Euclidean distances between the rows of a and b.
Eigen::MatrixXd squared_distances(const FeatureMatrix& a, const FeatureMatrix& b);

/// Kernel matrix between the rows of two samples.
Eigen::MatrixXd kernel_matrix(const Sample& a, const Sample& b, const KernelSpec& kernel);

GramBundle gram_bundle(const Sample& sx, const Sample& sy, const KernelSpec& kernel);
GramBundle gram_bundle(const FeatureMatrix& sx, const FeatureMatrix& sy, GaussianBandwidth bw);

/// Median pairwise Euclidean distance over the pooled rows of sx and sy,
/// ignoring zero distances; sigma = 1 when every distance is zero.
GaussianBandwidth median_heuristic(const FeatureMatrix& sx, const FeatureMatrix& sy);
GaussianBandwidth median_heuristic(const FeatureMatrix& pooled);

/// Bandwidths from the median heuristic on both spaces and eps0 = 0.5.
DeepKernelParams initial_deep_params(const Sample& sx, const Sample& sy,
                                     std::string featurizer_id = {});

}  // namespace sammd
