#pragma once

#include "sammd/kernels.hpp"

namespace sammd {

/// Regularizer floor for the H1 variance estimate.
inline constexpr double kDefaultLambda = 1e-8;

/// H_ij = k(x_i, x_j) + k(y_i, y_j) - k(x_i, y_j) - k(y_i, x_j) for paired
/// samples of equal size n.
struct HMatrix {
  Eigen::MatrixXd h;
  [[nodiscard]] std::size_t n() const { return static_cast<std::size_t>(h.rows()); }
};

struct CriterionValue {
  double mmd_sq = 0.0;     // unbiased squared-MMD estimate
  double sigma_hat = 0.0;  // regularized std-dev estimate, >= sqrt(lambda)
  double j_hat = 0.0;      // mmd_sq / sigma_hat
};

HMatrix h_matrix(const GramBundle& bundle);

/// Off-diagonal mean of H; may be negative.
double mmd_u_squared(const HMatrix& h);

/// V-statistic mean(K_xx) + mean(K_yy) - 2 mean(K_xy); n and m may differ.
double mmd_biased_squared(const GramBundle& bundle);

/// 4/n^3 sum_i (sum_j H_ij)^2 - 4/n^4 (sum_ij H_ij)^2 + lambda, clamped below at
/// lambda.
double sigma_h1_hat_sq(const HMatrix& h, double lambda);

CriterionValue criterion(const HMatrix& h, double lambda);

CriterionValue j_hat(const Sample& sx, const Sample& sy, const KernelSpec& kernel,
                     double lambda = kDefaultLambda);
CriterionValue j_hat(const Sample& sx, const Sample& sy, const DeepKernelParams& params,
                     double lambda = kDefaultLambda);

/// V-statistic HSIC between paired observations (x_i, y_i) with Gaussian
/// kernels of fixed bandwidth on each side.
double hsic(const FeatureMatrix& sx, const FeatureMatrix& sy, GaussianBandwidth bwx,
            GaussianBandwidth bwy);

struct SubsetPair {
  std::vector<std::size_t> first;
  std::vector<std::size_t> second;
};

/// 2 * subset_size distinct rows of [0, n_rows) drawn uniformly, sorted, then
/// dealt alternately: first gets ranks 0, 2, 4, ..., second gets 1, 3, 5, ...
SubsetPair draw_interleaved_subsets(std::size_t n_rows, std::size_t subset_size, Rng& rng);

/// Mean HSIC between two disjoint random subsets of `data`, over `repeats`
/// draws of draw_interleaved_subsets (stream r of `seed` for draw r), so pair i
/// couples neighbouring observations. Both bandwidths are fixed once by
/// the median heuristic on `data` (computed on at most `bandwidth_rows` rows).
double hsic_dependence_protocol(const FeatureMatrix& data, std::size_t subset_size,
                                std::size_t repeats, std::uint64_t seed,
                                std::size_t bandwidth_rows = 1000);

}  // namespace sammd
