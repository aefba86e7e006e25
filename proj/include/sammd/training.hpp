#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "sammd/estimators.hpp"

namespace sammd {

struct TrainConfig {
  double learning_rate = 2e-4;
  std::size_t max_iters = 300;
  std::size_t minibatch_size = 64;
  double lambda = kDefaultLambda;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t seed = 0;
  double split_fraction = 0.5;

  void validate() const;
};

struct TrainTrace {
  std::vector<std::pair<std::size_t, double>> iters;  // (iteration, minibatch j_hat)
  KernelSpec final_kernel;
  bool diverged = false;

  [[nodiscard]] const DeepKernelParams& final_params() const {
    return std::get<DeepKernel>(final_kernel).params;
  }
};

struct DataSplit {
  Sample x_train;
  Sample x_test;
  Sample y_train;
  Sample y_test;
  std::vector<std::size_t> x_train_rows, x_test_rows, y_train_rows, y_test_rows;
};

/// Number of training rows for a split of n rows: floor(fraction * n + 0.5).
std::size_t train_count(std::size_t n, double fraction);

/// Uniform random disjoint split of each sample into train/test parts. Each
/// part keeps the original row order. When n_x == n_y both samples use the
/// same row positions; otherwise Y draws its own.
DataSplit split_data(const Sample& sx, const Sample& sy, double fraction, Rng& rng);

/// Unconstrained parameter vector of a kernel: (log sigma) for Gaussian,
/// (eps0_logit, log sigma_phi, log sigma_q) for the deep kernel.
std::vector<double> kernel_parameters(const KernelSpec& kernel);
KernelSpec with_kernel_parameters(const KernelSpec& kernel, std::span<const double> theta);

struct CriterionGradient {
  CriterionValue value;
  std::vector<double> gradient;  // d j_hat / d theta, ordered as kernel_parameters()
};

/// j_hat together with its exact gradient over the unconstrained parameters.
CriterionGradient j_hat_with_gradient(const Sample& sx, const Sample& sy, const KernelSpec& kernel,
                                      double lambda = kDefaultLambda);

struct DeepKernelGradient {
  double d_eps0_logit = 0.0;
  double d_log_sigma_phi = 0.0;
  double d_log_sigma_q = 0.0;
};

DeepKernelGradient grad_j_hat(const Sample& sx, const Sample& sy, const DeepKernelParams& params,
                              double lambda = kDefaultLambda);

/// Adam ascent on j_hat. Step t draws min(minibatch_size, n_x, n_y) rows
/// without replacement from each training set (stream t of cfg.seed).
/// A non-finite criterion or gradient stops training, keeps the last finite
/// parameters and sets `diverged`.
TrainTrace train_kernel(const Sample& sx_tr, const Sample& sy_tr, const KernelSpec& init,
                        const TrainConfig& cfg);

}  // namespace sammd
