#include "sammd/estimators.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace sammd {

HMatrix h_matrix(const GramBundle& bundle) {
  if (bundle.n() != bundle.m()) {
    throw UnequalSampleError("H matrix needs equal sample sizes (n=" + std::to_string(bundle.n()) +
                             ", m=" + std::to_string(bundle.m()) + ")");
  }
  if (bundle.k_xy.rows() != bundle.k_xx.rows() || bundle.k_xy.cols() != bundle.k_yy.rows()) {
    throw DimensionError("gram bundle blocks are inconsistent");
  }
  return HMatrix{bundle.k_xx + bundle.k_yy - bundle.k_xy - bundle.k_xy.transpose()};
}

double mmd_u_squared(const HMatrix& h) {
  const std::size_t n = h.n();
  if (n < 2) throw InvalidInputError("unbiased MMD needs n >= 2");
  const double off_diagonal = h.h.sum() - h.h.trace();
  return off_diagonal / (static_cast<double>(n) * static_cast<double>(n - 1));
}

double mmd_biased_squared(const GramBundle& bundle) {
  if (bundle.k_xx.size() == 0 || bundle.k_yy.size() == 0 || bundle.k_xy.size() == 0) {
    throw InvalidInputError("biased MMD needs nonempty gram blocks");
  }
  return bundle.k_xx.mean() + bundle.k_yy.mean() - 2.0 * bundle.k_xy.mean();
}

double sigma_h1_hat_sq(const HMatrix& h, double lambda) {
  const std::size_t n = h.n();
  if (n < 2) throw InvalidInputError("variance estimate needs n >= 2");
  if (!(lambda > 0.0)) throw InvalidInputError("lambda must be positive");
  const double nd = static_cast<double>(n);
  const Eigen::VectorXd row_sums = h.h.rowwise().sum();
  const double total = row_sums.sum();
  const double value = 4.0 / (nd * nd * nd) * row_sums.squaredNorm() -
                       4.0 / (nd * nd * nd * nd) * total * total + lambda;
  return std::max(value, lambda);
}

CriterionValue criterion(const HMatrix& h, double lambda) {
  CriterionValue c;
  c.mmd_sq = mmd_u_squared(h);
  c.sigma_hat = std::sqrt(sigma_h1_hat_sq(h, lambda));
  c.j_hat = c.mmd_sq / c.sigma_hat;
  if (!std::isfinite(c.j_hat) || !std::isfinite(c.mmd_sq)) {
    throw NumericalError("test-power criterion is not finite");
  }
  return c;
}

CriterionValue j_hat(const Sample& sx, const Sample& sy, const KernelSpec& kernel, double lambda) {
  if (sx.size() != sy.size()) {
    throw UnequalSampleError("criterion needs paired samples of equal size");
  }
  return criterion(h_matrix(gram_bundle(sx, sy, kernel)), lambda);
}

CriterionValue j_hat(const Sample& sx, const Sample& sy, const DeepKernelParams& params, double lambda) {
  return j_hat(sx, sy, KernelSpec{DeepKernel{params}}, lambda);
}

double hsic(const FeatureMatrix& sx, const FeatureMatrix& sy, GaussianBandwidth bwx,
            GaussianBandwidth bwy) {
  if (sx.rows() != sy.rows()) {
    throw UnequalSampleError("HSIC needs paired observations (equal row counts)");
  }
  if (sx.rows() < 2) throw InvalidInputError("HSIC needs at least two pairs");
  const double n = static_cast<double>(sx.rows());
  const Eigen::MatrixXd kx = kernel_matrix(Sample(sx), Sample(sx), GaussianKernel{bwx});
  const Eigen::MatrixXd ky = kernel_matrix(Sample(sy), Sample(sy), GaussianKernel{bwy});
  const double joint = kx.cwiseProduct(ky).sum() / (n * n);
  const double marginal = kx.mean() * ky.mean();
  const double mixed = kx.rowwise().sum().dot(ky.rowwise().sum()) / (n * n * n);
  return joint + marginal - 2.0 * mixed;
}

SubsetPair draw_interleaved_subsets(std::size_t n_rows, std::size_t subset_size, Rng& rng) {
  auto picked = sample_without_replacement(n_rows, 2 * subset_size, rng);
  std::sort(picked.begin(), picked.end());
  SubsetPair pair;
  pair.first.reserve(subset_size);
  pair.second.reserve(subset_size);
  for (std::size_t r = 0; r < picked.size(); ++r) {
    (r % 2 == 0 ? pair.first : pair.second).push_back(picked[r]);
  }
  return pair;
}

double hsic_dependence_protocol(const FeatureMatrix& data, std::size_t subset_size,
                                std::size_t repeats, std::uint64_t seed,
                                std::size_t bandwidth_rows) {
  if (subset_size < 2) throw InvalidInputError("HSIC protocol needs subset_size >= 2");
  if (repeats < 1) throw InvalidInputError("HSIC protocol needs repeats >= 1");
  if (data.rows() < 2 * subset_size) {
    throw InvalidInputError("HSIC protocol needs at least 2 * subset_size rows (have " +
                            std::to_string(data.rows()) + ")");
  }
  GaussianBandwidth bw;
  if (data.rows() > bandwidth_rows) {
    Rng rng(derive_seed(seed, ~std::uint64_t{0}));
    const auto idx = sample_without_replacement(data.rows(), bandwidth_rows, rng);
    bw = median_heuristic(data.select_rows(idx));
  } else {
    bw = median_heuristic(data);
  }
  double total = 0.0;
  for (std::size_t r = 0; r < repeats; ++r) {
    Rng rng = make_stream(seed, r);
    const auto pair = draw_interleaved_subsets(data.rows(), subset_size, rng);
    total += hsic(data.select_rows(pair.first), data.select_rows(pair.second), bw, bw);
  }
  return total / static_cast<double>(repeats);
}

}  // namespace sammd
