#include "sammd/kernels.hpp"

#include <algorithm>
#include <cmath>

namespace sammd {

namespace {

double squared_distance(std::span<const double> x, std::span<const double> y) {
  double acc = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    const double d = x[k] - y[k];
    acc += d * d;
  }
  return acc;
}

double inv_two_sigma_sq(GaussianBandwidth bw) {
  const double s = bw.sigma();
  return 1.0 / (2.0 * s * s);
}

void check_pair(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) {
    throw DimensionError("kernel arguments differ in dimension (" + std::to_string(x.size()) +
                         " vs " + std::to_string(y.size()) + ")");
  }
  auto finite = [](double v) { return std::isfinite(v); };
  if (!std::all_of(x.begin(), x.end(), finite) || !std::all_of(y.begin(), y.end(), finite)) {
    throw InvalidInputError("kernel arguments must be finite");
  }
}

double sigmoid(double t) {
  // Both branches avoid overflow of exp for large |t|.
  if (t >= 0) return 1.0 / (1.0 + std::exp(-t));
  const double e = std::exp(t);
  return e / (1.0 + e);
}

const FeatureMatrix& require_features(const Sample& s) {
  if (!s.features) throw InvalidInputError("deep kernel requires featurizer outputs for every sample");
  return *s.features;
}

}  // namespace

GaussianBandwidth GaussianBandwidth::from_sigma(double sigma) {
  if (!(sigma > 0.0) || !std::isfinite(sigma)) {
    throw InvalidInputError("bandwidth must be positive and finite");
  }
  return GaussianBandwidth{std::log(sigma)};
}

double DeepKernelParams::eps0() const { return sigmoid(eps0_logit); }

double gaussian_kernel(std::span<const double> x, std::span<const double> y, GaussianBandwidth bw) {
  check_pair(x, y);
  return std::exp(-squared_distance(x, y) * inv_two_sigma_sq(bw));
}

double deep_kernel(std::span<const double> x_raw, std::span<const double> y_raw,
                   std::span<const double> x_feat, std::span<const double> y_feat,
                   const DeepKernelParams& params) {
  check_pair(x_raw, y_raw);
  check_pair(x_feat, y_feat);
  const double eps0 = params.eps0();
  const double kappa = std::exp(-squared_distance(x_feat, y_feat) * inv_two_sigma_sq(params.sigma_phi));
  const double q = std::exp(-squared_distance(x_raw, y_raw) * inv_two_sigma_sq(params.sigma_q));
  return ((1.0 - eps0) * kappa + eps0) * q;
}

Sample::Sample(FeatureMatrix raw_rows, FeatureMatrix feature_rows)
    : raw(std::move(raw_rows)), features(std::move(feature_rows)) {
  if (features->rows() != raw.rows()) {
    throw DimensionError("features must have one row per raw observation");
  }
}

Sample Sample::select_rows(std::span<const std::size_t> indices) const {
  if (features) return Sample(raw.select_rows(indices), features->select_rows(indices));
  return Sample(raw.select_rows(indices));
}

Sample Sample::stack(const Sample& top, const Sample& bottom) {
  if (top.features.has_value() != bottom.features.has_value()) {
    throw InvalidInputError("cannot stack samples with and without features");
  }
  if (top.features) {
    return Sample(FeatureMatrix::stack(top.raw, bottom.raw),
                  FeatureMatrix::stack(*top.features, *bottom.features));
  }
  return Sample(FeatureMatrix::stack(top.raw, bottom.raw));
}

Eigen::MatrixXd squared_distances(const FeatureMatrix& a, const FeatureMatrix& b) {
  if (a.dims() != b.dims()) throw DimensionError("squared_distances: column counts differ");
  Eigen::MatrixXd d(static_cast<Eigen::Index>(a.rows()), static_cast<Eigen::Index>(b.rows()));
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const auto ai = a.row(i);
    for (std::size_t j = 0; j < b.rows(); ++j) {
      d(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = squared_distance(ai, b.row(j));
    }
  }
  return d;
}

Eigen::MatrixXd kernel_matrix(const Sample& a, const Sample& b, const KernelSpec& kernel) {
  if (a.raw.dims() != b.raw.dims()) throw DimensionError("raw inputs differ in dimension");
  return std::visit(
      [&](const auto& k) -> Eigen::MatrixXd {
        using K = std::decay_t<decltype(k)>;
        if constexpr (std::is_same_v<K, GaussianKernel>) {
          const double c = inv_two_sigma_sq(k.bandwidth);
          return (-squared_distances(a.raw, b.raw).array() * c).exp().matrix();
        } else {
          const auto& fa = require_features(a);
          const auto& fb = require_features(b);
          if (fa.dims() != fb.dims()) throw DimensionError("features differ in dimension");
          const double eps0 = k.params.eps0();
          const double cphi = inv_two_sigma_sq(k.params.sigma_phi);
          const double cq = inv_two_sigma_sq(k.params.sigma_q);
          const Eigen::ArrayXXd kappa = (-squared_distances(fa, fb).array() * cphi).exp();
          const Eigen::ArrayXXd q = (-squared_distances(a.raw, b.raw).array() * cq).exp();
          return (((1.0 - eps0) * kappa + eps0) * q).matrix();
        }
      },
      kernel);
}

GramBundle gram_bundle(const Sample& sx, const Sample& sy, const KernelSpec& kernel) {
  return GramBundle{kernel_matrix(sx, sx, kernel), kernel_matrix(sy, sy, kernel),
                    kernel_matrix(sx, sy, kernel)};
}

GramBundle gram_bundle(const FeatureMatrix& sx, const FeatureMatrix& sy, GaussianBandwidth bw) {
  return gram_bundle(Sample(sx), Sample(sy), GaussianKernel{bw});
}

GaussianBandwidth median_heuristic(const FeatureMatrix& pooled) {
  const std::size_t n = pooled.rows();
  if (n < 2) throw InvalidInputError("median heuristic needs at least two rows");
  std::vector<double> dist;
  dist.reserve(n * (n - 1) / 2);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const double d = std::sqrt(squared_distance(pooled.row(i), pooled.row(j)));
      if (d > 0.0) dist.push_back(d);
    }
  }
  if (dist.empty()) return GaussianBandwidth{0.0};
  const std::size_t mid = dist.size() / 2;
  std::nth_element(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(mid), dist.end());
  double median = dist[mid];
  if (dist.size() % 2 == 0) {
    const double lower = *std::max_element(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(mid));
    median = 0.5 * (lower + median);
  }
  return GaussianBandwidth::from_sigma(median);
}

GaussianBandwidth median_heuristic(const FeatureMatrix& sx, const FeatureMatrix& sy) {
  return median_heuristic(FeatureMatrix::stack(sx, sy));
}

DeepKernelParams initial_deep_params(const Sample& sx, const Sample& sy, std::string featurizer_id) {
  DeepKernelParams p;
  p.eps0_logit = 0.0;
  p.sigma_q = median_heuristic(sx.raw, sy.raw);
  p.sigma_phi = median_heuristic(require_features(sx), require_features(sy));
  p.featurizer_id = std::move(featurizer_id);
  return p;
}

}  // namespace sammd
