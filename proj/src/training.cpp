#include "sammd/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>

namespace sammd {

namespace {

struct Blocks {
  Eigen::MatrixXd xx, yy, xy;
};

struct DistanceBlocks {
  Blocks raw;
  std::optional<Blocks> feat;
};

/// Kernel blocks and their derivatives with respect to each unconstrained
/// parameter.
struct KernelBlocks {
  Blocks value;
  std::vector<Blocks> deriv;
};

Blocks distance_blocks(const FeatureMatrix& x, const FeatureMatrix& y) {
  return Blocks{squared_distances(x, x), squared_distances(y, y), squared_distances(x, y)};
}

DistanceBlocks distance_blocks(const Sample& sx, const Sample& sy, bool need_features) {
  DistanceBlocks d{distance_blocks(sx.raw, sy.raw), std::nullopt};
  if (need_features) {
    if (!sx.features || !sy.features) {
      throw InvalidInputError("deep kernel requires featurizer outputs for every sample");
    }
    d.feat = distance_blocks(*sx.features, *sy.features);
  }
  return d;
}

// Gaussian: K = exp(-D c), c = 1 / (2 sigma^2); dK/dlog(sigma) = 2 c D K.
void gaussian_block(const Eigen::MatrixXd& dist, double log_sigma, Eigen::MatrixXd& value,
                    Eigen::MatrixXd& d_log_sigma) {
  const double c = 0.5 * std::exp(-2.0 * log_sigma);
  value = (-dist.array() * c).exp().matrix();
  d_log_sigma = (2.0 * c * dist.array() * value.array()).matrix();
}

KernelBlocks evaluate(const DistanceBlocks& d, const KernelSpec& kernel) {
  KernelBlocks out;
  if (const auto* g = std::get_if<GaussianKernel>(&kernel)) {
    out.deriv.resize(1);
    gaussian_block(d.raw.xx, g->bandwidth.log_sigma, out.value.xx, out.deriv[0].xx);
    gaussian_block(d.raw.yy, g->bandwidth.log_sigma, out.value.yy, out.deriv[0].yy);
    gaussian_block(d.raw.xy, g->bandwidth.log_sigma, out.value.xy, out.deriv[0].xy);
    return out;
  }
  const auto& p = std::get<DeepKernel>(kernel).params;
  const double e = p.eps0();
  out.deriv.resize(3);
  auto one = [&](const Eigen::MatrixXd& dq, const Eigen::MatrixXd& dphi, Eigen::MatrixXd Blocks::*slot) {
    Eigen::MatrixXd kappa, dkappa, q, dq_ls;
    gaussian_block(dphi, p.sigma_phi.log_sigma, kappa, dkappa);
    gaussian_block(dq, p.sigma_q.log_sigma, q, dq_ls);
    const Eigen::ArrayXXd mix = (1.0 - e) * kappa.array() + e;
    out.value.*slot = (mix * q.array()).matrix();
    out.deriv[0].*slot = (e * (1.0 - e) * (1.0 - kappa.array()) * q.array()).matrix();
    out.deriv[1].*slot = ((1.0 - e) * dkappa.array() * q.array()).matrix();
    out.deriv[2].*slot = (mix * dq_ls.array()).matrix();
  };
  one(d.raw.xx, d.feat->xx, &Blocks::xx);
  one(d.raw.yy, d.feat->yy, &Blocks::yy);
  one(d.raw.xy, d.feat->xy, &Blocks::xy);
  return out;
}

Eigen::MatrixXd h_of(const Blocks& b) { return b.xx + b.yy - b.xy - b.xy.transpose(); }

CriterionGradient criterion_with_gradient(const DistanceBlocks& d, const KernelSpec& kernel,
                                          double lambda) {
  if (!(lambda > 0.0)) throw InvalidInputError("lambda must be positive");
  const auto kb = evaluate(d, kernel);
  const Eigen::MatrixXd h = h_of(kb.value);
  const auto n = static_cast<double>(h.rows());
  if (h.rows() < 2) throw InvalidInputError("criterion needs n >= 2");

  const Eigen::VectorXd r = h.rowwise().sum();
  const double s = r.sum();
  const double mmd = (s - h.trace()) / (n * (n - 1.0));
  const double v_raw = 4.0 / (n * n * n) * r.squaredNorm() - 4.0 / (n * n * n * n) * s * s + lambda;
  const bool clamped = v_raw < lambda;
  const double v = clamped ? lambda : v_raw;
  const double sigma = std::sqrt(v);

  CriterionGradient out;
  out.value = CriterionValue{mmd, sigma, mmd / sigma};
  out.gradient.resize(kb.deriv.size());
  for (std::size_t p = 0; p < kb.deriv.size(); ++p) {
    const Eigen::MatrixXd dh = h_of(kb.deriv[p]);
    const Eigen::VectorXd dr = dh.rowwise().sum();
    const double ds = dr.sum();
    const double dmmd = (ds - dh.trace()) / (n * (n - 1.0));
    const double dv = clamped ? 0.0 : 8.0 / (n * n * n) * r.dot(dr) - 8.0 / (n * n * n * n) * s * ds;
    out.gradient[p] = dmmd / sigma - mmd * dv / (2.0 * v * sigma);
  }
  const bool finite = std::isfinite(out.value.j_hat) &&
                      std::all_of(out.gradient.begin(), out.gradient.end(),
                                  [](double g) { return std::isfinite(g); });
  if (!finite) throw NumericalError("criterion or its gradient is not finite");
  return out;
}

Blocks slice(const Blocks& full, const std::vector<Eigen::Index>& ix, const std::vector<Eigen::Index>& iy) {
  return Blocks{full.xx(ix, ix), full.yy(iy, iy), full.xy(ix, iy)};
}

std::vector<Eigen::Index> to_eigen(const std::vector<std::size_t>& v) {
  return {v.begin(), v.end()};
}

}  // namespace

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw InvalidInputError("learning_rate must be positive");
  if (minibatch_size < 2) throw InvalidInputError("minibatch_size must be at least 2");
  if (!(lambda > 0.0)) throw InvalidInputError("lambda must be positive");
  if (!(split_fraction > 0.0 && split_fraction < 1.0)) {
    throw InvalidInputError("split_fraction must lie in (0, 1)");
  }
}

std::size_t train_count(std::size_t n, double fraction) {
  return static_cast<std::size_t>(std::floor(fraction * static_cast<double>(n) + 0.5));
}

DataSplit split_data(const Sample& sx, const Sample& sy, double fraction, Rng& rng) {
  if (!(fraction > 0.0 && fraction < 1.0)) throw InvalidInputError("split fraction must lie in (0, 1)");
  auto split_rows = [&](std::size_t n) {
    const std::size_t k = train_count(n, fraction);
    if (k < 2 || n - k < 2) {
      throw InvalidInputError("split leaves fewer than 2 rows on a side (n=" + std::to_string(n) + ")");
    }
    auto train = sample_without_replacement(n, k, rng);
    std::sort(train.begin(), train.end());
    std::vector<std::size_t> test;
    test.reserve(n - k);
    std::size_t cursor = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (cursor < train.size() && train[cursor] == i) ++cursor;
      else test.push_back(i);
    }
    return std::pair{std::move(train), std::move(test)};
  };
  auto [xtr, xte] = split_rows(sx.size());
  auto [ytr, yte] = sy.size() == sx.size() ? std::pair{xtr, xte} : split_rows(sy.size());
  DataSplit s{sx.select_rows(xtr), sx.select_rows(xte), sy.select_rows(ytr), sy.select_rows(yte),
              std::move(xtr), std::move(xte), std::move(ytr), std::move(yte)};
  return s;
}

std::vector<double> kernel_parameters(const KernelSpec& kernel) {
  if (const auto* g = std::get_if<GaussianKernel>(&kernel)) return {g->bandwidth.log_sigma};
  const auto& p = std::get<DeepKernel>(kernel).params;
  return {p.eps0_logit, p.sigma_phi.log_sigma, p.sigma_q.log_sigma};
}

KernelSpec with_kernel_parameters(const KernelSpec& kernel, std::span<const double> theta) {
  if (std::holds_alternative<GaussianKernel>(kernel)) {
    if (theta.size() != 1) throw DimensionError("Gaussian kernel has one parameter");
    return GaussianKernel{GaussianBandwidth{theta[0]}};
  }
  if (theta.size() != 3) throw DimensionError("deep kernel has three parameters");
  DeepKernelParams p = std::get<DeepKernel>(kernel).params;
  p.eps0_logit = theta[0];
  p.sigma_phi.log_sigma = theta[1];
  p.sigma_q.log_sigma = theta[2];
  return DeepKernel{p};
}

CriterionGradient j_hat_with_gradient(const Sample& sx, const Sample& sy, const KernelSpec& kernel,
                                      double lambda) {
  if (sx.size() != sy.size()) throw UnequalSampleError("criterion needs paired samples of equal size");
  return criterion_with_gradient(distance_blocks(sx, sy, std::holds_alternative<DeepKernel>(kernel)),
                                 kernel, lambda);
}

DeepKernelGradient grad_j_hat(const Sample& sx, const Sample& sy, const DeepKernelParams& params,
                              double lambda) {
  const auto g = j_hat_with_gradient(sx, sy, DeepKernel{params}, lambda);
  return DeepKernelGradient{g.gradient[0], g.gradient[1], g.gradient[2]};
}

TrainTrace train_kernel(const Sample& sx_tr, const Sample& sy_tr, const KernelSpec& init,
                        const TrainConfig& cfg) {
  cfg.validate();
  const std::size_t batch = std::min({cfg.minibatch_size, sx_tr.size(), sy_tr.size()});
  if (batch < 2) throw InvalidInputError("training sets need at least 2 rows each");

  const bool deep = std::holds_alternative<DeepKernel>(init);
  const DistanceBlocks full = distance_blocks(sx_tr, sy_tr, deep);

  std::vector<double> theta = kernel_parameters(init);
  std::vector<double> m(theta.size(), 0.0), v(theta.size(), 0.0);
  TrainTrace trace{{}, init, false};
  trace.iters.reserve(cfg.max_iters);

  for (std::size_t t = 0; t < cfg.max_iters; ++t) {
    Rng rng = make_stream(cfg.seed, t);
    const auto ix = to_eigen(sample_without_replacement(sx_tr.size(), batch, rng));
    const auto iy = to_eigen(sample_without_replacement(sy_tr.size(), batch, rng));
    DistanceBlocks mini{slice(full.raw, ix, iy), std::nullopt};
    if (deep) mini.feat = slice(*full.feat, ix, iy);

    const KernelSpec current = with_kernel_parameters(init, theta);
    CriterionGradient cg;
    try {
      cg = criterion_with_gradient(mini, current, cfg.lambda);
    } catch (const NumericalError&) {
      trace.diverged = true;
      break;
    }
    trace.iters.emplace_back(t, cg.value.j_hat);

    const double step = static_cast<double>(t + 1);
    const double bias1 = 1.0 - std::pow(cfg.adam_beta1, step);
    const double bias2 = 1.0 - std::pow(cfg.adam_beta2, step);
    std::vector<double> next = theta;
    for (std::size_t p = 0; p < theta.size(); ++p) {
      const double g = cg.gradient[p];
      m[p] = cfg.adam_beta1 * m[p] + (1.0 - cfg.adam_beta1) * g;
      v[p] = cfg.adam_beta2 * v[p] + (1.0 - cfg.adam_beta2) * g * g;
      next[p] += cfg.learning_rate * (m[p] / bias1) / (std::sqrt(v[p] / bias2) + cfg.adam_eps);
    }
    if (!std::all_of(next.begin(), next.end(), [](double x) { return std::isfinite(x); })) {
      trace.diverged = true;
      break;
    }
    theta = std::move(next);
  }
  trace.final_kernel = with_kernel_parameters(init, theta);
  return trace;
}

}  // namespace sammd
