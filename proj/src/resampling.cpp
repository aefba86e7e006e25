#include "sammd/resampling.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "sammd/estimators.hpp"

namespace sammd {

void WildBootstrapConfig::validate() const {
  if (!(l > 0.0)) throw InvalidInputError("wild bootstrap timescale l must be positive");
  if (n_perm < 1) throw InvalidInputError("n_perm must be at least 1");
}

std::vector<double> wild_weights(std::size_t n, double l, Rng& rng) {
  if (n < 1) throw InvalidInputError("wild_weights needs n >= 1");
  if (!(l > 0.0)) throw InvalidInputError("wild_weights needs l > 0");
  const double a = std::exp(-1.0 / l);
  const double b = std::sqrt(-std::expm1(-2.0 / l));
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> w(n);
  w[0] = normal(rng);
  for (std::size_t t = 1; t < n; ++t) w[t] = a * w[t - 1] + b * normal(rng);
  return w;
}

std::vector<double> center_weights(std::span<const double> w) {
  if (w.empty()) throw InvalidInputError("center_weights needs a nonempty list");
  const double mean = std::accumulate(w.begin(), w.end(), 0.0) / static_cast<double>(w.size());
  std::vector<double> out(w.size());
  std::transform(w.begin(), w.end(), out.begin(), [mean](double v) { return v - mean; });
  return out;
}

double wild_statistic(const GramBundle& bundle, std::span<const double> wx, std::span<const double> wy) {
  if (wx.size() != bundle.n() || wy.size() != bundle.m()) {
    throw DimensionError("wild weights do not match gram bundle sizes");
  }
  const Eigen::Map<const Eigen::VectorXd> vx(wx.data(), static_cast<Eigen::Index>(wx.size()));
  const Eigen::Map<const Eigen::VectorXd> vy(wy.data(), static_cast<Eigen::Index>(wy.size()));
  const double n = static_cast<double>(wx.size());
  const double m = static_cast<double>(wy.size());
  return vx.dot(bundle.k_xx * vx) / (n * n) + vy.dot(bundle.k_yy * vy) / (m * m) -
         2.0 * vx.dot(bundle.k_xy * vy) / (n * m);
}

namespace {

std::vector<double> weights_at(std::span<const std::size_t> positions, double l, Rng& rng) {
  const auto full = wild_weights(positions.back() + 1, l, rng);
  std::vector<double> w(positions.size());
  for (std::size_t k = 0; k < positions.size(); ++k) w[k] = full[positions[k]];
  return center_weights(w);
}

void check_positions(std::span<const std::size_t> pos, std::size_t rows) {
  if (pos.size() != rows) throw DimensionError("one time position per row required");
  for (std::size_t k = 1; k < pos.size(); ++k) {
    if (pos[k] <= pos[k - 1]) throw InvalidInputError("time positions must be strictly increasing");
  }
}

}  // namespace

NullDraws wild_bootstrap_null(const GramBundle& bundle, const WildBootstrapConfig& cfg,
                              std::span<const std::size_t> positions_x, std::span<const std::size_t> positions_y) {
  cfg.validate();
  check_positions(positions_x, bundle.n());
  check_positions(positions_y, bundle.m());
  NullDraws draws;
  draws.observed = mmd_biased_squared(bundle);
  draws.values.resize(cfg.n_perm);
  for (std::size_t i = 0; i < cfg.n_perm; ++i) {
    Rng rng = make_stream(cfg.seed, i);
    const auto wx = weights_at(positions_x, cfg.l, rng);
    const auto wy = weights_at(positions_y, cfg.l, rng);
    draws.values[i] = wild_statistic(bundle, wx, wy);
  }
  return draws;
}

NullDraws wild_bootstrap_null(const GramBundle& bundle, const WildBootstrapConfig& cfg) {
  std::vector<std::size_t> px(bundle.n()), py(bundle.m());
  std::iota(px.begin(), px.end(), std::size_t{0});
  std::iota(py.begin(), py.end(), std::size_t{0});
  return wild_bootstrap_null(bundle, cfg, px, py);
}

NullDraws permutation_null(const Sample& sx, const Sample& sy, const KernelSpec& kernel,
                           std::size_t n_perm, std::uint64_t seed) {
  if (sx.size() < 2 || sy.size() < 2) throw InvalidInputError("permutation null needs n, m >= 2");
  if (n_perm < 1) throw InvalidInputError("n_perm must be at least 1");
  const std::size_t n = sx.size();
  const std::size_t total = n + sy.size();
  const Sample pooled = Sample::stack(sx, sy);
  const Eigen::MatrixXd k = kernel_matrix(pooled, pooled, kernel);

  // With indicator a of the X side, a'Ka, (1-a)'K(1-a) and a'K(1-a) all follow
  // from one matrix-vector product and the fixed row sums of K.
  const Eigen::VectorXd row_sums = k.rowwise().sum();
  const double grand = row_sums.sum();
  const double nd = static_cast<double>(n);
  const double md = static_cast<double>(total - n);
  Eigen::VectorXd indicator(static_cast<Eigen::Index>(total));
  auto statistic = [&](const std::vector<std::size_t>& order) {
    indicator.setZero();
    for (std::size_t a = 0; a < n; ++a) indicator(static_cast<Eigen::Index>(order[a])) = 1.0;
    const Eigen::VectorXd ka = k * indicator;
    const double sxx = indicator.dot(ka);
    const double sxy = indicator.dot(row_sums) - sxx;
    const double syy = grand - 2.0 * indicator.dot(row_sums) + sxx;
    return sxx / (nd * nd) + syy / (md * md) - 2.0 * sxy / (nd * md);
  };

  NullDraws draws;
  draws.observed = mmd_biased_squared(gram_bundle(sx, sy, kernel));
  draws.values.resize(n_perm);
  std::vector<std::size_t> order(total);
  for (std::size_t i = 0; i < n_perm; ++i) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng = make_stream(seed, i);
    std::shuffle(order.begin(), order.end(), rng);
    draws.values[i] = statistic(order);
  }
  return draws;
}

double p_value(const NullDraws& draws) {
  if (draws.values.empty()) throw InvalidInputError("p_value needs at least one draw");
  const auto hits = std::count_if(draws.values.begin(), draws.values.end(),
                                  [&](double v) { return v >= draws.observed; });
  return static_cast<double>(hits) / static_cast<double>(draws.values.size());
}

}  // namespace sammd
