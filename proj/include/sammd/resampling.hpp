#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "sammd/kernels.hpp"

namespace sammd {

struct WildBootstrapConfig {
  double l = 0.2;             // timescale of the weight process
  std::size_t n_perm = 200;   // number of resampled statistics
  std::uint64_t seed = 0;

  void validate() const;
};

/// Resampled statistics together with the observed (reference) statistic.
struct NullDraws {
  std::vector<double> values;
  double observed = 0.0;
};

/// W_0 ~ N(0,1), W_t = e^{-1/l} W_{t-1} + sqrt(1 - e^{-2/l}) eps_t.
std::vector<double> wild_weights(std::size_t n, double l, Rng& rng);

std::vector<double> center_weights(std::span<const double> w);

/// 1/n^2 sum wx_i wx_j Kxx_ij + 1/m^2 sum wy_i wy_j Kyy_ij - 2/(nm) sum wx_i wy_j Kxy_ij.
double wild_statistic(const GramBundle& bundle, std::span<const double> wx, std::span<const double> wy);

/// Draw i uses stream i of cfg.seed: first the X process (n values), then the
/// Y process (m values), each centered separately.
NullDraws wild_bootstrap_null(const GramBundle& bundle, const WildBootstrapConfig& cfg);

/// As above, but row k of S_X sits at time positions_x[k] (strictly
/// increasing): each process runs over 0..max position and is read at the
/// rows' positions before centering. Consecutive positions reproduce the
/// plain version exactly.
NullDraws wild_bootstrap_null(const GramBundle& bundle, const WildBootstrapConfig& cfg,
                              std::span<const std::size_t> positions_x, std::span<const std::size_t> positions_y);

/// Pools the rows of sx and sy, reshuffles (stream i of `seed` for draw i),
/// splits back into sizes n and m and recomputes the biased statistic.
NullDraws permutation_null(const Sample& sx, const Sample& sy, const KernelSpec& kernel,
                           std::size_t n_perm, std::uint64_t seed);

/// Fraction of resampled values >= observed.
double p_value(const NullDraws& draws);

}  // namespace sammd
