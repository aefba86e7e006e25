// Acceptance suite: one PASS/FAIL line per criterion. Run with criterion
// numbers as arguments to select a subset, e.g. `sammd_acceptance 6 7 8`.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "../unit/oracles.hpp"
#include "sammd/cli.hpp"
#include "sammd/io.hpp"
#include "sammd/pipeline.hpp"

using namespace sammd;

namespace {

constexpr int kSeeds = 10;
constexpr std::uint64_t kSeedBase = 1;

// Chosen offline on master seed 2024, which is not among the seeds evaluated
// here: the data timescale maximizes the smaller of the two margins around
// 0.10, and the wild timescale is the sweep's closest-to-alpha value for it.
constexpr double kDependentWildL = 3.0;
constexpr double kDependenceL = 0.8;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

double rate_of(const ExperimentReport& rep, const std::string& method, const std::string& condition = {}) {
  for (const auto& r : rep.rows) {
    if (r.method == method && (condition.empty() || r.condition == condition)) return r.rejection_rate;
  }
  throw std::runtime_error("no row for " + method + " " + condition);
}

HarnessConfig harness(std::vector<Method> methods, std::size_t trials, std::uint64_t seed) {
  HarnessConfig cfg;
  cfg.methods = std::move(methods);
  cfg.trials = trials;
  cfg.seed = seed;
  return cfg;
}

// Nondecreasing up to one inversion of at most `slack`.
bool monotone(const std::vector<double>& v, bool increasing, double slack = 0.05) {
  int inversions = 0;
  for (std::size_t i = 1; i < v.size(); ++i) {
    const double drop = increasing ? v[i - 1] - v[i] : v[i] - v[i - 1];
    if (drop > 0.0) {
      if (drop > slack) return false;
      ++inversions;
    }
  }
  return inversions <= 1;
}

std::string list(const std::vector<double>& v) {
  std::string s = "[";
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ", " : "") + fmt("%.3f", v[i]);
  return s + "]";
}

// ---------------------------------------------------------------------------

Outcome type_one_calibration() {
  const std::vector<Method> methods{Method::Sammd, Method::MmdG, Method::MmdOWb};
  ScenarioSpec s;
  s.kind = ScenarioKind::IidGaussian;
  s.n = 200;
  const auto rep = run_calibration(s, harness(methods, 500, kSeedBase));
  Outcome o{true, ""};
  for (Method m : methods) {
    const double r = rate_of(rep, method_name(m));
    o.pass = o.pass && r >= 0.02 && r <= 0.09;
    o.detail += method_name(m) + "=" + fmt("%.3f", r) + " ";
  }
  o.detail += "(band [0.02, 0.09], 500 trials, n=200)";
  return o;
}

Outcome dependent_contrast() {
  const std::vector<Method> methods{Method::MmdO, Method::MmdOWb, Method::Sammd};
  ScenarioSpec s;
  s.kind = ScenarioKind::DependentGaussian;
  s.n = 100;
  s.dependence_l = kDependenceL;
  int ok = 0;
  std::string per_seed;
  for (int k = 0; k < kSeeds; ++k) {
    auto cfg = harness(methods, 500, kSeedBase + static_cast<std::uint64_t>(k));
    cfg.test.bootstrap.l = kDependentWildL;
    const auto rep = run_calibration(s, cfg);
    const double perm = rate_of(rep, "mmd-o"), wb = rate_of(rep, "mmd-o-wb"), deep = rate_of(rep, "sammd");
    const bool good = perm > 0.10 && wb <= 0.10 && deep <= 0.10;
    ok += good ? 1 : 0;
    per_seed += fmt(" (%.3f", perm) + fmt("/%.3f", wb) + fmt("/%.3f)", deep) + (good ? "" : "*");
  }
  return {ok >= 8, std::to_string(ok) + "/10 seeds hold mmd-o > 0.10 >= mmd-o-wb, sammd; per seed (mmd-o/mmd-o-wb/sammd):" +
                       per_seed};
}

Outcome power_ordering() {
  ScenarioSpec s;
  s.kind = ScenarioKind::ToyAttack;
  s.n = 200;
  s.epsilon = 0.2;
  std::vector<double> deep, gauss;
  for (int k = 0; k < kSeeds; ++k) {
    const auto rep =
        run_calibration(s, harness({Method::Sammd, Method::MmdG}, 100, kSeedBase + static_cast<std::uint64_t>(k)));
    deep.push_back(rate_of(rep, "sammd"));
    gauss.push_back(rate_of(rep, "mmd-g"));
  }
  const double md = median(deep), mg = median(gauss);
  return {md >= 0.9 && md >= mg, "median sammd=" + fmt("%.3f", md) + " mmd-g=" + fmt("%.3f", mg) +
                                     " (eps=0.2, n=200, 100 trials x 10 seeds)"};
}

std::vector<double> median_curve(SweepAxis axis, const std::vector<double>& values, const ScenarioSpec& s,
                                 std::size_t trials) {
  std::vector<std::vector<double>> per_value(values.size());
  for (int k = 0; k < kSeeds; ++k) {
    const auto rep = run_power_sweep(axis, values, s, harness({Method::Sammd}, trials,
                                                              kSeedBase + 100 + static_cast<std::uint64_t>(k)));
    for (std::size_t i = 0; i < values.size(); ++i) per_value[i].push_back(rep.rows[i].rejection_rate);
  }
  std::vector<double> out;
  for (const auto& v : per_value) out.push_back(median(v));
  return out;
}

Outcome monotone_power() {
  ScenarioSpec s;
  s.kind = ScenarioKind::ToyAttack;
  s.n = 200;
  const auto eps = median_curve(SweepAxis::Epsilon, {0.05, 0.1, 0.2}, s, 50);
  s.epsilon = 0.2;
  const auto size = median_curve(SweepAxis::SetSize, {20, 50, 200}, s, 50);
  return {monotone(eps, true) && monotone(size, true),
          "sammd median rate vs eps {0.05,0.1,0.2} " + list(eps) + ", vs n {20,50,200} " + list(size)};
}

Outcome mixture_behaviour() {
  ScenarioSpec s;
  s.kind = ScenarioKind::ToyAttack;
  s.n = 200;
  s.epsilon = 0.2;
  const std::vector<double> fractions{0.0, 0.5, 1.0};
  std::vector<std::vector<double>> per_value(3);
  std::size_t natural_hits = 0, natural_trials = 0;
  for (int k = 0; k < kSeeds; ++k) {
    const auto rep = run_power_sweep(SweepAxis::MixtureFraction, fractions, s,
                                     harness({Method::Sammd}, 50, kSeedBase + 200 + static_cast<std::uint64_t>(k)));
    for (std::size_t i = 0; i < 3; ++i) per_value[i].push_back(rep.rows[i].rejection_rate);
    natural_hits += rep.rows[2].rejections;
    natural_trials += rep.rows[2].trials;
  }
  std::vector<double> curve;
  for (const auto& v : per_value) curve.push_back(median(v));
  const double natural = static_cast<double>(natural_hits) / static_cast<double>(natural_trials);
  return {monotone(curve, false) && natural >= 0.02 && natural <= 0.09,
          "sammd median rate vs natural fraction {0,0.5,1} " + list(curve) + "; fraction 1.0 pooled over " +
              std::to_string(natural_trials) + " trials = " + fmt("%.3f", natural) + " (band [0.02, 0.09])"};
}

Outcome estimator_oracles() {
  // Unbiasedness of the U-statistic under H0.
  const int reps = 1000;
  double sum = 0.0, sum_sq = 0.0;
  for (int r = 0; r < reps; ++r) {
    const auto x = oracle::random_matrix(20, 2, 900000 + 2 * r), y = oracle::random_matrix(20, 2, 900001 + 2 * r);
    const double u = mmd_u_squared(h_matrix(gram_bundle(x, y, GaussianBandwidth::from_sigma(1.0))));
    sum += u;
    sum_sq += u * u;
  }
  const double mean = sum / reps, se = std::sqrt((sum_sq / reps - mean * mean) / reps);
  const bool unbiased = std::abs(mean) <= 3.0 * se;

  double sigma_err = 0.0, hsic_err = 0.0;
  for (std::size_t n = 2; n <= 8; ++n) {
    const auto x = oracle::random_matrix(n, 3, 10 * n), y = oracle::random_matrix(n, 3, 10 * n + 1, 0.5);
    const auto href = oracle::h_gauss(oracle::rows_of(x), oracle::rows_of(y), 1.3);
    const auto h = h_matrix(gram_bundle(x, y, GaussianBandwidth::from_sigma(1.3)));
    sigma_err = std::max(sigma_err, std::abs(sigma_h1_hat_sq(h, kDefaultLambda) - oracle::sigma_sq(href, kDefaultLambda)));
    hsic_err = std::max(hsic_err, std::abs(hsic(x, y, GaussianBandwidth::from_sigma(0.7), GaussianBandwidth::from_sigma(1.9)) -
                                           oracle::hsic(oracle::rows_of(x), oracle::rows_of(y), 0.7, 1.9)));
  }

  double grad_err = 0.0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const Sample sx(oracle::random_matrix(16, 2, 70 + seed), oracle::random_matrix(16, 4, 170 + seed));
    const Sample sy(oracle::random_matrix(16, 2, 270 + seed, 0.5), oracle::random_matrix(16, 4, 370 + seed, 0.3));
    auto p = initial_deep_params(sx, sy);
    p.eps0_logit = -0.5 + 0.05 * static_cast<double>(seed);
    const KernelSpec k = DeepKernel{p};
    const auto g = j_hat_with_gradient(sx, sy, k);
    auto theta = kernel_parameters(k);
    for (std::size_t i = 0; i < theta.size(); ++i) {
      auto up = theta, down = theta;
      up[i] += 1e-5;
      down[i] -= 1e-5;
      const double fd = (j_hat(sx, sy, with_kernel_parameters(k, up)).j_hat -
                         j_hat(sx, sy, with_kernel_parameters(k, down)).j_hat) / 2e-5;
      grad_err = std::max(grad_err, std::abs(fd - g.gradient[i]) / std::max(std::abs(fd), 1e-3));
    }
  }
  const bool pass = unbiased && sigma_err <= 1e-12 && hsic_err <= 1e-12 && grad_err <= 1e-4;
  return {pass, "U-stat mean " + fmt("%.2e", mean) + " (3 SE = " + fmt("%.2e", 3 * se) + "); sigma err " +
                    fmt("%.1e", sigma_err) + ", HSIC err " + fmt("%.1e", hsic_err) + "; gradient rel err " +
                    fmt("%.1e", grad_err)};
}

Outcome wild_process() {
  bool pass = true;
  std::string detail;
  for (double l : {0.2, 5.0}) {
    Rng rng = make_stream(4242, static_cast<std::uint64_t>(l * 10));
    const auto w = wild_weights(100000, l, rng);
    const double n = static_cast<double>(w.size());
    double mean = 0.0;
    for (double v : w) mean += v / n;
    double var = 0.0;
    for (double v : w) var += (v - mean) * (v - mean) / (n - 1.0);
    pass = pass && std::abs(var - 1.0) <= 0.05;
    detail += "l=" + fmt("%g", l) + ": var " + fmt("%.3f", var);
    for (std::size_t k : {1u, 2u, 5u}) {
      double num = 0.0;
      for (std::size_t t = 0; t + k < w.size(); ++t) num += (w[t] - mean) * (w[t + k] - mean);
      const double rho = num / (var * (n - 1.0));
      const double target = std::exp(-static_cast<double>(k) / l);
      pass = pass && std::abs(rho - target) <= 0.02;
      detail += ", rho" + std::to_string(k) + " " + fmt("%.4f", rho) + " vs " + fmt("%.4f", target);
    }
    detail += "; ";
  }
  return {pass, detail};
}

Outcome attack_contracts() {
  const ToyWorld world = build_toy_world(ToyWorldConfig{}, 77);
  const auto data = gen_synthetic(world.natural, 500, 78);
  bool inside = true, identical = true;
  std::size_t fgsm_up = 0;
  for (double eps : {0.05, 0.1, 0.2, 0.3}) {
    auto cfg = AttackConfig::pgd_defaults(eps, world.bounds);
    auto rs = cfg;
    rs.random_start = true;
    const auto f = attack_rows(world.model, data.x, data.labels, cfg, AttackKind::Fgsm, 1);
    const auto p = attack_rows(world.model, data.x, data.labels, rs, AttackKind::Pgd, 2);
    for (std::size_t i = 0; i < data.x.rows(); ++i)
      for (std::size_t k = 0; k < data.x.dims(); ++k)
        inside = inside && std::abs(f(i, k) - data.x(i, k)) <= eps && std::abs(p(i, k) - data.x(i, k)) <= eps;
    if (eps == 0.2) {
      for (std::size_t i = 0; i < data.x.rows(); ++i) {
        if (classifier_loss(world.model, f.row(i), data.labels[i]) >
            classifier_loss(world.model, data.x.row(i), data.labels[i]))
          ++fgsm_up;
      }
      AttackConfig one = cfg;
      one.steps = 1;
      one.step_size = eps;
      for (std::size_t i = 0; i < data.x.rows(); ++i) {
        identical = identical && pgd(world.model, data.x.row(i), data.labels[i], one) ==
                                     fgsm(world.model, data.x.row(i), data.labels[i], one);
      }
    }
  }
  const double up = static_cast<double>(fgsm_up) / static_cast<double>(data.x.rows());
  return {inside && identical && up >= 0.9, std::string("inside ball: ") + (inside ? "yes" : "NO") +
                                                "; FGSM loss increase " + fmt("%.3f", up) +
                                                "; one-step PGD == FGSM bitwise: " + (identical ? "yes" : "NO")};
}

Outcome hsic_ordering() {
  int wins = 0;
  std::string detail;
  for (int k = 0; k < kSeeds; ++k) {
    const std::uint64_t seed = kSeedBase + 300 + static_cast<std::uint64_t>(k);
    const ToyWorld world = build_toy_world(ToyWorldConfig{}, seed);
    const auto cfg = AttackConfig::pgd_defaults(0.2, world.bounds);
    // Non-IID: 4 random-start PGD variants for each of 100 base points.
    const auto base = gen_synthetic(world.natural, 100, derive_seed(seed, 1));
    const auto noniid = gen_non_iid(NonIidFlavor::B, base.x, base.labels, world.model, cfg, derive_seed(seed, 2));
    // IID: one random-start PGD variant for each of 400 fresh points.
    const auto fresh = gen_synthetic(world.natural, 400, derive_seed(seed, 3));
    auto rs = cfg;
    rs.random_start = true;
    const auto iid = attack_rows(world.model, fresh.x, fresh.labels, rs, AttackKind::Pgd, derive_seed(seed, 4));
    const auto fn = semantic_features(world.model, noniid), fi = semantic_features(world.model, iid);
    const double a = hsic_dependence_protocol(fn, 100, 100, derive_seed(seed, 5));
    const double b = hsic_dependence_protocol(fi, 100, 100, derive_seed(seed, 5));
    wins += a > b ? 1 : 0;
    detail += fmt(" %.2e", a) + fmt(">%.2e", b) + (a > b ? "" : "*");
  }
  return {wins >= 9, std::to_string(wins) + "/10 seeds non-IID > IID (semantic features):" + detail};
}

Outcome cli_reproducibility() {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / ("sammd_accept_" + std::to_string(::getpid()));
  fs::create_directories(dir);
  auto cli = [](std::vector<std::string> args) {
    args.insert(args.begin(), "sammd");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
    return std::to_string(code) + "\n" + out.str();
  };
  const std::string x = (dir / "x.samf").string(), y = (dir / "y.samf").string(), m = (dir / "m.json").string();
  cli({"experiment", "gen", "--kind", "blobs", "--n", "80", "--out", x, "--seed", "1"});
  cli({"experiment", "gen", "--kind", "attacked", "--n", "80", "--out", y, "--seed", "1"});
  cli({"experiment", "gen", "--kind", "model", "--out", m, "--seed", "1"});
  const std::vector<std::vector<std::string>> invocations{
      {"test", "--x", x, "--y", y, "--method", "sammd", "--seed", "3", "--features", "toy-mlp:" + m},
      {"test", "--x", x, "--y", y, "--method", "mmd-g", "--seed", "3"},
      {"test", "--x", x, "--y", y, "--method", "mmd-o", "--seed", "3"},
      {"test", "--x", x, "--y", y, "--method", "mmd-o-wb", "--seed", "3"},
      {"experiment", "calibrate", "--trials", "8", "--n", "40", "--methods", "sammd,mmd-g,mmd-o,mmd-o-wb"},
      {"experiment", "power", "--axis", "epsilon", "--values", "0.05,0.2", "--trials", "4", "--n", "40"},
      {"experiment", "noniid", "--flavor", "b", "--trials", "4", "--n", "40", "--methods", "sammd,mmd-o-wb"},
      {"experiment", "hsic", "--data", x, "--data", y, "--subset-size", "20", "--repeats", "10"},
      {"experiment", "attack", "--model", m, "--data", x, "--out", (dir / "adv.samf").string(), "--random-start"},
  };
  int same = 0;
  for (const auto& args : invocations) {
    std::vector<std::string> outputs;
    for (const char* threads : {"1", "2", "7"}) {
      ::setenv("SAMMD_THREADS", threads, 1);
      outputs.push_back(cli(args));
    }
    if (outputs[0].rfind("0\n", 0) == 0 && outputs[0] == outputs[1] && outputs[0] == outputs[2]) ++same;
  }
  ::unsetenv("SAMMD_THREADS");
  fs::remove_all(dir);
  const int total = static_cast<int>(invocations.size());
  return {same == total, std::to_string(same) + "/" + std::to_string(total) +
                             " invocations byte-identical under SAMMD_THREADS=1,2,7"};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"type-I calibration on IID null", type_one_calibration},
      {"permutation vs wild bootstrap on dependent null", dependent_contrast},
      {"power ordering on PGD-attacked blobs", power_ordering},
      {"monotone power curves", monotone_power},
      {"mixture behaviour", mixture_behaviour},
      {"estimator oracles", estimator_oracles},
      {"wild bootstrap weight process", wild_process},
      {"attack contracts", attack_contracts},
      {"HSIC ordering non-IID vs IID", hsic_ordering},
      {"CLI reproducibility across thread counts", cli_reproducibility},
  };
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));

  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i + 1);
    if (!selected.empty() && !selected.count(id)) continue;
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::printf("[%2d] %s %s: %s (%.1f s)\n", id, o.pass ? "PASS" : "FAIL", criteria[i].first.c_str(),
                o.detail.c_str(), secs);
    std::fflush(stdout);
    failures += o.pass ? 0 : 1;
  }
  return failures == 0 ? 0 : 1;
}
