#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "sammd/resampling.hpp"
#include "sammd/toymodels.hpp"
#include "sammd/training.hpp"

namespace sammd {

enum class Method { Sammd, MmdG, MmdO, MmdOWb };

std::string method_name(Method m);  // sammd, mmd-g, mmd-o, mmd-o-wb
Method parse_method(const std::string& name);

/// Seeds of the split, the two training runs and the null draws all derive
/// from `seed`; the seed fields inside `train` and `bootstrap` are ignored.
struct TestSpec {
  Method method = Method::Sammd;
  double alpha = 0.05;
  TrainConfig train;
  WildBootstrapConfig bootstrap;
  std::uint64_t seed = 0;
  std::string featurizer_id = "raw";

  void validate() const;
};

/// Row positions (in the caller's samples) behind each phase.
struct RowUsage {
  std::vector<std::size_t> x_train, y_train, x_test, y_test;
};

struct TestResult {
  Method method = Method::Sammd;
  double alpha = 0.05;
  double statistic = 0.0;
  double p_value = 1.0;
  bool reject = false;
  NullDraws null_draws;
  KernelSpec kernel;  // kernel used in the test phase
  std::optional<TrainTrace> trace;
  RowUsage rows;
};

/// Runs every method in `methods` on one pair of samples. All methods share
/// the split; MMD-O and MMD-O+WB share one trained bandwidth. Each method's
/// result equals what a single-method call would return.
/// SAMMD needs `features` on both samples.
std::vector<TestResult> run_tests(const Sample& sx, const Sample& sy, std::span<const Method> methods,
                                  const TestSpec& spec);

TestResult sammd_test(const Sample& sx, const Sample& sy, const TestSpec& spec);
TestResult baseline_test(const Sample& sx, const Sample& sy, const TestSpec& spec);

// ---------------------------------------------------------------------------
// Toy scenarios and the Monte Carlo harness
// ---------------------------------------------------------------------------

struct ToyWorldConfig {
  std::vector<std::vector<double>> centers{{-0.75, 0.0}, {0.75, 0.0}};
  double stddev = 0.25;
  std::size_t train_rows = 1000;
  ClassifierConfig classifier;
};

/// A trained blob classifier (the featurizer), its natural distribution and
/// the attack domain.
struct ToyWorld {
  SyntheticSpec natural;
  LabeledData train;
  ToyClassifier model;
  DomainBounds bounds;
};

ToyWorld build_toy_world(const ToyWorldConfig& cfg, std::uint64_t seed);

enum class ScenarioKind {
  IidGaussian,       // both samples N(0, I)
  DependentGaussian, // both samples gen_dependent_h0
  ToyAttack,         // natural blobs vs PGD-attacked blobs
  NonIidA,           // natural blobs vs FGSM on the classifier's training rows
  NonIidB,           // natural blobs vs 4 PGD restarts per base row
};

std::string scenario_name(ScenarioKind k);
ScenarioKind parse_scenario(const std::string& name);

struct ScenarioSpec {
  ScenarioKind kind = ScenarioKind::IidGaussian;
  std::size_t n = 200;
  double dependence_l = 1.0;    // DependentGaussian
  double epsilon = 0.2;          // attacks
  double natural_fraction = 0.0; // share of S_Y left unattacked (ToyAttack)
};

/// One seeded draw of (S_X, S_Y) with semantic features attached.
std::pair<Sample, Sample> draw_scenario(const ScenarioSpec& scenario, const ToyWorld& world,
                                        std::uint64_t seed);

struct ExperimentRow {
  std::string method;
  std::string condition;
  double value = 0.0;
  std::size_t trials = 0;
  std::size_t rejections = 0;
  double rejection_rate = 0.0;
  double std_error = 0.0;

  bool operator==(const ExperimentRow&) const = default;
};

struct ExperimentReport {
  std::string experiment;
  std::size_t trials = 0;
  std::uint64_t seed = 0;
  double rejection_rate = 0.0;  // pooled over rows
  std::vector<ExperimentRow> rows;

  bool operator==(const ExperimentReport&) const = default;
};

ExperimentRow make_row(std::string method, std::string condition, double value, std::size_t trials,
                       std::size_t rejections);

struct HarnessConfig {
  std::vector<Method> methods{Method::Sammd};
  TestSpec test;
  ToyWorldConfig world;
  std::size_t trials = 100;
  std::uint64_t seed = 0;
};

/// Trial t draws data from stream 2t+1 and tests with stream 2t+2 of the
/// master seed; the toy world uses stream 0.
ExperimentReport run_calibration(const ScenarioSpec& scenario, const HarnessConfig& cfg);

enum class SweepAxis { Epsilon, SetSize, MixtureFraction };
std::string axis_name(SweepAxis a);
SweepAxis parse_axis(const std::string& name);

ExperimentReport run_power_sweep(SweepAxis axis, std::span<const double> values, const ScenarioSpec& scenario,
                                 const HarnessConfig& cfg);

ExperimentReport run_noniid_suite(NonIidFlavor flavor, const ScenarioSpec& scenario, const HarnessConfig& cfg);

/// Offline selection of the wild-bootstrap timescale: type I error of
/// `method` on `scenario` for each l, and the l whose rate is closest to alpha.
struct TimescaleSweep {
  ExperimentReport report;
  double best_l = 0.0;
};
TimescaleSweep sweep_wild_timescale(std::span<const double> ls, Method method, const ScenarioSpec& scenario,
                                    const HarnessConfig& cfg);

}  // namespace sammd
