#include <gtest/gtest.h>

#include <algorithm>
#include <set>

#include "oracles.hpp"
#include "sammd/pipeline.hpp"

using namespace sammd;

namespace {

TestSpec quick_spec(std::uint64_t seed) {
  TestSpec s;
  s.seed = seed;
  s.train.max_iters = 20;
  s.bootstrap.n_perm = 50;
  return s;
}

ToyWorldConfig small_world() {
  ToyWorldConfig w;
  w.train_rows = 300;
  w.classifier.epochs = 20;
  return w;
}

const ToyWorld& world() {
  static const ToyWorld w = build_toy_world(small_world(), 5);
  return w;
}

std::pair<Sample, Sample> shifted_pair(std::size_t n, double shift, std::uint64_t seed) {
  return {Sample(oracle::random_matrix(n, 2, seed), oracle::random_matrix(n, 3, seed + 1)),
          Sample(oracle::random_matrix(n, 2, seed + 2, shift), oracle::random_matrix(n, 3, seed + 3, shift))};
}

const std::vector<Method> kAll{Method::Sammd, Method::MmdG, Method::MmdO, Method::MmdOWb};

}  // namespace

TEST(Methods, NamesRoundTrip) {
  for (Method m : kAll) EXPECT_EQ(parse_method(method_name(m)), m);
  EXPECT_EQ(method_name(Method::MmdOWb), "mmd-o-wb");
  EXPECT_THROW(parse_method("mmd"), InvalidInputError);
  for (auto k : {ScenarioKind::IidGaussian, ScenarioKind::DependentGaussian, ScenarioKind::ToyAttack,
                 ScenarioKind::NonIidA, ScenarioKind::NonIidB})
    EXPECT_EQ(parse_scenario(scenario_name(k)), k);
  for (auto a : {SweepAxis::Epsilon, SweepAxis::SetSize, SweepAxis::MixtureFraction})
    EXPECT_EQ(parse_axis(axis_name(a)), a);
}

TEST(RunTests, DeterministicForFixedSeed) {
  const auto [sx, sy] = shifted_pair(40, 0.3, 1);
  const auto a = run_tests(sx, sy, kAll, quick_spec(7)), b = run_tests(sx, sy, kAll, quick_spec(7));
  ASSERT_EQ(a.size(), 4u);
  for (std::size_t k = 0; k < 4; ++k) {
    EXPECT_EQ(a[k].statistic, b[k].statistic);
    EXPECT_EQ(a[k].null_draws.values, b[k].null_draws.values);
    EXPECT_EQ(a[k].method, kAll[k]);
  }
}

TEST(RunTests, EachMethodMatchesItsSingleCall) {
  const auto [sx, sy] = shifted_pair(40, 0.3, 11);
  const auto spec = quick_spec(3);
  const auto all = run_tests(sx, sy, kAll, spec);
  for (std::size_t k = 0; k < kAll.size(); ++k) {
    const auto one = run_tests(sx, sy, std::span(&kAll[k], 1), spec).front();
    EXPECT_EQ(one.statistic, all[k].statistic);
    EXPECT_EQ(one.p_value, all[k].p_value);
  }
  TestSpec b = spec;
  b.method = Method::MmdO;
  EXPECT_EQ(baseline_test(sx, sy, b).p_value, all[2].p_value);
  EXPECT_EQ(sammd_test(sx, sy, spec).p_value, all[0].p_value);
  EXPECT_THROW(baseline_test(sx, sy, spec), InvalidInputError);
}

TEST(RunTests, TrainAndTestRowsAreDisjoint) {
  const auto [sx, sy] = shifted_pair(41, 0.0, 21);
  const auto r = sammd_test(sx, sy, quick_spec(1));
  std::set<std::size_t> tr(r.rows.x_train.begin(), r.rows.x_train.end());
  for (auto i : r.rows.x_test) EXPECT_FALSE(tr.count(i));
  EXPECT_EQ(r.rows.x_train.size(), 21u);
  EXPECT_EQ(r.rows.x_test.size(), 20u);
  EXPECT_EQ(r.rows.x_test.size(), r.rows.y_test.size());
  ASSERT_TRUE(r.trace.has_value());
  EXPECT_EQ(r.trace->iters.size(), 20u);
  EXPECT_TRUE(std::holds_alternative<DeepKernel>(r.kernel));
}

TEST(RunTests, UnequalSizesAreEqualizedOnTheTestHalf) {
  const Sample sx(oracle::random_matrix(30, 2, 1), oracle::random_matrix(30, 3, 2));
  const Sample sy(oracle::random_matrix(50, 2, 3), oracle::random_matrix(50, 3, 4));
  const auto r = sammd_test(sx, sy, quick_spec(2));
  EXPECT_EQ(r.rows.x_test.size(), 15u);
  EXPECT_EQ(r.rows.y_test.size(), 15u);
  EXPECT_TRUE(std::is_sorted(r.rows.y_test.begin(), r.rows.y_test.end()));
  std::set<std::size_t> tr(r.rows.y_train.begin(), r.rows.y_train.end());
  for (auto i : r.rows.y_test) EXPECT_FALSE(tr.count(i));
}

TEST(RunTests, IdenticalSamplesNeverRejectWithPermutations) {
  const Sample s(oracle::random_matrix(40, 2, 9));
  TestSpec spec = quick_spec(4);
  spec.method = Method::MmdG;
  const auto r = baseline_test(s, s, spec);
  EXPECT_DOUBLE_EQ(r.p_value, 1.0);
  EXPECT_FALSE(r.reject);
}

TEST(RunTests, DetectsLargeShift) {
  const auto [sx, sy] = shifted_pair(100, 2.0, 31);
  for (const auto& r : run_tests(sx, sy, kAll, quick_spec(5))) {
    EXPECT_TRUE(r.reject) << method_name(r.method);
    EXPECT_EQ(r.reject, r.p_value < r.alpha);
  }
}

TEST(RunTests, InputChecks) {
  const auto [sx, sy] = shifted_pair(20, 0.0, 1);
  EXPECT_THROW(sammd_test(Sample(sx.raw), sy, quick_spec(1)), InvalidInputError);
  EXPECT_THROW(run_tests(sx, Sample(oracle::random_matrix(20, 3, 5)), kAll, quick_spec(1)), DimensionError);
  TestSpec bad = quick_spec(1);
  bad.alpha = 1.0;
  EXPECT_THROW(sammd_test(sx, sy, bad), InvalidInputError);
}

TEST(Scenarios, ShapesAndFeatures) {
  for (auto kind : {ScenarioKind::IidGaussian, ScenarioKind::DependentGaussian, ScenarioKind::ToyAttack,
                    ScenarioKind::NonIidA, ScenarioKind::NonIidB}) {
    ScenarioSpec s;
    s.kind = kind;
    s.n = 30;
    const auto [x, y] = draw_scenario(s, world(), 3);
    EXPECT_EQ(x.size(), 30u) << scenario_name(kind);
    EXPECT_EQ(y.size(), 30u) << scenario_name(kind);
    ASSERT_TRUE(y.features.has_value());
    EXPECT_EQ(y.features->dims(), world().model.hidden_dim());
  }
}

TEST(Scenarios, FullyNaturalMixtureIsUnattacked) {
  ScenarioSpec s;
  s.kind = ScenarioKind::ToyAttack;
  s.n = 40;
  s.natural_fraction = 1.0;
  const auto [x, y] = draw_scenario(s, world(), 8);
  s.epsilon = 0.0;
  s.natural_fraction = 0.0;
  const auto [x0, y0] = draw_scenario(s, world(), 8);
  EXPECT_TRUE(y.raw.matrix() == y0.raw.matrix());
  s.natural_fraction = 1.5;
  EXPECT_THROW(draw_scenario(s, world(), 8), InvalidInputError);
}

TEST(Harness, RowsAndRates) {
  HarnessConfig cfg;
  cfg.methods = {Method::MmdG, Method::MmdOWb};
  cfg.test = quick_spec(0);
  cfg.world = small_world();
  cfg.trials = 1;
  cfg.seed = 2;
  ScenarioSpec s;
  s.n = 30;
  const auto rep = run_calibration(s, cfg);
  ASSERT_EQ(rep.rows.size(), 2u);
  for (const auto& r : rep.rows) {
    EXPECT_TRUE(r.rejection_rate == 0.0 || r.rejection_rate == 1.0);
    EXPECT_EQ(r.trials, 1u);
    EXPECT_EQ(r.condition, "iid-gaussian");
  }
  EXPECT_EQ(rep.experiment, "calibrate");

  const std::vector<double> eps{0.0, 0.1, 0.3};
  cfg.methods = {Method::MmdG};
  s.kind = ScenarioKind::ToyAttack;
  const auto sweep = run_power_sweep(SweepAxis::Epsilon, eps, s, cfg);
  ASSERT_EQ(sweep.rows.size(), 3u);
  EXPECT_EQ(sweep.rows[1].condition, "epsilon=0.1");
  EXPECT_DOUBLE_EQ(sweep.rows[2].value, 0.3);
  const std::vector<double> bad{2.5};
  EXPECT_THROW(run_power_sweep(SweepAxis::SetSize, bad, s, cfg), InvalidInputError);
}

TEST(Harness, DeterministicAcrossThreadCounts) {
  HarnessConfig cfg;
  cfg.methods = {Method::MmdG, Method::Sammd};
  cfg.test = quick_spec(0);
  cfg.world = small_world();
  cfg.trials = 6;
  cfg.seed = 4;
  ScenarioSpec s;
  s.kind = ScenarioKind::ToyAttack;
  s.n = 30;
  ::setenv("SAMMD_THREADS", "1", 1);
  const auto a = run_calibration(s, cfg);
  ::setenv("SAMMD_THREADS", "4", 1);
  const auto b = run_calibration(s, cfg);
  ::unsetenv("SAMMD_THREADS");
  EXPECT_EQ(a, b);
}

TEST(Harness, MakeRowStandardError) {
  const auto r = make_row("sammd", "c", 0.0, 100, 25);
  EXPECT_DOUBLE_EQ(r.rejection_rate, 0.25);
  EXPECT_NEAR(r.std_error, std::sqrt(0.25 * 0.75 / 100), 1e-15);
  EXPECT_THROW(make_row("m", "c", 0, 0, 0), InvalidInputError);
  EXPECT_THROW(make_row("m", "c", 0, 3, 4), InvalidInputError);
}

TEST(Harness, TimescaleSweepPicksClosestRate) {
  HarnessConfig cfg;
  cfg.test = quick_spec(0);
  cfg.world = small_world();
  cfg.trials = 4;
  ScenarioSpec s;
  s.kind = ScenarioKind::DependentGaussian;
  s.n = 30;
  const std::vector<double> ls{0.5, 4.0};
  const auto sw = sweep_wild_timescale(ls, Method::MmdOWb, s, cfg);
  ASSERT_EQ(sw.report.rows.size(), 2u);
  double best_gap = 2.0, best = 0.0;
  for (const auto& r : sw.report.rows) {
    if (std::abs(r.rejection_rate - 0.05) < best_gap) {
      best_gap = std::abs(r.rejection_rate - 0.05);
      best = r.value;
    }
  }
  EXPECT_DOUBLE_EQ(sw.best_l, best);
}
