#include "sammd/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>

namespace sammd {

std::string method_name(Method m) {
  switch (m) {
    case Method::Sammd: return "sammd";
    case Method::MmdG: return "mmd-g";
    case Method::MmdO: return "mmd-o";
    case Method::MmdOWb: return "mmd-o-wb";
  }
  throw InvalidInputError("unknown method");
}

Method parse_method(const std::string& name) {
  for (Method m : {Method::Sammd, Method::MmdG, Method::MmdO, Method::MmdOWb}) {
    if (method_name(m) == name) return m;
  }
  throw InvalidInputError("unknown method '" + name + "'");
}

void TestSpec::validate() const {
  if (!(alpha > 0.0 && alpha < 1.0)) throw InvalidInputError("alpha must lie in (0, 1)");
  train.validate();
  bootstrap.validate();
}

namespace {

// Seed streams of a single test.
constexpr std::uint64_t kSplitStream = 0;
constexpr std::uint64_t kEqualizeStream = 1;
constexpr std::uint64_t kDeepTrainStream = 2;
constexpr std::uint64_t kGaussTrainStream = 3;
constexpr std::uint64_t kNullStream = 4;

void equalize(Sample& a, std::vector<std::size_t>& a_rows, std::size_t target, Rng& rng) {
  if (a.size() == target) return;
  auto keep = sample_without_replacement(a.size(), target, rng);
  std::sort(keep.begin(), keep.end());
  a = a.select_rows(keep);
  std::vector<std::size_t> rows;
  rows.reserve(keep.size());
  for (std::size_t k : keep) rows.push_back(a_rows[k]);
  a_rows = std::move(rows);
}

TestResult finish(Method method, const TestSpec& spec, NullDraws draws, KernelSpec kernel,
                  std::optional<TrainTrace> trace, const RowUsage& rows) {
  TestResult r;
  r.method = method;
  r.alpha = spec.alpha;
  r.statistic = draws.observed;
  r.p_value = p_value(draws);
  r.reject = r.p_value < spec.alpha;
  r.null_draws = std::move(draws);
  r.kernel = std::move(kernel);
  r.trace = std::move(trace);
  r.rows = rows;
  return r;
}

}  // namespace

std::vector<TestResult> run_tests(const Sample& sx, const Sample& sy, std::span<const Method> methods,
                                  const TestSpec& spec) {
  spec.validate();
  if (sx.raw.dims() != sy.raw.dims()) throw DimensionError("samples differ in input width");

  Rng split_rng = make_stream(spec.seed, kSplitStream);
  DataSplit split = split_data(sx, sy, spec.train.split_fraction, split_rng);

  // The estimator is defined for n = m: subsample the larger test half.
  Rng eq_rng = make_stream(spec.seed, kEqualizeStream);
  const std::size_t m = std::min(split.x_test.size(), split.y_test.size());
  equalize(split.x_test, split.x_test_rows, m, eq_rng);
  equalize(split.y_test, split.y_test_rows, m, eq_rng);
  if (split.x_test.size() != split.y_test.size()) throw UnequalSampleError("test halves could not be equalized");

  const RowUsage rows{split.x_train_rows, split.y_train_rows, split.x_test_rows, split.y_test_rows};
  const std::uint64_t null_seed = derive_seed(spec.seed, kNullStream);
  WildBootstrapConfig wb = spec.bootstrap;
  wb.seed = null_seed;

  std::optional<TrainTrace> gauss_trace;
  auto trained_gaussian = [&]() -> const TrainTrace& {
    if (!gauss_trace) {
      TrainConfig tc = spec.train;
      tc.seed = derive_seed(spec.seed, kGaussTrainStream);
      const GaussianKernel init{median_heuristic(split.x_train.raw, split.y_train.raw)};
      gauss_trace = train_kernel(split.x_train, split.y_train, init, tc);
    }
    return *gauss_trace;
  };

  std::vector<TestResult> out;
  out.reserve(methods.size());
  for (Method method : methods) {
    switch (method) {
      case Method::Sammd: {
        if (!sx.features || !sy.features) throw InvalidInputError("SAMMD needs semantic features for both samples");
        TrainConfig tc = spec.train;
        tc.seed = derive_seed(spec.seed, kDeepTrainStream);
        const DeepKernel init{initial_deep_params(split.x_train, split.y_train, spec.featurizer_id)};
        TrainTrace trace = train_kernel(split.x_train, split.y_train, init, tc);
        auto draws = wild_bootstrap_null(gram_bundle(split.x_test, split.y_test, trace.final_kernel), wb,
                                         split.x_test_rows, split.y_test_rows);
        KernelSpec kernel = trace.final_kernel;
        out.push_back(finish(method, spec, std::move(draws), std::move(kernel), std::move(trace), rows));
        break;
      }
      case Method::MmdG: {
        const KernelSpec kernel = GaussianKernel{median_heuristic(split.x_train.raw, split.y_train.raw)};
        auto draws = permutation_null(split.x_test, split.y_test, kernel, spec.bootstrap.n_perm, null_seed);
        out.push_back(finish(method, spec, std::move(draws), kernel, std::nullopt, rows));
        break;
      }
      case Method::MmdO: {
        const auto& trace = trained_gaussian();
        auto draws = permutation_null(split.x_test, split.y_test, trace.final_kernel, spec.bootstrap.n_perm, null_seed);
        out.push_back(finish(method, spec, std::move(draws), trace.final_kernel, trace, rows));
        break;
      }
      case Method::MmdOWb: {
        const auto& trace = trained_gaussian();
        auto draws = wild_bootstrap_null(gram_bundle(split.x_test, split.y_test, trace.final_kernel), wb,
                                         split.x_test_rows, split.y_test_rows);
        out.push_back(finish(method, spec, std::move(draws), trace.final_kernel, trace, rows));
        break;
      }
    }
  }
  return out;
}

TestResult sammd_test(const Sample& sx, const Sample& sy, const TestSpec& spec) {
  const Method m = Method::Sammd;
  return std::move(run_tests(sx, sy, std::span(&m, 1), spec).front());
}

TestResult baseline_test(const Sample& sx, const Sample& sy, const TestSpec& spec) {
  if (spec.method == Method::Sammd) throw InvalidInputError("baseline_test needs a baseline method");
  return std::move(run_tests(sx, sy, std::span(&spec.method, 1), spec).front());
}

// ---------------------------------------------------------------------------

ToyWorld build_toy_world(const ToyWorldConfig& cfg, std::uint64_t seed) {
  SyntheticSpec natural = SyntheticSpec::blobs(cfg.centers, cfg.stddev);
  LabeledData train = gen_synthetic(natural, cfg.train_rows, derive_seed(seed, 0));
  ClassifierConfig cc = cfg.classifier;
  cc.seed = derive_seed(seed, 1);
  ToyClassifier model = train_toy_classifier(train.x, train.labels, cc);
  DomainBounds bounds = bounds_of(train.x);
  return ToyWorld{std::move(natural), std::move(train), std::move(model), std::move(bounds)};
}

std::string scenario_name(ScenarioKind k) {
  switch (k) {
    case ScenarioKind::IidGaussian: return "iid-gaussian";
    case ScenarioKind::DependentGaussian: return "dependent-gaussian";
    case ScenarioKind::ToyAttack: return "toy-attack";
    case ScenarioKind::NonIidA: return "noniid-a";
    case ScenarioKind::NonIidB: return "noniid-b";
  }
  throw InvalidInputError("unknown scenario");
}

ScenarioKind parse_scenario(const std::string& name) {
  for (auto k : {ScenarioKind::IidGaussian, ScenarioKind::DependentGaussian, ScenarioKind::ToyAttack,
                 ScenarioKind::NonIidA, ScenarioKind::NonIidB}) {
    if (scenario_name(k) == name) return k;
  }
  throw InvalidInputError("unknown scenario '" + name + "'");
}

namespace {

Sample featurize(const ToyWorld& world, FeatureMatrix x) {
  FeatureMatrix f = semantic_features(world.model, x);
  return Sample(std::move(x), std::move(f));
}

// The attack domain covers the classifier's training rows and the rows under attack.
DomainBounds domain_for(const ToyWorld& world, const FeatureMatrix& rows) {
  DomainBounds b = world.bounds;
  const DomainBounds r = bounds_of(rows);
  for (std::size_t k = 0; k < b.lower.size(); ++k) {
    b.lower[k] = std::min(b.lower[k], r.lower[k]);
    b.upper[k] = std::max(b.upper[k], r.upper[k]);
  }
  return b;
}

}  // namespace

std::pair<Sample, Sample> draw_scenario(const ScenarioSpec& scenario, const ToyWorld& world, std::uint64_t seed) {
  const std::size_t n = scenario.n;
  const std::size_t d = world.model.input_dim();
  const std::vector<double> origin(d, 0.0);
  switch (scenario.kind) {
    case ScenarioKind::IidGaussian: {
      const auto spec = SyntheticSpec::gaussian(origin, 1.0);
      return {featurize(world, gen_synthetic(spec, n, derive_seed(seed, 0)).x),
              featurize(world, gen_synthetic(spec, n, derive_seed(seed, 1)).x)};
    }
    case ScenarioKind::DependentGaussian:
      return {featurize(world, gen_dependent_h0(n, scenario.dependence_l, origin, 1.0, derive_seed(seed, 0))),
              featurize(world, gen_dependent_h0(n, scenario.dependence_l, origin, 1.0, derive_seed(seed, 1)))};
    case ScenarioKind::ToyAttack: {
      if (!(scenario.natural_fraction >= 0.0 && scenario.natural_fraction <= 1.0)) {
        throw InvalidInputError("natural_fraction must lie in [0, 1]");
      }
      FeatureMatrix x = gen_synthetic(world.natural, n, derive_seed(seed, 0)).x;
      const LabeledData y_nat = gen_synthetic(world.natural, n, derive_seed(seed, 1));
      const auto keep = static_cast<std::size_t>(std::floor(scenario.natural_fraction * static_cast<double>(n) + 0.5));
      const auto cfg = AttackConfig::pgd_defaults(scenario.epsilon, domain_for(world, y_nat.x));
      const FeatureMatrix attacked =
          attack_rows(world.model, y_nat.x, y_nat.labels, cfg, AttackKind::Pgd, derive_seed(seed, 2));
      RowMatrix y = attacked.matrix();
      for (std::size_t i = 0; i < keep; ++i) {
        y.row(static_cast<Eigen::Index>(i)) = y_nat.x.matrix().row(static_cast<Eigen::Index>(i));
      }
      std::vector<std::size_t> order(n);
      std::iota(order.begin(), order.end(), std::size_t{0});
      Rng rng = make_stream(seed, 3);
      std::shuffle(order.begin(), order.end(), rng);
      return {featurize(world, std::move(x)), featurize(world, FeatureMatrix(std::move(y)).select_rows(order))};
    }
    case ScenarioKind::NonIidA: {
      if (world.train.x.rows() < n) throw InvalidInputError("toy world has fewer training rows than n");
      FeatureMatrix x = gen_synthetic(world.natural, n, derive_seed(seed, 0)).x;
      Rng rng = make_stream(seed, 1);
      auto pick = sample_without_replacement(world.train.x.rows(), n, rng);
      std::sort(pick.begin(), pick.end());
      std::vector<int> labels;
      labels.reserve(n);
      for (std::size_t i : pick) labels.push_back(world.train.labels[i]);
      const FeatureMatrix base = world.train.x.select_rows(pick);
      AttackConfig cfg = AttackConfig::pgd_defaults(scenario.epsilon, domain_for(world, base));
      return {featurize(world, std::move(x)),
              featurize(world, gen_non_iid(NonIidFlavor::A, base, labels, world.model, cfg, derive_seed(seed, 2)))};
    }
    case ScenarioKind::NonIidB: {
      FeatureMatrix x = gen_synthetic(world.natural, n, derive_seed(seed, 0)).x;
      const std::size_t base_rows = (n + kVariantsPerPoint - 1) / kVariantsPerPoint;
      const LabeledData base = gen_synthetic(world.natural, base_rows, derive_seed(seed, 1));
      AttackConfig cfg = AttackConfig::pgd_defaults(scenario.epsilon, domain_for(world, base.x));
      FeatureMatrix y = gen_non_iid(NonIidFlavor::B, base.x, base.labels, world.model, cfg, derive_seed(seed, 2));
      std::vector<std::size_t> first(n);
      std::iota(first.begin(), first.end(), std::size_t{0});
      return {featurize(world, std::move(x)), featurize(world, y.select_rows(first))};
    }
  }
  throw InvalidInputError("unknown scenario");
}

ExperimentRow make_row(std::string method, std::string condition, double value, std::size_t trials,
                       std::size_t rejections) {
  if (trials < 1) throw InvalidInputError("a report row needs at least one trial");
  if (rejections > trials) throw InvalidInputError("more rejections than trials");
  const double p = static_cast<double>(rejections) / static_cast<double>(trials);
  return ExperimentRow{std::move(method), std::move(condition), value, trials, rejections, p,
                       std::sqrt(p * (1.0 - p) / static_cast<double>(trials))};
}

namespace {

std::string format_value(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

std::vector<ExperimentRow> run_condition(const ScenarioSpec& scenario, const HarnessConfig& cfg, const ToyWorld& world,
                                         const std::string& condition, double value) {
  if (cfg.trials < 1) throw InvalidInputError("trials must be at least 1");
  if (cfg.methods.empty()) throw InvalidInputError("at least one method is required");
  cfg.test.validate();
  std::vector<std::vector<char>> rejected(cfg.trials, std::vector<char>(cfg.methods.size(), 0));
  parallel_for(cfg.trials, [&](std::size_t t) {
    const auto [sx, sy] = draw_scenario(scenario, world, derive_seed(cfg.seed, 2 * t + 1));
    TestSpec spec = cfg.test;
    spec.seed = derive_seed(cfg.seed, 2 * t + 2);
    const auto results = run_tests(sx, sy, cfg.methods, spec);
    for (std::size_t k = 0; k < results.size(); ++k) rejected[t][k] = results[k].reject ? 1 : 0;
  });
  std::vector<ExperimentRow> rows;
  for (std::size_t k = 0; k < cfg.methods.size(); ++k) {
    std::size_t hits = 0;
    for (const auto& r : rejected) hits += static_cast<std::size_t>(r[k]);
    rows.push_back(make_row(method_name(cfg.methods[k]), condition, value, cfg.trials, hits));
  }
  return rows;
}

ExperimentReport assemble(std::string experiment, const HarnessConfig& cfg, std::vector<ExperimentRow> rows) {
  ExperimentReport rep;
  rep.experiment = std::move(experiment);
  rep.trials = cfg.trials;
  rep.seed = cfg.seed;
  std::size_t hits = 0, total = 0;
  for (const auto& r : rows) {
    hits += r.rejections;
    total += r.trials;
  }
  rep.rejection_rate = total == 0 ? 0.0 : static_cast<double>(hits) / static_cast<double>(total);
  rep.rows = std::move(rows);
  return rep;
}

}  // namespace

ExperimentReport run_calibration(const ScenarioSpec& scenario, const HarnessConfig& cfg) {
  const ToyWorld world = build_toy_world(cfg.world, derive_seed(cfg.seed, 0));
  return assemble("calibrate", cfg, run_condition(scenario, cfg, world, scenario_name(scenario.kind), 0.0));
}

std::string axis_name(SweepAxis a) {
  switch (a) {
    case SweepAxis::Epsilon: return "epsilon";
    case SweepAxis::SetSize: return "set_size";
    case SweepAxis::MixtureFraction: return "mixture";
  }
  throw InvalidInputError("unknown axis");
}

SweepAxis parse_axis(const std::string& name) {
  for (auto a : {SweepAxis::Epsilon, SweepAxis::SetSize, SweepAxis::MixtureFraction}) {
    if (axis_name(a) == name) return a;
  }
  throw InvalidInputError("unknown axis '" + name + "'");
}

ExperimentReport run_power_sweep(SweepAxis axis, std::span<const double> values, const ScenarioSpec& scenario,
                                 const HarnessConfig& cfg) {
  if (values.empty()) throw InvalidInputError("power sweep needs at least one axis value");
  const ToyWorld world = build_toy_world(cfg.world, derive_seed(cfg.seed, 0));
  std::vector<ExperimentRow> rows;
  for (double v : values) {
    ScenarioSpec s = scenario;
    switch (axis) {
      case SweepAxis::Epsilon: s.epsilon = v; break;
      case SweepAxis::SetSize:
        if (!(v >= 1.0) || v != std::floor(v)) throw InvalidInputError("set sizes must be positive integers");
        s.n = static_cast<std::size_t>(v);
        break;
      case SweepAxis::MixtureFraction: s.natural_fraction = v; break;
    }
    auto part = run_condition(s, cfg, world, axis_name(axis) + "=" + format_value(v), v);
    rows.insert(rows.end(), part.begin(), part.end());
  }
  return assemble("power", cfg, std::move(rows));
}

ExperimentReport run_noniid_suite(NonIidFlavor flavor, const ScenarioSpec& scenario, const HarnessConfig& cfg) {
  ScenarioSpec s = scenario;
  s.kind = flavor == NonIidFlavor::A ? ScenarioKind::NonIidA : ScenarioKind::NonIidB;
  const ToyWorld world = build_toy_world(cfg.world, derive_seed(cfg.seed, 0));
  return assemble("noniid", cfg, run_condition(s, cfg, world, scenario_name(s.kind), s.epsilon));
}

TimescaleSweep sweep_wild_timescale(std::span<const double> ls, Method method, const ScenarioSpec& scenario,
                                    const HarnessConfig& cfg) {
  if (ls.empty()) throw InvalidInputError("timescale sweep needs at least one l");
  const ToyWorld world = build_toy_world(cfg.world, derive_seed(cfg.seed, 0));
  HarnessConfig c = cfg;
  c.methods = {method};
  std::vector<ExperimentRow> rows;
  TimescaleSweep out;
  double best_gap = std::numeric_limits<double>::infinity();
  for (double l : ls) {
    c.test.bootstrap.l = l;
    auto part = run_condition(scenario, c, world, "l=" + format_value(l), l);
    const double gap = std::abs(part.front().rejection_rate - cfg.test.alpha);
    if (gap < best_gap) {
      best_gap = gap;
      out.best_l = l;
    }
    rows.insert(rows.end(), part.begin(), part.end());
  }
  out.report = assemble("wild-timescale", c, std::move(rows));
  return out;
}

}  // namespace sammd
