#include "sammd/cli.hpp"

#include <chrono>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "sammd/io.hpp"
#include "sammd/pipeline.hpp"

namespace sammd {

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct TestOptions {
  double alpha = 0.05;
  std::uint64_t seed = 0;
  std::size_t n_perm = 200;
  double l = 0.2;
  double lr = 2e-4;
  std::size_t iters = 300;
  double lambda = kDefaultLambda;
  std::size_t minibatch = 64;
  double split = 0.5;
};

void add_test_options(CLI::App& app, TestOptions& o) {
  app.add_option("--alpha", o.alpha, "significance level")->capture_default_str();
  app.add_option("--seed", o.seed, "master seed")->capture_default_str();
  app.add_option("--n-perm", o.n_perm, "null draws")->capture_default_str();
  app.add_option("--l", o.l, "wild bootstrap timescale")->capture_default_str();
  app.add_option("--lr", o.lr, "Adam learning rate")->capture_default_str();
  app.add_option("--iters", o.iters, "training iterations")->capture_default_str();
  app.add_option("--lambda", o.lambda, "variance regularizer")->capture_default_str();
  app.add_option("--minibatch", o.minibatch, "training minibatch size")->capture_default_str();
  app.add_option("--split", o.split, "training fraction of each sample")->capture_default_str();
}

TestSpec make_spec(const TestOptions& o, Method method, std::string featurizer) {
  TestSpec s;
  s.method = method;
  s.alpha = o.alpha;
  s.seed = o.seed;
  s.train.learning_rate = o.lr;
  s.train.max_iters = o.iters;
  s.train.lambda = o.lambda;
  s.train.minibatch_size = o.minibatch;
  s.train.split_fraction = o.split;
  s.bootstrap.l = o.l;
  s.bootstrap.n_perm = o.n_perm;
  s.featurizer_id = std::move(featurizer);
  try {
    s.validate();
  } catch (const InvalidInputError& e) {
    throw UsageError(e.what());
  }
  return s;
}

Method method_arg(const std::string& name) {
  try {
    return parse_method(name);
  } catch (const InvalidInputError& e) {
    throw UsageError(e.what());
  }
}

std::vector<Method> methods_arg(const std::vector<std::string>& names) {
  if (names.empty()) throw UsageError("--methods needs at least one method");
  std::vector<Method> out;
  for (const auto& n : names) out.push_back(method_arg(n));
  return out;
}

void write_matrix(const std::filesystem::path& path, const FeatureMatrix& m) {
  if (guess_format(path) == FileFormat::Csv) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw Error("cannot write " + path.string());
    write_csv(out, m);
  } else {
    write_samf(path, m);
  }
}

// --features raw | file:<x-path>,<y-path> | toy-mlp:<model-path>
std::pair<Sample, Sample> attach_features(const std::string& spec, FeatureMatrix x, FeatureMatrix y) {
  if (spec == "raw") {
    FeatureMatrix fx = x, fy = y;
    return {Sample(std::move(x), std::move(fx)), Sample(std::move(y), std::move(fy))};
  }
  if (spec.rfind("file:", 0) == 0) {
    const std::string rest = spec.substr(5);
    const auto comma = rest.find(',');
    if (comma == std::string::npos || comma == 0 || comma + 1 == rest.size()) {
      throw UsageError("--features file: needs two paths, file:<x-features>,<y-features>");
    }
    FeatureMatrix fx = ingest(rest.substr(0, comma));
    FeatureMatrix fy = ingest(rest.substr(comma + 1));
    if (fx.rows() != x.rows() || fy.rows() != y.rows()) {
      throw DimensionError("feature files must have one row per input row");
    }
    return {Sample(std::move(x), std::move(fx)), Sample(std::move(y), std::move(fy))};
  }
  if (spec.rfind("toy-mlp:", 0) == 0) {
    const ToyClassifier model = load_classifier(spec.substr(8));
    FeatureMatrix fx = semantic_features(model, x);
    FeatureMatrix fy = semantic_features(model, y);
    return {Sample(std::move(x), std::move(fx)), Sample(std::move(y), std::move(fy))};
  }
  throw UsageError("--features must be raw, file:<x>,<y> or toy-mlp:<model>");
}

void emit(std::ostream& out, const nlohmann::ordered_json& j) { out << j.dump(2) << '\n'; }

// ---------------------------------------------------------------------------

struct TestCommand {
  std::string x_path, y_path, method = "sammd", features = "raw";
  bool timing = false;
  TestOptions opts;

  void attach(CLI::App& root) {
    auto* c = root.add_subcommand("test", "run one two-sample test and print a JSON report");
    c->add_option("--x", x_path, "S_X file (SAMF, or CSV by .csv extension)")->required();
    c->add_option("--y", y_path, "S_Y file")->required();
    c->add_option("--method", method, "sammd | mmd-g | mmd-o | mmd-o-wb")->capture_default_str();
    c->add_option("--features", features, "raw | file:<x>,<y> | toy-mlp:<model.json>")->capture_default_str();
    c->add_flag("--timing", timing, "include wall-clock seconds in the report");
    add_test_options(*c, opts);
    c->callback([this, c] { cmd = c; });
  }

  int run(std::ostream& out) {
    const Method m = method_arg(method);
    const TestSpec spec = make_spec(opts, m, features);
    FeatureMatrix x = ingest(x_path);
    FeatureMatrix y = ingest(y_path);
    if (x.dims() != y.dims()) throw DimensionError("S_X and S_Y differ in width");
    const RunParameters params{x_path,  y_path,  x.rows(),     y.rows(),  x.dims(),
                               opts.alpha, opts.seed, opts.n_perm, opts.l, features,
                               opts.lr, opts.iters, opts.lambda, opts.minibatch, opts.split};
    auto [sx, sy] = attach_features(features, std::move(x), std::move(y));
    const auto start = std::chrono::steady_clock::now();
    const TestResult result = m == Method::Sammd ? sammd_test(sx, sy, spec) : baseline_test(sx, sy, spec);
    RunReport report = RunReport::from_result(result, params);
    if (timing) {
      report.wall_clock_seconds =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    }
    emit(out, to_json(report));
    return kExitOk;
  }

  CLI::App* cmd = nullptr;
};

struct HarnessOptions {
  std::vector<std::string> methods{"sammd"};
  std::size_t trials = 100;
  std::size_t n = 200;
  double epsilon = 0.2;
  double dependence_l = ScenarioSpec{}.dependence_l;
  double blob_sd = ToyWorldConfig{}.stddev;
  std::string csv;
  TestOptions test;

  void attach(CLI::App& app) {
    app.add_option("--methods", methods, "comma-separated methods")->delimiter(',')->capture_default_str();
    app.add_option("--trials", trials, "Monte Carlo trials per condition")->capture_default_str();
    app.add_option("--n", n, "rows per sample")->capture_default_str();
    app.add_option("--epsilon", epsilon, "attack radius")->capture_default_str();
    app.add_option("--dependence-l", dependence_l, "timescale of dependent H0 data")->capture_default_str();
    app.add_option("--blob-sd", blob_sd, "blob standard deviation of the toy world")->capture_default_str();
    app.add_option("--csv", csv, "write curve points to this CSV file");
    add_test_options(app, test);
  }

  HarnessConfig config() const {
    if (trials < 1) throw UsageError("--trials must be at least 1");
    HarnessConfig c;
    c.methods = methods_arg(methods);
    c.test = make_spec(test, c.methods.front(), "toy-mlp");
    c.world.stddev = blob_sd;
    c.trials = trials;
    c.seed = test.seed;
    return c;
  }

  ScenarioSpec scenario(ScenarioKind kind) const {
    ScenarioSpec s;
    s.kind = kind;
    s.n = n;
    s.epsilon = epsilon;
    s.dependence_l = dependence_l;
    return s;
  }

  void finish(std::ostream& out, const ExperimentReport& report) const { finish(out, report, to_json(report)); }

  void finish(std::ostream& out, const ExperimentReport& report, const nlohmann::ordered_json& j) const {
    emit(out, j);
    if (!csv.empty()) {
      std::ofstream f(csv, std::ios::trunc);
      if (!f) throw Error("cannot write " + csv);
      write_curve_csv(f, report);
    }
  }
};

std::vector<double> parse_values(const std::vector<std::string>& raw, const std::string& flag = "--values") {
  std::vector<double> out;
  for (const auto& s : raw) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(s, &used));
      if (used != s.size()) throw std::invalid_argument(s);
    } catch (const std::exception&) {
      throw UsageError(flag + ": not a number: '" + s + "'");
    }
  }
  if (out.empty()) throw UsageError(flag + " needs at least one value");
  return out;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Kernel two-sample tests for adversarial-data detection", "sammd"};
  app.require_subcommand(1);

  TestCommand test;
  test.attach(app);

  auto* experiment = app.add_subcommand("experiment", "Monte Carlo harness and data utilities");
  experiment->require_subcommand(1);

  std::string scenario = "iid-gaussian";
  HarnessOptions calib;
  auto* calibrate = experiment->add_subcommand("calibrate", "type I error under a null scenario");
  calibrate->add_option("--scenario", scenario, "iid-gaussian | dependent-gaussian | toy-attack")
      ->capture_default_str();
  std::vector<std::string> sweep_l;
  calibrate->add_option("--sweep-l", sweep_l, "choose the wild timescale: comma-separated candidates, first method only")
      ->delimiter(',');
  calib.attach(*calibrate);

  HarnessOptions power_opts;
  std::string axis = "epsilon";
  std::vector<std::string> values;
  double natural_fraction = 0.0;
  auto* power = experiment->add_subcommand("power", "rejection rate along an axis");
  power->add_option("--axis", axis, "epsilon | set_size | mixture")->capture_default_str();
  power->add_option("--values", values, "comma-separated axis values")->delimiter(',')->required();
  power->add_option("--natural-fraction", natural_fraction, "share of S_Y left unattacked")->capture_default_str();
  power_opts.attach(*power);

  HarnessOptions noniid_opts;
  std::string flavor = "b";
  auto* noniid = experiment->add_subcommand("noniid", "power on non-IID adversarial data");
  noniid->add_option("--flavor", flavor, "a | b")->capture_default_str();
  noniid_opts.attach(*noniid);

  std::vector<std::string> hsic_paths;
  std::size_t subset = 50, repeats = 100, bw_rows = 1000;
  std::uint64_t hsic_seed = 0;
  auto* hsic_cmd = experiment->add_subcommand("hsic", "HSIC dependence score of data files");
  hsic_cmd->add_option("--data", hsic_paths, "data file (repeatable)")->required();
  hsic_cmd->add_option("--subset-size", subset, "rows per subset")->capture_default_str();
  hsic_cmd->add_option("--repeats", repeats, "subset pairs averaged")->capture_default_str();
  hsic_cmd->add_option("--bandwidth-rows", bw_rows, "rows used by the median heuristic")->capture_default_str();
  hsic_cmd->add_option("--seed", hsic_seed, "seed")->capture_default_str();

  std::string model_path, data_path, attack_out, attack_kind = "pgd";
  double attack_eps = 0.1, attack_step = -1.0;
  std::size_t attack_steps = 20;
  bool random_start = false;
  std::uint64_t attack_seed = 0;
  auto* attack = experiment->add_subcommand("attack", "FGSM/PGD on a toy classifier (labels = its predictions)");
  attack->add_option("--model", model_path, "toy-mlp JSON model")->required();
  attack->add_option("--data", data_path, "input rows")->required();
  attack->add_option("--out", attack_out, "adversarial rows (SAMF, or CSV by extension)")->required();
  attack->add_option("--kind", attack_kind, "fgsm | pgd")->capture_default_str();
  attack->add_option("--epsilon", attack_eps, "L-infinity radius")->capture_default_str();
  attack->add_option("--steps", attack_steps, "PGD steps")->capture_default_str();
  attack->add_option("--step-size", attack_step, "PGD step (default epsilon / 10)");
  attack->add_flag("--random-start", random_start, "PGD random start inside the ball");
  attack->add_option("--seed", attack_seed, "seed for random starts")->capture_default_str();

  std::string gen_kind = "gaussian", gen_out, labels_out;
  std::size_t gen_n = 200, gen_dims = 2;
  double gen_l = ScenarioSpec{}.dependence_l, gen_eps = 0.2, gen_sd = ToyWorldConfig{}.stddev;
  std::uint64_t gen_seed = 0;
  auto* gen = experiment->add_subcommand("gen", "write synthetic data or a trained toy model");
  gen->add_option("--kind", gen_kind, "gaussian | blobs | dependent | attacked | noniid-b | model")
      ->capture_default_str();
  gen->add_option("--out", gen_out, "output file")->required();
  gen->add_option("--labels-out", labels_out, "CSV of labels (blobs, attacked)");
  gen->add_option("--n", gen_n, "rows")->capture_default_str();
  gen->add_option("--dims", gen_dims, "dimensions (gaussian, dependent)")->capture_default_str();
  gen->add_option("--l", gen_l, "dependence timescale")->capture_default_str();
  gen->add_option("--epsilon", gen_eps, "attack radius")->capture_default_str();
  gen->add_option("--blob-sd", gen_sd, "blob standard deviation")->capture_default_str();
  gen->add_option("--seed", gen_seed, "seed (the toy world is built from it)")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    if (code == 0) return kExitOk;
    err << app.help();
    return kExitUsage;
  }

  try {
    if (test.cmd != nullptr) return test.run(out);

    if (calibrate->parsed()) {
      const auto kind = [&] {
        try {
          return parse_scenario(scenario);
        } catch (const InvalidInputError& e) {
          throw UsageError(e.what());
        }
      }();
      if (!sweep_l.empty()) {
        const auto ls = parse_values(sweep_l, "--sweep-l");
        const HarnessConfig cfg = calib.config();
        const auto sweep = sweep_wild_timescale(ls, cfg.methods.front(), calib.scenario(kind), cfg);
        auto j = to_json(sweep.report);
        j["best_l"] = sweep.best_l;
        calib.finish(out, sweep.report, j);
        return kExitOk;
      }
      calib.finish(out, run_calibration(calib.scenario(kind), calib.config()));
      return kExitOk;
    }
    if (power->parsed()) {
      SweepAxis a{};
      try {
        a = parse_axis(axis);
      } catch (const InvalidInputError& e) {
        throw UsageError(e.what());
      }
      const auto v = parse_values(values);
      ScenarioSpec s = power_opts.scenario(ScenarioKind::ToyAttack);
      s.natural_fraction = natural_fraction;
      power_opts.finish(out, run_power_sweep(a, v, s, power_opts.config()));
      return kExitOk;
    }
    if (noniid->parsed()) {
      if (flavor != "a" && flavor != "b") throw UsageError("--flavor must be a or b");
      const auto f = flavor == "a" ? NonIidFlavor::A : NonIidFlavor::B;
      noniid_opts.finish(out, run_noniid_suite(f, noniid_opts.scenario(ScenarioKind::NonIidB), noniid_opts.config()));
      return kExitOk;
    }
    if (hsic_cmd->parsed()) {
      nlohmann::ordered_json scores = nlohmann::ordered_json::array();
      for (const auto& p : hsic_paths) {
        const FeatureMatrix data = ingest(p);
        scores.push_back({{"path", p},
                          {"rows", data.rows()},
                          {"score", hsic_dependence_protocol(data, subset, repeats, hsic_seed, bw_rows)}});
      }
      emit(out, {{"report", "sammd-hsic"},
                 {"version", 1},
                 {"subset_size", subset},
                 {"repeats", repeats},
                 {"seed", hsic_seed},
                 {"scores", scores}});
      return kExitOk;
    }
    if (attack->parsed()) {
      if (attack_kind != "fgsm" && attack_kind != "pgd") throw UsageError("--kind must be fgsm or pgd");
      const ToyClassifier model = load_classifier(model_path);
      const FeatureMatrix data = ingest(data_path);
      std::vector<int> labels;
      for (std::size_t i = 0; i < data.rows(); ++i) labels.push_back(model.predict(data.row(i)));
      AttackConfig cfg = AttackConfig::pgd_defaults(attack_eps, bounds_of(data));
      const bool fgsm_kind = attack_kind == "fgsm";
      cfg.steps = attack_steps;
      cfg.step_size = attack_step >= 0.0 ? attack_step : (fgsm_kind ? attack_eps : attack_eps / 10.0);
      cfg.random_start = random_start;
      try {
        cfg.validate(data.dims());
      } catch (const InvalidInputError& e) {
        throw UsageError(e.what());
      }
      const FeatureMatrix adv =
          attack_rows(model, data, labels, cfg, fgsm_kind ? AttackKind::Fgsm : AttackKind::Pgd, attack_seed);
      write_matrix(attack_out, adv);
      double max_shift = 0.0;
      std::size_t flipped = 0;
      for (std::size_t i = 0; i < data.rows(); ++i) {
        max_shift = std::max(max_shift, (adv.matrix().row(static_cast<Eigen::Index>(i)) -
                                         data.matrix().row(static_cast<Eigen::Index>(i)))
                                            .cwiseAbs()
                                            .maxCoeff());
        flipped += model.predict(adv.row(i)) != labels[i] ? 1 : 0;
      }
      emit(out, {{"report", "sammd-attack"},
                 {"version", 1},
                 {"kind", attack_kind},
                 {"epsilon", attack_eps},
                 {"steps", cfg.steps},
                 {"step_size", cfg.step_size},
                 {"rows", data.rows()},
                 {"max_abs_shift", max_shift},
                 {"fooling_rate", static_cast<double>(flipped) / static_cast<double>(data.rows())},
                 {"out", attack_out}});
      return kExitOk;
    }
    if (gen->parsed()) {
      if (gen_n < 1) throw UsageError("--n must be positive");
      nlohmann::ordered_json rep = {{"report", "sammd-gen"}, {"version", 1}, {"kind", gen_kind},
                                    {"seed", gen_seed},     {"out", gen_out}};
      auto save_labels = [&](const std::vector<int>& labels) {
        if (labels_out.empty()) return;
        std::ofstream f(labels_out, std::ios::trunc);
        if (!f) throw Error("cannot write " + labels_out);
        for (int l : labels) f << l << '\n';
      };
      ToyWorldConfig wc;
      wc.stddev = gen_sd;
      if (gen_kind == "gaussian") {
        const auto d = gen_synthetic(SyntheticSpec::gaussian(std::vector<double>(gen_dims, 0.0), 1.0), gen_n, gen_seed);
        write_matrix(gen_out, d.x);
        rep["rows"] = d.x.rows();
      } else if (gen_kind == "blobs") {
        const auto d = gen_synthetic(SyntheticSpec::blobs(wc.centers, gen_sd), gen_n, gen_seed);
        write_matrix(gen_out, d.x);
        save_labels(d.labels);
        rep["rows"] = d.x.rows();
      } else if (gen_kind == "dependent") {
        const auto x = gen_dependent_h0(gen_n, gen_l, std::vector<double>(gen_dims, 0.0), 1.0, gen_seed);
        write_matrix(gen_out, x);
        rep["rows"] = x.rows();
      } else if (gen_kind == "attacked" || gen_kind == "noniid-b") {
        const ToyWorld world = build_toy_world(wc, derive_seed(gen_seed, 0));
        ScenarioSpec s;
        s.kind = gen_kind == "attacked" ? ScenarioKind::ToyAttack : ScenarioKind::NonIidB;
        s.n = gen_n;
        s.epsilon = gen_eps;
        const auto pair = draw_scenario(s, world, derive_seed(gen_seed, 1));
        write_matrix(gen_out, pair.second.raw);
        rep["rows"] = pair.second.raw.rows();
        rep["epsilon"] = gen_eps;
      } else if (gen_kind == "model") {
        const ToyWorld world = build_toy_world(wc, derive_seed(gen_seed, 0));
        save_classifier(gen_out, world.model);
        rep["hidden"] = world.model.hidden_dim();
        rep["train_accuracy"] = accuracy(world.model, world.train.x, world.train.labels);
      } else {
        throw UsageError("unknown --kind '" + gen_kind + "'");
      }
      emit(out, rep);
      return kExitOk;
    }
    throw UsageError("no command given");
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const NumericalError& e) {
    err << "numerical failure: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const Error& e) {
    err << "data error: " << e.what() << '\n';
    return kExitData;
  }
}

}  // namespace sammd
