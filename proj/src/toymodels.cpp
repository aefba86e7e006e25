#include "sammd/toymodels.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>

#include "sammd/resampling.hpp"

namespace sammd {

namespace {

double softplus(double z) { return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

double logistic(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

Eigen::Map<const Eigen::VectorXd> as_vector(std::span<const double> x) {
  return {x.data(), static_cast<Eigen::Index>(x.size())};
}

void check_input(const ToyClassifier& model, std::span<const double> x) {
  if (x.size() != model.input_dim()) {
    throw DimensionError("classifier expects " + std::to_string(model.input_dim()) + " inputs, got " +
                         std::to_string(x.size()));
  }
}

void check_label(const ToyClassifier& model, int label) {
  if (label < 0 || static_cast<std::size_t>(label) >= model.classes()) {
    throw InvalidInputError("label " + std::to_string(label) + " out of range");
  }
}

struct Activations {
  Eigen::VectorXd z1, a1, z2;
};

Activations forward(const ToyClassifier& model, std::span<const double> x) {
  Activations act;
  act.z1 = model.w1 * as_vector(x) + model.b1;
  act.a1 = act.z1.unaryExpr([](double z) { return softplus(z); });
  act.z2 = model.w2 * act.a1 + model.b2;
  return act;
}

Eigen::VectorXd softmax(const Eigen::VectorXd& z) {
  const Eigen::VectorXd e = (z.array() - z.maxCoeff()).exp().matrix();
  return e / e.sum();
}

double log_sum_exp(const Eigen::VectorXd& z) {
  const double top = z.maxCoeff();
  return top + std::log((z.array() - top).exp().sum());
}

double sign_of(double g) { return g > 0 ? 1.0 : (g < 0 ? -1.0 : 0.0); }

}  // namespace

ToyClassifier ToyClassifier::zeros(std::size_t input, std::size_t hidden, std::size_t classes) {
  const auto d = static_cast<Eigen::Index>(input);
  const auto h = static_cast<Eigen::Index>(hidden);
  const auto c = static_cast<Eigen::Index>(classes);
  return ToyClassifier{Eigen::MatrixXd::Zero(h, d), Eigen::VectorXd::Zero(h), Eigen::MatrixXd::Zero(c, h),
                       Eigen::VectorXd::Zero(c)};
}

ToyClassifier ToyClassifier::random(std::size_t input, std::size_t hidden, std::size_t classes, Rng& rng) {
  ToyClassifier m = zeros(input, hidden, classes);
  std::normal_distribution<double> n1(0.0, 1.0 / std::sqrt(static_cast<double>(input)));
  std::normal_distribution<double> n2(0.0, 1.0 / std::sqrt(static_cast<double>(hidden)));
  for (Eigen::Index i = 0; i < m.w1.size(); ++i) m.w1.data()[i] = n1(rng);
  for (Eigen::Index i = 0; i < m.w2.size(); ++i) m.w2.data()[i] = n2(rng);
  return m;
}

void ToyClassifier::validate() const {
  if (w1.rows() < 1 || w1.cols() < 1 || w2.rows() < 2) {
    throw InvalidInputError("classifier needs >= 1 input, >= 1 hidden unit and >= 2 classes");
  }
  if (b1.size() != w1.rows() || w2.cols() != w1.rows() || b2.size() != w2.rows()) {
    throw DimensionError("classifier layer shapes are inconsistent");
  }
}

Eigen::VectorXd ToyClassifier::hidden(std::span<const double> x) const {
  check_input(*this, x);
  return forward(*this, x).a1;
}

Eigen::VectorXd ToyClassifier::probabilities(std::span<const double> x) const {
  check_input(*this, x);
  return softmax(forward(*this, x).z2);
}

int ToyClassifier::predict(std::span<const double> x) const {
  Eigen::Index best = 0;
  probabilities(x).maxCoeff(&best);
  return static_cast<int>(best);
}

double classifier_loss(const ToyClassifier& model, std::span<const double> x, int label) {
  check_input(model, x);
  check_label(model, label);
  const auto act = forward(model, x);
  return log_sum_exp(act.z2) - act.z2(label);
}

ForwardBackward mlp_forward_backward(const ToyClassifier& model, std::span<const double> x, int label) {
  check_input(model, x);
  check_label(model, label);
  const auto act = forward(model, x);
  ForwardBackward out;
  out.loss = log_sum_exp(act.z2) - act.z2(label);

  Eigen::VectorXd dz2 = softmax(act.z2);
  dz2(label) -= 1.0;
  const Eigen::VectorXd da1 = model.w2.transpose() * dz2;
  const Eigen::VectorXd dz1 = da1.cwiseProduct(act.z1.unaryExpr([](double z) { return logistic(z); }));

  out.grad_params.w2 = dz2 * act.a1.transpose();
  out.grad_params.b2 = dz2;
  out.grad_params.w1 = dz1 * as_vector(x).transpose();
  out.grad_params.b1 = dz1;
  out.grad_x = model.w1.transpose() * dz1;
  return out;
}

ToyClassifier train_toy_classifier(const FeatureMatrix& data, std::span<const int> labels,
                                   const ClassifierConfig& cfg) {
  if (labels.size() != data.rows()) throw DimensionError("one label per row required");
  if (std::any_of(labels.begin(), labels.end(), [](int l) { return l < 0; })) {
    throw InvalidInputError("labels must be non-negative");
  }
  const std::set<int> distinct(labels.begin(), labels.end());
  if (distinct.size() < 2) throw InvalidInputError("training needs at least two classes present");
  if (cfg.hidden < 1 || cfg.batch_size < 1) throw InvalidInputError("hidden and batch_size must be positive");
  const auto classes = static_cast<std::size_t>(*distinct.rbegin()) + 1;

  Rng init_rng = make_stream(cfg.seed, 0);
  ToyClassifier model = ToyClassifier::random(data.dims(), cfg.hidden, classes, init_rng);

  std::vector<std::size_t> order(data.rows());
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng = make_stream(cfg.seed, epoch + 1);
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      ClassifierGradient acc{Eigen::MatrixXd::Zero(model.w1.rows(), model.w1.cols()),
                             Eigen::VectorXd::Zero(model.b1.size()),
                             Eigen::MatrixXd::Zero(model.w2.rows(), model.w2.cols()),
                             Eigen::VectorXd::Zero(model.b2.size())};
      for (std::size_t k = start; k < end; ++k) {
        const auto fb = mlp_forward_backward(model, data.row(order[k]), labels[order[k]]);
        acc.w1 += fb.grad_params.w1;
        acc.b1 += fb.grad_params.b1;
        acc.w2 += fb.grad_params.w2;
        acc.b2 += fb.grad_params.b2;
      }
      const double scale = cfg.learning_rate / static_cast<double>(end - start);
      model.w1 -= scale * acc.w1;
      model.b1 -= scale * acc.b1;
      model.w2 -= scale * acc.w2;
      model.b2 -= scale * acc.b2;
    }
  }
  return model;
}

double accuracy(const ToyClassifier& model, const FeatureMatrix& data, std::span<const int> labels) {
  if (labels.size() != data.rows()) throw DimensionError("one label per row required");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < data.rows(); ++i) hits += model.predict(data.row(i)) == labels[i] ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(data.rows());
}

FeatureMatrix semantic_features(const ToyClassifier& model, const FeatureMatrix& x) {
  if (x.dims() != model.input_dim()) throw DimensionError("feature extraction: input width mismatch");
  RowMatrix out(static_cast<Eigen::Index>(x.rows()), static_cast<Eigen::Index>(model.hidden_dim()));
  for (std::size_t i = 0; i < x.rows(); ++i) {
    out.row(static_cast<Eigen::Index>(i)) = model.hidden(x.row(i)).transpose();
  }
  return FeatureMatrix(std::move(out));
}

// ---------------------------------------------------------------------------

DomainBounds bounds_of(const FeatureMatrix& data) {
  DomainBounds b;
  const Eigen::RowVectorXd lo = data.matrix().colwise().minCoeff();
  const Eigen::RowVectorXd hi = data.matrix().colwise().maxCoeff();
  b.lower.assign(lo.data(), lo.data() + lo.size());
  b.upper.assign(hi.data(), hi.data() + hi.size());
  return b;
}

AttackConfig AttackConfig::pgd_defaults(double epsilon, DomainBounds bounds) {
  return AttackConfig{epsilon, 20, epsilon / 10.0, std::move(bounds), false};
}

void AttackConfig::validate(std::size_t dims) const {
  if (!(epsilon >= 0.0) || !std::isfinite(epsilon)) throw InvalidInputError("epsilon must be >= 0");
  if (!(step_size >= 0.0) || step_size > epsilon) throw InvalidInputError("step_size must lie in [0, epsilon]");
  if (steps < 1) throw InvalidInputError("attack needs at least one step");
  if (bounds.lower.size() != dims || bounds.upper.size() != dims) {
    throw DimensionError("domain bounds do not match the input width");
  }
  for (std::size_t k = 0; k < dims; ++k) {
    if (!(bounds.lower[k] <= bounds.upper[k])) throw InvalidInputError("domain bounds are inverted");
  }
}

std::vector<double> project_to_ball(std::span<const double> candidate, std::span<const double> center,
                                    double epsilon, const DomainBounds& bounds) {
  std::vector<double> out(candidate.size());
  for (std::size_t k = 0; k < candidate.size(); ++k) {
    double v = std::clamp(candidate[k], bounds.lower[k], bounds.upper[k]);
    v = std::clamp(v, center[k] - epsilon, center[k] + epsilon);
    // center +/- epsilon is rounded; step back until the difference itself
    // evaluates within the radius.
    while (v - center[k] > epsilon) v = std::nextafter(v, -std::numeric_limits<double>::infinity());
    while (center[k] - v > epsilon) v = std::nextafter(v, std::numeric_limits<double>::infinity());
    out[k] = v;
  }
  return out;
}

std::vector<double> fgsm(const ToyClassifier& model, std::span<const double> x, int label,
                         const AttackConfig& cfg) {
  cfg.validate(x.size());
  const auto g = mlp_forward_backward(model, x, label).grad_x;
  std::vector<double> step(x.size());
  for (std::size_t k = 0; k < x.size(); ++k) step[k] = x[k] + cfg.epsilon * sign_of(g(static_cast<Eigen::Index>(k)));
  return project_to_ball(step, x, cfg.epsilon, cfg.bounds);
}

std::vector<double> pgd(const ToyClassifier& model, std::span<const double> x, int label,
                        const AttackConfig& cfg, Rng* rng) {
  cfg.validate(x.size());
  std::vector<double> current(x.begin(), x.end());
  if (cfg.random_start) {
    if (rng == nullptr) throw InvalidInputError("random start needs an RNG stream");
    std::uniform_real_distribution<double> u(-cfg.epsilon, cfg.epsilon);
    for (double& v : current) v += u(*rng);
    current = project_to_ball(current, x, cfg.epsilon, cfg.bounds);
  }
  std::vector<double> step(x.size());
  for (std::size_t it = 0; it < cfg.steps; ++it) {
    const auto g = mlp_forward_backward(model, current, label).grad_x;
    for (std::size_t k = 0; k < x.size(); ++k) {
      step[k] = current[k] + cfg.step_size * sign_of(g(static_cast<Eigen::Index>(k)));
    }
    current = project_to_ball(step, x, cfg.epsilon, cfg.bounds);
  }
  return current;
}

FeatureMatrix attack_rows(const ToyClassifier& model, const FeatureMatrix& x, std::span<const int> labels,
                          const AttackConfig& cfg, AttackKind kind, std::uint64_t seed) {
  if (labels.size() != x.rows()) throw DimensionError("one label per row required");
  cfg.validate(x.dims());
  RowMatrix out(static_cast<Eigen::Index>(x.rows()), static_cast<Eigen::Index>(x.dims()));
  parallel_for(x.rows(), [&](std::size_t i) {
    Rng rng = make_stream(seed, i);
    const auto adv = kind == AttackKind::Fgsm ? fgsm(model, x.row(i), labels[i], cfg)
                                              : pgd(model, x.row(i), labels[i], cfg, &rng);
    std::copy(adv.begin(), adv.end(), out.row(static_cast<Eigen::Index>(i)).data());
  });
  return FeatureMatrix(std::move(out));
}

// ---------------------------------------------------------------------------

SyntheticSpec SyntheticSpec::gaussian(std::vector<double> mean, double stddev) {
  SyntheticSpec s;
  s.kind = SyntheticKind::Gaussian;
  s.mean = std::move(mean);
  s.stddev = stddev;
  return s;
}

SyntheticSpec SyntheticSpec::blobs(std::vector<std::vector<double>> centers, double stddev) {
  SyntheticSpec s;
  s.kind = SyntheticKind::Blobs;
  s.centers = std::move(centers);
  s.stddev = stddev;
  return s;
}

std::size_t SyntheticSpec::dims() const {
  if (kind == SyntheticKind::Gaussian) return mean.size();
  return centers.empty() ? 0 : centers.front().size();
}

LabeledData gen_synthetic(const SyntheticSpec& spec, std::size_t n, std::uint64_t seed) {
  if (n < 1) throw InvalidInputError("generator needs n >= 1");
  if (!(spec.stddev > 0.0)) throw InvalidInputError("stddev must be positive");
  const std::size_t d = spec.dims();
  if (d < 1) throw InvalidInputError("generator needs at least one dimension");
  if (spec.kind == SyntheticKind::Blobs) {
    if (spec.centers.size() < 2) throw InvalidInputError("blobs need at least two centers");
    for (const auto& c : spec.centers) {
      if (c.size() != d) throw DimensionError("blob centers differ in dimension");
    }
  }
  Rng rng(derive_seed(seed, 0));
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_int_distribution<std::size_t> pick(0, spec.centers.empty() ? 0 : spec.centers.size() - 1);
  RowMatrix x(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  std::vector<int> labels(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    const std::vector<double>* center = &spec.mean;
    if (spec.kind == SyntheticKind::Blobs) {
      const std::size_t c = pick(rng);
      labels[i] = static_cast<int>(c);
      center = &spec.centers[c];
    }
    for (std::size_t k = 0; k < d; ++k) {
      x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = (*center)[k] + spec.stddev * normal(rng);
    }
  }
  return LabeledData{FeatureMatrix(std::move(x)), std::move(labels)};
}

FeatureMatrix gen_non_iid(NonIidFlavor flavor, const FeatureMatrix& base, std::span<const int> labels,
                          const ToyClassifier& model, const AttackConfig& cfg, std::uint64_t seed) {
  if (labels.size() != base.rows()) throw DimensionError("one label per row required");
  if (flavor == NonIidFlavor::A) {
    return attack_rows(model, base, labels, cfg, AttackKind::Fgsm, seed);
  }
  AttackConfig restart = cfg;
  restart.random_start = true;
  restart.validate(base.dims());

  std::vector<std::size_t> order(base.rows());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng shuffle_rng = make_stream(seed, 0);
  std::shuffle(order.begin(), order.end(), shuffle_rng);

  const std::size_t total = base.rows() * kVariantsPerPoint;
  RowMatrix out(static_cast<Eigen::Index>(total), static_cast<Eigen::Index>(base.dims()));
  parallel_for(total, [&](std::size_t r) {
    const std::size_t src = order[r / kVariantsPerPoint];
    Rng rng = make_stream(seed, r + 1);
    const auto adv = pgd(model, base.row(src), labels[src], restart, &rng);
    std::copy(adv.begin(), adv.end(), out.row(static_cast<Eigen::Index>(r)).data());
  });
  return FeatureMatrix(std::move(out));
}

FeatureMatrix gen_dependent_h0(std::size_t n, double l, std::span<const double> mean, double stddev,
                               std::uint64_t seed) {
  if (n < 2) throw InvalidInputError("dependent generator needs n >= 2");
  if (!(l > 0.0)) throw InvalidInputError("dependence timescale l must be positive");
  if (!(stddev > 0.0)) throw InvalidInputError("stddev must be positive");
  if (mean.empty()) throw InvalidInputError("mean must have at least one coordinate");
  RowMatrix x(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(mean.size()));
  for (std::size_t k = 0; k < mean.size(); ++k) {
    Rng rng = make_stream(seed, k);
    const auto z = wild_weights(n, l, rng);
    for (std::size_t i = 0; i < n; ++i) {
      x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = mean[k] + stddev * z[i];
    }
  }
  return FeatureMatrix(std::move(x));
}

}  // namespace sammd
