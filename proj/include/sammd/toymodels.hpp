#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "sammd/common.hpp"

namespace sammd {

/// One-hidden-layer perceptron with softplus activation and softmax output.
/// The hidden activations are the semantic features.
struct ToyClassifier {
  Eigen::MatrixXd w1;  // hidden x input
  Eigen::VectorXd b1;
  Eigen::MatrixXd w2;  // classes x hidden
  Eigen::VectorXd b2;

  [[nodiscard]] std::size_t input_dim() const { return static_cast<std::size_t>(w1.cols()); }
  [[nodiscard]] std::size_t hidden_dim() const { return static_cast<std::size_t>(w1.rows()); }
  [[nodiscard]] std::size_t classes() const { return static_cast<std::size_t>(w2.rows()); }

  static ToyClassifier zeros(std::size_t input, std::size_t hidden, std::size_t classes);
  /// Weights ~ N(0, 1/fan_in), zero biases.
  static ToyClassifier random(std::size_t input, std::size_t hidden, std::size_t classes, Rng& rng);

  [[nodiscard]] Eigen::VectorXd hidden(std::span<const double> x) const;
  [[nodiscard]] Eigen::VectorXd probabilities(std::span<const double> x) const;
  [[nodiscard]] int predict(std::span<const double> x) const;
  void validate() const;
};

struct ClassifierGradient {
  Eigen::MatrixXd w1;
  Eigen::VectorXd b1;
  Eigen::MatrixXd w2;
  Eigen::VectorXd b2;
};

struct ForwardBackward {
  double loss = 0.0;  // -log p_label
  Eigen::VectorXd grad_x;
  ClassifierGradient grad_params;
};

ForwardBackward mlp_forward_backward(const ToyClassifier& model, std::span<const double> x, int label);
double classifier_loss(const ToyClassifier& model, std::span<const double> x, int label);

struct ClassifierConfig {
  std::size_t hidden = 16;
  std::size_t epochs = 50;
  double learning_rate = 0.1;
  std::size_t batch_size = 32;
  std::uint64_t seed = 0;
};

/// Minibatch gradient descent on mean cross-entropy. Labels are 0..C-1 with
/// C = max label + 1; at least two distinct labels must be present.
ToyClassifier train_toy_classifier(const FeatureMatrix& data, std::span<const int> labels,
                                   const ClassifierConfig& cfg);

double accuracy(const ToyClassifier& model, const FeatureMatrix& data, std::span<const int> labels);

/// Hidden-layer activations, one row per input row.
FeatureMatrix semantic_features(const ToyClassifier& model, const FeatureMatrix& x);

// ---------------------------------------------------------------------------
// Attacks
// ---------------------------------------------------------------------------

struct DomainBounds {
  std::vector<double> lower;
  std::vector<double> upper;
};

/// Per-coordinate [min, max] of the rows.
DomainBounds bounds_of(const FeatureMatrix& data);

struct AttackConfig {
  double epsilon = 0.0;    // L-infinity radius
  std::size_t steps = 20;
  double step_size = 0.0;
  DomainBounds bounds;
  bool random_start = false;

  /// K = 20 steps of size epsilon / 10.
  static AttackConfig pgd_defaults(double epsilon, DomainBounds bounds);
  void validate(std::size_t dims) const;
};

/// Nearest point of B_eps[center] intersected with the domain box, with the
/// guarantee that |out_k - center_k| <= eps holds in floating point.
std::vector<double> project_to_ball(std::span<const double> candidate, std::span<const double> center,
                                    double epsilon, const DomainBounds& bounds);

std::vector<double> fgsm(const ToyClassifier& model, std::span<const double> x, int label,
                         const AttackConfig& cfg);

/// `rng` is used only when cfg.random_start is set.
std::vector<double> pgd(const ToyClassifier& model, std::span<const double> x, int label,
                        const AttackConfig& cfg, Rng* rng = nullptr);

enum class AttackKind { Fgsm, Pgd };

/// Attacks every row; row i uses stream i of `seed` for its random start.
FeatureMatrix attack_rows(const ToyClassifier& model, const FeatureMatrix& x, std::span<const int> labels,
                          const AttackConfig& cfg, AttackKind kind, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Data generators
// ---------------------------------------------------------------------------

struct LabeledData {
  FeatureMatrix x;
  std::vector<int> labels;
};

enum class SyntheticKind { Gaussian, Blobs };

struct SyntheticSpec {
  SyntheticKind kind = SyntheticKind::Gaussian;
  std::vector<double> mean{0.0, 0.0};               // Gaussian
  std::vector<std::vector<double>> centers;         // Blobs, label = center index
  double stddev = 1.0;

  static SyntheticSpec gaussian(std::vector<double> mean, double stddev);
  static SyntheticSpec blobs(std::vector<std::vector<double>> centers, double stddev);
  [[nodiscard]] std::size_t dims() const;
};

LabeledData gen_synthetic(const SyntheticSpec& spec, std::size_t n, std::uint64_t seed);

enum class NonIidFlavor { A, B };

inline constexpr std::size_t kVariantsPerPoint = 4;

/// (a): FGSM on each row of `base` (the rows the model was trained on), in order.
/// (b): kVariantsPerPoint random-start PGD restarts per base row. Base rows
///      appear in shuffled order; the variants of one row stay contiguous.
FeatureMatrix gen_non_iid(NonIidFlavor flavor, const FeatureMatrix& base, std::span<const int> labels,
                          const ToyClassifier& model, const AttackConfig& cfg, std::uint64_t seed);

/// Gaussian marginals N(mean, stddev^2 I) with AR(1) dependence along the row
/// index: the latent process follows the wild-bootstrap recursion with
/// timescale l independently per coordinate.
FeatureMatrix gen_dependent_h0(std::size_t n, double l, std::span<const double> mean, double stddev,
                               std::uint64_t seed);

}  // namespace sammd
