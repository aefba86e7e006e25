#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "sammd/pipeline.hpp"

namespace sammd {

// SAMF: "SAMF", u32 version = 1, u32 n_rows, u32 n_cols, then n_rows*n_cols
// little-endian float32 values in row-major order. Nothing may follow.
inline constexpr std::uint32_t kSamfVersion = 1;
inline constexpr std::size_t kSamfHeaderBytes = 16;

/// Values are rounded to float32. Rows must be nonempty and finite.
std::vector<unsigned char> encode_samf(const FeatureMatrix& m);
/// Raw float32 payload; allows any bit pattern that is finite, including -0.
std::vector<unsigned char> encode_samf(std::uint32_t rows, std::uint32_t cols, std::span<const float> values);

struct SamfData {
  std::uint32_t rows = 0;
  std::uint32_t cols = 0;
  std::vector<float> values;
};

SamfData decode_samf_raw(std::span<const unsigned char> bytes);
FeatureMatrix decode_samf(std::span<const unsigned char> bytes);

void write_samf(const std::filesystem::path& path, const FeatureMatrix& m);
FeatureMatrix read_samf(const std::filesystem::path& path);

/// Headerless numeric rows separated by commas; blank lines are skipped.
FeatureMatrix parse_csv(std::istream& in);
FeatureMatrix read_csv(const std::filesystem::path& path);
void write_csv(std::ostream& out, const FeatureMatrix& m);

enum class FileFormat { Samf, Csv };
/// `.csv` files are CSV; everything else is SAMF.
FileFormat guess_format(const std::filesystem::path& path);
FeatureMatrix ingest(const std::filesystem::path& path, FileFormat format);
FeatureMatrix ingest(const std::filesystem::path& path);

std::vector<unsigned char> read_bytes(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

struct NullSummary {
  std::size_t draws = 0;
  double min = 0.0, q05 = 0.0, q25 = 0.0, median = 0.0, q75 = 0.0, q95 = 0.0, max = 0.0, mean = 0.0;

  static NullSummary of(std::span<const double> values);
  bool operator==(const NullSummary&) const = default;
};

/// Linear-interpolation quantile of unsorted values.
double quantile(std::vector<double> values, double q);

struct RunParameters {
  std::string x_path, y_path;
  std::size_t n_x = 0, n_y = 0, dims = 0;
  double alpha = 0.05;
  std::uint64_t seed = 0;
  std::size_t n_perm = 200;
  double l = 0.2;
  std::string features = "raw";
  double learning_rate = 2e-4;
  std::size_t iters = 300;
  double lambda = kDefaultLambda;
  std::size_t minibatch = 64;
  double split_fraction = 0.5;

  bool operator==(const RunParameters&) const = default;
};

struct KernelReport {
  std::string type;  // gaussian | deep
  double log_sigma = 0.0;
  double eps0_logit = 0.0, log_sigma_phi = 0.0, log_sigma_q = 0.0;
  std::string featurizer;

  static KernelReport of(const KernelSpec& kernel);
  bool operator==(const KernelReport&) const = default;
};

struct TrainingReport {
  std::size_t iterations = 0;
  bool diverged = false;
  double first_j_hat = 0.0;
  double last_j_hat = 0.0;

  bool operator==(const TrainingReport&) const = default;
};

struct RunReport {
  std::string method;
  RunParameters parameters;
  double statistic = 0.0;
  double p_value = 1.0;
  bool reject = false;
  NullSummary null_summary;
  KernelReport kernel;
  std::optional<TrainingReport> training;
  std::size_t train_rows = 0, test_rows = 0;
  std::optional<double> wall_clock_seconds;

  static RunReport from_result(const TestResult& result, const RunParameters& params);
  bool operator==(const RunReport&) const = default;
};

nlohmann::ordered_json to_json(const RunReport& r);
RunReport run_report_from_json(const nlohmann::json& j);

nlohmann::ordered_json to_json(const ExperimentReport& r);
ExperimentReport experiment_report_from_json(const nlohmann::json& j);

/// Columns condition, rejection_rate, std_error, then method.
void write_curve_csv(std::ostream& out, const ExperimentReport& r);

nlohmann::ordered_json to_json(const ToyClassifier& model);
ToyClassifier classifier_from_json(const nlohmann::json& j);
void save_classifier(const std::filesystem::path& path, const ToyClassifier& model);
ToyClassifier load_classifier(const std::filesystem::path& path);

}  // namespace sammd
