#include "sammd/io.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iterator>
#include <numeric>
#include <sstream>

namespace sammd {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
  for (int b = 0; b < 4; ++b) out.push_back(static_cast<unsigned char>((v >> (8 * b)) & 0xFFu));
}

std::uint32_t get_u32(std::span<const unsigned char> bytes, std::size_t offset) {
  std::uint32_t v = 0;
  for (int b = 0; b < 4; ++b) v |= static_cast<std::uint32_t>(bytes[offset + static_cast<std::size_t>(b)]) << (8 * b);
  return v;
}

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return std::string(s.substr(first, last - first + 1));
}

// Shortest representation that reads back to the same double.
std::string format_double(double v) {
  char buf[40];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

}  // namespace

std::vector<unsigned char> encode_samf(std::uint32_t rows, std::uint32_t cols, std::span<const float> values) {
  if (rows == 0 || cols == 0) throw InvalidInputError("SAMF needs at least one row and one column");
  if (values.size() != static_cast<std::size_t>(rows) * cols) {
    throw DimensionError("SAMF payload size does not match n_rows * n_cols");
  }
  std::vector<unsigned char> out{'S', 'A', 'M', 'F'};
  out.reserve(kSamfHeaderBytes + 4 * values.size());
  put_u32(out, kSamfVersion);
  put_u32(out, rows);
  put_u32(out, cols);
  for (float v : values) {
    if (!std::isfinite(v)) throw InvalidInputError("SAMF values must be finite");
    put_u32(out, std::bit_cast<std::uint32_t>(v));
  }
  return out;
}

std::vector<unsigned char> encode_samf(const FeatureMatrix& m) {
  if (m.rows() > UINT32_MAX || m.dims() > UINT32_MAX) throw InvalidInputError("matrix too large for SAMF");
  std::vector<float> values;
  values.reserve(m.rows() * m.dims());
  for (std::size_t i = 0; i < m.rows(); ++i) {
    for (double v : m.row(i)) {
      const auto f = static_cast<float>(v);
      if (!std::isfinite(f)) throw InvalidInputError("value " + format_double(v) + " overflows float32");
      values.push_back(f);
    }
  }
  return encode_samf(static_cast<std::uint32_t>(m.rows()), static_cast<std::uint32_t>(m.dims()), values);
}

SamfData decode_samf_raw(std::span<const unsigned char> bytes) {
  if (bytes.size() < kSamfHeaderBytes) {
    throw ParseError("SAMF header needs " + std::to_string(kSamfHeaderBytes) + " bytes, file has " +
                     std::to_string(bytes.size()));
  }
  if (std::memcmp(bytes.data(), "SAMF", 4) != 0) throw ParseError("bad SAMF magic at byte offset 0");
  const std::uint32_t version = get_u32(bytes, 4);
  if (version != kSamfVersion) {
    throw ParseError("unsupported SAMF version " + std::to_string(version) + " at byte offset 4");
  }
  SamfData d;
  d.rows = get_u32(bytes, 8);
  d.cols = get_u32(bytes, 12);
  if (d.rows == 0 || d.cols == 0) {
    throw ParseError("SAMF shape " + std::to_string(d.rows) + "x" + std::to_string(d.cols) +
                     " is empty (byte offset 8)");
  }
  const std::uint64_t expected = kSamfHeaderBytes + 4ull * d.rows * d.cols;
  if (bytes.size() != expected) {
    throw ParseError("SAMF payload length mismatch: expected " + std::to_string(expected) + " bytes, got " +
                     std::to_string(bytes.size()));
  }
  d.values.resize(static_cast<std::size_t>(d.rows) * d.cols);
  for (std::size_t k = 0; k < d.values.size(); ++k) {
    const std::size_t offset = kSamfHeaderBytes + 4 * k;
    d.values[k] = std::bit_cast<float>(get_u32(bytes, offset));
    if (!std::isfinite(d.values[k])) {
      throw ParseError("non-finite SAMF value at byte offset " + std::to_string(offset));
    }
  }
  return d;
}

FeatureMatrix decode_samf(std::span<const unsigned char> bytes) {
  const SamfData d = decode_samf_raw(bytes);
  std::vector<double> values(d.values.begin(), d.values.end());
  return FeatureMatrix(d.rows, d.cols, values);
}

std::vector<unsigned char> read_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_samf(const std::filesystem::path& path, const FeatureMatrix& m) {
  const auto bytes = encode_samf(m);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("failed writing " + path.string());
}

FeatureMatrix read_samf(const std::filesystem::path& path) { return decode_samf(read_bytes(path)); }

FeatureMatrix parse_csv(std::istream& in) {
  std::vector<double> values;
  std::size_t cols = 0, rows = 0, line_no = 0;
  std::string line;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    std::size_t count = 0;
    std::stringstream fields(line);
    std::string field;
    while (std::getline(fields, field, ',')) {
      const std::string t = trim(field);
      double v = 0.0;
      const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
      if (t.empty() || ec != std::errc{} || ptr != t.data() + t.size()) {
        throw ParseError("line " + std::to_string(line_no) + ", field " + std::to_string(count + 1) +
                         ": not a number: '" + t + "'");
      }
      if (!std::isfinite(v)) throw ParseError("line " + std::to_string(line_no) + ": non-finite value");
      values.push_back(v);
      ++count;
    }
    if (!line.empty() && trim(line).back() == ',') {
      throw ParseError("line " + std::to_string(line_no) + ": trailing comma");
    }
    if (rows == 0) cols = count;
    else if (count != cols) {
      throw ParseError("line " + std::to_string(line_no) + ": expected " + std::to_string(cols) + " fields, got " +
                       std::to_string(count));
    }
    ++rows;
  }
  if (rows == 0) throw ParseError("CSV has no data rows");
  return FeatureMatrix(rows, cols, values);
}

FeatureMatrix read_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path.string());
  return parse_csv(in);
}

void write_csv(std::ostream& out, const FeatureMatrix& m) {
  for (std::size_t i = 0; i < m.rows(); ++i) {
    const auto row = m.row(i);
    for (std::size_t k = 0; k < row.size(); ++k) out << (k ? "," : "") << format_double(row[k]);
    out << '\n';
  }
}

FileFormat guess_format(const std::filesystem::path& path) {
  auto ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext == ".csv" ? FileFormat::Csv : FileFormat::Samf;
}

FeatureMatrix ingest(const std::filesystem::path& path, FileFormat format) {
  return format == FileFormat::Csv ? read_csv(path) : read_samf(path);
}

FeatureMatrix ingest(const std::filesystem::path& path) { return ingest(path, guess_format(path)); }

// ---------------------------------------------------------------------------

double quantile(std::vector<double> values, double q) {
  if (values.empty()) throw InvalidInputError("quantile of an empty list");
  if (!(q >= 0.0 && q <= 1.0)) throw InvalidInputError("quantile level must lie in [0, 1]");
  std::sort(values.begin(), values.end());
  const double pos = q * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

NullSummary NullSummary::of(std::span<const double> values) {
  const std::vector<double> v(values.begin(), values.end());
  NullSummary s;
  s.draws = v.size();
  s.min = quantile(v, 0.0);
  s.q05 = quantile(v, 0.05);
  s.q25 = quantile(v, 0.25);
  s.median = quantile(v, 0.5);
  s.q75 = quantile(v, 0.75);
  s.q95 = quantile(v, 0.95);
  s.max = quantile(v, 1.0);
  s.mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  return s;
}

KernelReport KernelReport::of(const KernelSpec& kernel) {
  KernelReport k;
  if (const auto* g = std::get_if<GaussianKernel>(&kernel)) {
    k.type = "gaussian";
    k.log_sigma = g->bandwidth.log_sigma;
    return k;
  }
  const auto& p = std::get<DeepKernel>(kernel).params;
  k.type = "deep";
  k.eps0_logit = p.eps0_logit;
  k.log_sigma_phi = p.sigma_phi.log_sigma;
  k.log_sigma_q = p.sigma_q.log_sigma;
  k.featurizer = p.featurizer_id;
  return k;
}

RunReport RunReport::from_result(const TestResult& result, const RunParameters& params) {
  RunReport r;
  r.method = method_name(result.method);
  r.parameters = params;
  r.statistic = result.statistic;
  r.p_value = result.p_value;
  r.reject = result.reject;
  r.null_summary = NullSummary::of(result.null_draws.values);
  r.kernel = KernelReport::of(result.kernel);
  if (result.trace) {
    const auto& it = result.trace->iters;
    r.training = TrainingReport{it.size(), result.trace->diverged, it.empty() ? 0.0 : it.front().second,
                                it.empty() ? 0.0 : it.back().second};
  }
  r.train_rows = result.rows.x_train.size();
  r.test_rows = result.rows.x_test.size();
  return r;
}

ordered_json to_json(const RunReport& r) {
  const auto& p = r.parameters;
  ordered_json params = {{"x", p.x_path},
                         {"y", p.y_path},
                         {"n_x", p.n_x},
                         {"n_y", p.n_y},
                         {"dims", p.dims},
                         {"alpha", p.alpha},
                         {"seed", p.seed},
                         {"n_perm", p.n_perm},
                         {"l", p.l},
                         {"features", p.features},
                         {"lr", p.learning_rate},
                         {"iters", p.iters},
                         {"lambda", p.lambda},
                         {"minibatch", p.minibatch},
                         {"split_fraction", p.split_fraction}};
  const auto& s = r.null_summary;
  ordered_json null_summary = {{"draws", s.draws}, {"min", s.min},       {"q05", s.q05}, {"q25", s.q25},
                               {"median", s.median}, {"q75", s.q75}, {"q95", s.q95}, {"max", s.max},
                               {"mean", s.mean}};
  ordered_json kernel = {{"type", r.kernel.type}};
  if (r.kernel.type == "gaussian") {
    kernel["log_sigma"] = r.kernel.log_sigma;
  } else {
    kernel["eps0_logit"] = r.kernel.eps0_logit;
    kernel["log_sigma_phi"] = r.kernel.log_sigma_phi;
    kernel["log_sigma_q"] = r.kernel.log_sigma_q;
    kernel["featurizer"] = r.kernel.featurizer;
  }
  ordered_json j = {{"report", "sammd-test"},
                    {"version", 1},
                    {"method", r.method},
                    {"parameters", params},
                    {"statistic", r.statistic},
                    {"p_value", r.p_value},
                    {"reject", r.reject},
                    {"null_summary", null_summary},
                    {"kernel", kernel}};
  if (r.training) {
    j["training"] = {{"iterations", r.training->iterations},
                     {"diverged", r.training->diverged},
                     {"first_j_hat", r.training->first_j_hat},
                     {"last_j_hat", r.training->last_j_hat}};
  }
  j["rows"] = {{"train", r.train_rows}, {"test", r.test_rows}};
  if (r.wall_clock_seconds) j["wall_clock_seconds"] = *r.wall_clock_seconds;
  return j;
}

RunReport run_report_from_json(const json& j) {
  try {
    if (j.at("report").get<std::string>() != "sammd-test") throw ParseError("not a test report");
    RunReport r;
    r.method = j.at("method").get<std::string>();
    const auto& p = j.at("parameters");
    r.parameters = RunParameters{p.at("x").get<std::string>(),     p.at("y").get<std::string>(),
                                 p.at("n_x").get<std::size_t>(),   p.at("n_y").get<std::size_t>(),
                                 p.at("dims").get<std::size_t>(),  p.at("alpha").get<double>(),
                                 p.at("seed").get<std::uint64_t>(), p.at("n_perm").get<std::size_t>(),
                                 p.at("l").get<double>(),          p.at("features").get<std::string>(),
                                 p.at("lr").get<double>(),         p.at("iters").get<std::size_t>(),
                                 p.at("lambda").get<double>(),     p.at("minibatch").get<std::size_t>(),
                                 p.at("split_fraction").get<double>()};
    r.statistic = j.at("statistic").get<double>();
    r.p_value = j.at("p_value").get<double>();
    r.reject = j.at("reject").get<bool>();
    const auto& s = j.at("null_summary");
    r.null_summary = NullSummary{s.at("draws").get<std::size_t>(), s.at("min").get<double>(),
                                 s.at("q05").get<double>(),        s.at("q25").get<double>(),
                                 s.at("median").get<double>(),     s.at("q75").get<double>(),
                                 s.at("q95").get<double>(),        s.at("max").get<double>(),
                                 s.at("mean").get<double>()};
    const auto& k = j.at("kernel");
    r.kernel.type = k.at("type").get<std::string>();
    if (r.kernel.type == "gaussian") {
      r.kernel.log_sigma = k.at("log_sigma").get<double>();
    } else if (r.kernel.type == "deep") {
      r.kernel.eps0_logit = k.at("eps0_logit").get<double>();
      r.kernel.log_sigma_phi = k.at("log_sigma_phi").get<double>();
      r.kernel.log_sigma_q = k.at("log_sigma_q").get<double>();
      r.kernel.featurizer = k.at("featurizer").get<std::string>();
    } else {
      throw ParseError("unknown kernel type '" + r.kernel.type + "'");
    }
    if (j.contains("training")) {
      const auto& t = j.at("training");
      r.training = TrainingReport{t.at("iterations").get<std::size_t>(), t.at("diverged").get<bool>(),
                                  t.at("first_j_hat").get<double>(), t.at("last_j_hat").get<double>()};
    }
    r.train_rows = j.at("rows").at("train").get<std::size_t>();
    r.test_rows = j.at("rows").at("test").get<std::size_t>();
    if (j.contains("wall_clock_seconds")) r.wall_clock_seconds = j.at("wall_clock_seconds").get<double>();
    return r;
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed test report: ") + e.what());
  }
}

ordered_json to_json(const ExperimentReport& r) {
  ordered_json rows = ordered_json::array();
  for (const auto& row : r.rows) {
    rows.push_back({{"method", row.method},
                    {"condition", row.condition},
                    {"value", row.value},
                    {"trials", row.trials},
                    {"rejections", row.rejections},
                    {"rejection_rate", row.rejection_rate},
                    {"std_error", row.std_error}});
  }
  return {{"report", "sammd-experiment"},
          {"version", 1},
          {"experiment", r.experiment},
          {"trials", r.trials},
          {"seed", r.seed},
          {"rejection_rate", r.rejection_rate},
          {"rows", rows}};
}

ExperimentReport experiment_report_from_json(const json& j) {
  try {
    if (j.at("report").get<std::string>() != "sammd-experiment") throw ParseError("not an experiment report");
    ExperimentReport r;
    r.experiment = j.at("experiment").get<std::string>();
    r.trials = j.at("trials").get<std::size_t>();
    r.seed = j.at("seed").get<std::uint64_t>();
    r.rejection_rate = j.at("rejection_rate").get<double>();
    for (const auto& row : j.at("rows")) {
      r.rows.push_back(ExperimentRow{row.at("method").get<std::string>(), row.at("condition").get<std::string>(),
                                     row.at("value").get<double>(), row.at("trials").get<std::size_t>(),
                                     row.at("rejections").get<std::size_t>(),
                                     row.at("rejection_rate").get<double>(), row.at("std_error").get<double>()});
    }
    return r;
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed experiment report: ") + e.what());
  }
}

void write_curve_csv(std::ostream& out, const ExperimentReport& r) {
  out << "condition,rejection_rate,std_error,method\n";
  for (const auto& row : r.rows) {
    out << row.condition << ',' << format_double(row.rejection_rate) << ',' << format_double(row.std_error) << ','
        << row.method << '\n';
  }
}

// ---------------------------------------------------------------------------

namespace {

ordered_json matrix_json(const Eigen::MatrixXd& m) {
  ordered_json rows = ordered_json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    ordered_json row = ordered_json::array();
    for (Eigen::Index k = 0; k < m.cols(); ++k) row.push_back(m(i, k));
    rows.push_back(std::move(row));
  }
  return rows;
}

Eigen::MatrixXd matrix_from(const json& j, Eigen::Index rows, Eigen::Index cols, const char* name) {
  if (!j.is_array() || static_cast<Eigen::Index>(j.size()) != rows) {
    throw ParseError(std::string("model field ") + name + " has the wrong number of rows");
  }
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    const auto& row = j[static_cast<std::size_t>(i)];
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols) {
      throw ParseError(std::string("model field ") + name + " has the wrong number of columns");
    }
    for (Eigen::Index k = 0; k < cols; ++k) m(i, k) = row[static_cast<std::size_t>(k)].get<double>();
  }
  return m;
}

Eigen::VectorXd vector_from(const json& j, Eigen::Index size, const char* name) {
  if (!j.is_array() || static_cast<Eigen::Index>(j.size()) != size) {
    throw ParseError(std::string("model field ") + name + " has the wrong length");
  }
  Eigen::VectorXd v(size);
  for (Eigen::Index i = 0; i < size; ++i) v(i) = j[static_cast<std::size_t>(i)].get<double>();
  return v;
}

}  // namespace

ordered_json to_json(const ToyClassifier& model) {
  return {{"model", "toy-mlp"},
          {"activation", "softplus"},
          {"input", model.input_dim()},
          {"hidden", model.hidden_dim()},
          {"classes", model.classes()},
          {"w1", matrix_json(model.w1)},
          {"b1", std::vector<double>(model.b1.data(), model.b1.data() + model.b1.size())},
          {"w2", matrix_json(model.w2)},
          {"b2", std::vector<double>(model.b2.data(), model.b2.data() + model.b2.size())}};
}

ToyClassifier classifier_from_json(const json& j) {
  try {
    if (j.at("model").get<std::string>() != "toy-mlp") throw ParseError("not a toy-mlp model");
    const auto d = j.at("input").get<Eigen::Index>();
    const auto h = j.at("hidden").get<Eigen::Index>();
    const auto c = j.at("classes").get<Eigen::Index>();
    ToyClassifier m{matrix_from(j.at("w1"), h, d, "w1"), vector_from(j.at("b1"), h, "b1"),
                    matrix_from(j.at("w2"), c, h, "w2"), vector_from(j.at("b2"), c, "b2")};
    m.validate();
    return m;
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed model file: ") + e.what());
  } catch (const InvalidInputError& e) {
    throw ParseError(std::string("malformed model file: ") + e.what());
  }
}

void save_classifier(const std::filesystem::path& path, const ToyClassifier& model) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << to_json(model).dump(2) << '\n';
}

ToyClassifier load_classifier(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path.string());
  try {
    return classifier_from_json(json::parse(in));
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("model file is not JSON: ") + e.what());
  }
}

}  // namespace sammd
