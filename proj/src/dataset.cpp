#include "modecon/dataset.hpp"

#include "modecon/error.hpp"
#include "modecon/rng.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

namespace modecon {

std::string to_string(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::validation: return "validation";
    case Split::alignment: return "alignment";
  }
  return "unknown";
}

std::string to_string(DataKind k) {
  switch (k) {
    case DataKind::blobs: return "blobs";
    case DataKind::moons: return "moons";
    case DataKind::spirals: return "spirals";
    case DataKind::csv: return "csv";
  }
  return "unknown";
}

DataKind data_kind_from_string(const std::string& s) {
  if (s == "blobs") return DataKind::blobs;
  if (s == "moons") return DataKind::moons;
  if (s == "spirals") return DataKind::spirals;
  if (s == "csv") return DataKind::csv;
  throw ConfigError("unknown dataset kind '" + s + "'");
}

void Dataset::validate() const {
  if (static_cast<Eigen::Index>(labels.size()) != features.rows() || tags.size() != labels.size())
    throw DimensionError("dataset has inconsistent row counts");
  if (n_classes <= 0) throw ConfigError("dataset needs at least one class");
  for (int y : labels)
    if (y < 0 || y >= n_classes) throw DimensionError("label " + std::to_string(y) + " out of range");
  if (!features.allFinite()) throw NumericalError("dataset contains non-finite features");
}

Dataset Dataset::subset(Split which) const {
  std::vector<Eigen::Index> rows;
  for (std::size_t i = 0; i < tags.size(); ++i) {
    bool keep = tags[i] == which || (which == Split::train && tags[i] == Split::alignment);
    if (keep) rows.push_back(static_cast<Eigen::Index>(i));
  }
  Dataset out;
  out.n_classes = n_classes;
  out.features.resize(static_cast<Eigen::Index>(rows.size()), features.cols());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    out.features.row(static_cast<Eigen::Index>(r)) = features.row(rows[r]);
    out.labels.push_back(labels[static_cast<std::size_t>(rows[r])]);
    out.tags.push_back(tags[static_cast<std::size_t>(rows[r])]);
  }
  return out;
}

Dataset Dataset::slice(std::size_t begin, std::size_t end) const {
  if (begin > end || end > size()) throw DimensionError("slice out of range");
  Dataset out;
  out.n_classes = n_classes;
  out.features = features.middleRows(static_cast<Eigen::Index>(begin), static_cast<Eigen::Index>(end - begin));
  out.labels.assign(labels.begin() + static_cast<std::ptrdiff_t>(begin), labels.begin() + static_cast<std::ptrdiff_t>(end));
  out.tags.assign(tags.begin() + static_cast<std::ptrdiff_t>(begin), tags.begin() + static_cast<std::ptrdiff_t>(end));
  return out;
}

double Dataset::feature_range() const {
  if (features.rows() == 0) return 0.0;
  return (features.colwise().maxCoeff() - features.colwise().minCoeff()).maxCoeff();
}

void DataConfig::validate() const {
  if (kind == DataKind::csv) {
    if (train_csv.empty()) throw ConfigError("data.train_csv is required for csv datasets");
  } else {
    if (n_samples < 2) throw ConfigError("data.n_samples must be at least 2");
    if (noise < 0.0) throw ConfigError("data.noise must be nonnegative");
    if (kind != DataKind::moons && n_classes < 2) throw ConfigError("data.n_classes must be at least 2");
  }
  if (!(validation_fraction >= 0.0 && validation_fraction < 1.0))
    throw ConfigError("data.validation_fraction must lie in [0, 1)");
  if (!(alignment_fraction > 0.0 && alignment_fraction <= 1.0))
    throw ConfigError("data.alignment_fraction must lie in (0, 1]");
}

namespace {

Dataset empty_dataset(int n, int n_classes) {
  Dataset d;
  d.features.resize(n, 2);
  d.labels.resize(static_cast<std::size_t>(n));
  d.tags.assign(static_cast<std::size_t>(n), Split::train);
  d.n_classes = n_classes;
  return d;
}

}  // namespace

Dataset make_blobs(int n, int n_classes, double noise, std::uint64_t seed) {
  Rng rng(seed);
  Dataset d = empty_dataset(n, n_classes);
  const double radius = 2.0;
  for (int i = 0; i < n; ++i) {
    int y = rng.uniform_int(0, n_classes - 1);
    double angle = 2.0 * std::numbers::pi * y / n_classes;
    d.features(i, 0) = radius * std::cos(angle) + rng.normal(0.0, noise);
    d.features(i, 1) = radius * std::sin(angle) + rng.normal(0.0, noise);
    d.labels[static_cast<std::size_t>(i)] = y;
  }
  return d;
}

Dataset make_moons(int n, double noise, std::uint64_t seed) {
  Rng rng(seed);
  Dataset d = empty_dataset(n, 2);
  for (int i = 0; i < n; ++i) {
    int y = rng.uniform_int(0, 1);
    double s = rng.uniform(0.0, std::numbers::pi);
    double x0 = y == 0 ? std::cos(s) : 1.0 - std::cos(s);
    double x1 = y == 0 ? std::sin(s) : 0.5 - std::sin(s);
    d.features(i, 0) = x0 + rng.normal(0.0, noise);
    d.features(i, 1) = x1 + rng.normal(0.0, noise);
    d.labels[static_cast<std::size_t>(i)] = y;
  }
  return d;
}

Dataset make_spirals(int n, int n_classes, double noise, std::uint64_t seed) {
  Rng rng(seed);
  Dataset d = empty_dataset(n, n_classes);
  for (int i = 0; i < n; ++i) {
    int y = rng.uniform_int(0, n_classes - 1);
    double r = rng.uniform(0.05, 1.0);
    double angle = 2.0 * std::numbers::pi * y / n_classes + 1.75 * std::numbers::pi * r;
    d.features(i, 0) = r * std::cos(angle) + rng.normal(0.0, noise);
    d.features(i, 1) = r * std::sin(angle) + rng.normal(0.0, noise);
    d.labels[static_cast<std::size_t>(i)] = y;
  }
  return d;
}

void assign_splits(Dataset& d, double validation_fraction, double alignment_fraction) {
  const std::size_t n = d.size();
  const auto n_val = static_cast<std::size_t>(std::floor(validation_fraction * static_cast<double>(n)));
  const std::size_t n_train = n - n_val;
  auto n_align = static_cast<std::size_t>(std::ceil(alignment_fraction * static_cast<double>(n_train)));
  n_align = std::min(n_align, n_train);
  d.tags.assign(n, Split::train);
  for (std::size_t i = 0; i < n_align; ++i) d.tags[i] = Split::alignment;
  for (std::size_t i = n_train; i < n; ++i) d.tags[i] = Split::validation;
}

Dataset load_dataset(const DataConfig& cfg) {
  cfg.validate();
  Dataset d;
  switch (cfg.kind) {
    case DataKind::blobs: d = make_blobs(cfg.n_samples, cfg.n_classes, cfg.noise, cfg.seed); break;
    case DataKind::moons: d = make_moons(cfg.n_samples, cfg.noise, cfg.seed); break;
    case DataKind::spirals: d = make_spirals(cfg.n_samples, cfg.n_classes, cfg.noise, cfg.seed); break;
    case DataKind::csv: {
      Dataset train = read_csv(cfg.train_csv, cfg.n_classes);
      std::size_t n_train = train.size();
      if (!cfg.validation_csv.empty()) {
        Dataset val = read_csv(cfg.validation_csv, cfg.n_classes);
        if (val.n_features() != train.n_features())
          throw DimensionError("validation CSV has a different feature count than the training CSV");
        train.n_classes = std::max(train.n_classes, val.n_classes);
        Matrix f(train.features.rows() + val.features.rows(), train.features.cols());
        f << train.features, val.features;
        train.features = std::move(f);
        train.labels.insert(train.labels.end(), val.labels.begin(), val.labels.end());
      }
      train.tags.assign(train.labels.size(), Split::validation);
      auto n_align = static_cast<std::size_t>(std::ceil(cfg.alignment_fraction * static_cast<double>(n_train)));
      for (std::size_t i = 0; i < n_train; ++i) train.tags[i] = i < n_align ? Split::alignment : Split::train;
      train.validate();
      return train;
    }
  }
  assign_splits(d, cfg.validation_fraction, cfg.alignment_fraction);
  d.validate();
  return d;
}

std::string format_double(double x) {
  if (!std::isfinite(x)) throw NumericalError("cannot format a non-finite value");
  char buf[512];
  auto res = std::to_chars(buf, buf + sizeof(buf), x, std::chars_format::fixed);
  if (res.ec != std::errc()) throw NumericalError("value too long to format");
  std::string s(buf, res.ptr);
  return s == "-0" ? "0" : s;
}

std::string to_csv(const Dataset& d) {
  std::string out = "label";
  for (int j = 0; j < d.n_features(); ++j) out += ",f" + std::to_string(j);
  out += '\n';
  for (Eigen::Index i = 0; i < d.features.rows(); ++i) {
    out += std::to_string(d.labels[static_cast<std::size_t>(i)]);
    for (Eigen::Index j = 0; j < d.features.cols(); ++j) {
      out += ',';
      out += format_double(d.features(i, j));
    }
    out += '\n';
  }
  return out;
}

void write_csv(const std::filesystem::path& path, const Dataset& d) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ArtifactError("cannot write " + path.string());
  f << to_csv(d);
  if (!f) throw ArtifactError("failed writing " + path.string());
}

Dataset read_csv(const std::filesystem::path& path, int n_classes) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ArtifactError("cannot read dataset " + path.string());
  std::string line;
  if (!std::getline(f, line) || line.rfind("label", 0) != 0)
    throw ArtifactError(path.string() + ": expected a header starting with 'label'");
  const auto n_cols = static_cast<int>(std::count(line.begin(), line.end(), ','));
  std::vector<double> values;
  std::vector<int> labels;
  int lineno = 1;
  while (std::getline(f, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string_view> fields;
    std::string_view rest(line);
    for (;;) {
      auto comma = rest.find(',');
      fields.push_back(rest.substr(0, comma));
      if (comma == std::string_view::npos) break;
      rest.remove_prefix(comma + 1);
    }
    if (static_cast<int>(fields.size()) != n_cols + 1)
      throw ArtifactError(path.string() + ":" + std::to_string(lineno) + ": wrong number of fields");
    int y = 0;
    auto r = std::from_chars(fields[0].data(), fields[0].data() + fields[0].size(), y);
    if (r.ec != std::errc() || r.ptr != fields[0].data() + fields[0].size())
      throw ArtifactError(path.string() + ":" + std::to_string(lineno) + ": bad label");
    labels.push_back(y);
    for (int j = 1; j <= n_cols; ++j) {
      double v = 0.0;
      auto fv = fields[static_cast<std::size_t>(j)];
      auto rv = std::from_chars(fv.data(), fv.data() + fv.size(), v);
      if (rv.ec != std::errc() || rv.ptr != fv.data() + fv.size())
        throw ArtifactError(path.string() + ":" + std::to_string(lineno) + ": bad number '" + std::string(fv) + "'");
      values.push_back(v);
    }
  }
  Dataset d;
  d.features.resize(static_cast<Eigen::Index>(labels.size()), n_cols);
  for (std::size_t i = 0; i < labels.size(); ++i)
    for (int j = 0; j < n_cols; ++j)
      d.features(static_cast<Eigen::Index>(i), j) = values[i * static_cast<std::size_t>(n_cols) + static_cast<std::size_t>(j)];
  d.labels = std::move(labels);
  d.tags.assign(d.labels.size(), Split::train);
  int max_label = -1;
  for (int y : d.labels) max_label = std::max(max_label, y);
  d.n_classes = n_classes > 0 ? n_classes : max_label + 1;
  d.validate();
  return d;
}

}  // namespace modecon
