#pragma once

#include "modecon/network.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace modecon {

enum class Split { train, validation, alignment };

std::string to_string(Split s);

/// Labeled samples with a per-sample split tag. Alignment rows are part of the
/// training data: `subset(Split::train)` returns them too.
struct Dataset {
  Matrix features;  // n_samples x m_0
  std::vector<int> labels;
  std::vector<Split> tags;
  int n_classes = 0;

  std::size_t size() const { return labels.size(); }
  int n_features() const { return static_cast<int>(features.cols()); }
  void validate() const;
  /// Samples carrying the tag; `train` also includes alignment rows.
  Dataset subset(Split which) const;
  /// Rows [begin, end) of this dataset in order.
  Dataset slice(std::size_t begin, std::size_t end) const;
  /// Largest per-feature range (max - min) over all samples.
  double feature_range() const;
};

enum class DataKind { blobs, moons, spirals, csv };

std::string to_string(DataKind k);
DataKind data_kind_from_string(const std::string& s);

struct DataConfig {
  DataKind kind = DataKind::spirals;
  int n_samples = 1500;   // total, before splitting
  int n_classes = 3;      // blobs and spirals; moons is always 2
  double noise = 0.1;
  std::uint64_t seed = 0;
  double validation_fraction = 0.2;
  double alignment_fraction = 0.2;  // of the training rows
  std::string train_csv;            // kind == csv
  std::string validation_csv;

  void validate() const;
};

/// Synthetic 2-D generators. Samples are drawn in random order.
Dataset make_blobs(int n, int n_classes, double noise, std::uint64_t seed);
Dataset make_moons(int n, double noise, std::uint64_t seed);
Dataset make_spirals(int n, int n_classes, double noise, std::uint64_t seed);

/// Tags the last `validation_fraction` of the rows as validation and the first
/// `alignment_fraction` of the remaining training rows as alignment.
void assign_splits(Dataset& d, double validation_fraction, double alignment_fraction);

/// Builds the dataset described by the config (generating or loading it) with splits assigned.
Dataset load_dataset(const DataConfig& cfg);

/// CSV with header `label,f0,f1,...`, shortest round-trip plain decimals, LF endings.
std::string to_csv(const Dataset& d);
void write_csv(const std::filesystem::path& path, const Dataset& d);
/// All rows are tagged train. `n_classes` is 1 + the largest label unless given.
Dataset read_csv(const std::filesystem::path& path, int n_classes = 0);

/// Plain decimal that parses back to exactly the same double.
std::string format_double(double x);

}  // namespace modecon
