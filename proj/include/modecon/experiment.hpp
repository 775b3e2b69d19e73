#pragma once

#include "modecon/alignment.hpp"
#include "modecon/curve.hpp"
#include "modecon/dataset.hpp"
#include "modecon/network.hpp"
#include "modecon/pam.hpp"
#include "modecon/serialize.hpp"
#include "modecon/train.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace modecon {

enum class CurveMode { unaligned, aligned, pam_unaligned, pam_aligned };

std::string to_string(CurveMode m);
CurveMode curve_mode_from_string(const std::string& s);
inline constexpr CurveMode kAllCurveModes[] = {CurveMode::unaligned, CurveMode::pam_unaligned, CurveMode::pam_aligned,
                                               CurveMode::aligned};

struct RobustSettings {
  double epsilon_fraction = 0.1;  // of the dataset feature range
  double step_fraction = 0.25;    // of epsilon
  int n_steps = 10;
  bool random_start = true;
};

/// Everything an experiment needs. Every stochastic component draws its seed
/// from `seed` through a named substream; the per-component seed fields of the
/// nested configs are overwritten.
struct ExperimentConfig {
  std::uint64_t seed = 0;
  int pairs = 3;
  DataConfig data;
  std::vector<int> hidden{32, 32, 32, 32};
  ActivationSpec activation;
  std::optional<int> residual_period;
  bool has_bias = true;
  SgdConfig train;
  CostVariant alignment_variant = CostVariant::corr_post;
  bool residual_mode = false;
  CurveTrainConfig curve;
  int grid_points = 21;
  int export_points = 61;
  PamConfig pam;
  RobustSettings robust;
  int bound_grid_points = 21;
  CostVariant bound_variant = CostVariant::l2_pre;
  int plane_resolution = 21;
  double plane_margin = 0.2;
  std::vector<double> sweep_lrs{0.1, 0.05, 0.02};
  std::vector<int> sweep_batch_sizes{32, 64, 128};

  ExperimentConfig();
  void validate() const;
  int n_classes() const;
  NetworkSpec network_spec(int n_features) const;
};

Json to_json(const ExperimentConfig& c);
/// Unknown keys are a ConfigError, so typos in files and overrides surface.
ExperimentConfig config_from_json(const Json& j);

/// Applies `path.to.key=value` to a config document. The value is parsed as
/// JSON when possible and taken as a string otherwise. The key must exist.
void apply_override(Json& doc, const std::string& assignment);

/// Defaults, then the file (if any), then the overrides, then the seed (if any).
ExperimentConfig load_config(const std::optional<std::filesystem::path>& file,
                             const std::vector<std::string>& overrides = {},
                             std::optional<std::uint64_t> seed = std::nullopt);

/// Relative artifact paths inside an output directory.
namespace paths {
inline const std::string train_csv = "data/train.csv";
inline const std::string validation_csv = "data/validation.csv";
std::string model(int i);
std::string robust_model(int i);
std::string alignment(int pair);
std::string robust_alignment(int pair);
std::string curve(CurveMode m, int pair);
std::string curve_metrics(CurveMode m, int pair);
std::string curve_metrics_csv(CurveMode m, int pair);
std::string curve_export_csv(CurveMode m, int pair);
std::string pam_log(CurveMode m, int pair);
std::string bounds(int pair);
std::string bounds_csv(int pair);
std::string robust_curve(bool aligned, int pair);
std::string robust_csv(bool aligned, int pair);
std::string robust_metrics(bool aligned, int pair);
inline const std::string signature_csv = "align/signature.csv";
inline const std::string plane_csv = "plane/pair_0.csv";
inline const std::string report_table_csv = "report/table.csv";
inline const std::string report_table_json = "report/table.json";
inline const std::string report_figure_csv = "report/figure.csv";
inline const std::string sweep_csv = "sweep/sweep.csv";
std::string manifest(const std::string& stage);
}  // namespace paths

/// Record of one stage run: config hash, seed and git-style hashes of every
/// declared input and written output, relative to the output directory.
struct Manifest {
  std::string stage;
  std::string config_hash;
  std::uint64_t seed = 0;
  std::vector<std::pair<std::string, std::string>> inputs;   // path, sha1
  std::vector<std::pair<std::string, std::string>> outputs;  // path, sha1
};

Json to_json(const Manifest& m);
Manifest manifest_from_json(const Json& j);

/// Checks that every input exists and hashes to what the manifest of the stage
/// that wrote it recorded. Throws ArtifactError otherwise.
void verify_inputs(const std::filesystem::path& out, const std::vector<std::string>& inputs);

/// Every manifest in the directory: referenced files exist and their hashes
/// match. Returns one message per problem.
std::vector<std::string> check_manifests(const std::filesystem::path& out);

/// Train/validation data as written by gen-data, with splits restored.
Dataset load_stage_data(const ExperimentConfig& cfg, const std::filesystem::path& out);

/// Pipeline stages. Each verifies its declared inputs, writes its artifacts
/// under `out` and a manifest at manifests/<stage>.json, and returns the
/// manifest.
Manifest stage_gen_data(const ExperimentConfig& cfg, const std::filesystem::path& out);
Manifest stage_train(const ExperimentConfig& cfg, const std::filesystem::path& out);
Manifest stage_align(const ExperimentConfig& cfg, const std::filesystem::path& out);
Manifest stage_curve(const ExperimentConfig& cfg, const std::filesystem::path& out, CurveMode mode);
Manifest stage_bounds(const ExperimentConfig& cfg, const std::filesystem::path& out);
Manifest stage_attack(const ExperimentConfig& cfg, const std::filesystem::path& out);
Manifest stage_plane(const ExperimentConfig& cfg, const std::filesystem::path& out);

enum class ReportConvention { table, figure };
ReportConvention report_convention_from_string(const std::string& s);
Manifest stage_report(const ExperimentConfig& cfg, const std::filesystem::path& out,
                      ReportConvention convention = ReportConvention::table);
Manifest stage_sweep(const ExperimentConfig& cfg, const std::filesystem::path& out);

/// One row of the per-mode summary table.
struct ReportRow {
  std::string mode;
  double mean_accuracy = 0.0, mean_accuracy_std = 0.0;
  double min_accuracy = 0.0, min_accuracy_std = 0.0;
  int pairs = 0;
};
std::vector<ReportRow> summarize_pairs(const std::vector<std::pair<std::string, std::vector<CurveMetrics>>>& per_mode);

CurveMetrics metrics_from_json(const Json& j);

}  // namespace modecon
