#pragma once

#include "modecon/alignment.hpp"
#include "modecon/bounds.hpp"
#include "modecon/curve.hpp"
#include "modecon/network.hpp"
#include "modecon/pam.hpp"
#include "modecon/permutation.hpp"
#include "modecon/robust.hpp"

#include <json.hpp>

#include <filesystem>
#include <string>

namespace modecon {

using Json = nlohmann::ordered_json;

inline constexpr int kFormatVersion = 1;

Json to_json(const NetworkSpec& spec);
NetworkSpec spec_from_json(const Json& j);

Json to_json(const Params& p);
Params params_from_json(const Json& j, const NetworkSpec& spec);

/// {format_version, spec, weights (row-major nested arrays), biases}.
Json to_json(const Network& net);
Network network_from_json(const Json& j);

/// {format_version, layer_perms, variant, cost_per_layer}.
Json permutation_to_json(const BlockPermutation& p, const std::string& variant,
                         const std::vector<double>& cost_per_layer);
BlockPermutation permutation_from_json(const Json& j);

/// {format_version, spec, theta1_ref, theta2_ref, permutation_ref, control}.
/// The refs are stored as given (typically {path, sha1}).
Json curve_to_json(const BezierCurve& c, const Json& theta1_ref, const Json& theta2_ref, const Json& permutation_ref);

Json to_json(const CurveMetrics& m);
Json to_json(const BoundReport& r);
Json to_json(const PamLogRecord& r);

std::string metrics_csv(const CurveMetrics& m);
std::string plane_csv(const PlaneGrid& g);
std::string bounds_csv(const BoundReport& r);
std::string robust_csv(const RobustCurveReport& r);
std::string pam_log_jsonl(const std::vector<PamLogRecord>& log);

/// Reads a whole file; throws ArtifactError when it is missing.
std::string read_file(const std::filesystem::path& path);
/// Writes atomically enough for our purposes (truncate + write), creating parent dirs.
void write_file(const std::filesystem::path& path, const std::string& content);
Json read_json(const std::filesystem::path& path);
/// Pretty JSON with a trailing newline.
std::string dump(const Json& j);

/// Git blob hash: SHA-1 of "blob <size>\0" followed by the content.
std::string git_blob_hash(const std::string& content);
std::string file_hash(const std::filesystem::path& path);

}  // namespace modecon
