#include "modecon/serialize.hpp"

#include "modecon/dataset.hpp"
#include "modecon/error.hpp"

#include <openssl/sha.h>

#include <cstdio>
#include <fstream>
#include <sstream>

namespace modecon {

namespace {

void check_version(const Json& j, const char* what) {
  if (!j.contains("format_version") || j.at("format_version").get<int>() != kFormatVersion)
    throw ArtifactError(std::string(what) + " has an unsupported format_version");
}

Json matrix_json(const Matrix& m) {
  Json rows = Json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    Json row = Json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

Matrix matrix_from_json(const Json& j, Eigen::Index rows, Eigen::Index cols) {
  if (!j.is_array() || static_cast<Eigen::Index>(j.size()) != rows)
    throw ArtifactError("weight matrix has the wrong number of rows");
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    const Json& row = j[static_cast<std::size_t>(i)];
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols)
      throw ArtifactError("weight matrix has the wrong number of columns");
    for (Eigen::Index c = 0; c < cols; ++c) m(i, c) = row[static_cast<std::size_t>(c)].get<double>();
  }
  return m;
}

Json vector_json(const std::vector<double>& v) {
  Json a = Json::array();
  for (double x : v) a.push_back(x);
  return a;
}

}  // namespace

Json to_json(const NetworkSpec& spec) {
  Json j;
  j["layer_widths"] = spec.layer_widths;
  j["activation"] = {{"kind", to_string(spec.activation.kind)}, {"delta", spec.activation.delta}};
  j["residual_period"] = spec.residual_period ? Json(*spec.residual_period) : Json(nullptr);
  j["has_bias"] = spec.has_bias;
  return j;
}

NetworkSpec spec_from_json(const Json& j) {
  try {
    NetworkSpec s;
    s.layer_widths = j.at("layer_widths").get<std::vector<int>>();
    s.activation.kind = activation_from_string(j.at("activation").at("kind").get<std::string>());
    s.activation.delta = j.at("activation").at("delta").get<double>();
    if (j.contains("residual_period") && !j.at("residual_period").is_null())
      s.residual_period = j.at("residual_period").get<int>();
    s.has_bias = j.at("has_bias").get<bool>();
    s.validate();
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw ArtifactError(std::string("malformed network spec: ") + e.what());
  }
}

Json to_json(const Params& p) {
  Json j;
  Json w = Json::array();
  for (const auto& m : p.weights) w.push_back(matrix_json(m));
  Json b = Json::array();
  for (const auto& v : p.biases) b.push_back(vector_json(std::vector<double>(v.data(), v.data() + v.size())));
  j["weights"] = std::move(w);
  j["biases"] = std::move(b);
  return j;
}

Params params_from_json(const Json& j, const NetworkSpec& spec) {
  try {
    Params p = Params::zeros_like(spec);
    const Json& w = j.at("weights");
    if (static_cast<int>(w.size()) != spec.depth()) throw ArtifactError("wrong number of weight matrices");
    for (int k = 0; k < spec.depth(); ++k)
      p.weights[static_cast<std::size_t>(k)] =
          matrix_from_json(w[static_cast<std::size_t>(k)], spec.layer_widths[static_cast<std::size_t>(k) + 1],
                           spec.layer_widths[static_cast<std::size_t>(k)]);
    const Json& b = j.at("biases");
    if (b.size() != p.biases.size()) throw ArtifactError("wrong number of bias vectors");
    for (std::size_t k = 0; k < p.biases.size(); ++k) {
      auto v = b[k].get<std::vector<double>>();
      if (static_cast<Eigen::Index>(v.size()) != p.biases[k].size()) throw ArtifactError("bias vector has wrong length");
      p.biases[k] = Eigen::Map<Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
    }
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw ArtifactError(std::string("malformed parameters: ") + e.what());
  }
}

Json to_json(const Network& net) {
  Json j;
  j["format_version"] = kFormatVersion;
  j["spec"] = to_json(net.spec);
  Json p = to_json(net.params);
  j["weights"] = std::move(p["weights"]);
  j["biases"] = std::move(p["biases"]);
  return j;
}

Network network_from_json(const Json& j) {
  check_version(j, "model file");
  Network net{spec_from_json(j.at("spec")), {}};
  net.params = params_from_json(j, net.spec);
  net.validate();
  return net;
}

Json permutation_to_json(const BlockPermutation& p, const std::string& variant,
                         const std::vector<double>& cost_per_layer) {
  Json j;
  j["format_version"] = kFormatVersion;
  j["layer_perms"] = p.perms;
  j["variant"] = variant;
  j["cost_per_layer"] = vector_json(cost_per_layer);
  return j;
}

BlockPermutation permutation_from_json(const Json& j) {
  check_version(j, "permutation file");
  BlockPermutation p;
  try {
    p.perms = j.at("layer_perms").get<std::vector<std::vector<int>>>();
  } catch (const nlohmann::json::exception& e) {
    throw ArtifactError(std::string("malformed permutation file: ") + e.what());
  }
  for (const auto& l : p.perms)
    if (!is_permutation(l)) throw ArtifactError("permutation file holds a non-bijective layer");
  return p;
}

Json curve_to_json(const BezierCurve& c, const Json& theta1_ref, const Json& theta2_ref, const Json& permutation_ref) {
  Json j;
  j["format_version"] = kFormatVersion;
  j["spec"] = to_json(c.spec());
  j["theta1_ref"] = theta1_ref;
  j["theta2_ref"] = theta2_ref;
  j["permutation_ref"] = permutation_ref;
  j["control"] = to_json(c.control);
  return j;
}

Json to_json(const CurveMetrics& m) {
  Json j;
  j["t_grid"] = vector_json(m.t_grid);
  j["loss"] = vector_json(m.loss);
  j["accuracy"] = vector_json(m.accuracy);
  j["max_barrier"] = m.max_barrier;
  j["min_accuracy"] = m.min_accuracy;
  j["mean_accuracy"] = m.mean_accuracy;
  j["mean_loss"] = m.mean_loss;
  return j;
}

Json to_json(const BoundReport& r) {
  auto dist = [](const DistanceBounds& d) {
    Json j;
    j["base"] = vector_json(d.base);
    Json to0 = Json::array(), to1 = Json::array();
    for (const auto& v : d.to0) to0.push_back(vector_json(v));
    for (const auto& v : d.to1) to1.push_back(vector_json(v));
    j["d_t0"] = std::move(to0);
    j["d_t1"] = std::move(to1);
    j["B_t"] = vector_json(d.bound_t);
    j["B_sharp_t"] = vector_json(d.bound_sharp_t);
    j["realized_loss_t"] = vector_json(d.realized_t);
    j["B"] = d.bound;
    j["B_sharp"] = d.bound_sharp;
    return j;
  };
  Json j;
  j["format_version"] = kFormatVersion;
  j["loss"] = to_string(r.loss);
  j["alignment_variant"] = r.alignment_variant;
  j["heuristic"] = r.heuristic;
  j["t_grid"] = vector_json(r.t_grid);
  j["unaligned"] = dist(r.unaligned);
  j["aligned"] = dist(r.aligned);
  j["B_u"] = r.b_u();
  j["B_a"] = r.b_a();
  const auto& c = r.constants;
  j["constants"] = {{"L_sigma", c.l_sigma},
                    {"L_L", c.l_loss},
                    {"loss_offset", c.loss_offset},
                    {"epsilon", c.epsilon},
                    {"epsilon1", c.epsilon1},
                    {"epsilon2", c.epsilon2},
                    {"spectral_norms1", vector_json(c.spectral_norms1)},
                    {"spectral_norms2", vector_json(c.spectral_norms2)}};
  j["valid"] = r.valid();
  return j;
}

Json to_json(const PamLogRecord& r) {
  Json j;
  j["iter"] = r.iter;
  j["phase"] = r.phase;
  j["objective"] = r.objective;
  j["proximal_term"] = r.proximal_term;
  j["proximal_objective"] = r.proximal_objective;
  j["selected_candidate"] = r.selected_candidate.empty() ? Json(nullptr) : Json(r.selected_candidate);
  if (r.rectified_criterion) j["rectified_criterion"] = *r.rectified_criterion;
  return j;
}

std::string metrics_csv(const CurveMetrics& m) {
  std::string out = "t,loss,accuracy\n";
  for (std::size_t i = 0; i < m.t_grid.size(); ++i)
    out += format_double(m.t_grid[i]) + "," + format_double(m.loss[i]) + "," + format_double(m.accuracy[i]) + "\n";
  return out;
}

std::string plane_csv(const PlaneGrid& g) {
  std::string out = "u,v,loss,accuracy\n";
  for (const auto& n : g.nodes)
    out += format_double(n.u) + "," + format_double(n.v) + "," + format_double(n.loss) + "," +
           format_double(n.accuracy) + "\n";
  return out;
}

std::string bounds_csv(const BoundReport& r) {
  std::string out = "t,B_u,B_a,loss_u,loss_a\n";
  for (std::size_t i = 0; i < r.t_grid.size(); ++i)
    out += format_double(r.t_grid[i]) + "," + format_double(r.unaligned.bound_t[i]) + "," +
           format_double(r.aligned.bound_t[i]) + "," + format_double(r.unaligned.realized_t[i]) + "," +
           format_double(r.aligned.realized_t[i]) + "\n";
  return out;
}

std::string robust_csv(const RobustCurveReport& r) {
  std::string out = "t,clean_loss,clean_acc,robust_loss,robust_acc\n";
  for (std::size_t i = 0; i < r.clean.t_grid.size(); ++i)
    out += format_double(r.clean.t_grid[i]) + "," + format_double(r.clean.loss[i]) + "," +
           format_double(r.clean.accuracy[i]) + "," + format_double(r.robust.loss[i]) + "," +
           format_double(r.robust.accuracy[i]) + "\n";
  return out;
}

std::string pam_log_jsonl(const std::vector<PamLogRecord>& log) {
  std::string out;
  for (const auto& r : log) out += to_json(r).dump() + "\n";
  return out;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ArtifactError("missing artifact: " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, const std::string& content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw ArtifactError("cannot write " + path.string());
  f << content;
  if (!f) throw ArtifactError("failed writing " + path.string());
}

Json read_json(const std::filesystem::path& path) {
  std::string s = read_file(path);
  try {
    return Json::parse(s);
  } catch (const nlohmann::json::exception& e) {
    throw ArtifactError(path.string() + ": invalid JSON: " + e.what());
  }
}

std::string dump(const Json& j) { return j.dump(2) + "\n"; }

std::string git_blob_hash(const std::string& content) {
  std::string data = "blob " + std::to_string(content.size());
  data.push_back('\0');
  data += content;
  unsigned char md[SHA_DIGEST_LENGTH];
  SHA1(reinterpret_cast<const unsigned char*>(data.data()), data.size(), md);
  char hex[2 * SHA_DIGEST_LENGTH + 1];
  for (int i = 0; i < SHA_DIGEST_LENGTH; ++i) std::snprintf(hex + 2 * i, 3, "%02x", md[i]);
  return std::string(hex, 2 * SHA_DIGEST_LENGTH);
}

std::string file_hash(const std::filesystem::path& path) { return git_blob_hash(read_file(path)); }

}  // namespace modecon
