#include "modecon/experiment.hpp"

#include "modecon/bounds.hpp"
#include "modecon/error.hpp"
#include "modecon/robust.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace modecon {

std::string to_string(CurveMode m) {
  switch (m) {
    case CurveMode::unaligned: return "unaligned";
    case CurveMode::aligned: return "aligned";
    case CurveMode::pam_unaligned: return "pam-unaligned";
    case CurveMode::pam_aligned: return "pam-aligned";
  }
  return "unknown";
}

CurveMode curve_mode_from_string(const std::string& s) {
  for (CurveMode m : kAllCurveModes)
    if (to_string(m) == s) return m;
  throw ConfigError("unknown curve mode '" + s + "' (expected unaligned, aligned, pam-unaligned or pam-aligned)");
}

// ---------------------------------------------------------------------------
// Configuration

ExperimentConfig::ExperimentConfig() {
  // PAM's curve step gets the same epoch budget as plain curve training. The
  // proximal weights are sized so one swapped unit costs far less than the loss.
  pam.curve_epochs = curve.epochs;
  pam.nu_p = 1000.0;
  pam.nu_phi = 1000.0;
  pam.perm_lr = 0.5;
}

int ExperimentConfig::n_classes() const { return data.kind == DataKind::moons ? 2 : data.n_classes; }

NetworkSpec ExperimentConfig::network_spec(int n_features) const {
  return make_spec(n_features, hidden, n_classes(), activation, has_bias, residual_period);
}

void ExperimentConfig::validate() const {
  if (pairs < 1) throw ConfigError("pairs must be at least 1");
  data.validate();
  if (hidden.empty()) throw ConfigError("network.hidden needs at least one layer");
  network_spec(2);
  train.validate();
  curve.validate();
  pam.validate();
  if (grid_points < 2 || export_points < 2 || bound_grid_points < 2)
    throw ConfigError("grids need at least two points");
  if (!(robust.epsilon_fraction >= 0.0)) throw ConfigError("robust.epsilon_fraction must be nonnegative");
  if (!(robust.step_fraction > 0.0)) throw ConfigError("robust.step_fraction must be positive");
  if (robust.n_steps < 1) throw ConfigError("robust.n_steps must be at least 1");
  if (plane_resolution < 2) throw ConfigError("plane.resolution must be at least 2");
  if (!(plane_margin >= 0.0)) throw ConfigError("plane.margin must be nonnegative");
  if (sweep_lrs.empty() || sweep_batch_sizes.empty()) throw ConfigError("sweep grids must be nonempty");
  for (double lr : sweep_lrs)
    if (!(lr > 0.0)) throw ConfigError("sweep.lrs must be positive");
  for (int b : sweep_batch_sizes)
    if (b < 1) throw ConfigError("sweep.batch_sizes must be positive");
  if (residual_period && !residual_mode) throw ConfigError("residual networks need alignment.residual_mode = true");
}

namespace {

std::string bvn_rule_name(BvnRule r) { return r == BvnRule::max_trace ? "max_trace" : "max_min_entry"; }

BvnRule bvn_rule_from_string(const std::string& s) {
  if (s == "max_trace") return BvnRule::max_trace;
  if (s == "max_min_entry") return BvnRule::max_min_entry;
  throw ConfigError("unknown pam.bvn_rule '" + s + "'");
}

void check_keys(const Json& j, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be an object");
  for (const auto& [k, v] : j.items()) {
    bool ok = std::any_of(allowed.begin(), allowed.end(), [&](const char* a) { return k == a; });
    if (!ok) throw ConfigError("unknown config key '" + (where.empty() ? k : where + "." + k) + "'");
  }
}

template <class T>
void read(const Json& j, const char* key, T& out, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError("config key '" + (where.empty() ? std::string(key) : where + "." + key) + "' has the wrong type");
  }
}

}  // namespace

Json to_json(const ExperimentConfig& c) {
  Json j;
  j["seed"] = c.seed;
  j["pairs"] = c.pairs;
  j["data"] = {{"kind", to_string(c.data.kind)},
               {"n_samples", c.data.n_samples},
               {"n_classes", c.data.n_classes},
               {"noise", c.data.noise},
               {"validation_fraction", c.data.validation_fraction},
               {"alignment_fraction", c.data.alignment_fraction},
               {"train_csv", c.data.train_csv},
               {"validation_csv", c.data.validation_csv}};
  j["network"] = {{"hidden", c.hidden},
                  {"activation", to_string(c.activation.kind)},
                  {"delta", c.activation.delta},
                  {"residual_period", c.residual_period ? Json(*c.residual_period) : Json(nullptr)},
                  {"has_bias", c.has_bias}};
  j["train"] = {{"lr", c.train.lr},
                {"lr_decay_every", c.train.lr_decay_every},
                {"lr_decay_factor", c.train.lr_decay_factor},
                {"weight_decay", c.train.weight_decay},
                {"momentum", c.train.momentum},
                {"epochs", c.train.epochs},
                {"batch_size", c.train.batch_size},
                {"max_weight_spectral_norm",
                 c.train.max_weight_spectral_norm ? Json(*c.train.max_weight_spectral_norm) : Json(nullptr)},
                {"loss", to_string(c.train.loss)}};
  j["alignment"] = {{"variant", to_string(c.alignment_variant)}, {"residual_mode", c.residual_mode}};
  j["curve"] = {{"lr", c.curve.lr},
                {"lr_decay_every", c.curve.lr_decay_every},
                {"lr_decay_factor", c.curve.lr_decay_factor},
                {"weight_decay", c.curve.weight_decay},
                {"momentum", c.curve.momentum},
                {"epochs", c.curve.epochs},
                {"batch_size", c.curve.batch_size},
                {"grid_points", c.grid_points},
                {"export_points", c.export_points}};
  Json diag = nullptr;
  if (c.pam.diagnostic)
    diag = {{"k_l", c.pam.diagnostic->k_l}, {"k_w", c.pam.diagnostic->k_w}, {"delta", c.pam.diagnostic->delta}};
  j["pam"] = {{"nu_p", c.pam.nu_p},
              {"nu_phi", c.pam.nu_phi},
              {"perm_epochs", c.pam.perm_epochs},
              {"curve_epochs", c.pam.curve_epochs},
              {"proj_iters", c.pam.proj_iters},
              {"bvn_truncate", c.pam.bvn_truncate},
              {"n_samples", c.pam.n_samples},
              {"outer_iters", c.pam.outer_iters},
              {"selection_batch", c.pam.selection_batch},
              {"t_nodes", c.pam.t_nodes},
              {"perm_lr", c.pam.perm_lr},
              {"phi_lr", c.pam.phi_lr},
              {"anneal", c.pam.anneal},
              {"batch_size", c.pam.batch_size},
              {"full_batch", c.pam.full_batch},
              {"bvn_rule", bvn_rule_name(c.pam.bvn_rule)},
              {"rectified_diagnostic", diag}};
  j["robust"] = {{"epsilon_fraction", c.robust.epsilon_fraction},
                 {"step_fraction", c.robust.step_fraction},
                 {"n_steps", c.robust.n_steps},
                 {"random_start", c.robust.random_start}};
  j["bounds"] = {{"grid_points", c.bound_grid_points}, {"variant", to_string(c.bound_variant)}};
  j["plane"] = {{"resolution", c.plane_resolution}, {"margin", c.plane_margin}};
  j["sweep"] = {{"lrs", c.sweep_lrs}, {"batch_sizes", c.sweep_batch_sizes}};
  return j;
}

ExperimentConfig config_from_json(const Json& j) {
  ExperimentConfig c;
  check_keys(j, {"seed", "pairs", "data", "network", "train", "alignment", "curve", "pam", "robust", "bounds", "plane",
                 "sweep"},
             "");
  read(j, "seed", c.seed, "");
  read(j, "pairs", c.pairs, "");

  if (j.contains("data")) {
    const Json& d = j["data"];
    check_keys(d, {"kind", "n_samples", "n_classes", "noise", "validation_fraction", "alignment_fraction", "train_csv",
                   "validation_csv"},
               "data");
    std::string kind = to_string(c.data.kind);
    read(d, "kind", kind, "data");
    c.data.kind = data_kind_from_string(kind);
    read(d, "n_samples", c.data.n_samples, "data");
    read(d, "n_classes", c.data.n_classes, "data");
    read(d, "noise", c.data.noise, "data");
    read(d, "validation_fraction", c.data.validation_fraction, "data");
    read(d, "alignment_fraction", c.data.alignment_fraction, "data");
    read(d, "train_csv", c.data.train_csv, "data");
    read(d, "validation_csv", c.data.validation_csv, "data");
  }
  if (j.contains("network")) {
    const Json& n = j["network"];
    check_keys(n, {"hidden", "activation", "delta", "residual_period", "has_bias"}, "network");
    read(n, "hidden", c.hidden, "network");
    std::string act = to_string(c.activation.kind);
    read(n, "activation", act, "network");
    c.activation.kind = activation_from_string(act);
    read(n, "delta", c.activation.delta, "network");
    if (n.contains("residual_period") && !n["residual_period"].is_null()) {
      int p = 0;
      read(n, "residual_period", p, "network");
      c.residual_period = p;
    }
    read(n, "has_bias", c.has_bias, "network");
  }
  if (j.contains("train")) {
    const Json& t = j["train"];
    check_keys(t, {"lr", "lr_decay_every", "lr_decay_factor", "weight_decay", "momentum", "epochs", "batch_size",
                   "max_weight_spectral_norm", "loss"},
               "train");
    read(t, "lr", c.train.lr, "train");
    read(t, "lr_decay_every", c.train.lr_decay_every, "train");
    read(t, "lr_decay_factor", c.train.lr_decay_factor, "train");
    read(t, "weight_decay", c.train.weight_decay, "train");
    read(t, "momentum", c.train.momentum, "train");
    read(t, "epochs", c.train.epochs, "train");
    read(t, "batch_size", c.train.batch_size, "train");
    if (t.contains("max_weight_spectral_norm") && !t["max_weight_spectral_norm"].is_null()) {
      double b = 0.0;
      read(t, "max_weight_spectral_norm", b, "train");
      c.train.max_weight_spectral_norm = b;
    }
    std::string loss = to_string(c.train.loss);
    read(t, "loss", loss, "train");
    c.train.loss = loss_kind_from_string(loss);
  }
  if (j.contains("alignment")) {
    const Json& a = j["alignment"];
    check_keys(a, {"variant", "residual_mode"}, "alignment");
    std::string v = to_string(c.alignment_variant);
    read(a, "variant", v, "alignment");
    c.alignment_variant = cost_variant_from_string(v);
    read(a, "residual_mode", c.residual_mode, "alignment");
  }
  bool pam_epochs_given = false;
  if (j.contains("curve")) {
    const Json& k = j["curve"];
    check_keys(k, {"lr", "lr_decay_every", "lr_decay_factor", "weight_decay", "momentum", "epochs", "batch_size",
                   "grid_points", "export_points"},
               "curve");
    read(k, "lr", c.curve.lr, "curve");
    read(k, "lr_decay_every", c.curve.lr_decay_every, "curve");
    read(k, "lr_decay_factor", c.curve.lr_decay_factor, "curve");
    read(k, "weight_decay", c.curve.weight_decay, "curve");
    read(k, "momentum", c.curve.momentum, "curve");
    read(k, "epochs", c.curve.epochs, "curve");
    read(k, "batch_size", c.curve.batch_size, "curve");
    read(k, "grid_points", c.grid_points, "curve");
    read(k, "export_points", c.export_points, "curve");
  }
  if (j.contains("pam")) {
    const Json& p = j["pam"];
    check_keys(p, {"nu_p", "nu_phi", "perm_epochs", "curve_epochs", "proj_iters", "bvn_truncate", "n_samples",
                   "outer_iters", "selection_batch", "t_nodes", "perm_lr", "phi_lr", "anneal", "batch_size",
                   "full_batch", "bvn_rule", "rectified_diagnostic"},
               "pam");
    read(p, "nu_p", c.pam.nu_p, "pam");
    read(p, "nu_phi", c.pam.nu_phi, "pam");
    read(p, "perm_epochs", c.pam.perm_epochs, "pam");
    pam_epochs_given = p.contains("curve_epochs");
    read(p, "curve_epochs", c.pam.curve_epochs, "pam");
    read(p, "proj_iters", c.pam.proj_iters, "pam");
    read(p, "bvn_truncate", c.pam.bvn_truncate, "pam");
    read(p, "n_samples", c.pam.n_samples, "pam");
    read(p, "outer_iters", c.pam.outer_iters, "pam");
    read(p, "selection_batch", c.pam.selection_batch, "pam");
    read(p, "t_nodes", c.pam.t_nodes, "pam");
    read(p, "perm_lr", c.pam.perm_lr, "pam");
    read(p, "phi_lr", c.pam.phi_lr, "pam");
    read(p, "anneal", c.pam.anneal, "pam");
    read(p, "batch_size", c.pam.batch_size, "pam");
    read(p, "full_batch", c.pam.full_batch, "pam");
    std::string rule = bvn_rule_name(c.pam.bvn_rule);
    read(p, "bvn_rule", rule, "pam");
    c.pam.bvn_rule = bvn_rule_from_string(rule);
    if (p.contains("rectified_diagnostic") && !p["rectified_diagnostic"].is_null()) {
      const Json& d = p["rectified_diagnostic"];
      check_keys(d, {"k_l", "k_w", "delta"}, "pam.rectified_diagnostic");
      RectifiedDiagnostic diag;
      read(d, "k_l", diag.k_l, "pam.rectified_diagnostic");
      read(d, "k_w", diag.k_w, "pam.rectified_diagnostic");
      read(d, "delta", diag.delta, "pam.rectified_diagnostic");
      c.pam.diagnostic = diag;
    }
  }
  if (!pam_epochs_given) c.pam.curve_epochs = c.curve.epochs;
  if (j.contains("robust")) {
    const Json& r = j["robust"];
    check_keys(r, {"epsilon_fraction", "step_fraction", "n_steps", "random_start"}, "robust");
    read(r, "epsilon_fraction", c.robust.epsilon_fraction, "robust");
    read(r, "step_fraction", c.robust.step_fraction, "robust");
    read(r, "n_steps", c.robust.n_steps, "robust");
    read(r, "random_start", c.robust.random_start, "robust");
  }
  if (j.contains("bounds")) {
    const Json& b = j["bounds"];
    check_keys(b, {"grid_points", "variant"}, "bounds");
    read(b, "grid_points", c.bound_grid_points, "bounds");
    std::string v = to_string(c.bound_variant);
    read(b, "variant", v, "bounds");
    c.bound_variant = cost_variant_from_string(v);
  }
  if (j.contains("plane")) {
    const Json& p = j["plane"];
    check_keys(p, {"resolution", "margin"}, "plane");
    read(p, "resolution", c.plane_resolution, "plane");
    read(p, "margin", c.plane_margin, "plane");
  }
  if (j.contains("sweep")) {
    const Json& s = j["sweep"];
    check_keys(s, {"lrs", "batch_sizes"}, "sweep");
    read(s, "lrs", c.sweep_lrs, "sweep");
    read(s, "batch_sizes", c.sweep_batch_sizes, "sweep");
  }
  c.curve.loss = c.train.loss;
  c.pam.loss = c.train.loss;
  c.validate();
  return c;
}

void apply_override(Json& doc, const std::string& assignment) {
  auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + assignment + "' is not of the form key=value");
  std::string key = assignment.substr(0, eq);
  std::string raw = assignment.substr(eq + 1);
  Json value;
  try {
    value = Json::parse(raw);
  } catch (const nlohmann::json::exception&) {
    value = raw;
  }
  Json* node = &doc;
  std::size_t start = 0;
  while (true) {
    auto dot = key.find('.', start);
    std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (!node->is_object() || !node->contains(part)) throw ConfigError("unknown config key '" + key + "'");
    node = &(*node)[part];
    if (dot == std::string::npos) break;
    start = dot + 1;
  }
  *node = std::move(value);
}

ExperimentConfig load_config(const std::optional<std::filesystem::path>& file, const std::vector<std::string>& overrides,
                             std::optional<std::uint64_t> seed) {
  Json doc = to_json(ExperimentConfig{});
  bool user_sets_pam_epochs = false;
  if (file) {
    Json user;
    try {
      user = Json::parse(read_file(*file));
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(file->string() + ": invalid JSON: " + e.what());
    } catch (const ArtifactError&) {
      throw ConfigError("config file not found: " + file->string());
    }
    // Validate the user's keys before merging so typos are reported as such.
    config_from_json(user);
    user_sets_pam_epochs = user.contains("pam") && user["pam"].contains("curve_epochs");
    doc.merge_patch(user);
    // merge_patch drops keys set to null; restore optional fields explicitly.
    for (const auto& [section, body] : user.items())
      if (body.is_object())
        for (const auto& [k, v] : body.items())
          if (v.is_null()) doc[section][k] = nullptr;
  }
  bool pam_epochs_set = file && user_sets_pam_epochs;
  for (const auto& o : overrides) {
    apply_override(doc, o);
    if (o.rfind("pam.curve_epochs=", 0) == 0) pam_epochs_set = true;
  }
  if (!pam_epochs_set) doc["pam"]["curve_epochs"] = doc["curve"]["epochs"];
  if (seed) doc["seed"] = *seed;
  return config_from_json(doc);
}

// ---------------------------------------------------------------------------
// Paths

namespace paths {

std::string model(int i) { return "models/model_" + std::to_string(i) + ".json"; }
std::string robust_model(int i) { return "attack/robust_model_" + std::to_string(i) + ".json"; }
std::string alignment(int pair) { return "align/pair_" + std::to_string(pair) + ".json"; }
std::string robust_alignment(int pair) { return "attack/align_pair_" + std::to_string(pair) + ".json"; }
std::string curve(CurveMode m, int pair) { return "curves/" + to_string(m) + "/pair_" + std::to_string(pair) + ".json"; }
std::string curve_metrics(CurveMode m, int pair) {
  return "curves/" + to_string(m) + "/pair_" + std::to_string(pair) + "_metrics.json";
}
std::string curve_metrics_csv(CurveMode m, int pair) {
  return "curves/" + to_string(m) + "/pair_" + std::to_string(pair) + "_metrics.csv";
}
std::string curve_export_csv(CurveMode m, int pair) {
  return "curves/" + to_string(m) + "/pair_" + std::to_string(pair) + "_export.csv";
}
std::string pam_log(CurveMode m, int pair) {
  return "curves/" + to_string(m) + "/pair_" + std::to_string(pair) + "_pam_log.jsonl";
}
std::string bounds(int pair) { return "bounds/pair_" + std::to_string(pair) + ".json"; }
std::string bounds_csv(int pair) { return "bounds/pair_" + std::to_string(pair) + ".csv"; }
std::string robust_curve(bool aligned, int pair) {
  return std::string("attack/") + (aligned ? "aligned" : "unaligned") + "_pair_" + std::to_string(pair) + ".json";
}
std::string robust_csv(bool aligned, int pair) {
  return std::string("attack/") + (aligned ? "aligned" : "unaligned") + "_pair_" + std::to_string(pair) + ".csv";
}
std::string robust_metrics(bool aligned, int pair) {
  return std::string("attack/") + (aligned ? "aligned" : "unaligned") + "_pair_" + std::to_string(pair) +
         "_metrics.json";
}
std::string manifest(const std::string& stage) { return "manifests/" + stage + ".json"; }

}  // namespace paths

// ---------------------------------------------------------------------------
// Stages

namespace fs = std::filesystem;

namespace {

// Collects outputs while a stage runs and writes its manifest at the end.
class StageWriter {
 public:
  StageWriter(const ExperimentConfig& cfg, fs::path out, std::string stage, std::vector<std::string> inputs)
      : out_(std::move(out)) {
    verify_inputs(out_, inputs);
    m_.stage = std::move(stage);
    m_.config_hash = git_blob_hash(dump(to_json(cfg)));
    m_.seed = cfg.seed;
    for (const auto& in : inputs) m_.inputs.emplace_back(in, file_hash(out_ / in));
  }

  void write(const std::string& rel, const std::string& content) {
    write_file(out_ / rel, content);
    m_.outputs.emplace_back(rel, git_blob_hash(content));
  }
  void write(const std::string& rel, const Json& j) { write(rel, dump(j)); }

  Manifest finish() {
    write_file(out_ / paths::manifest(m_.stage), dump(to_json(m_)));
    return m_;
  }

 private:
  fs::path out_;
  Manifest m_;
};

std::vector<std::string> data_inputs() { return {paths::train_csv, paths::validation_csv}; }

std::vector<std::string> model_inputs(const ExperimentConfig& cfg) {
  std::vector<std::string> v = data_inputs();
  for (int i = 0; i < 2 * cfg.pairs; ++i) v.push_back(paths::model(i));
  return v;
}

Network load_model(const fs::path& out, const std::string& rel) { return network_from_json(read_json(out / rel)); }

Json ref(const fs::path& out, const std::string& rel) { return {{"path", rel}, {"sha1", file_hash(out / rel)}}; }

std::uint64_t curve_seed(const ExperimentConfig& cfg, int pair) {
  return derive_seed(cfg.seed, "curve", static_cast<std::uint64_t>(pair));
}

PGDConfig stage_attack_config(const ExperimentConfig& cfg, const Dataset& data) {
  PGDConfig a = default_pgd(data, cfg.robust.epsilon_fraction);
  a.step_size = a.epsilon > 0.0 ? cfg.robust.step_fraction * a.epsilon : 1.0;
  a.n_steps = cfg.robust.n_steps;
  a.random_start = cfg.robust.random_start;
  a.loss = cfg.train.loss;
  return a;
}

std::string signature_rows(int pair, const std::vector<double>& before, const std::vector<double>& after) {
  std::string s;
  for (std::size_t h = 0; h < before.size(); ++h)
    s += std::to_string(pair) + "," + std::to_string(h + 1) + "," + format_double(before[h]) + "," +
         format_double(after[h]) + "\n";
  return s;
}

double mean(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

double sample_std(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  double m = mean(v), s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

}  // namespace

Dataset load_stage_data(const ExperimentConfig& cfg, const fs::path& out) {
  DataConfig dc;
  dc.kind = DataKind::csv;
  dc.train_csv = (out / paths::train_csv).string();
  dc.validation_csv = (out / paths::validation_csv).string();
  dc.n_classes = cfg.n_classes();
  dc.alignment_fraction = cfg.data.alignment_fraction;
  Dataset d = load_dataset(dc);
  d.n_classes = cfg.n_classes();
  d.validate();
  return d;
}

Manifest stage_gen_data(const ExperimentConfig& cfg, const fs::path& out) {
  cfg.validate();
  DataConfig dc = cfg.data;
  dc.seed = derive_seed(cfg.seed, "data");
  Dataset d = load_dataset(dc);
  if (d.n_classes > cfg.n_classes())
    throw ConfigError("dataset has " + std::to_string(d.n_classes) + " classes but data.n_classes is " +
                      std::to_string(cfg.n_classes()));
  StageWriter w(cfg, out, "gen-data", {});
  w.write(paths::train_csv, to_csv(d.subset(Split::train)));
  w.write(paths::validation_csv, to_csv(d.subset(Split::validation)));
  return w.finish();
}

Manifest stage_train(const ExperimentConfig& cfg, const fs::path& out) {
  cfg.validate();
  StageWriter w(cfg, out, "train", data_inputs());
  Dataset d = load_stage_data(cfg, out);
  NetworkSpec spec = cfg.network_spec(d.n_features());
  Json log = Json::object();
  for (int i = 0; i < 2 * cfg.pairs; ++i) {
    SgdConfig sgd = cfg.train;
    sgd.seed = derive_seed(cfg.seed, "train", static_cast<std::uint64_t>(i));
    TrainResult r = train_sgd(init_network(spec, derive_seed(cfg.seed, "init", static_cast<std::uint64_t>(i))), d, sgd);
    w.write(paths::model(i), to_json(r.net));
    log["model_" + std::to_string(i)] = r.log.epoch_loss;
  }
  w.write("models/train_log.json", log);
  return w.finish();
}

Manifest stage_align(const ExperimentConfig& cfg, const fs::path& out) {
  cfg.validate();
  StageWriter w(cfg, out, "align", model_inputs(cfg));
  Dataset d = load_stage_data(cfg, out);
  const Matrix x = d.subset(Split::alignment).features;
  std::string sig = "pair,layer,before,after\n";
  for (int p = 0; p < cfg.pairs; ++p) {
    Network a = load_model(out, paths::model(2 * p)), b = load_model(out, paths::model(2 * p + 1));
    AlignResult r = align_networks(a, b, x, cfg.alignment_variant, cfg.residual_mode);
    w.write(paths::alignment(p), permutation_to_json(r.perm, to_string(cfg.alignment_variant), r.cost_per_layer));
    sig += signature_rows(p, correlation_signature(a, b, x), correlation_signature(a, r.aligned, x));
  }
  w.write(paths::signature_csv, sig);
  return w.finish();
}

Manifest stage_curve(const ExperimentConfig& cfg, const fs::path& out, CurveMode mode) {
  cfg.validate();
  const bool aligned_start = mode == CurveMode::aligned || mode == CurveMode::pam_aligned;
  std::vector<std::string> inputs = model_inputs(cfg);
  if (aligned_start)
    for (int p = 0; p < cfg.pairs; ++p) inputs.push_back(paths::alignment(p));
  StageWriter w(cfg, out, "curve-" + to_string(mode), inputs);
  Dataset d = load_stage_data(cfg, out);
  Dataset train = d.subset(Split::train), val = d.subset(Split::validation);
  if (val.size() == 0) val = train;
  const auto grid = uniform_grid(cfg.grid_points);
  const auto export_grid = uniform_grid(cfg.export_points);

  for (int p = 0; p < cfg.pairs; ++p) {
    Network a = load_model(out, paths::model(2 * p)), b = load_model(out, paths::model(2 * p + 1));
    BlockPermutation start = BlockPermutation::identity(a.spec);
    Json perm_ref = nullptr;
    if (aligned_start) {
      start = permutation_from_json(read_json(out / paths::alignment(p)));
      start.validate(a.spec);
      perm_ref = ref(out, paths::alignment(p));
    }
    BezierCurve curve;
    if (mode == CurveMode::unaligned || mode == CurveMode::aligned) {
      CurveTrainConfig cc = cfg.curve;
      cc.seed = curve_seed(cfg, p);
      curve = train_curve(init_linear(a, apply_permutation(b, start)), train.features, train.labels, cc).curve;
    } else {
      PamConfig pc = cfg.pam;
      pc.seed = curve_seed(cfg, p);
      PamResult r = run_pam(a, b, start, train.features, train.labels, pc);
      curve = r.curve.to_bezier();
      perm_ref = permutation_to_json(r.curve.perm, "pam", {});
      w.write(paths::pam_log(mode, p), pam_log_jsonl(r.log));
    }
    w.write(paths::curve(mode, p),
            curve_to_json(curve, ref(out, paths::model(2 * p)), ref(out, paths::model(2 * p + 1)), perm_ref));
    CurveMetrics m = evaluate_curve(curve, val.features, val.labels, grid, cfg.train.loss);
    w.write(paths::curve_metrics(mode, p), to_json(m));
    w.write(paths::curve_metrics_csv(mode, p), metrics_csv(m));
    w.write(paths::curve_export_csv(mode, p),
            metrics_csv(evaluate_curve(curve, val.features, val.labels, export_grid, cfg.train.loss)));
  }
  return w.finish();
}

Manifest stage_bounds(const ExperimentConfig& cfg, const fs::path& out) {
  cfg.validate();
  StageWriter w(cfg, out, "bounds", model_inputs(cfg));
  Dataset d = load_stage_data(cfg, out);
  Dataset train = d.subset(Split::train);
  const Matrix x_align = d.subset(Split::alignment).features;
  const auto grid = uniform_grid(cfg.bound_grid_points);
  for (int p = 0; p < cfg.pairs; ++p) {
    Network a = load_model(out, paths::model(2 * p)), b = load_model(out, paths::model(2 * p + 1));
    AlignResult al = align_networks(a, b, x_align, cfg.bound_variant);
    BoundLoss kind = cfg.train.loss == LossKind::cross_entropy ? BoundLoss::cross_entropy : BoundLoss::rmse;
    BoundReport r = kind == BoundLoss::cross_entropy
                        ? compute_bounds(a, b, al.perm, train.features, train.labels, grid, kind, cfg.bound_variant)
                        : compute_bounds(a, b, al.perm, train.features, one_hot(train.labels, d.n_classes), grid,
                                         cfg.bound_variant);
    Json j = to_json(r);
    j["permutation"] = permutation_to_json(al.perm, to_string(cfg.bound_variant), al.cost_per_layer);
    w.write(paths::bounds(p), j);
    w.write(paths::bounds_csv(p), bounds_csv(r));
  }
  return w.finish();
}

Manifest stage_attack(const ExperimentConfig& cfg, const fs::path& out) {
  cfg.validate();
  StageWriter w(cfg, out, "attack", data_inputs());
  Dataset d = load_stage_data(cfg, out);
  Dataset train = d.subset(Split::train), val = d.subset(Split::validation);
  if (val.size() == 0) val = train;
  const Matrix x_align = d.subset(Split::alignment).features;
  NetworkSpec spec = cfg.network_spec(d.n_features());
  PGDConfig attack = stage_attack_config(cfg, d);
  const auto grid = uniform_grid(cfg.grid_points);

  std::vector<Network> models;
  for (int i = 0; i < 2 * cfg.pairs; ++i) {
    SgdConfig sgd = cfg.train;
    sgd.seed = derive_seed(cfg.seed, "train", static_cast<std::uint64_t>(i));
    Network init = init_network(spec, derive_seed(cfg.seed, "init", static_cast<std::uint64_t>(i)));
    models.push_back(adversarial_train(init, train.features, train.labels, sgd, attack,
                                       derive_seed(cfg.seed, "attack-train", static_cast<std::uint64_t>(i)))
                         .net);
    w.write(paths::robust_model(i), to_json(models.back()));
  }
  for (int p = 0; p < cfg.pairs; ++p) {
    const Network& a = models[static_cast<std::size_t>(2 * p)];
    const Network& b = models[static_cast<std::size_t>(2 * p + 1)];
    AlignResult al = align_networks(a, b, x_align, cfg.alignment_variant, cfg.residual_mode);
    w.write(paths::robust_alignment(p),
            permutation_to_json(al.perm, to_string(cfg.alignment_variant), al.cost_per_layer));
    for (bool aligned : {false, true}) {
      CurveTrainConfig cc = cfg.curve;
      cc.seed = curve_seed(cfg, p);
      BezierCurve c = train_curve(init_linear(a, aligned ? al.aligned : b), train.features, train.labels, cc, attack).curve;
      Json perm_ref = aligned ? ref(out, paths::robust_alignment(p)) : Json(nullptr);
      w.write(paths::robust_curve(aligned, p),
              curve_to_json(c, ref(out, paths::robust_model(2 * p)), ref(out, paths::robust_model(2 * p + 1)),
                            perm_ref));
      RobustCurveReport rep = robust_curve_report(c, val.features, val.labels, grid, attack,
                                                  derive_seed(cfg.seed, "attack-eval", static_cast<std::uint64_t>(p)));
      w.write(paths::robust_csv(aligned, p), robust_csv(rep));
      Json j = {{"clean", to_json(rep.clean)},
                {"robust", to_json(rep.robust)},
                {"epsilon", attack.epsilon},
                {"worst_linf", rep.worst_check.linf},
                {"worst_box_violation", rep.worst_check.box_violation}};
      w.write(paths::robust_metrics(aligned, p), j);
    }
  }
  return w.finish();
}

Manifest stage_plane(const ExperimentConfig& cfg, const fs::path& out) {
  cfg.validate();
  std::vector<std::string> inputs = data_inputs();
  inputs.push_back(paths::model(0));
  inputs.push_back(paths::model(1));
  inputs.push_back(paths::alignment(0));
  StageWriter w(cfg, out, "plane", inputs);
  Dataset d = load_stage_data(cfg, out);
  Dataset val = d.subset(Split::validation);
  if (val.size() == 0) val = d.subset(Split::train);
  Network a = load_model(out, paths::model(0)), b = load_model(out, paths::model(1));
  BlockPermutation p = permutation_from_json(read_json(out / paths::alignment(0)));
  p.validate(a.spec);
  PlaneGrid g = plane_grid(a, b, apply_permutation(b, p), val.features, val.labels, cfg.plane_resolution,
                           cfg.plane_margin, cfg.train.loss);
  w.write(paths::plane_csv, plane_csv(g));
  return w.finish();
}

ReportConvention report_convention_from_string(const std::string& s) {
  if (s == "table") return ReportConvention::table;
  if (s == "figure") return ReportConvention::figure;
  throw ConfigError("unknown report convention '" + s + "' (expected table or figure)");
}

CurveMetrics metrics_from_json(const Json& j) {
  try {
    return summarize_curve(j.at("t_grid").get<std::vector<double>>(), j.at("loss").get<std::vector<double>>(),
                           j.at("accuracy").get<std::vector<double>>());
  } catch (const nlohmann::json::exception& e) {
    throw ArtifactError(std::string("malformed metrics file: ") + e.what());
  }
}

std::vector<ReportRow> summarize_pairs(const std::vector<std::pair<std::string, std::vector<CurveMetrics>>>& per_mode) {
  std::vector<ReportRow> rows;
  for (const auto& [mode, metrics] : per_mode) {
    std::vector<double> means, mins;
    for (const auto& m : metrics) {
      means.push_back(m.mean_accuracy);
      mins.push_back(m.min_accuracy);
    }
    rows.push_back({mode, mean(means), sample_std(means), mean(mins), sample_std(mins), static_cast<int>(metrics.size())});
  }
  return rows;
}

Manifest stage_report(const ExperimentConfig& cfg, const fs::path& out, ReportConvention convention) {
  cfg.validate();
  std::vector<std::string> inputs;
  for (CurveMode m : kAllCurveModes)
    for (int p = 0; p < cfg.pairs; ++p) inputs.push_back(paths::curve_metrics(m, p));
  StageWriter w(cfg, out, convention == ReportConvention::table ? "report" : "report-figure", inputs);
  if (convention == ReportConvention::table) {
    std::vector<std::pair<std::string, std::vector<CurveMetrics>>> per_mode;
    for (CurveMode m : kAllCurveModes) {
      std::vector<CurveMetrics> ms;
      for (int p = 0; p < cfg.pairs; ++p) ms.push_back(metrics_from_json(read_json(out / paths::curve_metrics(m, p))));
      per_mode.emplace_back(to_string(m), std::move(ms));
    }
    std::string csv = "mode,mean_accuracy,mean_accuracy_std,min_accuracy,min_accuracy_std,pairs\n";
    Json rows = Json::array();
    for (const auto& r : summarize_pairs(per_mode)) {
      csv += r.mode + "," + format_double(r.mean_accuracy) + "," + format_double(r.mean_accuracy_std) + "," +
             format_double(r.min_accuracy) + "," + format_double(r.min_accuracy_std) + "," + std::to_string(r.pairs) +
             "\n";
      rows.push_back({{"mode", r.mode},
                      {"mean_accuracy", r.mean_accuracy},
                      {"mean_accuracy_std", r.mean_accuracy_std},
                      {"min_accuracy", r.min_accuracy},
                      {"min_accuracy_std", r.min_accuracy_std},
                      {"pairs", r.pairs}});
    }
    w.write(paths::report_table_csv, csv);
    w.write(paths::report_table_json, Json{{"format_version", kFormatVersion}, {"convention", "table"}, {"rows", rows}});
  } else {
    // Curves of one endpoint pair, all trained from the same curve seed.
    std::string csv = "mode,t,loss,accuracy\n";
    for (CurveMode m : kAllCurveModes) {
      CurveMetrics cm = metrics_from_json(read_json(out / paths::curve_metrics(m, 0)));
      for (std::size_t i = 0; i < cm.t_grid.size(); ++i)
        csv += to_string(m) + "," + format_double(cm.t_grid[i]) + "," + format_double(cm.loss[i]) + "," +
               format_double(cm.accuracy[i]) + "\n";
    }
    w.write(paths::report_figure_csv, csv);
  }
  return w.finish();
}

Manifest stage_sweep(const ExperimentConfig& cfg, const fs::path& out) {
  cfg.validate();
  std::vector<std::string> inputs = data_inputs();
  inputs.push_back(paths::model(0));
  inputs.push_back(paths::model(1));
  inputs.push_back(paths::alignment(0));
  StageWriter w(cfg, out, "sweep", inputs);
  Dataset d = load_stage_data(cfg, out);
  Dataset train = d.subset(Split::train), val = d.subset(Split::validation);
  if (val.size() == 0) val = train;
  Network a = load_model(out, paths::model(0)), b = load_model(out, paths::model(1));
  BlockPermutation p = permutation_from_json(read_json(out / paths::alignment(0)));
  p.validate(a.spec);
  const Network pb = apply_permutation(b, p);
  const auto grid = uniform_grid(cfg.grid_points);
  std::string csv = "lr,batch_size,mode,mean_accuracy,min_accuracy,mean_loss\n";
  for (double lr : cfg.sweep_lrs) {
    for (int bs : cfg.sweep_batch_sizes) {
      for (bool aligned : {false, true}) {
        CurveTrainConfig cc = cfg.curve;
        cc.lr = lr;
        cc.batch_size = bs;
        cc.seed = curve_seed(cfg, 0);
        BezierCurve c = train_curve(init_linear(a, aligned ? pb : b), train.features, train.labels, cc).curve;
        CurveMetrics m = evaluate_curve(c, val.features, val.labels, grid, cfg.train.loss);
        csv += format_double(lr) + "," + std::to_string(bs) + "," + (aligned ? "aligned" : "unaligned") + "," +
               format_double(m.mean_accuracy) + "," + format_double(m.min_accuracy) + "," +
               format_double(m.mean_loss) + "\n";
      }
    }
  }
  w.write(paths::sweep_csv, csv);
  return w.finish();
}

}  // namespace modecon
