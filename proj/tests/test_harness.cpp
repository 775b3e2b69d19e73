#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "cli.hpp"
#include "modecon/error.hpp"
#include "modecon/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace modecon;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  fs::path p = fs::temp_directory_path() / ("modecon_harness_" + name);
  fs::remove_all(p);
  return p;
}

ExperimentConfig small_config() {
  ExperimentConfig c;
  c.pairs = 3;
  c.data.kind = DataKind::blobs;
  c.data.n_samples = 600;
  c.data.n_classes = 3;
  c.data.noise = 0.6;
  c.hidden = {16, 16};
  c.train.epochs = 20;
  c.curve.epochs = 10;
  c.pam.curve_epochs = 10;
  c.pam.perm_epochs = 5;
  c.seed = 11;
  return c;
}

int cli(std::vector<std::string> args, std::string* err_text = nullptr) {
  args.insert(args.begin(), "modecon");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  if (err_text) *err_text = err.str();
  return code;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

}  // namespace

TEST_CASE("config round-trips through JSON") {
  ExperimentConfig c = small_config();
  c.residual_period = 1;
  c.residual_mode = true;
  c.train.max_weight_spectral_norm = 3.0;
  c.pam.diagnostic = RectifiedDiagnostic{};
  ExperimentConfig back = config_from_json(to_json(c));
  CHECK(dump(to_json(back)) == dump(to_json(c)));
}

TEST_CASE("unknown keys and bad values are config errors") {
  Json j = to_json(ExperimentConfig{});
  j["curve"]["epochz"] = 3;
  CHECK_THROWS_AS(config_from_json(j), ConfigError);
  j = to_json(ExperimentConfig{});
  j["pairs"] = 0;
  CHECK_THROWS_AS(config_from_json(j), ConfigError);
  j = to_json(ExperimentConfig{});
  j["train"]["lr"] = "fast";
  CHECK_THROWS_AS(config_from_json(j), ConfigError);
  j = to_json(ExperimentConfig{});
  j["alignment"]["variant"] = "nope";
  CHECK_THROWS_AS(config_from_json(j), ConfigError);
}

TEST_CASE("overrides parse JSON values and reject unknown keys") {
  Json j = to_json(ExperimentConfig{});
  apply_override(j, "network.hidden=[8,8]");
  apply_override(j, "data.kind=moons");
  apply_override(j, "train.lr=0.5");
  ExperimentConfig c = config_from_json(j);
  CHECK(c.hidden == std::vector<int>{8, 8});
  CHECK(c.data.kind == DataKind::moons);
  CHECK(c.n_classes() == 2);
  CHECK(c.train.lr == 0.5);
  CHECK_THROWS_AS(apply_override(j, "train.nope=1"), ConfigError);
  CHECK_THROWS_AS(apply_override(j, "no_equals_sign"), ConfigError);
}

TEST_CASE("load_config layers defaults, file, overrides and seed") {
  fs::path dir = fresh_dir("config");
  write_file(dir / "c.json", R"({"pairs": 5, "curve": {"epochs": 7}})");
  ExperimentConfig c = load_config(dir / "c.json", {"pairs=4"}, 99);
  CHECK(c.pairs == 4);
  CHECK(c.seed == 99);
  CHECK(c.curve.epochs == 7);
  CHECK(c.pam.curve_epochs == 7);
  CHECK(c.hidden == ExperimentConfig{}.hidden);
  CHECK(load_config(std::nullopt, {"pam.curve_epochs=3"}).pam.curve_epochs == 3);
  CHECK_THROWS_AS(load_config(dir / "missing.json"), ConfigError);
  write_file(dir / "bad.json", R"({"curv": {}})");
  CHECK_THROWS_AS(load_config(dir / "bad.json"), ConfigError);
}

TEST_CASE("gen-data is byte-identical across runs and seed-sensitive") {
  ExperimentConfig c = small_config();
  fs::path a = fresh_dir("gen_a"), b = fresh_dir("gen_b"), d = fresh_dir("gen_c");
  stage_gen_data(c, a);
  stage_gen_data(c, b);
  CHECK(slurp(a / paths::train_csv) == slurp(b / paths::train_csv));
  CHECK(slurp(a / paths::validation_csv) == slurp(b / paths::validation_csv));
  CHECK(slurp(a / paths::manifest("gen-data")) == slurp(b / paths::manifest("gen-data")));
  c.seed += 1;
  stage_gen_data(c, d);
  CHECK(slurp(a / paths::train_csv) != slurp(d / paths::train_csv));
}

TEST_CASE("stage data restores the splits") {
  ExperimentConfig c = small_config();
  fs::path dir = fresh_dir("splits");
  stage_gen_data(c, dir);
  Dataset d = load_stage_data(c, dir);
  CHECK(d.size() == 600);
  CHECK(d.subset(Split::validation).size() == 120);
  CHECK(d.subset(Split::alignment).size() == 96);
  CHECK(d.subset(Split::train).size() == 480);
}

TEST_CASE("full pipeline produces a consistent, closed set of artifacts") {
  ExperimentConfig c = small_config();
  fs::path dir = fresh_dir("pipeline");
  stage_gen_data(c, dir);
  stage_train(c, dir);
  stage_align(c, dir);
  for (CurveMode m : kAllCurveModes) stage_curve(c, dir, m);
  stage_bounds(c, dir);
  stage_plane(c, dir);
  stage_report(c, dir);
  stage_report(c, dir, ReportConvention::figure);

  CHECK(check_manifests(dir).empty());

  Json table = read_json(dir / paths::report_table_json);
  REQUIRE(table["rows"].size() == 4);
  for (const auto& row : table["rows"]) {
    CHECK(row["pairs"] == 3);
    CHECK(row["min_accuracy"].get<double>() <= row["mean_accuracy"].get<double>());
  }

  std::istringstream sig(slurp(dir / paths::signature_csv));
  std::string line;
  std::getline(sig, line);
  int rows = 0;
  while (std::getline(sig, line)) {
    double before = 0, after = 0;
    int pair = 0, layer = 0;
    REQUIRE(std::sscanf(line.c_str(), "%d,%d,%lf,%lf", &pair, &layer, &before, &after) == 4);
    CHECK(after >= before - 1e-12);
    ++rows;
  }
  CHECK(rows == 3 * 2);

  // Curve metrics CSV has one row per grid point, export CSV one per export point.
  auto count_lines = [](const std::string& s) { return std::count(s.begin(), s.end(), '\n'); };
  CHECK(count_lines(slurp(dir / paths::curve_metrics_csv(CurveMode::aligned, 0))) == 1 + c.grid_points);
  CHECK(count_lines(slurp(dir / paths::curve_export_csv(CurveMode::aligned, 0))) == 1 + c.export_points);
  CHECK(count_lines(slurp(dir / paths::report_figure_csv)) == 1 + 4 * c.grid_points);
  CHECK(count_lines(slurp(dir / paths::plane_csv)) == 1 + c.plane_resolution * c.plane_resolution);
  CHECK(fs::exists(dir / paths::pam_log(CurveMode::pam_aligned, 2)));

  // Curve files reference their endpoints by hash.
  Json curve = read_json(dir / paths::curve(CurveMode::aligned, 1));
  CHECK(curve["theta1_ref"]["sha1"] == file_hash(dir / paths::model(2)));
  CHECK(curve["theta2_ref"]["sha1"] == file_hash(dir / paths::model(3)));

  Json b = read_json(dir / paths::bounds(0));
  CHECK(b["valid"] == true);

  SUBCASE("tampered inputs are rejected with the producing stage named") {
    std::string text = slurp(dir / paths::model(0));
    write_file(dir / paths::model(0), text + " ");
    try {
      stage_align(c, dir);
      FAIL("expected an ArtifactError");
    } catch (const ArtifactError& e) {
      CHECK(std::string(e.what()).find("train") != std::string::npos);
    }
    CHECK_FALSE(check_manifests(dir).empty());
    write_file(dir / paths::model(0), text);
    CHECK(check_manifests(dir).empty());
  }
  SUBCASE("missing inputs are rejected") {
    fs::remove(dir / paths::alignment(1));
    CHECK_THROWS_AS(stage_curve(c, dir, CurveMode::aligned), ArtifactError);
  }
  SUBCASE("unrecorded inputs are rejected") {
    fs::remove(dir / paths::manifest("align"));
    CHECK_THROWS_AS(stage_plane(c, dir), ArtifactError);
  }
}

TEST_CASE("rerunning a stage reproduces its outputs") {
  ExperimentConfig c = small_config();
  c.pairs = 1;
  fs::path a = fresh_dir("rerun_a"), b = fresh_dir("rerun_b");
  for (const fs::path& dir : {a, b}) {
    stage_gen_data(c, dir);
    stage_train(c, dir);
    stage_align(c, dir);
    stage_curve(c, dir, CurveMode::pam_aligned);
  }
  for (const auto& rel : {paths::model(1), paths::alignment(0), paths::curve(CurveMode::pam_aligned, 0),
                          paths::pam_log(CurveMode::pam_aligned, 0), paths::manifest("curve-pam-aligned")})
    CHECK_MESSAGE(file_hash(a / rel) == file_hash(b / rel), rel);
}

TEST_CASE("a changed seed changes the config hash") {
  ExperimentConfig c = small_config();
  c.pairs = 1;
  fs::path a = fresh_dir("hash_a");
  Manifest m1 = stage_gen_data(c, a);
  c.seed += 1;
  Manifest m2 = stage_gen_data(c, a);
  CHECK(m1.config_hash != m2.config_hash);
  CHECK(m2.seed == c.seed);
}

TEST_CASE("attack stage writes robust artifacts that satisfy the budget") {
  ExperimentConfig c = small_config();
  c.pairs = 1;
  c.data.kind = DataKind::moons;
  c.data.noise = 0.1;
  fs::path dir = fresh_dir("attack");
  stage_gen_data(c, dir);
  stage_attack(c, dir);
  CHECK(check_manifests(dir).empty());
  for (bool aligned : {false, true}) {
    Json m = read_json(dir / paths::robust_metrics(aligned, 0));
    CHECK(m["worst_linf"].get<double>() <= m["epsilon"].get<double>() + 1e-12);
    CHECK(m["worst_box_violation"].get<double>() <= 1e-12);
    auto clean = m["clean"]["accuracy"].get<std::vector<double>>();
    auto robust = m["robust"]["accuracy"].get<std::vector<double>>();
    REQUIRE(clean.size() == robust.size());
    for (std::size_t i = 0; i < clean.size(); ++i) CHECK(robust[i] <= clean[i] + 1e-12);
  }
}

TEST_CASE("sweep writes every grid cell for both modes") {
  ExperimentConfig c = small_config();
  c.pairs = 1;
  fs::path dir = fresh_dir("sweep");
  stage_gen_data(c, dir);
  stage_train(c, dir);
  stage_align(c, dir);
  stage_sweep(c, dir);
  std::istringstream in(slurp(dir / paths::sweep_csv));
  std::string line;
  std::getline(in, line);
  CHECK(line == "lr,batch_size,mode,mean_accuracy,min_accuracy,mean_loss");
  int unaligned = 0, aligned = 0;
  while (std::getline(in, line)) {
    if (line.find(",unaligned,") != std::string::npos) ++unaligned;
    else if (line.find(",aligned,") != std::string::npos) ++aligned;
  }
  CHECK(unaligned == 9);
  CHECK(aligned == 9);
}

TEST_CASE("report needs every curve mode") {
  ExperimentConfig c = small_config();
  c.pairs = 1;
  fs::path dir = fresh_dir("report_missing");
  stage_gen_data(c, dir);
  stage_train(c, dir);
  stage_curve(c, dir, CurveMode::unaligned);
  CHECK_THROWS_AS(stage_report(c, dir), ArtifactError);
}

TEST_CASE("report statistics use the sample standard deviation") {
  CurveMetrics a = summarize_curve({0.0, 1.0}, {0.1, 0.1}, {0.8, 0.6});
  CurveMetrics b = summarize_curve({0.0, 1.0}, {0.1, 0.1}, {1.0, 0.8});
  auto rows = summarize_pairs({{"aligned", {a, b}}});
  REQUIRE(rows.size() == 1);
  CHECK(rows[0].mean_accuracy == doctest::Approx(0.8));
  CHECK(rows[0].mean_accuracy_std == doctest::Approx(std::sqrt(0.02)));
  CHECK(rows[0].min_accuracy == doctest::Approx(0.7));
  CHECK(rows[0].pairs == 2);
}

TEST_CASE("residual networks are unsupported for PAM curves") {
  ExperimentConfig c = small_config();
  c.pairs = 1;
  c.residual_period = 1;
  c.residual_mode = true;
  fs::path dir = fresh_dir("residual");
  stage_gen_data(c, dir);
  stage_train(c, dir);
  stage_align(c, dir);
  stage_curve(c, dir, CurveMode::aligned);
  CHECK_THROWS_AS(stage_curve(c, dir, CurveMode::pam_aligned), UnsupportedError);
}

TEST_CASE("CLI exit codes") {
  fs::path dir = fresh_dir("cli");
  const std::string out = dir.string();
  std::string err;
  CHECK(cli({}) == 1);
  CHECK(cli({"frobnicate"}) == 1);
  CHECK(cli({"--help"}) == 0);
  CHECK(cli({"train", "--out", out}, &err) == 3);
  CHECK(err.find("missing artifact") != std::string::npos);
  CHECK(cli({"gen-data", "--out", out, "--override", "bogus.key=1"}, &err) == 2);
  CHECK(cli({"gen-data", "--out", out, "--override", "train.lr=-1"}) == 2);
  CHECK(cli({"curve", "--mode", "sideways", "--out", out}) == 2);
  CHECK(cli({"report", "--convention", "poster", "--out", out}) == 2);
  CHECK(cli({"gen-data", "--out", out, "--override", "data.n_samples=200", "--seed", "4"}) == 0);
  CHECK(cli({"check", "--out", out}) == 0);
  write_file(dir / paths::train_csv, "label,f0,f1\n0,1,2\n");
  CHECK(cli({"check", "--out", out}) == 3);
  CHECK(cli({"train", "--out", out, "--override", "data.n_samples=200", "--seed", "4"}, &err) == 3);
  CHECK(err.find("hash mismatch") != std::string::npos);
}

TEST_CASE("CLI divergence maps to the numerical exit code") {
  fs::path dir = fresh_dir("cli_diverge");
  const std::string out = dir.string();
  std::vector<std::string> o = {"--out", out, "--override", "data.n_samples=200", "--override", "train.lr=1e6",
                                "--override", "train.weight_decay=0", "--override", "train.loss=\"mse\""};
  auto with = [&](std::string cmd) {
    std::vector<std::string> v{std::move(cmd)};
    v.insert(v.end(), o.begin(), o.end());
    return v;
  };
  REQUIRE(cli(with("gen-data")) == 0);
  CHECK(cli(with("train")) == 4);
}
