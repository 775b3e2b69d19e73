#include "cli.hpp"

#include "modecon/error.hpp"
#include "modecon/experiment.hpp"

#include <CLI11.hpp>

#include <ostream>

namespace modecon {

namespace {

struct Common {
  std::string config;
  std::string out = "out";
  std::optional<std::uint64_t> seed;
  std::vector<std::string> overrides;
};

void add_common(CLI::App* app, Common& c) {
  app->add_option("--config", c.config, "JSON config file (defaults apply when omitted)");
  app->add_option("--out", c.out, "Output directory")->capture_default_str();
  app->add_option("--seed", c.seed, "Override the top-level seed");
  app->add_option("--override", c.overrides, "key.path=value, repeatable")->take_all();
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Mode connectivity under permutation symmetry"};
  app.require_subcommand(1);
  Common common;
  std::string mode, convention = "table";

  auto* gen = app.add_subcommand("gen-data", "Generate and split the dataset");
  auto* train = app.add_subcommand("train", "Train the endpoint models");
  auto* align = app.add_subcommand("align", "Align each endpoint pair");
  auto* curve = app.add_subcommand("curve", "Train and evaluate connecting curves");
  curve->add_option("--mode", mode, "unaligned, aligned, pam-unaligned or pam-aligned")->required();
  auto* bounds = app.add_subcommand("bounds", "Compute loss-barrier bounds");
  auto* attack = app.add_subcommand("attack", "Robust endpoints, curves and evaluation");
  auto* plane = app.add_subcommand("plane", "Loss surface on the plane through three networks");
  auto* report = app.add_subcommand("report", "Summarize curve metrics");
  report->add_option("--convention", convention, "table or figure")->capture_default_str();
  auto* sweep = app.add_subcommand("sweep", "Curve hyperparameter sweep");
  auto* check = app.add_subcommand("check", "Verify every manifest in the output directory");
  auto* show = app.add_subcommand("show-config", "Print the resolved configuration as JSON");
  for (auto* s : {gen, train, align, curve, bounds, attack, plane, report, sweep, check, show}) add_common(s, common);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? 0 : 1;
  }

  try {
    std::optional<std::filesystem::path> file;
    if (!common.config.empty()) file = common.config;
    const ExperimentConfig cfg = load_config(file, common.overrides, common.seed);
    const std::filesystem::path dir = common.out;
    if (show->parsed()) {
      out << dump(to_json(cfg));
      return 0;
    }
    if (check->parsed()) {
      auto problems = check_manifests(dir);
      for (const auto& p : problems) err << p << "\n";
      if (!problems.empty()) return 3;
      out << "all manifests consistent\n";
      return 0;
    }
    Manifest m;
    if (gen->parsed()) m = stage_gen_data(cfg, dir);
    else if (train->parsed()) m = stage_train(cfg, dir);
    else if (align->parsed()) m = stage_align(cfg, dir);
    else if (curve->parsed()) m = stage_curve(cfg, dir, curve_mode_from_string(mode));
    else if (bounds->parsed()) m = stage_bounds(cfg, dir);
    else if (attack->parsed()) m = stage_attack(cfg, dir);
    else if (plane->parsed()) m = stage_plane(cfg, dir);
    else if (report->parsed()) m = stage_report(cfg, dir, report_convention_from_string(convention));
    else if (sweep->parsed()) m = stage_sweep(cfg, dir);
    out << m.stage << ": wrote " << m.outputs.size() << " artifacts to " << dir.string() << "\n";
    return 0;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return 2;
  } catch (const DimensionError& e) {
    err << "dimension error: " << e.what() << "\n";
    return 2;
  } catch (const UnsupportedError& e) {
    err << "unsupported: " << e.what() << "\n";
    return 2;
  } catch (const ArtifactError& e) {
    err << "artifact error: " << e.what() << "\n";
    return 3;
  } catch (const NumericalError& e) {
    err << "numerical error: " << e.what() << "\n";
    return 4;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace modecon
