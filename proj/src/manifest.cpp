#include "modecon/error.hpp"
#include "modecon/experiment.hpp"

#include <algorithm>

namespace modecon {

namespace fs = std::filesystem;

namespace {

Json entries_to_json(const std::vector<std::pair<std::string, std::string>>& v) {
  Json a = Json::array();
  for (const auto& [path, sha1] : v) a.push_back({{"path", path}, {"sha1", sha1}});
  return a;
}

std::vector<std::pair<std::string, std::string>> entries_from_json(const Json& a) {
  std::vector<std::pair<std::string, std::string>> v;
  for (const auto& e : a) v.emplace_back(e.at("path").get<std::string>(), e.at("sha1").get<std::string>());
  return v;
}

std::vector<Manifest> all_manifests(const fs::path& out) {
  std::vector<Manifest> ms;
  const fs::path dir = out / "manifests";
  if (!fs::is_directory(dir)) return ms;
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.path().extension() == ".json") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  for (const auto& f : files) ms.push_back(manifest_from_json(read_json(f)));
  return ms;
}

}  // namespace

Json to_json(const Manifest& m) {
  return {{"format_version", kFormatVersion},
          {"stage", m.stage},
          {"config_hash", m.config_hash},
          {"seed", m.seed},
          {"inputs", entries_to_json(m.inputs)},
          {"outputs", entries_to_json(m.outputs)}};
}

Manifest manifest_from_json(const Json& j) {
  try {
    Manifest m;
    m.stage = j.at("stage").get<std::string>();
    m.config_hash = j.at("config_hash").get<std::string>();
    m.seed = j.at("seed").get<std::uint64_t>();
    m.inputs = entries_from_json(j.at("inputs"));
    m.outputs = entries_from_json(j.at("outputs"));
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw ArtifactError(std::string("malformed manifest: ") + e.what());
  }
}

void verify_inputs(const fs::path& out, const std::vector<std::string>& inputs) {
  if (inputs.empty()) return;
  const std::vector<Manifest> ms = all_manifests(out);
  for (const auto& in : inputs) {
    if (!fs::exists(out / in))
      throw ArtifactError("missing artifact: " + (out / in).string() + " (run the stage that produces it first)");
    const Manifest* producer = nullptr;
    const std::string* recorded = nullptr;
    for (const auto& m : ms)
      for (const auto& [path, sha1] : m.outputs)
        if (path == in) {
          producer = &m;
          recorded = &sha1;
        }
    if (!producer)
      throw ArtifactError("no manifest records " + in + " (regenerate it with the pipeline instead of copying it in)");
    const std::string actual = file_hash(out / in);
    if (actual != *recorded)
      throw ArtifactError("hash mismatch for " + in + ": manifest '" + producer->stage + "' recorded " + *recorded +
                          ", file has " + actual + " (rerun stage '" + producer->stage + "')");
  }
}

std::vector<std::string> check_manifests(const fs::path& out) {
  std::vector<std::string> problems;
  std::vector<Manifest> ms;
  try {
    ms = all_manifests(out);
  } catch (const Error& e) {
    problems.emplace_back(e.what());
    return problems;
  }
  auto check = [&](const Manifest& m, const std::string& path, const std::string& sha1, const char* role) {
    if (!fs::exists(out / path)) {
      problems.push_back(m.stage + ": " + role + " " + path + " is missing");
      return;
    }
    if (file_hash(out / path) != sha1) problems.push_back(m.stage + ": " + role + " " + path + " hash differs");
  };
  for (const auto& m : ms) {
    for (const auto& [p, h] : m.outputs) check(m, p, h, "output");
    for (const auto& [p, h] : m.inputs) {
      // Inputs may be legitimately regenerated by a later rerun of their
      // producer; report the mismatch against the recorded hash anyway.
      check(m, p, h, "input");
    }
  }
  return problems;
}

}  // namespace modecon
