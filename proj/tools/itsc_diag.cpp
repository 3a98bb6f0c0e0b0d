// itsc-diag: simulate → image → train → score → report.

#include <cstdio>
#include <exception>
#include <filesystem>
#include <functional>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "itsc/config.hpp"
#include "itsc/error.hpp"
#include "itsc/pipeline.hpp"
#include "json.hpp"

namespace {

namespace fs = std::filesystem;
using itsc::pipeline::RunConfig;

int fail(const std::string& kind, const std::string& message, int code) {
  std::cerr << nlohmann::json{{"error", kind}, {"message", message}}.dump() << std::endl;
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"PMSM inter-turn short-circuit diagnosis pipeline"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir;
  std::function<void(const RunConfig&, const fs::path&)> action;

  auto stage = [&](const char* name, const char* help, void (*fn)(const RunConfig&, const fs::path&)) {
    auto* cmd = app.add_subcommand(name, help);
    cmd->add_option("--config", config_path, "JSON run configuration (defaults when omitted)");
    cmd->add_option("--out", out_dir, "run directory")->required();
    cmd->callback([&action, fn] { action = fn; });
  };
  stage("simulate", "synthesize stator-current records for every severity", itsc::pipeline::cmd_simulate);
  stage("image", "window, embed and image every record; learn the dictionary", itsc::pipeline::cmd_image);
  stage("train", "train the CNN on the training images", itsc::pipeline::cmd_train);
  stage("score", "fit the healthy baseline and score the test windows", itsc::pipeline::cmd_score);
  stage("report", "emit summary tables and charts", itsc::pipeline::cmd_report);
  stage("run", "every stage in order", itsc::pipeline::run_all);

  bool print_defaults = false;
  app.add_subcommand("defaults", "print the complete default configuration")->callback([&] { print_defaults = true; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail("usage", e.what(), 2);
  }

  try {
    if (print_defaults) {
      std::cout << itsc::pipeline::dump_config(RunConfig{}) << '\n';
      return 0;
    }
    const RunConfig cfg = config_path.empty() ? RunConfig{} : itsc::pipeline::load_config(config_path);
    fs::create_directories(out_dir);
    action(cfg, out_dir);
  } catch (const itsc::Error& e) {
    return fail(std::string(e.kind()), e.what(), 1);
  } catch (const std::exception& e) {
    return fail("internal", e.what(), 1);
  }
  return 0;
}
