#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "itsc/config.hpp"
#include "json.hpp"

namespace itsc::pipeline {

namespace fs = std::filesystem;

/// One simulated record: a severity level in the train or test split.
struct Cell {
  std::size_t grid_index = 0;
  std::string label;
  double fault_ratio = 0.0;
  std::string split;  // "train" or "test"

  std::string name() const { return label + "_" + split; }
};

std::vector<Cell> cells(const RunConfig& cfg);

/// manifest.json in the run directory: config snapshot, format versions,
/// derived values, and per-stage file digests and timings.
class Manifest {
 public:
  static Manifest load(const fs::path& run_dir);  // empty manifest if absent
  void save(const fs::path& run_dir) const;

  bool has_stage(const std::string& stage) const;
  /// Throws DependencyError naming `stage` if it has not completed.
  void require_stage(const std::string& stage, const std::string& needed_by) const;
  /// Digests every file (paths relative to run_dir) and records the stage.
  void record_stage(const std::string& stage, const fs::path& run_dir, const std::vector<fs::path>& files,
                    double seconds);
  void drop_stages_after(const std::string& stage);

  /// relative path → SHA-256 for one stage, or for every stage.
  std::map<std::string, std::string> stage_files(const std::string& stage) const;
  std::map<std::string, std::string> all_files() const;

  /// Records the config snapshot, or checks it matches the recorded one.
  void bind_config(const RunConfig& cfg, bool reset);

  nlohmann::json& derived() { return doc_["derived"]; }
  const nlohmann::json& derived() const { return doc_.at("derived"); }

 private:
  nlohmann::json doc_ = nlohmann::json::object();
};

inline constexpr const char* kStages[] = {"simulate", "image", "train", "score", "report"};

void cmd_simulate(const RunConfig& cfg, const fs::path& out);
void cmd_image(const RunConfig& cfg, const fs::path& out);
void cmd_train(const RunConfig& cfg, const fs::path& out);
void cmd_score(const RunConfig& cfg, const fs::path& out);
void cmd_report(const RunConfig& cfg, const fs::path& out);

/// Every stage in order.
void run_all(const RunConfig& cfg, const fs::path& out);

}  // namespace itsc::pipeline
