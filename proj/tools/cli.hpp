#pragma once

#include <cstdint>
#include <iosfwd>
#include <set>
#include <string>
#include <vector>

#include "tubempc/config.hpp"
#include "tubempc/controllers.hpp"
#include "tubempc/sim.hpp"

namespace tubempc::cli {

enum ExitCode { kOk = 0, kRuntimeFailure = 1, kUsageError = 2 };

enum class TerminalMode { kSoft, kHard, kOff };

struct RunConfig {
  std::string task = "position";
  std::vector<std::string> controllers{"smooth", "triggered", "ideal"};
  std::vector<std::uint64_t> seeds{0};
  std::string output_dir = "results";
  ArmParams params = ArmParams::Default();
  double delta = 0.1;
  double horizon = 3.0;
  HorizonInterpretation interpretation = HorizonInterpretation::kSeconds;
  double smooth_delay = 0.3;     ///< seconds
  double triggered_delay = 2.8;  ///< seconds
  TerminalMode terminal = TerminalMode::kSoft;
  double tightening_l = 0.0;
  HoldPolicy hold_policy = HoldPolicy::kBlockAndHold;
  bool threaded = false;
  bool disturbance = true;
  int duration = 0;  ///< 0 keeps the task default
  int jobs = 1;

  HorizonConfig horizon_config() const;
  /// Throws ConfigError.
  void validate() const;
};

/// Keys accepted in a run config file, plant keys included.
const std::set<std::string>& run_config_keys();
/// Applies the keys present in cfg on top of base. Throws ConfigError.
RunConfig run_config_from(const KeyValueConfig& cfg, RunConfig base = {});

/// "0,3,5" or "0-19" or a mix.
std::vector<std::uint64_t> parse_seed_list(const std::string& text);

ControllerSettings controller_settings(const RunConfig& config,
                                       const Task& task);

struct RunResult {
  std::string directory;
  Metrics metrics;
};

/// One (controller, seed) run; writes trace.csv, metrics.json and
/// timing.json under <output_dir>/<task>_<controller>_seed<seed>.
RunResult execute_run(const RunConfig& config, const std::string& controller,
                      std::uint64_t seed);

/// Writes through a temporary file and renames it into place.
void write_file_atomic(const std::string& path, const std::string& content);

struct ControllerSummary {
  std::string controller;
  int runs = 0;
  int solves = 0;
  double mean_solve_time = 0.0;
  double max_solve_time = 0.0;
  /// Whole-run solve time, averaged over runs.
  double total_solve_time = 0.0;
  double percentage = 100.0;  ///< mean_solve_time relative to the baseline
  double mean_final_position_error = 0.0;
  double mean_rms_tracking_error = 0.0;
  double mean_cumulative_cost = 0.0;
  double min_tube_containment_rate = 1.0;
};

struct Comparison {
  std::string task;
  std::string baseline;
  /// "wall" when every metrics file has a timing.json beside it, else
  /// "virtual".
  std::string time_source;
  std::vector<ControllerSummary> rows;
};

/// Throws ConfigError on fewer than two files and std::runtime_error on
/// unreadable files or mismatched tasks.
Comparison compare_metrics(const std::vector<std::string>& files,
                           const std::string& baseline = {});
std::string comparison_to_json(const Comparison& c);
std::string comparison_to_text(const Comparison& c);

int run_cli(int argc, char** argv, std::ostream& out, std::ostream& err);

}  // namespace tubempc::cli
