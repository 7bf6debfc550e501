#include "cli.hpp"

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <future>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>
#include <stdexcept>

#include <CLI11.hpp>
#include <json.hpp>

namespace tubempc::cli {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

std::string join(const std::vector<std::string>& v, const char* sep = ", ") {
  std::string out;
  for (const auto& s : v) {
    if (!out.empty()) out += sep;
    out += s;
  }
  return out;
}

bool is_member(const std::vector<std::string>& names, const std::string& s) {
  return std::find(names.begin(), names.end(), s) != names.end();
}

TerminalMode parse_terminal(const std::string& s) {
  if (s == "soft") return TerminalMode::kSoft;
  if (s == "hard") return TerminalMode::kHard;
  if (s == "off") return TerminalMode::kOff;
  throw ConfigError("terminal must be soft, hard or off, got '" + s + "'");
}

HorizonInterpretation parse_interpretation(const std::string& s) {
  if (s == "seconds") return HorizonInterpretation::kSeconds;
  if (s == "steps") return HorizonInterpretation::kSteps;
  throw ConfigError("horizon_interpretation must be seconds or steps, got '" +
                    s + "'");
}

HoldPolicy parse_hold_policy(const std::string& s) {
  if (s == "block_and_hold") return HoldPolicy::kBlockAndHold;
  if (s == "apply_when_ready") return HoldPolicy::kApplyWhenReady;
  throw ConfigError(
      "hold_policy must be block_and_hold or apply_when_ready, got '" + s + "'");
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : text) {
    if (c == ',' || c == ' ' || c == '\t') {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

}  // namespace

HorizonConfig RunConfig::horizon_config() const {
  try {
    return HorizonConfig::Make(delta, horizon, smooth_delay, triggered_delay,
                               interpretation);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
}

void RunConfig::validate() const {
  if (!is_member(task_names(), task)) {
    throw ConfigError("unknown task '" + task + "' (expected " +
                      join(task_names()) + ")");
  }
  if (controllers.empty()) throw ConfigError("no controller selected");
  for (const auto& c : controllers) {
    if (!is_member(controller_names(), c)) {
      throw ConfigError("unknown controller '" + c + "' (expected " +
                        join(controller_names()) + ")");
    }
  }
  if (seeds.empty()) throw ConfigError("no seed selected");
  if (output_dir.empty()) throw ConfigError("output directory is empty");
  if (duration < 0) throw ConfigError("duration must be >= 0");
  if (jobs < 1) throw ConfigError("jobs must be >= 1");
  if (tightening_l < 0.0) throw ConfigError("tightening_l must be >= 0");
  try {
    params.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  horizon_config();
}

const std::set<std::string>& run_config_keys() {
  static const std::set<std::string> keys = [] {
    std::set<std::string> k{"task",          "controllers",
                            "seeds",         "output_dir",
                            "delta",         "horizon",
                            "horizon_interpretation",
                            "smooth_delay",  "triggered_delay",
                            "terminal",      "tightening_l",
                            "hold_policy",   "threaded",
                            "disturbance",   "duration",
                            "jobs"};
    for (const auto& p : plant_config_keys()) k.insert(p);
    return k;
  }();
  return keys;
}

std::vector<std::uint64_t> parse_seed_list(const std::string& text) {
  std::vector<std::uint64_t> seeds;
  for (const auto& item : split_list(text)) {
    const auto dash = item.find('-');
    try {
      std::size_t used = 0;
      if (dash == std::string::npos) {
        const unsigned long long v = std::stoull(item, &used);
        if (used != item.size()) throw std::invalid_argument(item);
        seeds.push_back(v);
      } else {
        const std::string a = item.substr(0, dash), b = item.substr(dash + 1);
        std::size_t ua = 0, ub = 0;
        const unsigned long long lo = std::stoull(a, &ua);
        const unsigned long long hi = std::stoull(b, &ub);
        if (ua != a.size() || ub != b.size() || hi < lo) {
          throw std::invalid_argument(item);
        }
        for (auto s = lo; s <= hi; ++s) seeds.push_back(s);
      }
    } catch (const std::logic_error&) {
      throw ConfigError("bad seed list entry '" + item + "'");
    }
  }
  if (seeds.empty()) throw ConfigError("empty seed list");
  return seeds;
}

RunConfig run_config_from(const KeyValueConfig& cfg, RunConfig base) {
  cfg.reject_unknown(run_config_keys());
  RunConfig rc = std::move(base);
  bool plant_keys = false;
  for (const auto& key : plant_config_keys()) plant_keys |= cfg.has(key);
  if (plant_keys) {
    const PlantConfig pc = plant_config_from(cfg);
    rc.params = pc.params;
    if (cfg.has("seed") && !cfg.has("seeds")) rc.seeds = {pc.seed};
  }
  if (cfg.has("task")) rc.task = cfg.raw("task");
  if (cfg.has("controllers")) rc.controllers = cfg.words("controllers");
  if (cfg.has("seeds")) rc.seeds = parse_seed_list(cfg.raw("seeds"));
  if (cfg.has("output_dir")) rc.output_dir = cfg.raw("output_dir");
  if (cfg.has("delta")) rc.delta = cfg.number("delta");
  if (cfg.has("horizon")) rc.horizon = cfg.number("horizon");
  if (cfg.has("horizon_interpretation")) {
    rc.interpretation = parse_interpretation(cfg.raw("horizon_interpretation"));
  }
  if (cfg.has("smooth_delay")) rc.smooth_delay = cfg.number("smooth_delay");
  if (cfg.has("triggered_delay")) {
    rc.triggered_delay = cfg.number("triggered_delay");
  }
  if (cfg.has("terminal")) rc.terminal = parse_terminal(cfg.raw("terminal"));
  if (cfg.has("tightening_l")) rc.tightening_l = cfg.number("tightening_l");
  if (cfg.has("hold_policy")) {
    rc.hold_policy = parse_hold_policy(cfg.raw("hold_policy"));
  }
  if (cfg.has("threaded")) rc.threaded = cfg.boolean("threaded");
  if (cfg.has("disturbance")) rc.disturbance = cfg.boolean("disturbance");
  if (cfg.has("duration")) rc.duration = static_cast<int>(cfg.integer("duration"));
  if (cfg.has("jobs")) rc.jobs = static_cast<int>(cfg.integer("jobs"));
  rc.validate();
  return rc;
}

ControllerSettings controller_settings(const RunConfig& config,
                                       const Task& task) {
  ControllerSettings s;
  s.params = config.params;
  s.horizon = config.horizon_config();
  s.reference = task_reference(task, s.horizon.delta);
  s.tightening_l = config.tightening_l;
  s.terminal_enabled = config.terminal != TerminalMode::kOff;
  s.soft_terminal = config.terminal == TerminalMode::kSoft;
  s.hold_policy = config.hold_policy;
  s.threaded = config.threaded;
  return s;
}

void write_file_atomic(const std::string& path, const std::string& content) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot write " + tmp);
    f << content;
    if (!f.flush()) throw std::runtime_error("write failed for " + tmp);
  }
  fs::rename(tmp, path);
}

RunResult execute_run(const RunConfig& config, const std::string& controller,
                      std::uint64_t seed) {
  const Task task = make_task(config.task, config.params);
  const ControllerSettings settings = controller_settings(config, task);
  auto c = make_controller(controller, settings);
  SimConfig sim;
  sim.apply_disturbance = config.disturbance;
  sim.duration = config.duration;
  const SimTrace trace = run_closed_loop(*c, task, config.params, seed, sim);

  RunResult result;
  result.metrics = compute_metrics(trace, settings.weights);
  const fs::path dir = fs::path(config.output_dir) /
                       (task.name() + "_" + controller + "_seed" +
                        std::to_string(seed));
  fs::create_directories(dir);
  std::ostringstream csv;
  write_trace_csv(csv, trace);
  write_file_atomic((dir / "trace.csv").string(), csv.str());
  write_file_atomic((dir / "metrics.json").string(),
                    metrics_to_json(result.metrics));
  write_file_atomic((dir / "timing.json").string(), timing_to_json(trace));
  result.directory = dir.string();
  return result;
}

// ---------------------------------------------------------------- compare

namespace {

ordered_json read_json(const fs::path& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot read " + path.string());
  try {
    return ordered_json::parse(f);
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(path.string() + ": " + e.what());
  }
}

struct Accum {
  int runs = 0;
  int solves = 0;
  double time_sum = 0.0;
  double time_max = 0.0;
  double total_sum = 0.0;
  double final_error = 0.0;
  double rms = 0.0;
  double cost = 0.0;
  double containment = 1.0;
};

}  // namespace

Comparison compare_metrics(const std::vector<std::string>& files,
                           const std::string& baseline) {
  if (files.size() < 2) {
    throw ConfigError("compare needs at least two metrics files");
  }
  std::vector<ordered_json> metrics, timing;
  bool all_wall = true;
  for (const auto& f : files) {
    metrics.push_back(read_json(f));
    const fs::path t = fs::path(f).parent_path() / "timing.json";
    if (fs::exists(t)) {
      timing.push_back(read_json(t));
    } else {
      timing.emplace_back();
      all_wall = false;
    }
  }
  Comparison c;
  c.time_source = all_wall ? "wall" : "virtual";
  std::vector<std::string> order;
  std::map<std::string, Accum> acc;
  for (std::size_t i = 0; i < metrics.size(); ++i) {
    const auto& m = metrics[i];
    try {
      const std::string task = m.at("task").get<std::string>();
      if (i == 0) {
        c.task = task;
      } else if (task != c.task) {
        throw std::runtime_error("metrics files mix tasks '" + c.task +
                                 "' and '" + task + "'");
      }
      const std::string name = m.at("controller").get<std::string>();
      if (!acc.count(name)) order.push_back(name);
      Accum& a = acc[name];
      const auto& st = all_wall ? timing[i].at("wall_solve_time")
                                : m.at("solve_time_stats");
      const int n = m.at("solve_count").get<int>();
      a.runs += 1;
      a.solves += n;
      a.time_sum += st.at("mean").get<double>() * n;
      a.time_max = std::max(a.time_max, st.at("max").get<double>());
      a.total_sum += st.at("total").get<double>();
      a.final_error += m.at("final_position_error").get<double>();
      a.rms += m.at("rms_tracking_error").get<double>();
      a.cost += m.at("cumulative_cost").get<double>();
      a.containment = std::min(a.containment,
                               m.at("tube_containment_rate").get<double>());
    } catch (const nlohmann::json::exception& e) {
      throw std::runtime_error(files[i] + ": missing field (" + e.what() + ")");
    }
  }
  for (const auto& name : order) {
    const Accum& a = acc[name];
    ControllerSummary row;
    row.controller = name;
    row.runs = a.runs;
    row.solves = a.solves;
    row.mean_solve_time = a.solves > 0 ? a.time_sum / a.solves : 0.0;
    row.max_solve_time = a.time_max;
    row.total_solve_time = a.total_sum / a.runs;
    row.mean_final_position_error = a.final_error / a.runs;
    row.mean_rms_tracking_error = a.rms / a.runs;
    row.mean_cumulative_cost = a.cost / a.runs;
    row.min_tube_containment_rate = a.containment;
    c.rows.push_back(row);
  }
  if (!baseline.empty()) {
    if (!acc.count(baseline)) {
      throw ConfigError("baseline controller '" + baseline +
                        "' is not among the metrics files");
    }
    c.baseline = baseline;
  } else {
    c.baseline = acc.count("triggered") ? "triggered" : order.front();
  }
  double base = 0.0;
  for (const auto& r : c.rows) {
    if (r.controller == c.baseline) base = r.mean_solve_time;
  }
  for (auto& r : c.rows) {
    r.percentage = base > 0.0 ? 100.0 * r.mean_solve_time / base
                              : (r.mean_solve_time > 0.0 ? 0.0 : 100.0);
    if (r.controller == c.baseline) r.percentage = 100.0;
  }
  return c;
}

std::string comparison_to_json(const Comparison& c) {
  ordered_json j;
  j["schema_version"] = kMetricsSchemaVersion;
  j["task"] = c.task;
  j["baseline"] = c.baseline;
  j["time_source"] = c.time_source;
  ordered_json rows = ordered_json::array();
  for (const auto& r : c.rows) {
    ordered_json o;
    o["controller"] = r.controller;
    o["runs"] = r.runs;
    o["solves"] = r.solves;
    o["mean_solve_time"] = r.mean_solve_time;
    o["max_solve_time"] = r.max_solve_time;
    o["total_solve_time"] = r.total_solve_time;
    o["percentage"] = r.percentage;
    o["mean_final_position_error"] = r.mean_final_position_error;
    o["mean_rms_tracking_error"] = r.mean_rms_tracking_error;
    o["mean_cumulative_cost"] = r.mean_cumulative_cost;
    o["min_tube_containment_rate"] = r.min_tube_containment_rate;
    rows.push_back(std::move(o));
  }
  j["controllers"] = std::move(rows);
  return j.dump(2) + "\n";
}

std::string comparison_to_text(const Comparison& c) {
  std::ostringstream os;
  os << "task: " << c.task << "  baseline: " << c.baseline
     << "  solve times: " << c.time_source << " seconds\n";
  const std::vector<std::string> head{"controller", "runs",  "mean_solve",
                                      "max_solve",  "total", "percent",
                                      "final_err",  "rms_err", "cost"};
  std::vector<std::vector<std::string>> cells{head};
  auto fmt = [](double v, int prec = 6) {
    std::ostringstream s;
    s << std::setprecision(prec) << v;
    return s.str();
  };
  for (const auto& r : c.rows) {
    std::ostringstream pct;
    pct << std::fixed << std::setprecision(1) << r.percentage << "%";
    cells.push_back({r.controller, std::to_string(r.runs),
                     fmt(r.mean_solve_time), fmt(r.max_solve_time),
                     fmt(r.total_solve_time), pct.str(),
                     fmt(r.mean_final_position_error),
                     fmt(r.mean_rms_tracking_error),
                     fmt(r.mean_cumulative_cost)});
  }
  std::vector<std::size_t> width(head.size(), 0);
  for (const auto& row : cells) {
    for (std::size_t i = 0; i < row.size(); ++i) {
      width[i] = std::max(width[i], row[i].size());
    }
  }
  for (const auto& row : cells) {
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (i == 0) {
        os << std::left << std::setw(static_cast<int>(width[i])) << row[i];
      } else {
        os << "  " << std::right << std::setw(static_cast<int>(width[i]))
           << row[i];
      }
    }
    os << '\n';
  }
  return os.str();
}

// ---------------------------------------------------------------- entry

namespace {

struct RunFlags {
  std::string config_path;
  std::string task;
  std::vector<std::string> controllers;
  std::string seeds;
  std::string out;
  double horizon = 0.0;
  std::string interpretation;
  int horizon_steps = 0;
  double eta1 = -1.0;
  std::string terminal;
  bool hard_terminal = false;
  bool threaded = false;
  bool no_disturbance = false;
  int duration = -1;
  int jobs = 0;
};

RunConfig resolve_run_config(const RunFlags& f) {
  RunConfig rc;
  if (const char* env = std::getenv("TUBEMPC_OUTPUT_DIR"); env && *env) {
    rc.output_dir = env;
  }
  if (!f.config_path.empty()) {
    KeyValueConfig cfg;
    try {
      cfg = KeyValueConfig::Load(f.config_path);
    } catch (const ConfigError&) {
      throw;
    } catch (const std::exception& e) {
      throw ConfigError(e.what());
    }
    rc = run_config_from(cfg, rc);
  }
  if (!f.task.empty()) rc.task = f.task;
  if (!f.controllers.empty()) {
    rc.controllers.clear();
    for (const auto& c : f.controllers) {
      for (const auto& w : split_list(c)) rc.controllers.push_back(w);
    }
  }
  if (!f.seeds.empty()) rc.seeds = parse_seed_list(f.seeds);
  if (!f.out.empty()) rc.output_dir = f.out;
  if (!f.interpretation.empty()) {
    rc.interpretation = parse_interpretation(f.interpretation);
  }
  if (f.horizon > 0.0) rc.horizon = f.horizon;
  if (f.horizon_steps > 0) {
    rc.horizon = f.horizon_steps;
    rc.interpretation = HorizonInterpretation::kSteps;
  }
  if (f.eta1 >= 0.0) rc.params.eta1 = f.eta1;
  if (!f.terminal.empty()) rc.terminal = parse_terminal(f.terminal);
  if (f.hard_terminal) rc.terminal = TerminalMode::kHard;
  if (f.threaded) rc.threaded = true;
  if (f.no_disturbance) rc.disturbance = false;
  if (f.duration >= 0) rc.duration = f.duration;
  if (f.jobs > 0) rc.jobs = f.jobs;
  rc.validate();
  return rc;
}

struct Job {
  std::string controller;
  std::uint64_t seed = 0;
};

int do_run(const RunConfig& rc, std::ostream& out, std::ostream& err) {
  std::vector<Job> jobs;
  for (const auto& c : rc.controllers) {
    for (auto s : rc.seeds) jobs.push_back({c, s});
  }
  std::vector<std::string> lines(jobs.size()), errors(jobs.size());
  auto work = [&](std::size_t i) {
    try {
      const RunResult r = execute_run(rc, jobs[i].controller, jobs[i].seed);
      std::ostringstream os;
      os << r.directory << ": final_position_error=" << std::setprecision(6)
         << r.metrics.final_position_error
         << " cumulative_cost=" << r.metrics.cumulative_cost
         << " solves=" << r.metrics.solve_count
         << " containment=" << r.metrics.tube_containment_rate;
      lines[i] = os.str();
    } catch (const InfeasibleError& e) {
      errors[i] = std::string(e.what()) + " (tightening step " +
                  std::to_string(e.step()) + ")";
    } catch (const std::exception& e) {
      errors[i] = e.what();
    }
  };
  for (std::size_t start = 0; start < jobs.size();
       start += static_cast<std::size_t>(rc.jobs)) {
    const std::size_t end =
        std::min(jobs.size(), start + static_cast<std::size_t>(rc.jobs));
    std::vector<std::future<void>> running;
    for (std::size_t i = start + 1; i < end; ++i) {
      running.push_back(std::async(std::launch::async, work, i));
    }
    work(start);
    for (auto& f : running) f.get();
  }
  int failures = 0;
  for (std::size_t i = 0; i < jobs.size(); ++i) {
    if (errors[i].empty()) {
      out << lines[i] << '\n';
    } else {
      ++failures;
      err << "error: " << rc.task << " " << jobs[i].controller << " seed "
          << jobs[i].seed << ": " << errors[i] << '\n';
    }
  }
  return failures == 0 ? kOk : kRuntimeFailure;
}

}  // namespace

int run_cli(int argc, char** argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Tube-based smooth MPC benchmarks for a planar 3-link arm",
               "tubempc"};
  app.require_subcommand(1);

  RunFlags rf;
  auto* run = app.add_subcommand("run", "Run closed-loop simulations");
  run->add_option("--config", rf.config_path, "key = value config file");
  run->add_option("--task", rf.task, "position or trajectory");
  run->add_option("--controller", rf.controllers,
                  "ideal, triggered, smooth (repeatable or comma separated)");
  run->add_option("--seeds", rf.seeds, "seed list, e.g. 0,1,2 or 0-19");
  run->add_option("--out", rf.out,
                  "output directory (default $TUBEMPC_OUTPUT_DIR or results)");
  run->add_option("--horizon", rf.horizon, "prediction horizon T");
  run->add_option("--horizon-interpretation", rf.interpretation,
                  "read T as seconds (N = T / delta) or as steps");
  run->add_option("--horizon-steps", rf.horizon_steps,
                  "horizon as a number of steps");
  run->add_option("--eta1", rf.eta1, "disturbance bound");
  run->add_option("--terminal", rf.terminal, "soft, hard or off");
  run->add_flag("--hard-terminal", rf.hard_terminal, "same as --terminal hard");
  run->add_flag("--threaded", rf.threaded,
                "solve the next smooth plan on a worker thread");
  run->add_flag("--no-disturbance", rf.no_disturbance,
                "simulate without disturbance");
  run->add_option("--duration", rf.duration, "steps, 0 for the task default");
  run->add_option("--jobs", rf.jobs, "parallel runs");

  std::vector<std::string> files;
  std::string baseline, json_path;
  auto* cmp = app.add_subcommand("compare", "Compare solve times and errors");
  cmp->add_option("metrics", files, "metrics.json files")->required();
  cmp->add_option("--baseline", baseline,
                  "controller the percentages refer to (default triggered)");
  cmp->add_option("--json", json_path, "write the comparison as JSON here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsageError;
  }

  if (run->parsed()) {
    RunConfig rc;
    try {
      rc = resolve_run_config(rf);
    } catch (const ConfigError& e) {
      err << "usage error: " << e.what() << '\n';
      return kUsageError;
    }
    return do_run(rc, out, err);
  }

  try {
    const Comparison c = compare_metrics(files, baseline);
    const std::string json = comparison_to_json(c);
    out << comparison_to_text(c);
    if (json_path.empty()) {
      out << json;
    } else {
      write_file_atomic(json_path, json);
    }
  } catch (const ConfigError& e) {
    err << "usage error: " << e.what() << '\n';
    return kUsageError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kRuntimeFailure;
  }
  return kOk;
}

}  // namespace tubempc::cli
