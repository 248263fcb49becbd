#pragma once

// Experiment configs, single runs, parameter sweeps and controller
// comparisons, with their on-disk artifacts.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "spikectl/control.hpp"
#include "spikectl/metrics.hpp"

namespace spikectl {

inline constexpr const char* kConfigSchema = "spikectl/1";

/// Raised for schema violations (field path in the message) and range errors.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ExperimentConfig {
  std::string name;
  std::string description;
  SystemParams plant;
  ControllerConfig controller;
  std::vector<double> initial_angles;  // rad, one per link
  double duration = 10.0;              // s
  double dt = 1e-3;                    // s
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
  double band = 0.05;                  // settling band, fraction of the initial deviation
  HardwareConstants hardware;
  std::string output;                  // optional output directory

  Vec initial_state() const;
};

ExperimentConfig parse_config(const nlohmann::json& doc);
ExperimentConfig parse_config_text(const std::string& text);
ExperimentConfig load_config(const std::filesystem::path& path);

/// Fully resolved config; parse_config(resolved_config(c)) reproduces c.
nlohmann::json resolved_config(const ExperimentConfig& config);

/// Metrics of one closed-loop run.
struct SeedResult {
  std::uint64_t seed = 0;
  bool failed = false;
  std::string failure_reason;
  double failure_time = 0.0;
  std::vector<ControlMetrics> links;  // one per angle
  ControlMetrics cart;
  double ripple = 0.0;                // N
  double settling_time_max = 0.0;     // s, slowest link; NaN if any link did not settle
  NeuromorphicMetrics neuro;
  RuntimeReport runtime;
  double radius = 0.0;                // ensemble radius used, 0 for non-ensemble kinds
};

SeedResult evaluate(const ExperimentConfig& config, const SimTrace& trace, const RuntimeReport& runtime);

/// Simulates one seed.
SeedResult run_seed(const ExperimentConfig& config, std::uint64_t seed, SimTrace* trace_out = nullptr);

struct RunResult {
  std::vector<SeedResult> seeds;
  bool ok() const;
};

/// Runs every seed, writing per-seed trace.csv, raster.csv and metrics.json to
/// out/seed_<k>/ and metrics.json, runtime.json, config.resolved.json (plus
/// failure.json when a run diverged) to out/.
RunResult run_experiment(const ExperimentConfig& config, const std::filesystem::path& out, int workers = 1);

enum class SweepAxis { Neurons, Intercepts, MaxRates, Ki };

const char* to_string(SweepAxis axis);
SweepAxis sweep_axis_from_string(const std::string& name);

/// Applies one axis value: neurons "N", intercepts "v" (linspace -v..v),
/// max_rates "lo:hi" (a bare number sets the lower limit), ki "value".
ExperimentConfig apply_axis(const ExperimentConfig& base, SweepAxis axis, const std::string& value);

struct Stat {
  double mean = 0.0;
  double stddev = 0.0;  // sample standard deviation
  int count = 0;        // finite samples
};

/// Mean and standard deviation over the finite entries.
Stat summarize(const std::vector<double>& samples);

/// Seed statistics of the reported metrics, keyed by column name.
std::map<std::string, Stat> aggregate(const std::vector<SeedResult>& seeds, int link = 0);

/// Column names of aggregate() in reporting order.
const std::vector<std::string>& metric_columns();

struct SweepRow {
  std::string value;
  std::vector<SeedResult> seeds;
  std::map<std::string, Stat> stats;
  int n_neurons = 0;
  CoreUtilization utilization;
  double area_theoretical = 0.0;
  double area_experimental = 0.0;
  std::string failures;  // "seed:reason" entries, ';'-separated

  int failed_count() const;
};

struct SweepResult {
  SweepAxis axis = SweepAxis::Neurons;
  std::vector<SweepRow> rows;
};

/// Runs every (value, seed) cell on up to `workers` threads. A failing cell is
/// recorded in its row and the sweep continues. With a non-empty `out`, each
/// cell is written atomically to out/cells/ and the table to out/sweep.csv.
SweepResult sweep(const ExperimentConfig& config, SweepAxis axis, const std::vector<std::string>& values,
                  int workers = 1, const std::filesystem::path& out = {});

void write_sweep_csv(const SweepResult& result, const std::filesystem::path& path);

/// Conventional and spiking controllers on the same plant and initial state.
struct CompareResult {
  std::vector<SweepRow> rows;  // value = controller kind
};

CompareResult compare(const ExperimentConfig& config, int workers = 1, const std::filesystem::path& out = {});

/// %.9g.
std::string format_number(double v);

void write_trace_csv(const SimTrace& trace, const std::filesystem::path& path);
void write_raster_csv(const SimTrace& trace, const std::filesystem::path& path);

/// Writes through a temporary file renamed into place.
void write_file_atomic(const std::filesystem::path& path, const std::string& content);

nlohmann::json to_json(const ControlMetrics& m);
nlohmann::json to_json(const SeedResult& r);

/// Parses "a,b,c" and "lo:step:hi" lists.
std::vector<std::string> parse_value_list(const std::string& text);
std::vector<std::uint64_t> parse_seed_list(const std::string& text);

}  // namespace spikectl
