#pragma once

// Control KPIs of a regulation trace, neuromorphic resource estimates and
// runtime instrumentation.

#include <chrono>
#include <cstdint>
#include <vector>

#include "spikectl/trace.hpp"

namespace spikectl {

struct ControlMetrics {
  bool defined = false;   // false when y(0) == y_inf; time metrics are then NaN
  bool settled = false;   // false when the trace ends outside the band
  double rise_time = 0.0;       // s
  double overshoot = 0.0;       // % of |y(0) - y_inf|
  double settling_time = 0.0;   // s
  double steady_state_error = 0.0;
  double y_final = 0.0;
  double iae = 0.0;   // int |e| dt
  double itae = 0.0;  // int t |e| dt
  double isc = 0.0;   // int u^2 dt
};

/// Metrics of one signal against a constant reference. e = y - reference;
/// time metrics use the normalized recovery r = 1 - (y - y_inf) / (y(0) - y_inf).
ControlMetrics signal_metrics(const std::vector<double>& t, const std::vector<double>& y,
                              const std::vector<double>& u, double band = 0.05, double reference = 0.0);

/// signal_metrics on one state channel of the trace.
ControlMetrics control_metrics(const SimTrace& trace, int channel, double band = 0.05, double reference = 0.0);

/// Standard deviation of u about its lowpassed mean (tau seconds).
double control_ripple(const SimTrace& trace, double tau = 0.1);

struct HardwareConstants {
  double neuron_density = 2184.0;   // neurons per mm^2
  int neurons_per_core = 1024;
  double area_per_core = 0.41;      // mm^2
  double e_synop = 23.6;            // pJ
  double e_neuron_update = 81.0;    // pJ
  double cpu_tdp = 95.0;            // W

  void validate() const;
};

double theoretical_chip_area(int n_neurons, const HardwareConstants& hw = {});

struct CoreUtilization {
  double percent = 0.0;           // exact
  double reported_percent = 0.0;  // rounded half-even to 0.1 %, as tabulated
  int n_cores = 0;
};

CoreUtilization core_utilization(int n_neurons, const HardwareConstants& hw = {});

/// area_per_core * utilization / 100 * n_cores.
double experimental_chip_area(double utilization_percent, int n_cores, const HardwareConstants& hw = {});

/// J.
double estimated_cpu_energy(double wall_time, double cpu_utilization, const HardwareConstants& hw = {});

/// uJ per inference.
double estimated_loihi_energy(double synops_per_inference, double updates_per_inference,
                              const HardwareConstants& hw = {});

double spikes_per_neuron(const SimTrace& trace);

struct NeuromorphicMetrics {
  double spikes_per_neuron = 0.0;
  double core_utilization = 0.0;   // reported, %
  int n_cores = 0;
  double area_experimental = 0.0;  // mm^2
  double area_theoretical = 0.0;   // mm^2
  double synops_per_inference = 0.0;
  double energy_loihi = 0.0;       // uJ per inference
};

/// Counting convention: each inference delivers the scalar input to every
/// neuron (one synop each) plus one output synop per spike, and updates every
/// neuron once.
NeuromorphicMetrics neuromorphic_metrics(const SimTrace& trace, const HardwareConstants& hw = {});

struct RuntimeReport {
  double wall_time = 0.0;        // s
  double cpu_time = 0.0;         // s, user + system
  double cpu_utilization = 0.0;  // cpu_time / wall_time
  double real_time_factor = 0.0; // simulated seconds per wall second
  double peak_rss_mb = 0.0;
  double energy_cpu = 0.0;       // J
};

/// Wall and CPU clocks started at construction.
class RuntimeProbe {
 public:
  RuntimeProbe();
  RuntimeReport finish(double simulated_seconds, const HardwareConstants& hw = {}) const;

 private:
  std::chrono::steady_clock::time_point wall0_;
  double cpu0_;
};

}  // namespace spikectl
