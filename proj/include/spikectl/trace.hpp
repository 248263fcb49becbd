#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "spikectl/dynamics.hpp"

namespace spikectl {

struct Spike {
  double t;    // s, plant time base
  int neuron;
};

/// Closed-loop time series. times, states and controls have equal length;
/// controls[k] is the input held over [times[k], times[k+1]).
struct SimTrace {
  double dt = 0.0;
  std::vector<double> times;
  std::vector<Vec> states;
  std::vector<double> controls;
  std::vector<Spike> raster;
  int n_neurons = 0;
  std::uint64_t seed = 0;

  bool failed = false;            // divergence guard tripped ("pole fell")
  std::string failure_reason;
  double failure_time = 0.0;

  std::map<std::string, std::string> metadata;

  std::size_t size() const { return times.size(); }
  bool empty() const { return times.empty(); }
  /// One channel of the state history.
  std::vector<double> channel(int index) const;
};

}  // namespace spikectl
