#include "spikectl/metrics.hpp"

#include <sys/resource.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace spikectl {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// First time r crosses `level` upward, linearly interpolated.
double first_crossing(const std::vector<double>& t, const std::vector<double>& r, double level) {
  if (r[0] >= level) return t[0];
  for (std::size_t k = 1; k < r.size(); ++k) {
    if (r[k] >= level) {
      const double f = (level - r[k - 1]) / (r[k] - r[k - 1]);
      return t[k - 1] + f * (t[k] - t[k - 1]);
    }
  }
  return kNaN;
}

double trapezoid(const std::vector<double>& t, const std::vector<double>& f) {
  double acc = 0.0;
  for (std::size_t k = 1; k < t.size(); ++k) acc += 0.5 * (f[k] + f[k - 1]) * (t[k] - t[k - 1]);
  return acc;
}

}  // namespace

ControlMetrics signal_metrics(const std::vector<double>& t, const std::vector<double>& y, const std::vector<double>& u,
                              double band, double reference) {
  if (t.empty() || t.size() != y.size()) throw std::invalid_argument("signal_metrics: empty or ragged trace");
  if (!u.empty() && u.size() != t.size()) throw std::invalid_argument("signal_metrics: control length mismatch");
  if (!(band > 0.0)) throw std::invalid_argument("signal_metrics: band must be > 0");
  const std::size_t n = t.size();
  ControlMetrics m;

  const std::size_t tail = std::max<std::size_t>(1, n / 10);
  double y_inf = 0.0;
  for (std::size_t k = n - tail; k < n; ++k) y_inf += y[k];
  y_inf /= static_cast<double>(tail);
  m.y_final = y_inf;
  m.steady_state_error = std::abs(y_inf - reference);

  std::vector<double> e(n), te(n);
  for (std::size_t k = 0; k < n; ++k) {
    e[k] = std::abs(y[k] - reference);
    te[k] = t[k] * e[k];
  }
  m.iae = trapezoid(t, e);
  m.itae = trapezoid(t, te);
  if (!u.empty()) {
    std::vector<double> u2(n);
    for (std::size_t k = 0; k < n; ++k) u2[k] = u[k] * u[k];
    m.isc = trapezoid(t, u2);
  }

  const double span = y[0] - y_inf;
  if (span == 0.0 || !std::isfinite(span)) {
    m.rise_time = m.overshoot = m.settling_time = kNaN;
    return m;
  }
  m.defined = true;
  std::vector<double> r(n);
  for (std::size_t k = 0; k < n; ++k) r[k] = 1.0 - (y[k] - y_inf) / span;

  m.rise_time = first_crossing(t, r, 0.9) - first_crossing(t, r, 0.1);
  m.overshoot = 100.0 * std::max(0.0, *std::max_element(r.begin(), r.end()) - 1.0);

  // Last exit from the band, interpolated to the re-entry point.
  const double tube = band;  // in units of |y(0) - y_inf|
  std::size_t last_out = n;
  for (std::size_t k = n; k-- > 0;) {
    if (std::abs(1.0 - r[k]) > tube) {
      last_out = k;
      break;
    }
  }
  if (last_out == n) {
    m.settling_time = t[0];
    m.settled = true;
  } else if (last_out == n - 1) {
    m.settling_time = kNaN;
  } else {
    const double a = std::abs(1.0 - r[last_out]), b = std::abs(1.0 - r[last_out + 1]);
    const double f = (a - tube) / (a - b);
    m.settling_time = t[last_out] + f * (t[last_out + 1] - t[last_out]);
    m.settled = true;
  }
  return m;
}

ControlMetrics control_metrics(const SimTrace& trace, int channel, double band, double reference) {
  if (trace.empty()) throw std::invalid_argument("control_metrics: empty trace");
  return signal_metrics(trace.times, trace.channel(channel), trace.controls, band, reference);
}

double control_ripple(const SimTrace& trace, double tau) {
  if (trace.size() < 2) return 0.0;
  double y = trace.controls[0];
  double acc = 0.0, acc2 = 0.0;
  const double alpha = -std::expm1(-trace.dt / tau);
  for (double u : trace.controls) {
    y += alpha * (u - y);
    const double d = u - y;
    acc += d;
    acc2 += d * d;
  }
  const double n = static_cast<double>(trace.size());
  const double mean = acc / n;
  return std::sqrt(std::max(0.0, acc2 / n - mean * mean));
}

void HardwareConstants::validate() const {
  if (!(neuron_density > 0.0) || neurons_per_core <= 0 || !(area_per_core > 0.0) || !(e_synop > 0.0) ||
      !(e_neuron_update > 0.0) || !(cpu_tdp > 0.0))
    throw std::invalid_argument("hardware constants must all be > 0");
}

double theoretical_chip_area(int n_neurons, const HardwareConstants& hw) {
  if (n_neurons < 1) throw std::invalid_argument("theoretical_chip_area: n_neurons must be >= 1");
  return n_neurons / hw.neuron_density;
}

CoreUtilization core_utilization(int n_neurons, const HardwareConstants& hw) {
  if (n_neurons < 1) throw std::invalid_argument("core_utilization: n_neurons must be >= 1");
  CoreUtilization c;
  c.n_cores = (n_neurons + hw.neurons_per_core - 1) / hw.neurons_per_core;
  c.percent = 100.0 * n_neurons / (static_cast<double>(c.n_cores) * hw.neurons_per_core);
  c.reported_percent = std::nearbyint(c.percent * 10.0) / 10.0;  // default rounding mode is half-even
  return c;
}

double experimental_chip_area(double utilization_percent, int n_cores, const HardwareConstants& hw) {
  return hw.area_per_core * utilization_percent / 100.0 * n_cores;
}

double estimated_cpu_energy(double wall_time, double cpu_utilization, const HardwareConstants& hw) {
  return wall_time * cpu_utilization * hw.cpu_tdp;
}

double estimated_loihi_energy(double synops, double updates, const HardwareConstants& hw) {
  return (synops * hw.e_synop + updates * hw.e_neuron_update) * 1e-6;
}

double spikes_per_neuron(const SimTrace& trace) {
  if (trace.n_neurons <= 0) return 0.0;
  return static_cast<double>(trace.raster.size()) / trace.n_neurons;
}

NeuromorphicMetrics neuromorphic_metrics(const SimTrace& trace, const HardwareConstants& hw) {
  NeuromorphicMetrics m;
  if (trace.n_neurons <= 0) return m;
  m.spikes_per_neuron = spikes_per_neuron(trace);
  const CoreUtilization c = core_utilization(trace.n_neurons, hw);
  m.core_utilization = c.reported_percent;
  m.n_cores = c.n_cores;
  m.area_experimental = experimental_chip_area(c.reported_percent, c.n_cores, hw);
  m.area_theoretical = theoretical_chip_area(trace.n_neurons, hw);
  const double inferences = static_cast<double>(std::max<std::size_t>(1, trace.size()));
  m.synops_per_inference = trace.n_neurons + static_cast<double>(trace.raster.size()) / inferences;
  m.energy_loihi = estimated_loihi_energy(m.synops_per_inference, trace.n_neurons, hw);
  return m;
}

namespace {

double process_cpu_seconds() {
  rusage ru{};
  getrusage(RUSAGE_SELF, &ru);
  return ru.ru_utime.tv_sec + ru.ru_stime.tv_sec + 1e-6 * (ru.ru_utime.tv_usec + ru.ru_stime.tv_usec);
}

}  // namespace

RuntimeProbe::RuntimeProbe() : wall0_(std::chrono::steady_clock::now()), cpu0_(process_cpu_seconds()) {}

RuntimeReport RuntimeProbe::finish(double simulated_seconds, const HardwareConstants& hw) const {
  RuntimeReport r;
  r.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - wall0_).count();
  r.cpu_time = process_cpu_seconds() - cpu0_;
  r.cpu_utilization = r.wall_time > 0.0 ? r.cpu_time / r.wall_time : 0.0;
  r.real_time_factor = r.wall_time > 0.0 ? simulated_seconds / r.wall_time : 0.0;
  rusage ru{};
  getrusage(RUSAGE_SELF, &ru);
  r.peak_rss_mb = ru.ru_maxrss / 1024.0;
  r.energy_cpu = estimated_cpu_energy(r.wall_time, r.cpu_utilization, hw);
  return r;
}

}  // namespace spikectl
