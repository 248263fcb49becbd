#include <doctest.h>

#include <cmath>
#include <stdexcept>

#include "spikectl/metrics.hpp"

using namespace spikectl;

namespace {

struct Series {
  std::vector<double> t, y, u;
};

// y = exp(-t / tau), u = constant c.
Series decay(double tau, double horizon, double dt, double c = 0.0) {
  Series s;
  const long n = std::lround(horizon / dt);
  for (long k = 0; k <= n; ++k) {
    s.t.push_back(k * dt);
    s.y.push_back(std::exp(-k * dt / tau));
    s.u.push_back(c);
  }
  return s;
}

}  // namespace

TEST_CASE("first-order decay metrics match their closed forms") {
  const double tau = 0.5, T = 20.0;
  const Series s = decay(tau, T, 1e-4, 2.0);
  const ControlMetrics m = signal_metrics(s.t, s.y, s.u);
  CHECK(m.defined);
  CHECK(m.settled);
  CHECK(m.rise_time == doctest::Approx(tau * std::log(9.0)).epsilon(1e-6).scale(0));
  CHECK(m.settling_time == doctest::Approx(tau * std::log(20.0)).epsilon(1e-6).scale(0));
  CHECK(m.overshoot == 0.0);
  CHECK(m.steady_state_error < 1e-12);
  CHECK(m.iae == doctest::Approx(tau).epsilon(1e-6).scale(0));
  CHECK(m.itae == doctest::Approx(tau * tau).epsilon(1e-6).scale(0));
  CHECK(m.isc == doctest::Approx(4.0 * T).epsilon(1e-9).scale(0));
}

TEST_CASE("underdamped response overshoot") {
  // y = exp(-z w t) cos(wd t) ... use the envelope-free form with a known peak:
  // y = cos(w t) exp(-a t); the first minimum after the zero crossing sets PO.
  const double a = 0.8, w = 4.0, dt = 1e-5;
  std::vector<double> t, y;
  for (long k = 0; k <= 2'000'000; ++k) {
    t.push_back(k * dt);
    y.push_back(std::cos(w * k * dt) * std::exp(-a * k * dt));
  }
  const ControlMetrics m = signal_metrics(t, y, {});
  // Extremum of cos(w t) e^{-a t}: tan(w t) = -a / w, first minimum at t* = (pi - atan(a/w)) / w.
  const double ts = (M_PI - std::atan(a / w)) / w;
  const double peak = -std::cos(w * ts) * std::exp(-a * ts);
  CHECK(m.overshoot == doctest::Approx(100.0 * peak).epsilon(1e-4).scale(0));
}

TEST_CASE("constant signals leave the time metrics undefined") {
  const std::vector<double> t{0, 1, 2, 3}, y{0.5, 0.5, 0.5, 0.5};
  const ControlMetrics m = signal_metrics(t, y, {}, 0.05, 0.0);
  CHECK_FALSE(m.defined);
  CHECK(std::isnan(m.rise_time));
  CHECK(m.steady_state_error == 0.5);
  CHECK(m.iae == doctest::Approx(1.5));
}

TEST_CASE("signals still outside the band are not settled") {
  std::vector<double> t, y;
  for (int k = 0; k <= 1000; ++k) {
    t.push_back(k * 1e-2);
    y.push_back(k == 1000 ? 0.5 : 1.0 - 1e-3 * k);  // final sample jumps out
  }
  CHECK_FALSE(signal_metrics(t, y, {}).settled);
}

TEST_CASE("ripple of a constant command is zero and grows with chatter") {
  SimTrace tr;
  tr.dt = 1e-3;
  for (int k = 0; k < 5000; ++k) {
    tr.times.push_back(k * tr.dt);
    tr.states.push_back(Vec::Zero(4));
    tr.controls.push_back(3.0);
  }
  CHECK(control_ripple(tr) == 0.0);
  for (int k = 0; k < 5000; ++k) tr.controls[k] = 3.0 + (k % 2 ? 1.0 : -1.0);
  // Alternating +-1 about a steady mean: the lowpass barely moves, so std -> 1.
  CHECK(control_ripple(tr) == doctest::Approx(1.0).epsilon(0.02).scale(0));
}

TEST_CASE("core utilization and chip area") {
  const HardwareConstants hw;
  CHECK(core_utilization(2).reported_percent == doctest::Approx(0.2));
  CHECK(core_utilization(32).reported_percent == doctest::Approx(3.1));
  CHECK(core_utilization(64).reported_percent == doctest::Approx(6.2));
  CHECK(core_utilization(128).reported_percent == doctest::Approx(12.5));
  CHECK(core_utilization(1024).n_cores == 1);
  CHECK(core_utilization(1024).reported_percent == 100.0);
  CHECK(core_utilization(2048).n_cores == 2);
  CHECK(core_utilization(1025).percent == doctest::Approx(100.0 * 1025 / 2048));
  CHECK(theoretical_chip_area(2184) == doctest::Approx(1.0));
  CHECK(experimental_chip_area(50.0, 2, hw) == doctest::Approx(0.41));
  CHECK_THROWS_AS(core_utilization(0), std::invalid_argument);
}

TEST_CASE("energy estimates follow the counting convention") {
  SimTrace tr;
  tr.n_neurons = 10;
  for (int k = 0; k < 4; ++k) {
    tr.times.push_back(k * 1e-3);
    tr.states.push_back(Vec::Zero(4));
    tr.controls.push_back(0.0);
  }
  for (int s = 0; s < 8; ++s) tr.raster.push_back({0.0, s % 10});
  const NeuromorphicMetrics m = neuromorphic_metrics(tr);
  CHECK(m.spikes_per_neuron == doctest::Approx(0.8));
  CHECK(m.synops_per_inference == doctest::Approx(10.0 + 8.0 / 4.0));
  CHECK(m.energy_loihi == doctest::Approx((12.0 * 23.6 + 10.0 * 81.0) * 1e-6));
  CHECK(estimated_cpu_energy(2.0, 0.5) == doctest::Approx(95.0));
  CHECK(neuromorphic_metrics(SimTrace{}).energy_loihi == 0.0);
}

TEST_CASE("runtime probe reports non-negative clocks") {
  RuntimeProbe probe;
  volatile double x = 0.0;
  for (int i = 0; i < 1000000; ++i) x = x + 1e-9 * i;
  const RuntimeReport r = probe.finish(1.0);
  CHECK(r.wall_time > 0.0);
  CHECK(r.cpu_time >= 0.0);
  CHECK(r.peak_rss_mb > 0.0);
}

TEST_CASE("input validation") {
  CHECK_THROWS_AS(signal_metrics({}, {}, {}), std::invalid_argument);
  CHECK_THROWS_AS(signal_metrics({0, 1}, {1, 0}, {1}), std::invalid_argument);
  CHECK_THROWS_AS(signal_metrics({0, 1}, {1, 0}, {}, 0.0), std::invalid_argument);
}
