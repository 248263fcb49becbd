#include <doctest.h>

#include <cmath>
#include <stdexcept>

#include "spikectl/control.hpp"
#include "spikectl/metrics.hpp"

using namespace spikectl;

namespace {

SystemParams chain(int n) { return SystemParams::uniform_chain(n, 5.0, 1.0 / n, 2.0 / n); }

std::vector<double> default_angles(int n) {
  std::vector<double> a;
  for (int i = 0; i < n; ++i) a.push_back(0.2 - 0.02 * i);
  return a;
}

ControllerConfig lqr_config(int n) {
  ControllerConfig c;
  c.kind = ControllerKind::Lqr;
  c.weights =
      LqrWeights::diagonal(1000.0, std::vector<double>(n, 1e4), 1000.0, std::vector<double>(n, 1e3), 20.0);
  return c;
}

ControllerConfig cartpole_ensemble(int neurons) {
  ControllerConfig c;
  c.kind = ControllerKind::SpikingLqrEnsemble;
  c.weights = LqrWeights::diagonal(200.0, {1e4}, 10.0, {1e3}, 20.0);
  c.ensemble.n_neurons = neurons;
  return c;
}

double max_abs_angle(const SimTrace& tr, const SystemParams& p, std::size_t from) {
  double m = 0.0;
  for (std::size_t k = from; k < tr.size(); ++k)
    for (int i = 0; i < p.n_links; ++i) m = std::max(m, std::abs(tr.states[k][angle_index(i)]));
  return m;
}

}  // namespace

TEST_CASE("upright equilibrium stays put under LQR") {
  const SystemParams p = chain(1);
  const SimTrace tr = closed_loop_sim(p, lqr_config(1), zero_state(p), 5.0, 1e-3, 0);
  CHECK_FALSE(tr.failed);
  for (const auto& x : tr.states) CHECK(x.norm() == 0.0);
  for (double u : tr.controls) CHECK(u == 0.0);
}

TEST_CASE("LQR balances every chain from the default offsets") {
  for (int n = 1; n <= 4; ++n) {
    const SystemParams p = chain(n);
    const SimTrace tr = closed_loop_sim(p, lqr_config(n), displaced_state(p, default_angles(n)), 30.0, 1e-3, 0);
    CAPTURE(n);
    CHECK_FALSE(tr.failed);
    CHECK(max_abs_angle(tr, p, tr.size() - 1000) < 0.01);
  }
}

TEST_CASE("harness holds the control between updates") {
  const SystemParams p = chain(1);
  ControllerConfig c = lqr_config(1);
  c.control_period = 5e-3;
  const Vec x0 = displaced_state(p, {0.1});
  const SimTrace tr = closed_loop_sim(p, c, x0, 1.0, 1e-3, 0);
  // Reference loop written out by hand.
  const GainVector K = design_lqr(p, c.weights);
  Vec x = x0;
  double u = 0.0;
  for (std::size_t k = 0; k < tr.size(); ++k) {
    if (k % 5 == 0) u = K.control(x);
    CHECK(tr.controls[k] == u);
    CHECK((tr.states[k] - x).norm() == 0.0);
    x = rk4_step(p, x, u, 1e-3);
  }
}

TEST_CASE("divergence guard stops a falling pole") {
  const SystemParams p = chain(1);
  ControllerConfig c;
  c.kind = ControllerKind::Pid;
  c.pid.kp = 0.0;
  c.pid.kd = 0.0;
  const SimTrace tr = closed_loop_sim(p, c, displaced_state(p, {0.2}), 10.0, 1e-3, 0);
  CHECK(tr.failed);
  CHECK(tr.failure_reason == "pole fell");
  CHECK(tr.failure_time > 0.0);
  CHECK(tr.failure_time < 10.0);
}

TEST_CASE("PID and SMC laws") {
  PidParams pid;
  pid.kp = 2.0;
  pid.ki = 0.5;
  pid.kd = 0.25;
  CHECK(pid_control(pid, {1.0, 2.0, -4.0}) == doctest::Approx(2.0 + 1.0 - 1.0));
  SmcParams smc;
  CHECK(smc_control(smc, 0.0, 0.0) == 0.0);
  CHECK(smc_control(smc, 1.0, 0.0) == -smc.k);
  CHECK(smc_control(smc, -1.0, 0.0) == smc.k);
  // Inside the boundary layer the law is linear in s.
  CHECK(smc_control(smc, 0.001, 0.01) == doctest::Approx(-smc.k * (smc.c * 0.001 + 0.01) / smc.phi));
}

TEST_CASE("PID and SMC balance the single-link cartpole angle") {
  const SystemParams p = chain(1);
  for (ControllerKind kind : {ControllerKind::Pid, ControllerKind::Smc}) {
    ControllerConfig c;
    c.kind = kind;
    const SimTrace tr = closed_loop_sim(p, c, displaced_state(p, {0.2}), 10.0, 1e-3, 0);
    CAPTURE(to_string(kind));
    CHECK_FALSE(tr.failed);
    CHECK(std::abs(tr.states.back()[1]) < 0.01);
  }
}

TEST_CASE("ensemble controller reproduces -K.X across its range") {
  EnsembleSpec s;
  s.n_neurons = 400;
  s.seed = 1;
  const Ensemble e = make_ensemble(s);
  GainVector K;
  K.K = Eigen::RowVectorXd::Zero(4);
  K.K[1] = -100.0;
  const double radius = 40.0;
  for (double frac : {0.5, -0.5}) {
    EnsembleRuntime rt(e);
    Vec x = Vec::Zero(4);
    x[1] = -frac * radius / 100.0;  // K.X = frac * radius
    double u = 0.0;
    for (int k = 0; k < 2000; ++k) u = spiking_lqr_ensemble_control(K, rt, x, radius, 1e-3);
    CAPTURE(frac);
    CHECK(u == doctest::Approx(-frac * radius).epsilon(0.08).scale(0));
  }
}

TEST_CASE("spiking ensemble LQR balances the cartpole and is deterministic") {
  const SystemParams p = chain(1);
  int settled = 0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const SimTrace tr = closed_loop_sim(p, cartpole_ensemble(32), displaced_state(p, {0.2}), 10.0, 1e-3, seed);
    settled += !tr.failed && control_metrics(tr, 1).settled;
  }
  CHECK(settled >= 4);
  const SimTrace a = closed_loop_sim(p, cartpole_ensemble(64), displaced_state(p, {0.2}), 3.0, 1e-3, 7);
  const SimTrace b = closed_loop_sim(p, cartpole_ensemble(64), displaced_state(p, {0.2}), 3.0, 1e-3, 7);
  CHECK(a.controls == b.controls);
  CHECK(a.raster.size() == b.raster.size());
  CHECK(a.n_neurons == 64);
  CHECK(a.metadata.count("radius") == 1);
}

TEST_CASE("a two-neuron ensemble cannot hold three or more links") {
  for (int n : {3, 4}) {
    const SystemParams p = chain(n);
    ControllerConfig c = lqr_config(n);
    c.kind = ControllerKind::SpikingLqrEnsemble;
    c.ensemble.n_neurons = 2;
    const SimTrace tr = closed_loop_sim(p, c, displaced_state(p, default_angles(n)), 30.0, 1e-3, 0);
    CAPTURE(n);
    CHECK(tr.failed);
    CHECK(tr.failure_reason == "pole fell");
  }
}

TEST_CASE("configuration checks") {
  const SystemParams p = chain(1);
  ControllerConfig c = cartpole_ensemble(10);
  c.control_period = 0.05;  // > tau_rc / 2
  CHECK_THROWS_AS(c.validate(p, 1e-3), std::invalid_argument);
  c = lqr_config(1);
  c.control_period = 1e-4;
  CHECK_THROWS_AS(c.validate(p, 1e-3), std::invalid_argument);
  c = lqr_config(2);
  CHECK_THROWS_AS(c.validate(p, 1e-3), std::invalid_argument);
  c = ControllerConfig{};
  c.kind = ControllerKind::Pid;
  c.pid.link = 1;
  CHECK_THROWS_AS(c.validate(p, 1e-3), std::invalid_argument);
  CHECK(controller_kind_from_string("spiking-pid") == ControllerKind::SpikingPid);
  CHECK_THROWS_AS(controller_kind_from_string("mpc"), std::invalid_argument);
}
