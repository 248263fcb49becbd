#include "spikectl/control.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <stdexcept>

namespace spikectl {

std::vector<double> SimTrace::channel(int index) const {
  std::vector<double> out;
  out.reserve(states.size());
  for (const auto& s : states) {
    if (index < 0 || index >= s.size()) throw std::out_of_range("trace channel " + std::to_string(index));
    out.push_back(s[index]);
  }
  return out;
}

const char* to_string(ControllerKind kind) {
  switch (kind) {
    case ControllerKind::SpikingLqr2: return "spiking-lqr-2";
    case ControllerKind::SpikingLqrEnsemble: return "spiking-lqr-ensemble";
    case ControllerKind::SpikingPid: return "spiking-pid";
    case ControllerKind::Lqr: return "lqr";
    case ControllerKind::Pid: return "pid";
    case ControllerKind::Smc: return "smc";
  }
  return "lqr";
}

ControllerKind controller_kind_from_string(const std::string& name) {
  for (auto k : {ControllerKind::SpikingLqr2, ControllerKind::SpikingLqrEnsemble, ControllerKind::SpikingPid,
                 ControllerKind::Lqr, ControllerKind::Pid, ControllerKind::Smc})
    if (name == to_string(k)) return k;
  throw std::invalid_argument("unknown controller kind '" + name +
                              "' (expected spiking-lqr-2, spiking-lqr-ensemble, spiking-pid, lqr, pid or smc)");
}

bool is_spiking(ControllerKind kind) {
  return kind == ControllerKind::SpikingLqr2 || kind == ControllerKind::SpikingLqrEnsemble ||
         kind == ControllerKind::SpikingPid;
}

void PidParams::validate() const {
  if (!std::isfinite(kp) || !std::isfinite(ki) || !std::isfinite(kd) || !std::isfinite(reference))
    throw std::invalid_argument("controller.pid gains must be finite");
  if (link < 0) throw std::invalid_argument("controller.pid.link must be >= 0");
}

void SmcParams::validate() const {
  if (!(c > 0.0)) throw std::invalid_argument("controller.smc.c must be > 0");
  if (!(k > 0.0)) throw std::invalid_argument("controller.smc.k must be > 0");
  if (!(phi > 0.0)) throw std::invalid_argument("controller.smc.phi must be > 0");
  if (link < 0) throw std::invalid_argument("controller.smc.link must be >= 0");
}

void ControllerConfig::validate(const SystemParams& plant, double dt) const {
  if (!(dt > 0.0)) throw std::invalid_argument("dt must be > 0");
  if (!(control_period >= dt * (1.0 - 1e-9)))
    throw std::invalid_argument("controller.control_period must be >= dt");
  if (!(radius_factor > 0.0)) throw std::invalid_argument("controller.radius_factor must be > 0");
  if (!(radius >= 0.0)) throw std::invalid_argument("controller.radius must be >= 0");
  switch (kind) {
    case ControllerKind::Lqr:
    case ControllerKind::SpikingLqr2:
    case ControllerKind::SpikingLqrEnsemble: weights.validate(plant.state_size()); break;
    case ControllerKind::Pid:
    case ControllerKind::SpikingPid:
      pid.validate();
      if (pid.link >= plant.n_links) throw std::invalid_argument("controller.pid.link exceeds the link count");
      break;
    case ControllerKind::Smc:
      smc.validate();
      if (smc.link >= plant.n_links) throw std::invalid_argument("controller.smc.link exceeds the link count");
      break;
  }
  if (kind == ControllerKind::SpikingLqrEnsemble || kind == ControllerKind::SpikingPid) {
    ensemble.validate();
    if (control_period > 0.5 * ensemble.tau_rc)
      throw std::invalid_argument("controller.control_period must be <= tau_rc/2 for ensemble controllers");
  }
  if (kind == ControllerKind::SpikingLqr2) {
    lif.validate();
    if (!(two_neuron.window > 0.0) || !(two_neuron.dt > 0.0) || !(two_neuron.encode_scale > 0.0))
      throw std::invalid_argument("controller.two_neuron window, dt and encode_scale must be > 0");
  }
}

double pid_control(const PidParams& pid, const PidState& s) {
  return pid.kp * s.error + pid.ki * s.integral + pid.kd * s.derivative;
}

double pid_control(const PidParams& pid, const PidState& s, EnsembleRuntime& ensemble, double radius, double dt) {
  return radius * ensemble.step(pid_control(pid, s) / radius, dt).decoded;
}

double smc_control(const SmcParams& smc, double error, double error_rate) {
  const double s = smc.c * error + error_rate;
  return -smc.k * std::clamp(s / smc.phi, -1.0, 1.0);
}

double spiking_lqr_ensemble_control(const GainVector& gain, EnsembleRuntime& ensemble, const Vec& state,
                                    double radius, double dt) {
  return -radius * ensemble.step(gain.command(state) / radius, dt).decoded;
}

namespace {

class LqrController final : public Controller {
 public:
  explicit LqrController(GainVector g) : gain_(std::move(g)) {}
  double update(double, const Vec& x, std::vector<Spike>&) override { return gain_.control(x); }

 private:
  GainVector gain_;
};

class PidController : public Controller {
 public:
  PidController(PidParams pid, double period) : pid_(pid), period_(period) {}

  double update(double, const Vec& x, std::vector<Spike>&) override { return -command(x); }

 protected:
  double command(const Vec& x) {
    const double e = pid_.reference - x[angle_index(pid_.link)];
    if (first_) {
      prev_ = e;
      first_ = false;
    } else {
      state_.integral += 0.5 * (e + prev_) * period_;
    }
    state_.error = e;
    state_.derivative = (e - prev_) / period_;
    prev_ = e;
    return pid_control(pid_, state_);
  }

  PidParams pid_;
  double period_;
  PidState state_;
  double prev_ = 0.0;
  bool first_ = true;
};

class SmcController final : public Controller {
 public:
  SmcController(const SystemParams& p, SmcParams smc) : smc_(smc), p_(p) {}
  double update(double, const Vec& x, std::vector<Spike>&) override {
    const double e = smc_.reference - x[angle_index(smc_.link)];
    const double de = -x[velocity_index(p_, angle_index(smc_.link))];
    return smc_control(smc_, e, de);
  }

 private:
  SmcParams smc_;
  SystemParams p_;
};

void record_fired(const EnsembleRuntime& rt, double t, std::vector<Spike>& spikes) {
  for (int i : rt.fired()) spikes.push_back({t, i});
}

class EnsembleLqrController final : public Controller {
 public:
  EnsembleLqrController(GainVector g, const EnsembleSpec& spec, double radius, double period)
      : gain_(std::move(g)), ens_(make_ensemble(spec)), rt_(ens_), radius_(radius), period_(period) {}

  double update(double t, const Vec& x, std::vector<Spike>& spikes) override {
    const double u = spiking_lqr_ensemble_control(gain_, rt_, x, radius_, period_);
    record_fired(rt_, t, spikes);
    return u;
  }
  int neuron_count() const override { return rt_.size(); }

 private:
  GainVector gain_;
  Ensemble ens_;
  EnsembleRuntime rt_;
  double radius_;
  double period_;
};

class SpikingPidController final : public Controller {
 public:
  SpikingPidController(PidParams pid, const EnsembleSpec& spec, double radius, double period)
      : pid_(pid, period), ens_(make_ensemble(spec)), rt_(ens_), radius_(radius), period_(period) {}

  double update(double t, const Vec& x, std::vector<Spike>& spikes) override {
    const double v = pid_.command_of(x);
    const double u = -radius_ * rt_.step(v / radius_, period_).decoded;
    record_fired(rt_, t, spikes);
    return u;
  }
  int neuron_count() const override { return rt_.size(); }

 private:
  struct Loop : PidController {
    using PidController::PidController;
    double command_of(const Vec& x) { return command(x); }
  };
  Loop pid_;
  Ensemble ens_;
  EnsembleRuntime rt_;
  double radius_;
  double period_;
};

class TwoNeuronController final : public Controller {
 public:
  TwoNeuronController(GainVector g, LifParams lif, TwoNeuronOptions opt, double period)
      : gain_(std::move(g)), lif_(lif), opt_(opt), period_(period) {}

  double update(double t, const Vec& x, std::vector<Spike>& spikes) override {
    const TwoNeuronOutput out = two_neuron_control(lif_, x, gain_, opt_);
    // Neuron time runs window/period times faster than plant time.
    const double scale = period_ / opt_.window;
    std::size_t a = 0, b = 0;
    while (a < out.pos.times.size() || b < out.neg.times.size()) {
      const bool take_pos = b >= out.neg.times.size() ||
                            (a < out.pos.times.size() && out.pos.times[a] <= out.neg.times[b]);
      if (take_pos) spikes.push_back({t + out.pos.times[a++] * scale, 0});
      else spikes.push_back({t + out.neg.times[b++] * scale, opt_.single_neuron ? 0 : 1});
    }
    return out.u;
  }
  int neuron_count() const override { return opt_.single_neuron ? 1 : 2; }

 private:
  GainVector gain_;
  LifParams lif_;
  TwoNeuronOptions opt_;
  double period_;
};

double max_abs_control(const SimTrace& tr) {
  double m = 0.0;
  for (double u : tr.controls) m = std::max(m, std::abs(u));
  return m;
}

}  // namespace

SimTrace simulate(const SystemParams& params, Controller& controller, const Vec& x0, const ClosedLoopOptions& opt) {
  params.validate();
  if (x0.size() != params.state_size())
    throw std::invalid_argument("initial state has length " + std::to_string(x0.size()) + ", expected " +
                                std::to_string(params.state_size()));
  if (!(opt.duration > 0.0)) throw std::invalid_argument("duration must be > 0");
  if (!(opt.dt > 0.0)) throw std::invalid_argument("dt must be > 0");
  const long steps = std::lround(opt.duration / opt.dt);
  const long hold = std::max(1L, std::lround(opt.control_period / opt.dt));

  SimTrace tr;
  tr.dt = opt.dt;
  tr.n_neurons = controller.neuron_count();
  tr.times.reserve(steps + 1);
  tr.states.reserve(steps + 1);
  tr.controls.reserve(steps + 1);

  Vec x = x0;
  double u = 0.0;
  for (long k = 0; k <= steps; ++k) {
    const double t = static_cast<double>(k) * opt.dt;
    if (!x.allFinite()) {
      tr.failed = true;
      tr.failure_reason = "non-finite state";
      tr.failure_time = t;
      break;
    }
    bool fell = false;
    for (int i = 0; i < params.n_links; ++i) fell = fell || std::abs(x[angle_index(i)]) > std::numbers::pi / 2;
    if (fell) {
      tr.failed = true;
      tr.failure_reason = "pole fell";
      tr.failure_time = t;
      break;
    }
    if (k % hold == 0) u = controller.update(t, x, tr.raster);
    tr.times.push_back(t);
    tr.states.push_back(x);
    tr.controls.push_back(u);
    if (k == steps) break;
    x = rk4_step(params, x, u, opt.dt);
  }
  return tr;
}

GainVector design_lqr(const SystemParams& params, const LqrWeights& weights) {
  const LinearModel model = linearize(params);
  GainVector g = lqr_gain(model, weights);
  const ContractionReport rep = check_contraction(model, g);
  if (!rep.contracts)
    throw CareError("LQR closed loop failed the contraction check (worst final norm " +
                    std::to_string(rep.worst_final_norm) + ")");
  return g;
}

double calibrate_radius(const SystemParams& params, const ControllerConfig& config, const Vec& x0, double duration,
                        double dt) {
  ControllerConfig twin = config;
  twin.kind = config.kind == ControllerKind::SpikingPid ? ControllerKind::Pid : ControllerKind::Lqr;
  const SimTrace tr = closed_loop_sim(params, twin, x0, duration, dt, 0);
  const double r = config.radius_factor * max_abs_control(tr);
  return r > 0.0 ? r : 1.0;
}

std::unique_ptr<Controller> make_controller(const SystemParams& params, const ControllerConfig& config, const Vec& x0,
                                            double duration, double dt, std::uint64_t seed) {
  params.validate();
  config.validate(params, dt);
  EnsembleSpec spec = config.ensemble;
  spec.seed = seed;
  auto radius = [&] { return config.radius > 0.0 ? config.radius : calibrate_radius(params, config, x0, duration, dt); };

  switch (config.kind) {
    case ControllerKind::Lqr: return std::make_unique<LqrController>(design_lqr(params, config.weights));
    case ControllerKind::Pid: return std::make_unique<PidController>(config.pid, config.control_period);
    case ControllerKind::Smc: return std::make_unique<SmcController>(params, config.smc);
    case ControllerKind::SpikingLqr2:
      return std::make_unique<TwoNeuronController>(design_lqr(params, config.weights), config.lif, config.two_neuron,
                                                   config.control_period);
    case ControllerKind::SpikingLqrEnsemble:
      return std::make_unique<EnsembleLqrController>(design_lqr(params, config.weights), spec, radius(),
                                                     config.control_period);
    case ControllerKind::SpikingPid:
      return std::make_unique<SpikingPidController>(config.pid, spec, radius(), config.control_period);
  }
  throw std::logic_error("unhandled controller kind");
}

SimTrace closed_loop_sim(const SystemParams& params, const ControllerConfig& config, const Vec& x0, double duration,
                         double dt, std::uint64_t seed) {
  ControllerConfig resolved = config;
  const bool ensemble = config.kind == ControllerKind::SpikingLqrEnsemble || config.kind == ControllerKind::SpikingPid;
  if (ensemble && !(config.radius > 0.0)) {
    params.validate();
    config.validate(params, dt);
    resolved.radius = calibrate_radius(params, config, x0, duration, dt);
  }
  auto controller = make_controller(params, resolved, x0, duration, dt, seed);
  SimTrace tr = simulate(params, *controller, x0, {duration, dt, config.control_period});
  tr.seed = seed;
  tr.metadata["controller"] = to_string(config.kind);
  if (ensemble) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.9g", resolved.radius);
    tr.metadata["radius"] = buf;
  }
  return tr;
}

}  // namespace spikectl
