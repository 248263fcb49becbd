#pragma once

// Closed-loop harness: plant integration with a zero-order-held controller,
// spiking and conventional controllers, and the divergence guard.

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "spikectl/dynamics.hpp"
#include "spikectl/lif.hpp"
#include "spikectl/lqr.hpp"
#include "spikectl/nef.hpp"
#include "spikectl/trace.hpp"

namespace spikectl {

enum class ControllerKind { SpikingLqr2, SpikingLqrEnsemble, SpikingPid, Lqr, Pid, Smc };

const char* to_string(ControllerKind kind);
ControllerKind controller_kind_from_string(const std::string& name);
bool is_spiking(ControllerKind kind);

/// Angle-loop PID on one link. v = Kp e + Ki int(e) + Kd de/dt with e = reference - theta;
/// the harness applies u = -v.
struct PidParams {
  double kp = 190.61;
  double ki = 0.0;
  double kd = 78.26;
  int link = 0;
  double reference = 0.0;

  void validate() const;
};

/// Boundary-layer sliding mode on one link: s = c e + de/dt, u = -k sat(s / phi).
struct SmcParams {
  double c = 5.0;
  double k = 80.0;
  double phi = 0.05;
  int link = 0;
  double reference = 0.0;

  void validate() const;
};

struct ControllerConfig {
  ControllerKind kind = ControllerKind::Lqr;
  LqrWeights weights;     // lqr kinds
  PidParams pid;
  SmcParams smc;
  EnsembleSpec ensemble;  // ensemble kinds; the ensemble seed is taken from the run seed
  LifParams lif = LifParams::lui();
  TwoNeuronOptions two_neuron;
  double control_period = 1e-3;  // s
  double radius_factor = 2.0;    // radius = factor * max|command| of the conventional twin
  double radius = 0.0;           // > 0 skips calibration

  void validate(const SystemParams& plant, double dt) const;
};

/// Produces the control held over the next control period. Spikes emitted
/// during the period are appended in plant time.
class Controller {
 public:
  virtual ~Controller() = default;
  virtual double update(double t, const Vec& state, std::vector<Spike>& spikes) = 0;
  virtual int neuron_count() const { return 0; }
};

struct PidState {
  double error = 0.0;
  double integral = 0.0;
  double derivative = 0.0;
};

/// Command v of the PID law (non-spiking form).
double pid_control(const PidParams& pid, const PidState& s);

/// Command v routed through an ensemble representing v / radius.
double pid_control(const PidParams& pid, const PidState& s, EnsembleRuntime& ensemble, double radius, double dt);

double smc_control(const SmcParams& smc, double error, double error_rate);

/// u = -radius * decoded, with (K.X) / radius fed to the ensemble.
double spiking_lqr_ensemble_control(const GainVector& gain, EnsembleRuntime& ensemble, const Vec& state,
                                    double radius, double dt);

struct ClosedLoopOptions {
  double duration = 10.0;
  double dt = 1e-3;
  double control_period = 1e-3;
};

/// Plant/controller loop with ZOH. Stops early, flagging the trace, if any
/// link leaves (-pi/2, pi/2) or the state becomes non-finite.
SimTrace simulate(const SystemParams& params, Controller& controller, const Vec& x0, const ClosedLoopOptions& opt);

/// LQR gain for a plant and weights; throws if the closed loop fails the contraction check.
GainVector design_lqr(const SystemParams& params, const LqrWeights& weights);

/// Ensemble radius: radius_factor * max|u| of the conventional twin run from x0.
double calibrate_radius(const SystemParams& params, const ControllerConfig& config, const Vec& x0, double duration,
                        double dt);

/// Builds the configured controller. For ensemble kinds without an explicit
/// radius, the conventional twin is simulated from x0 to calibrate it.
std::unique_ptr<Controller> make_controller(const SystemParams& params, const ControllerConfig& config, const Vec& x0,
                                            double duration, double dt, std::uint64_t seed);

SimTrace closed_loop_sim(const SystemParams& params, const ControllerConfig& config, const Vec& x0, double duration,
                         double dt, std::uint64_t seed);

}  // namespace spikectl
