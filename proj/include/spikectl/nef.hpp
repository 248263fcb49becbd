#pragma once

// Population coding of a scalar: LIF tuning curves, gain/bias solve,
// regularized least-squares decoders and a spiking runtime.

#include <cstdint>
#include <string>
#include <vector>

namespace spikectl {

enum class InterceptKind { Uniform, Linspace, Normal };

struct InterceptSpec {
  InterceptKind kind = InterceptKind::Uniform;
  double lo = -1.0;     // uniform / linspace bounds
  double hi = 1.0;
  double sigma = 0.5;   // normal

  static InterceptSpec uniform(double lo, double hi) { return {InterceptKind::Uniform, lo, hi, 0.0}; }
  static InterceptSpec linspace(double lo, double hi) { return {InterceptKind::Linspace, lo, hi, 0.0}; }
  static InterceptSpec normal(double sigma) { return {InterceptKind::Normal, 0.0, 0.0, sigma}; }
};

const char* to_string(InterceptKind kind);
InterceptKind intercept_kind_from_string(const std::string& name);

/// Sampled intercepts are clipped to this magnitude; an intercept of exactly
/// +-1 would need an infinite gain.
inline constexpr double kMaxIntercept = 0.99;

struct EnsembleSpec {
  int n_neurons = 100;
  double radius = 1.0;
  InterceptSpec intercepts;
  double max_rate_lo = 200.0;  // Hz, uniform
  double max_rate_hi = 400.0;
  double tau_rc = 0.02;
  double tau_ref = 0.002;
  double synapse_tau = 0.005;
  std::uint64_t seed = 0;

  void validate() const;
};

struct NeuronTuning {
  int encoder = 1;  // +1 or -1
  double gain = 1.0;
  double bias = 0.0;
  double intercept = 0.0;
  double max_rate = 0.0;  // Hz
};

struct DecoderSet {
  std::vector<double> d;  // normalized value per Hz
  double rmse = 0.0;      // identity reconstruction error over the evaluation points, value units
};

/// Steady-state LIF rate for normalized input current J (threshold 1).
double lif_rate(double j, double tau_rc, double tau_ref);

/// Rate of one neuron at normalized represented value x (x / radius).
double rate_curve(const NeuronTuning& tuning, double tau_rc, double tau_ref, double x);

/// Samples intercepts and max rates, alternates encoders and solves gain/bias.
std::vector<NeuronTuning> build_ensemble(const EnsembleSpec& spec);

struct Ensemble {
  EnsembleSpec spec;
  std::vector<NeuronTuning> neurons;
  DecoderSet decoders;

  /// Rate-based reconstruction at represented value x (value units).
  double static_decode(double x) const;
};

/// Ridge regression of the identity over n_points evenly spaced values in
/// [-radius, radius] with lambda = (0.1 * mean max rate)^2 * n_points.
DecoderSet solve_decoders(const EnsembleSpec& spec, const std::vector<NeuronTuning>& neurons, int n_points = 1000);

Ensemble make_ensemble(const EnsembleSpec& spec);

/// First-order lowpass discretized exactly for a held input.
struct Lowpass {
  double tau = 0.005;
  double y = 0.0;

  double step(double x, double dt);
};

/// Functional form of Lowpass::step.
double lowpass_filter(double x, double& state, double tau, double dt);

class EnsembleRuntime {
 public:
  explicit EnsembleRuntime(const Ensemble& ensemble);

  struct Output {
    double decoded = 0.0;  // filtered, value units
    int spikes = 0;        // neurons that fired this step
  };

  /// Advances every neuron by dt with input in value units.
  Output step(double input, double dt);

  /// Indices of the neurons that fired in the last step.
  const std::vector<int>& fired() const { return fired_; }
  int size() const { return static_cast<int>(voltage_.size()); }
  void reset();

 private:
  const Ensemble* ens_;
  std::vector<double> drive_gain_, bias_, decoder_;
  std::vector<double> voltage_, refractory_, current_;
  std::vector<std::uint8_t> over_;
  std::vector<int> fired_;
  Lowpass filter_;
};

}  // namespace spikectl
