#pragma once

// Physical-units leaky integrate-and-fire neuron and the rate-coded
// weighted-sum controller built from it.

#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "spikectl/dynamics.hpp"
#include "spikectl/lqr.hpp"

namespace spikectl {

struct LifParams {
  double c_mem = 1.0;       // F
  double g_leak = 0.01;     // S, tau_mem = c_mem / g_leak
  double v_leak = 0.0;      // V, rest and reset level
  double v_th = 1.0;        // V
  double tau_syn = 1e-3;    // s, 0 collapses the synapse into a summing junction
  double refractory = 0.0;  // s
  double i_mag = 1.0;       // A*s deposited per unit-weight input spike

  void validate() const;
  double tau_mem() const {
    return g_leak > 0.0 ? c_mem / g_leak : std::numeric_limits<double>::infinity();
  }
  /// K = I_mag / (V_th C_mem): output Hz per unit of weighted input Hz.
  double gain() const { return i_mag / (v_th * c_mem); }

  /// Board emulation defaults: tau_mem = 100 s, unit gain.
  static LifParams lui();
};

struct LifState {
  double v_mem = 0.0;
  double i_syn = 0.0;
  double time_since_spike = std::numeric_limits<double>::infinity();
};

LifState rest_state(const LifParams& params);

struct LifStep {
  LifState state;
  bool spiked = false;
};

/// Forward-Euler step of C dV/dt = -g_leak (V - V_leak) + I_syn + input_current.
/// Crossing V_th emits a spike and resets to V_leak.
LifStep lif_step(const LifParams& params, const LifState& state, double input_current, double dt);

/// Delivers one presynaptic spike of the given weight (charge weight * I_mag).
void deposit_spike(const LifParams& params, LifState& state, double weight);

struct SpikeTrain {
  int neuron_id = 0;
  std::vector<double> times;  // s, strictly increasing

  std::size_t count() const { return times.size(); }
};

/// Regular train at value * scale Hz; spikes at k / f (k = 1, 2, ...) snapped
/// to the dt grid, up to and including the horizon.
SpikeTrain rate_encode(double value, double scale, double horizon, double dt, int neuron_id = 0);

/// Spikes in (start, start + window] divided by window.
double count_decode(const SpikeTrain& train, double window, double start = 0.0);

/// Drives one neuron with weighted input trains for `horizon` seconds.
/// Board-emulation mode limits the neuron to three synapses.
SpikeTrain weighted_sum_neuron(const LifParams& params, std::span<const SpikeTrain> inputs,
                               std::span<const double> weights, double horizon, double dt,
                               bool lui_mode = false, int neuron_id = 0);

struct TwoNeuronOptions {
  double encode_scale = 1e4;  // Hz per state unit
  double window = 0.5;        // s of neuron time per decision
  double dt = 1e-5;           // neuron integration step
  bool use_cart_position = true;  // 4 dendrites; false drops x (3 dendrites)
  bool single_neuron = false;     // board emulation: one neuron, sign resolved off-chip
};

struct TwoNeuronOutput {
  double u = 0.0;
  double f_pos = 0.0;  // Hz
  double f_neg = 0.0;  // Hz
  SpikeTrain pos;      // output spikes, neuron time base
  SpikeTrain neg;
};

/// Rate-coded weighted sum u = -K.X on a positive- and a negative-pathway neuron.
/// Each state magnitude is encoded as a spike train; the synapse sign carries
/// the sign of K_i x_i, so each neuron integrates the net command of its pathway.
TwoNeuronOutput two_neuron_control(const LifParams& params, const Vec& state, const GainVector& gain,
                                   const TwoNeuronOptions& options = {});

}  // namespace spikectl
