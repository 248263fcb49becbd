#include "spikectl/lif.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace spikectl {

void LifParams::validate() const {
  if (!(c_mem > 0.0)) throw std::invalid_argument("lif.c_mem must be > 0");
  if (!(g_leak >= 0.0)) throw std::invalid_argument("lif.g_leak must be >= 0");
  if (!(v_th > v_leak)) throw std::invalid_argument("lif.v_th must exceed lif.v_leak");
  if (!(tau_syn >= 0.0)) throw std::invalid_argument("lif.tau_syn must be >= 0");
  if (!(refractory >= 0.0)) throw std::invalid_argument("lif.refractory must be >= 0");
  if (!(i_mag > 0.0)) throw std::invalid_argument("lif.i_mag must be > 0");
}

LifParams LifParams::lui() {
  LifParams p;
  p.c_mem = 1.0;
  p.g_leak = 0.01;
  p.v_leak = 0.0;
  p.v_th = 1.0;
  p.tau_syn = 1e-3;
  p.i_mag = 1.0;
  return p;
}

LifState rest_state(const LifParams& params) {
  LifState s;
  s.v_mem = params.v_leak;
  return s;
}

LifStep lif_step(const LifParams& p, const LifState& s, double input_current, double dt) {
  if (!(dt > 0.0)) throw std::invalid_argument("lif_step: dt must be > 0");
  LifStep out;
  out.state = s;
  LifState& n = out.state;
  const double current = input_current + s.i_syn;
  if (p.tau_syn > 0.0) n.i_syn = s.i_syn - s.i_syn * (dt / p.tau_syn);

  if (s.time_since_spike < p.refractory) {
    n.v_mem = p.v_leak;
    n.time_since_spike = s.time_since_spike + dt;
    return out;
  }
  n.v_mem = s.v_mem + (dt / p.c_mem) * (-p.g_leak * (s.v_mem - p.v_leak) + current);
  n.time_since_spike = s.time_since_spike + dt;
  if (n.v_mem >= p.v_th) {
    out.spiked = true;
    n.v_mem = p.v_leak;
    n.time_since_spike = 0.0;
  }
  return out;
}

void deposit_spike(const LifParams& p, LifState& s, double weight) {
  const double charge = weight * p.i_mag;
  if (p.tau_syn > 0.0) {
    // Exponential kernel of unit area: the whole charge reaches the membrane.
    s.i_syn += charge / p.tau_syn;
  } else {
    s.v_mem += charge / p.c_mem;
  }
}

SpikeTrain rate_encode(double value, double scale, double horizon, double dt, int neuron_id) {
  if (!(value >= 0.0)) throw std::invalid_argument("rate_encode: value must be >= 0");
  if (!(scale > 0.0)) throw std::invalid_argument("rate_encode: scale must be > 0");
  if (!(dt > 0.0)) throw std::invalid_argument("rate_encode: dt must be > 0");
  SpikeTrain train;
  train.neuron_id = neuron_id;
  const double freq = value * scale;
  if (freq <= 0.0 || !(horizon > 0.0)) return train;

  const long long last_index = std::llround(std::floor(horizon / dt * (1.0 + 1e-12)));
  const double period = 1.0 / freq;
  long long prev = 0;
  for (long long k = 1;; ++k) {
    const double t = static_cast<double>(k) * period;
    if (t > horizon * (1.0 + 1e-12)) break;
    const long long idx = std::llround(t / dt);
    if (idx > last_index) break;
    if (idx <= prev) continue;  // above the grid rate the train saturates
    train.times.push_back(static_cast<double>(idx) * dt);
    prev = idx;
  }
  return train;
}

double count_decode(const SpikeTrain& train, double window, double start) {
  if (!(window > 0.0)) throw std::invalid_argument("count_decode: window must be > 0");
  const double slack = 1e-9 * window;
  const auto lo = std::upper_bound(train.times.begin(), train.times.end(), start + slack);
  const auto hi = std::upper_bound(train.times.begin(), train.times.end(), start + window + slack);
  return static_cast<double>(hi - lo) / window;
}

namespace {

struct Event {
  long long step;
  double weight;
};

// Integrates one neuron over `steps` steps of dt; input events are deposited at
// the start of their grid step and output spikes are stamped at the step end.
SpikeTrain integrate(const LifParams& p, std::vector<Event>& events, long long steps, double dt, int neuron_id) {
  std::stable_sort(events.begin(), events.end(), [](const Event& a, const Event& b) { return a.step < b.step; });
  SpikeTrain out;
  out.neuron_id = neuron_id;
  LifState s = rest_state(p);
  std::size_t next = 0;
  for (long long k = 0; k < steps; ++k) {
    while (next < events.size() && events[next].step <= k) deposit_spike(p, s, events[next++].weight);
    const LifStep r = lif_step(p, s, 0.0, dt);
    s = r.state;
    if (r.spiked) out.times.push_back(static_cast<double>(k + 1) * dt);
  }
  return out;
}

void append_events(std::vector<Event>& events, const SpikeTrain& train, double weight, double dt) {
  for (double t : train.times) events.push_back({std::llround(t / dt), weight});
}

}  // namespace

SpikeTrain weighted_sum_neuron(const LifParams& params, std::span<const SpikeTrain> inputs,
                               std::span<const double> weights, double horizon, double dt, bool lui_mode,
                               int neuron_id) {
  params.validate();
  if (inputs.size() != weights.size())
    throw std::invalid_argument("weighted_sum_neuron: inputs and weights differ in length");
  if (lui_mode && inputs.size() > 3)
    throw std::invalid_argument("weighted_sum_neuron: the board neuron has at most 3 synapses, got " +
                                std::to_string(inputs.size()));
  if (!(dt > 0.0) || !(horizon > 0.0)) throw std::invalid_argument("weighted_sum_neuron: dt and horizon must be > 0");
  std::vector<Event> events;
  for (std::size_t i = 0; i < inputs.size(); ++i) append_events(events, inputs[i], weights[i], dt);
  const long long steps = std::llround(std::floor(horizon / dt * (1.0 + 1e-12)));
  return integrate(params, events, steps, dt, neuron_id);
}

TwoNeuronOutput two_neuron_control(const LifParams& params, const Vec& state, const GainVector& gain,
                                   const TwoNeuronOptions& opt) {
  params.validate();
  if (state.size() != gain.size())
    throw std::invalid_argument("two_neuron_control: state and gain dimensions differ");
  if (!(opt.window > 0.0)) throw std::invalid_argument("two_neuron_control: window must be > 0");
  if (!(opt.encode_scale > 0.0)) throw std::invalid_argument("two_neuron_control: encode_scale must be > 0");

  // Dendrites: every state component, optionally without the cart position.
  std::vector<int> channels;
  for (int i = 0; i < state.size(); ++i)
    if (opt.use_cart_position || i != 0) channels.push_back(i);
  if (opt.single_neuron && channels.size() > 3)
    throw std::invalid_argument("two_neuron_control: single-neuron mode needs at most 3 inputs; drop the cart position");

  double kappa = 0.0;
  for (int i : channels) kappa = std::max(kappa, std::abs(gain.K[i]));
  TwoNeuronOutput out;
  out.pos.neuron_id = 0;
  out.neg.neuron_id = 1;
  if (kappa == 0.0) return out;

  std::vector<SpikeTrain> trains;
  std::vector<double> weights;  // positive-pathway synapse weights
  double command = 0.0;
  for (int i : channels) {
    const double contribution = gain.K[i] * state[i];
    command += contribution;
    if (contribution == 0.0) continue;
    trains.push_back(rate_encode(std::abs(state[i]), opt.encode_scale, opt.window, opt.dt));
    weights.push_back(std::copysign(std::abs(gain.K[i]) / kappa, contribution));
  }

  const long long steps = std::llround(std::floor(opt.window / opt.dt * (1.0 + 1e-12)));
  auto run_neuron = [&](double sign, int id) {
    std::vector<Event> events;
    for (std::size_t j = 0; j < trains.size(); ++j) append_events(events, trains[j], sign * weights[j], opt.dt);
    return integrate(params, events, steps, opt.dt, id);
  };

  const double to_force = kappa / (opt.encode_scale * params.gain());
  if (opt.single_neuron) {
    // The sign of K.X is resolved off-chip; one neuron carries the magnitude.
    const double sign = command >= 0.0 ? 1.0 : -1.0;
    SpikeTrain t = run_neuron(sign, sign > 0 ? 0 : 1);
    const double f = count_decode(t, opt.window);
    if (sign > 0) {
      out.f_pos = f;
      out.pos = std::move(t);
    } else {
      out.f_neg = f;
      out.neg = std::move(t);
    }
  } else {
    out.pos = run_neuron(1.0, 0);
    out.neg = run_neuron(-1.0, 1);
    out.f_pos = count_decode(out.pos, opt.window);
    out.f_neg = count_decode(out.neg, opt.window);
  }
  out.u = -(out.f_pos - out.f_neg) * to_force;
  return out;
}

}  // namespace spikectl
