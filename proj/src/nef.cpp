#include "spikectl/nef.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <Eigen/Dense>

#include "spikectl/rng.hpp"
#include "spikectl/simd/lif_kernel.hpp"

namespace spikectl {

const char* to_string(InterceptKind kind) {
  switch (kind) {
    case InterceptKind::Uniform: return "uniform";
    case InterceptKind::Linspace: return "linspace";
    case InterceptKind::Normal: return "normal";
  }
  return "uniform";
}

InterceptKind intercept_kind_from_string(const std::string& name) {
  if (name == "uniform") return InterceptKind::Uniform;
  if (name == "linspace") return InterceptKind::Linspace;
  if (name == "normal") return InterceptKind::Normal;
  throw std::invalid_argument("unknown intercept distribution '" + name + "' (expected uniform, linspace or normal)");
}

void EnsembleSpec::validate() const {
  if (n_neurons < 1) throw std::invalid_argument("ensemble.n_neurons must be >= 1");
  if (!(radius > 0.0)) throw std::invalid_argument("ensemble.radius must be > 0");
  if (!(tau_rc > 0.0)) throw std::invalid_argument("ensemble.tau_rc must be > 0");
  if (!(tau_ref >= 0.0)) throw std::invalid_argument("ensemble.tau_ref must be >= 0");
  if (!(synapse_tau > 0.0)) throw std::invalid_argument("ensemble.synapse_tau must be > 0");
  if (!(max_rate_lo > 0.0) || !(max_rate_hi >= max_rate_lo))
    throw std::invalid_argument("ensemble.max_rates must satisfy 0 < lo <= hi");
  if (tau_ref > 0.0 && !(max_rate_hi < 1.0 / tau_ref))
    throw std::invalid_argument("ensemble.max_rates must stay below 1/tau_ref");
  switch (intercepts.kind) {
    case InterceptKind::Uniform:
    case InterceptKind::Linspace:
      if (!(intercepts.lo >= -1.0 && intercepts.hi <= 1.0 && intercepts.lo <= intercepts.hi))
        throw std::invalid_argument("ensemble.intercepts bounds must satisfy -1 <= lo <= hi <= 1");
      break;
    case InterceptKind::Normal:
      if (!(intercepts.sigma > 0.0)) throw std::invalid_argument("ensemble.intercepts.sigma must be > 0");
      break;
  }
}

double lif_rate(double j, double tau_rc, double tau_ref) {
  if (!(j > 1.0)) return 0.0;
  return 1.0 / (tau_ref + tau_rc * std::log1p(1.0 / (j - 1.0)));
}

double rate_curve(const NeuronTuning& t, double tau_rc, double tau_ref, double x) {
  return lif_rate(t.gain * t.encoder * x + t.bias, tau_rc, tau_ref);
}

std::vector<NeuronTuning> build_ensemble(const EnsembleSpec& spec) {
  spec.validate();
  const int n = spec.n_neurons;
  Rng rng(spec.seed);
  std::vector<NeuronTuning> out(n);

  for (int i = 0; i < n; ++i) {
    double c = 0.0;
    switch (spec.intercepts.kind) {
      case InterceptKind::Uniform: c = rng.uniform(spec.intercepts.lo, spec.intercepts.hi); break;
      case InterceptKind::Linspace:
        c = n == 1 ? 0.5 * (spec.intercepts.lo + spec.intercepts.hi)
                   : spec.intercepts.lo + (spec.intercepts.hi - spec.intercepts.lo) * i / (n - 1);
        break;
      case InterceptKind::Normal: c = rng.normal(0.0, spec.intercepts.sigma); break;
    }
    out[i].intercept = std::clamp(c, -kMaxIntercept, kMaxIntercept);
    out[i].encoder = i % 2 == 0 ? 1 : -1;
  }
  for (int i = 0; i < n; ++i) out[i].max_rate = rng.uniform(spec.max_rate_lo, spec.max_rate_hi);

  for (auto& t : out) {
    // Current that yields max_rate at the radius edge; threshold current is 1.
    const double j_max = 1.0 / -std::expm1((spec.tau_ref - 1.0 / t.max_rate) / spec.tau_rc);
    t.gain = (j_max - 1.0) / (1.0 - t.intercept);
    t.bias = 1.0 - t.gain * t.intercept;
  }
  return out;
}

DecoderSet solve_decoders(const EnsembleSpec& spec, const std::vector<NeuronTuning>& neurons, int n_points) {
  if (n_points < 2) throw std::invalid_argument("solve_decoders: need at least 2 evaluation points");
  const int n = static_cast<int>(neurons.size());
  Eigen::MatrixXd A(n_points, n);
  Eigen::VectorXd x(n_points);
  double mean_rate = 0.0;
  for (const auto& t : neurons) mean_rate += t.max_rate;
  mean_rate /= std::max(1, n);
  for (int p = 0; p < n_points; ++p) {
    x[p] = -1.0 + 2.0 * p / (n_points - 1);
    for (int i = 0; i < n; ++i) A(p, i) = rate_curve(neurons[i], spec.tau_rc, spec.tau_ref, x[p]);
  }
  const double sigma = 0.1 * mean_rate;
  const double lambda = sigma * sigma * n_points;

  Eigen::VectorXd d;
  if (n <= n_points) {
    Eigen::MatrixXd G = A.transpose() * A;
    G.diagonal().array() += lambda;
    d = G.llt().solve(A.transpose() * x);
  } else {
    Eigen::MatrixXd G = A * A.transpose();
    G.diagonal().array() += lambda;
    d = A.transpose() * G.llt().solve(x);
  }
  DecoderSet out;
  out.d.assign(d.data(), d.data() + d.size());
  const Eigen::VectorXd err = A * d - x;
  out.rmse = spec.radius * std::sqrt(err.squaredNorm() / n_points);
  return out;
}

Ensemble make_ensemble(const EnsembleSpec& spec) {
  Ensemble e;
  e.spec = spec;
  e.neurons = build_ensemble(spec);
  e.decoders = solve_decoders(spec, e.neurons);
  return e;
}

double Ensemble::static_decode(double x) const {
  const double xn = x / spec.radius;
  double acc = 0.0;
  for (std::size_t i = 0; i < neurons.size(); ++i)
    acc += decoders.d[i] * rate_curve(neurons[i], spec.tau_rc, spec.tau_ref, xn);
  return spec.radius * acc;
}

double Lowpass::step(double x, double dt) {
  const double alpha = -std::expm1(-dt / tau);
  y += alpha * (x - y);
  return y;
}

double lowpass_filter(double x, double& state, double tau, double dt) {
  if (!(tau > 0.0)) throw std::invalid_argument("lowpass_filter: tau must be > 0");
  Lowpass f{tau, state};
  state = f.step(x, dt);
  return state;
}

EnsembleRuntime::EnsembleRuntime(const Ensemble& ensemble) : ens_(&ensemble) {
  const auto n = ensemble.neurons.size();
  drive_gain_.resize(n);
  bias_.resize(n);
  decoder_ = ensemble.decoders.d;
  for (std::size_t i = 0; i < n; ++i) {
    drive_gain_[i] = ensemble.neurons[i].gain * ensemble.neurons[i].encoder;
    bias_[i] = ensemble.neurons[i].bias;
  }
  voltage_.assign(n, 0.0);
  refractory_.assign(n, 0.0);
  current_.assign(n, 0.0);
  over_.assign(n, 0);
  filter_.tau = ensemble.spec.synapse_tau;
}

void EnsembleRuntime::reset() {
  std::fill(voltage_.begin(), voltage_.end(), 0.0);
  std::fill(refractory_.begin(), refractory_.end(), 0.0);
  fired_.clear();
  filter_.y = 0.0;
}

EnsembleRuntime::Output EnsembleRuntime::step(double input, double dt) {
  const auto& spec = ens_->spec;
  if (!(dt > 0.0) || dt > 0.5 * spec.tau_rc)
    throw std::invalid_argument("ensemble step: dt must lie in (0, tau_rc/2]");

  simd::LifArrays a;
  a.drive_gain = drive_gain_.data();
  a.bias = bias_.data();
  a.voltage = voltage_.data();
  a.refractory = refractory_.data();
  a.current = current_.data();
  a.over = over_.data();
  a.n = voltage_.size();
  simd::lif_update(a, {input / spec.radius, dt, 1.0 / spec.tau_rc});

  fired_.clear();
  double decoded = 0.0;
  for (std::size_t i = 0; i < a.n; ++i) {
    if (!over_[i]) continue;
    // Place the threshold crossing inside the step and start the refractory
    // period from there.
    const double j = current_[i];
    const double t_spike = dt + spec.tau_rc * std::log1p(-(voltage_[i] - 1.0) / (j - 1.0));
    voltage_[i] = 0.0;
    refractory_[i] = spec.tau_ref + t_spike;
    fired_.push_back(static_cast<int>(i));
    decoded += decoder_[i];
  }
  Output out;
  out.spikes = static_cast<int>(fired_.size());
  out.decoded = spec.radius * filter_.step(decoded / dt, dt);
  return out;
}

}  // namespace spikectl
