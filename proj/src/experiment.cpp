#include "spikectl/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <limits>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

namespace spikectl {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// Strict view of one JSON object: every key must be consumed before finish().
class Reader {
 public:
  Reader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(where() + ": expected an object");
  }

  bool has(const std::string& key) const { return j_.contains(key); }

  const json& raw(const std::string& key) {
    if (!j_.contains(key)) throw ConfigError("missing required field '" + field(key) + "'");
    used_.insert(key);
    return j_.at(key);
  }

  double number(const std::string& key) {
    const json& v = raw(key);
    if (!v.is_number()) throw ConfigError(field(key) + ": expected a number");
    return v.get<double>();
  }
  double number(const std::string& key, double fallback) { return has(key) ? number(key) : fallback; }

  long long integer(const std::string& key) {
    const json& v = raw(key);
    if (!v.is_number_integer()) throw ConfigError(field(key) + ": expected an integer");
    return v.get<long long>();
  }
  long long integer(const std::string& key, long long fallback) { return has(key) ? integer(key) : fallback; }

  bool boolean(const std::string& key, bool fallback) {
    if (!has(key)) return fallback;
    const json& v = raw(key);
    if (!v.is_boolean()) throw ConfigError(field(key) + ": expected true or false");
    return v.get<bool>();
  }

  std::string string(const std::string& key) {
    const json& v = raw(key);
    if (!v.is_string()) throw ConfigError(field(key) + ": expected a string");
    return v.get<std::string>();
  }
  std::string string(const std::string& key, const std::string& fallback) {
    return has(key) ? string(key) : fallback;
  }

  std::vector<double> numbers(const std::string& key) {
    const json& v = raw(key);
    if (!v.is_array()) throw ConfigError(field(key) + ": expected an array of numbers");
    std::vector<double> out;
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (!v[i].is_number()) throw ConfigError(field(key) + "[" + std::to_string(i) + "]: expected a number");
      out.push_back(v[i].get<double>());
    }
    return out;
  }

  Reader child(const std::string& key) { return Reader(raw(key), field(key)); }

  std::string field(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }
  std::string where() const { return path_.empty() ? "config" : path_; }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!used_.count(it.key())) throw ConfigError("unknown field '" + field(it.key()) + "'");
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> used_;
};

[[noreturn]] void range_error(const std::string& field, double value, const std::string& rule) {
  throw ConfigError(field + " = " + format_number(value) + ": " + rule);
}

void require(bool ok, const std::string& field, double value, const std::string& rule) {
  if (!ok) range_error(field, value, rule);
}

// Scalar or per-link array.
std::vector<double> per_link(Reader& r, const std::string& key, int n) {
  const json& v = r.raw(key);
  if (v.is_number()) return std::vector<double>(n, v.get<double>());
  std::vector<double> out = r.numbers(key);
  if (static_cast<int>(out.size()) != n)
    throw ConfigError(r.field(key) + ": expected " + std::to_string(n) + " entries, got " +
                      std::to_string(out.size()));
  return out;
}

SystemParams parse_plant(Reader r) {
  SystemParams p;
  const long long n = r.integer("n_links");
  require(n >= 1 && n <= 16, r.field("n_links"), static_cast<double>(n), "must lie in [1, 16]");
  p.n_links = static_cast<int>(n);
  p.cart_mass = r.number("cart_mass", p.cart_mass);
  require(p.cart_mass > 0.0, r.field("cart_mass"), p.cart_mass, "must be > 0");
  p.link_masses = r.has("link_masses") ? per_link(r, "link_masses", p.n_links) : std::vector<double>(p.n_links, 1.0 / p.n_links);
  p.link_lengths =
      r.has("link_lengths") ? per_link(r, "link_lengths", p.n_links) : std::vector<double>(p.n_links, 2.0 / p.n_links);
  for (int i = 0; i < p.n_links; ++i) {
    require(p.link_masses[i] > 0.0, r.field("link_masses") + "[" + std::to_string(i) + "]", p.link_masses[i],
            "must be > 0");
    require(p.link_lengths[i] > 0.0, r.field("link_lengths") + "[" + std::to_string(i) + "]", p.link_lengths[i],
            "must be > 0");
  }
  p.gravity = r.number("gravity", p.gravity);
  require(std::isfinite(p.gravity), r.field("gravity"), p.gravity, "must be finite");
  r.finish();
  return p;
}

LqrWeights parse_weights(Reader r, int n) {
  const double qx = r.number("cart_position");
  const double qv = r.number("cart_velocity");
  const std::vector<double> qa = per_link(r, "angles", n);
  const std::vector<double> qw = per_link(r, "angular_velocities", n);
  const double rr = r.number("r");
  require(qx >= 0.0, r.field("cart_position"), qx, "must be >= 0");
  require(qv >= 0.0, r.field("cart_velocity"), qv, "must be >= 0");
  for (int i = 0; i < n; ++i) {
    require(qa[i] >= 0.0, r.field("angles") + "[" + std::to_string(i) + "]", qa[i], "must be >= 0");
    require(qw[i] >= 0.0, r.field("angular_velocities") + "[" + std::to_string(i) + "]", qw[i], "must be >= 0");
  }
  require(rr > 0.0, r.field("r"), rr, "must be > 0");
  r.finish();
  return LqrWeights::diagonal(qx, qa, qv, qw, rr);
}

InterceptSpec parse_intercepts(Reader r) {
  InterceptSpec s;
  const std::string kind = r.string("distribution");
  try {
    s.kind = intercept_kind_from_string(kind);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(r.field("distribution") + ": " + e.what());
  }
  if (s.kind == InterceptKind::Normal) {
    s.lo = s.hi = 0.0;
    s.sigma = r.number("sigma");
    require(s.sigma > 0.0, r.field("sigma"), s.sigma, "must be > 0");
  } else {
    s.sigma = 0.0;
    s.lo = r.number("lo");
    s.hi = r.number("hi");
    require(s.lo >= -1.0 && s.lo <= 1.0, r.field("lo"), s.lo, "must lie in [-1, 1]");
    require(s.hi >= s.lo && s.hi <= 1.0, r.field("hi"), s.hi, "must lie in [lo, 1]");
  }
  r.finish();
  return s;
}

EnsembleSpec parse_ensemble(Reader r) {
  EnsembleSpec e;
  const long long n = r.integer("n_neurons", e.n_neurons);
  require(n >= 1 && n <= 1'000'000, r.field("n_neurons"), static_cast<double>(n), "must lie in [1, 1e6]");
  e.n_neurons = static_cast<int>(n);
  if (r.has("intercepts")) e.intercepts = parse_intercepts(r.child("intercepts"));
  if (r.has("max_rates")) {
    const std::vector<double> mr = r.numbers("max_rates");
    if (mr.size() != 2) throw ConfigError(r.field("max_rates") + ": expected [lo, hi]");
    e.max_rate_lo = mr[0];
    e.max_rate_hi = mr[1];
    require(e.max_rate_lo > 0.0, r.field("max_rates") + "[0]", e.max_rate_lo, "must be > 0");
    require(e.max_rate_hi >= e.max_rate_lo, r.field("max_rates") + "[1]", e.max_rate_hi, "must be >= lo");
  }
  e.tau_rc = r.number("tau_rc", e.tau_rc);
  require(e.tau_rc > 0.0, r.field("tau_rc"), e.tau_rc, "must be > 0");
  e.tau_ref = r.number("tau_ref", e.tau_ref);
  require(e.tau_ref >= 0.0, r.field("tau_ref"), e.tau_ref, "must be >= 0");
  e.synapse_tau = r.number("synapse_tau", e.synapse_tau);
  require(e.synapse_tau > 0.0, r.field("synapse_tau"), e.synapse_tau, "must be > 0");
  r.finish();
  return e;
}

LifParams parse_lif(Reader r) {
  LifParams p = LifParams::lui();
  p.c_mem = r.number("c_mem", p.c_mem);
  require(p.c_mem > 0.0, r.field("c_mem"), p.c_mem, "must be > 0");
  p.g_leak = r.number("g_leak", p.g_leak);
  require(p.g_leak >= 0.0, r.field("g_leak"), p.g_leak, "must be >= 0");
  p.v_leak = r.number("v_leak", p.v_leak);
  p.v_th = r.number("v_th", p.v_th);
  require(p.v_th > p.v_leak, r.field("v_th"), p.v_th, "must exceed v_leak");
  p.tau_syn = r.number("tau_syn", p.tau_syn);
  require(p.tau_syn >= 0.0, r.field("tau_syn"), p.tau_syn, "must be >= 0");
  p.refractory = r.number("refractory", p.refractory);
  require(p.refractory >= 0.0, r.field("refractory"), p.refractory, "must be >= 0");
  p.i_mag = r.number("i_mag", p.i_mag);
  require(p.i_mag > 0.0, r.field("i_mag"), p.i_mag, "must be > 0");
  r.finish();
  return p;
}

TwoNeuronOptions parse_two_neuron(Reader r) {
  TwoNeuronOptions o;
  o.encode_scale = r.number("encode_scale", o.encode_scale);
  require(o.encode_scale > 0.0, r.field("encode_scale"), o.encode_scale, "must be > 0");
  o.window = r.number("window", o.window);
  require(o.window > 0.0, r.field("window"), o.window, "must be > 0");
  o.dt = r.number("dt", o.dt);
  require(o.dt > 0.0 && o.dt <= o.window, r.field("dt"), o.dt, "must lie in (0, window]");
  o.use_cart_position = r.boolean("use_cart_position", o.use_cart_position);
  o.single_neuron = r.boolean("single_neuron", o.single_neuron);
  r.finish();
  return o;
}

PidParams parse_pid(Reader r, int n_links) {
  PidParams p;
  p.kp = r.number("kp", p.kp);
  p.ki = r.number("ki", p.ki);
  p.kd = r.number("kd", p.kd);
  for (auto [k, v] : {std::pair{"kp", p.kp}, {"ki", p.ki}, {"kd", p.kd}})
    require(std::isfinite(v), r.field(k), v, "must be finite");
  const long long link = r.integer("link", 0);
  require(link >= 0 && link < n_links, r.field("link"), static_cast<double>(link), "must index a link");
  p.link = static_cast<int>(link);
  p.reference = r.number("reference", 0.0);
  r.finish();
  return p;
}

SmcParams parse_smc(Reader r, int n_links) {
  SmcParams s;
  s.c = r.number("c", s.c);
  require(s.c > 0.0, r.field("c"), s.c, "must be > 0");
  s.k = r.number("k", s.k);
  require(s.k > 0.0, r.field("k"), s.k, "must be > 0");
  s.phi = r.number("phi", s.phi);
  require(s.phi > 0.0, r.field("phi"), s.phi, "must be > 0");
  const long long link = r.integer("link", 0);
  require(link >= 0 && link < n_links, r.field("link"), static_cast<double>(link), "must index a link");
  s.link = static_cast<int>(link);
  s.reference = r.number("reference", 0.0);
  r.finish();
  return s;
}

bool uses_weights(ControllerKind k) {
  return k == ControllerKind::Lqr || k == ControllerKind::SpikingLqr2 || k == ControllerKind::SpikingLqrEnsemble;
}

bool uses_ensemble(ControllerKind k) {
  return k == ControllerKind::SpikingLqrEnsemble || k == ControllerKind::SpikingPid;
}

ControllerConfig parse_controller(Reader r, const SystemParams& plant, bool& has_weights) {
  ControllerConfig c;
  const std::string kind = r.string("kind");
  try {
    c.kind = controller_kind_from_string(kind);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(r.field("kind") + ": " + e.what());
  }
  c.control_period = r.number("control_period", c.control_period);
  require(c.control_period > 0.0, r.field("control_period"), c.control_period, "must be > 0");
  c.radius_factor = r.number("radius_factor", c.radius_factor);
  require(c.radius_factor > 0.0, r.field("radius_factor"), c.radius_factor, "must be > 0");
  c.radius = r.number("radius", c.radius);
  require(c.radius >= 0.0, r.field("radius"), c.radius, "must be >= 0 (0 calibrates)");
  has_weights = r.has("weights");
  if (has_weights) c.weights = parse_weights(r.child("weights"), plant.n_links);
  else if (uses_weights(c.kind)) r.raw("weights");  // reports the missing field
  if (r.has("pid")) c.pid = parse_pid(r.child("pid"), plant.n_links);
  if (r.has("smc")) c.smc = parse_smc(r.child("smc"), plant.n_links);
  if (r.has("ensemble")) c.ensemble = parse_ensemble(r.child("ensemble"));
  if (r.has("lif")) c.lif = parse_lif(r.child("lif"));
  if (r.has("two_neuron")) c.two_neuron = parse_two_neuron(r.child("two_neuron"));
  r.finish();
  return c;
}

json num(double v) {
  if (!std::isfinite(v)) return nullptr;
  return std::stod(format_number(v));
}

json weights_json(const LqrWeights& w, int n) {
  json a = json::array(), av = json::array();
  for (int i = 0; i < n; ++i) {
    a.push_back(w.Q(1 + i, 1 + i));
    av.push_back(w.Q(n + 2 + i, n + 2 + i));
  }
  return {{"cart_position", w.Q(0, 0)}, {"angles", a}, {"cart_velocity", w.Q(n + 1, n + 1)},
          {"angular_velocities", av}, {"r", w.R}};
}

json intercepts_json(const InterceptSpec& s) {
  if (s.kind == InterceptKind::Normal) return {{"distribution", to_string(s.kind)}, {"sigma", s.sigma}};
  return {{"distribution", to_string(s.kind)}, {"lo", s.lo}, {"hi", s.hi}};
}

// Runs fn(i) for i in [0, n) on up to `workers` threads.
void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t)>& fn) {
  const std::size_t w = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(1, workers)));
  if (w <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < w; ++t)
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) fn(i);
    });
  for (auto& th : pool) th.join();
}

std::string strip_trailing(std::string s) {
  while (!s.empty() && (s.back() == '\n' || s.back() == ' ')) s.pop_back();
  return s;
}

}  // namespace

std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.9g", v == 0.0 ? 0.0 : v);
  return buf;
}

Vec ExperimentConfig::initial_state() const { return displaced_state(plant, initial_angles); }

ExperimentConfig parse_config(const json& doc) {
  Reader r(doc, "");
  const std::string schema = r.string("schema");
  if (schema != kConfigSchema)
    throw ConfigError("schema: unsupported version '" + schema + "' (expected '" + kConfigSchema + "')");
  ExperimentConfig c;
  c.name = r.string("name");
  if (c.name.empty()) throw ConfigError("name: must not be empty");
  c.description = r.string("description", "");
  c.plant = parse_plant(r.child("plant"));
  bool has_weights = false;
  c.controller = parse_controller(r.child("controller"), c.plant, has_weights);

  if (r.has("initial_angles")) {
    c.initial_angles = per_link(r, "initial_angles", c.plant.n_links);
    for (int i = 0; i < c.plant.n_links; ++i)
      require(std::abs(c.initial_angles[i]) < 1.5, "initial_angles[" + std::to_string(i) + "]", c.initial_angles[i],
              "must lie in (-1.5, 1.5) rad");
  } else {
    for (int i = 0; i < c.plant.n_links; ++i) c.initial_angles.push_back(0.2 - 0.02 * i);
  }
  c.duration = r.number("duration", c.duration);
  require(c.duration > 0.0 && c.duration <= 1e4, "duration", c.duration, "must lie in (0, 1e4] s");
  c.dt = r.number("dt", c.dt);
  require(c.dt > 0.0 && c.dt <= c.duration, "dt", c.dt, "must lie in (0, duration]");
  require(c.controller.control_period >= c.dt * (1.0 - 1e-9), "controller.control_period",
          c.controller.control_period, "must be >= dt");
  if (uses_ensemble(c.controller.kind))
    require(c.controller.control_period <= 0.5 * c.controller.ensemble.tau_rc, "controller.control_period",
            c.controller.control_period, "must be <= controller.ensemble.tau_rc / 2");
  if (c.controller.kind == ControllerKind::SpikingLqr2 && c.controller.two_neuron.single_neuron) {
    const int inputs = c.plant.state_size() - (c.controller.two_neuron.use_cart_position ? 0 : 1);
    require(inputs <= 3, "controller.two_neuron.single_neuron", inputs,
            "input count exceeds the 3 synapses of the board neuron");
  }
  if (r.has("seeds")) {
    const json& s = r.raw("seeds");
    if (!s.is_array() || s.empty()) throw ConfigError("seeds: expected a non-empty array of integers");
    c.seeds.clear();
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (!s[i].is_number_unsigned() && !(s[i].is_number_integer() && s[i].get<long long>() >= 0))
        throw ConfigError("seeds[" + std::to_string(i) + "]: expected a non-negative integer");
      c.seeds.push_back(s[i].get<std::uint64_t>());
    }
  }
  c.band = r.number("band", c.band);
  require(c.band > 0.0 && c.band < 1.0, "band", c.band, "must lie in (0, 1)");
  if (r.has("hardware")) {
    Reader h = r.child("hardware");
    HardwareConstants& hw = c.hardware;
    hw.neuron_density = h.number("neuron_density", hw.neuron_density);
    require(hw.neuron_density > 0.0, h.field("neuron_density"), hw.neuron_density, "must be > 0");
    const long long npc = h.integer("neurons_per_core", hw.neurons_per_core);
    require(npc >= 1, h.field("neurons_per_core"), static_cast<double>(npc), "must be >= 1");
    hw.neurons_per_core = static_cast<int>(npc);
    hw.area_per_core = h.number("area_per_core", hw.area_per_core);
    require(hw.area_per_core > 0.0, h.field("area_per_core"), hw.area_per_core, "must be > 0");
    hw.e_synop = h.number("e_synop", hw.e_synop);
    require(hw.e_synop >= 0.0, h.field("e_synop"), hw.e_synop, "must be >= 0");
    hw.e_neuron_update = h.number("e_neuron_update", hw.e_neuron_update);
    require(hw.e_neuron_update >= 0.0, h.field("e_neuron_update"), hw.e_neuron_update, "must be >= 0");
    hw.cpu_tdp = h.number("cpu_tdp", hw.cpu_tdp);
    require(hw.cpu_tdp >= 0.0, h.field("cpu_tdp"), hw.cpu_tdp, "must be >= 0");
    h.finish();
  }
  c.output = r.string("output", "");
  r.finish();

  // Anything the field checks above missed is still reported as a config error.
  try {
    c.plant.validate();
    if (uses_weights(c.controller.kind) || has_weights) c.controller.weights.validate(c.plant.state_size());
    c.controller.validate(c.plant, c.dt);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  if (!has_weights) c.controller.weights = LqrWeights{};
  return c;
}

ExperimentConfig parse_config_text(const std::string& text) {
  if (text.find_first_not_of(" \t\r\n") == std::string::npos) return parse_config(json::object());
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("malformed JSON: ") + e.what());
  }
  return parse_config(doc);
}

ExperimentConfig load_config(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read config file '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str());
}

json resolved_config(const ExperimentConfig& c) {
  const int n = c.plant.n_links;
  json plant = {{"n_links", n},
                {"cart_mass", c.plant.cart_mass},
                {"link_masses", c.plant.link_masses},
                {"link_lengths", c.plant.link_lengths},
                {"gravity", c.plant.gravity}};
  const ControllerConfig& k = c.controller;
  json ctrl = {{"kind", to_string(k.kind)},
               {"control_period", k.control_period},
               {"radius_factor", k.radius_factor},
               {"radius", k.radius},
               {"pid", {{"kp", k.pid.kp}, {"ki", k.pid.ki}, {"kd", k.pid.kd}, {"link", k.pid.link},
                        {"reference", k.pid.reference}}},
               {"smc", {{"c", k.smc.c}, {"k", k.smc.k}, {"phi", k.smc.phi}, {"link", k.smc.link},
                        {"reference", k.smc.reference}}},
               {"ensemble", {{"n_neurons", k.ensemble.n_neurons},
                             {"intercepts", intercepts_json(k.ensemble.intercepts)},
                             {"max_rates", {k.ensemble.max_rate_lo, k.ensemble.max_rate_hi}},
                             {"tau_rc", k.ensemble.tau_rc},
                             {"tau_ref", k.ensemble.tau_ref},
                             {"synapse_tau", k.ensemble.synapse_tau}}},
               {"lif", {{"c_mem", k.lif.c_mem}, {"g_leak", k.lif.g_leak}, {"v_leak", k.lif.v_leak},
                        {"v_th", k.lif.v_th}, {"tau_syn", k.lif.tau_syn}, {"refractory", k.lif.refractory},
                        {"i_mag", k.lif.i_mag}}},
               {"two_neuron", {{"encode_scale", k.two_neuron.encode_scale}, {"window", k.two_neuron.window},
                               {"dt", k.two_neuron.dt}, {"use_cart_position", k.two_neuron.use_cart_position},
                               {"single_neuron", k.two_neuron.single_neuron}}}};
  if (k.weights.Q.rows() == c.plant.state_size()) ctrl["weights"] = weights_json(k.weights, n);
  json hw = {{"neuron_density", c.hardware.neuron_density}, {"neurons_per_core", c.hardware.neurons_per_core},
             {"area_per_core", c.hardware.area_per_core}, {"e_synop", c.hardware.e_synop},
             {"e_neuron_update", c.hardware.e_neuron_update}, {"cpu_tdp", c.hardware.cpu_tdp}};
  json out = {{"schema", kConfigSchema}, {"name", c.name},       {"description", c.description},
              {"plant", plant},          {"controller", ctrl},    {"initial_angles", c.initial_angles},
              {"duration", c.duration},  {"dt", c.dt},            {"seeds", c.seeds},
              {"band", c.band},          {"hardware", hw}};
  if (!c.output.empty()) out["output"] = c.output;
  return out;
}

// -- runs ---------------------------------------------------------------------

SeedResult evaluate(const ExperimentConfig& config, const SimTrace& trace, const RuntimeReport& runtime) {
  SeedResult r;
  r.seed = trace.seed;
  r.failed = trace.failed;
  r.failure_reason = trace.failure_reason;
  r.failure_time = trace.failure_time;
  r.runtime = runtime;
  if (auto it = trace.metadata.find("radius"); it != trace.metadata.end()) r.radius = std::stod(it->second);
  if (trace.size() < 2) {
    r.links.assign(config.plant.n_links, ControlMetrics{});
    r.settling_time_max = kNaN;
    return r;
  }
  r.settling_time_max = 0.0;
  for (int i = 0; i < config.plant.n_links; ++i) {
    r.links.push_back(control_metrics(trace, angle_index(i), config.band));
    const ControlMetrics& m = r.links.back();
    if (m.defined && m.settled) r.settling_time_max = std::max(r.settling_time_max, m.settling_time);
    else r.settling_time_max = kNaN;
  }
  r.cart = control_metrics(trace, 0, config.band);
  r.ripple = control_ripple(trace);
  r.neuro = neuromorphic_metrics(trace, config.hardware);
  return r;
}

SeedResult run_seed(const ExperimentConfig& config, std::uint64_t seed, SimTrace* trace_out) {
  RuntimeProbe probe;
  SimTrace trace;
  try {
    trace = closed_loop_sim(config.plant, config.controller, config.initial_state(), config.duration, config.dt, seed);
  } catch (const std::exception& e) {
    // Controller synthesis failures (e.g. a gain that fails the contraction check) are run failures.
    trace = SimTrace{};
    trace.dt = config.dt;
    trace.seed = seed;
    trace.failed = true;
    trace.failure_reason = e.what();
  }
  SeedResult r = evaluate(config, trace, probe.finish(trace.empty() ? 0.0 : trace.times.back(), config.hardware));
  if (trace_out) *trace_out = std::move(trace);
  return r;
}

bool RunResult::ok() const {
  return !seeds.empty() && std::none_of(seeds.begin(), seeds.end(), [](const SeedResult& s) { return s.failed; });
}

json to_json(const ControlMetrics& m) {
  return {{"defined", m.defined},         {"settled", m.settled},
          {"rise_time", num(m.rise_time)}, {"overshoot", num(m.overshoot)},
          {"settling_time", num(m.settling_time)}, {"steady_state_error", num(m.steady_state_error)},
          {"y_final", num(m.y_final)},     {"iae", num(m.iae)},
          {"itae", num(m.itae)},           {"isc", num(m.isc)}};
}

json to_json(const SeedResult& r) {
  json links = json::array();
  for (const auto& m : r.links) links.push_back(to_json(m));
  json out = {{"seed", r.seed},
              {"failed", r.failed},
              {"links", links},
              {"cart", to_json(r.cart)},
              {"ripple", num(r.ripple)},
              {"settling_time_max", num(r.settling_time_max)},
              {"radius", num(r.radius)},
              {"neuromorphic", {{"spikes_per_neuron", num(r.neuro.spikes_per_neuron)},
                                {"core_utilization", num(r.neuro.core_utilization)},
                                {"n_cores", r.neuro.n_cores},
                                {"area_experimental", num(r.neuro.area_experimental)},
                                {"area_theoretical", num(r.neuro.area_theoretical)},
                                {"synops_per_inference", num(r.neuro.synops_per_inference)},
                                {"energy_loihi_uj", num(r.neuro.energy_loihi)}}}};
  if (r.failed) out["failure"] = {{"reason", r.failure_reason}, {"time", num(r.failure_time)}};
  return out;
}

namespace {

json runtime_json(const RuntimeReport& r) {
  return {{"wall_time", num(r.wall_time)}, {"cpu_time", num(r.cpu_time)},
          {"cpu_utilization", num(r.cpu_utilization)}, {"real_time_factor", num(r.real_time_factor)},
          {"peak_rss_mb", num(r.peak_rss_mb)}, {"energy_cpu_j", num(r.energy_cpu)}};
}

json stats_json(const std::map<std::string, Stat>& stats) {
  json out = json::object();
  for (const auto& [k, s] : stats) out[k] = {{"mean", num(s.mean)}, {"std", num(s.stddev)}, {"count", s.count}};
  return out;
}

}  // namespace

void write_file_atomic(const fs::path& path, const std::string& content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ostringstream tag;
  tag << ".tmp." << std::this_thread::get_id();
  const fs::path tmp = path.string() + tag.str();
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write '" + tmp.string() + "'");
    out << content;
    if (!out) throw std::runtime_error("write failed for '" + tmp.string() + "'");
  }
  fs::rename(tmp, path);
}

void write_trace_csv(const SimTrace& trace, const fs::path& path) {
  const int n = trace.states.empty() ? 0 : static_cast<int>(trace.states.front().size()) / 2 - 1;
  std::string s = "t,x,xdot";
  for (int i = 1; i <= n; ++i) s += ",theta_" + std::to_string(i);
  for (int i = 1; i <= n; ++i) s += ",thetadot_" + std::to_string(i);
  s += ",u\n";
  for (std::size_t k = 0; k < trace.size(); ++k) {
    const Vec& x = trace.states[k];
    s += format_number(trace.times[k]);
    s += ',' + format_number(x[0]);
    s += ',' + format_number(x[n + 1]);
    for (int i = 0; i < n; ++i) s += ',' + format_number(x[1 + i]);
    for (int i = 0; i < n; ++i) s += ',' + format_number(x[n + 2 + i]);
    s += ',' + format_number(trace.controls[k]);
    s += '\n';
  }
  write_file_atomic(path, s);
}

void write_raster_csv(const SimTrace& trace, const fs::path& path) {
  std::string s = "t,neuron_id\n";
  s.reserve(s.size() + trace.raster.size() * 16);
  for (const Spike& sp : trace.raster) {
    s += format_number(sp.t);
    s += ',';
    s += std::to_string(sp.neuron);
    s += '\n';
  }
  write_file_atomic(path, s);
}

RunResult run_experiment(const ExperimentConfig& config, const fs::path& out, int workers) {
  RunResult result;
  result.seeds.resize(config.seeds.size());
  const json resolved = resolved_config(config);
  write_file_atomic(out / "config.resolved.json", resolved.dump(2) + "\n");

  parallel_for(config.seeds.size(), workers, [&](std::size_t i) {
    SimTrace trace;
    result.seeds[i] = run_seed(config, config.seeds[i], &trace);
    const fs::path dir = out / ("seed_" + std::to_string(config.seeds[i]));
    write_trace_csv(trace, dir / "trace.csv");
    write_raster_csv(trace, dir / "raster.csv");
    write_file_atomic(dir / "metrics.json", to_json(result.seeds[i]).dump(2) + "\n");
  });

  json seeds = json::array(), runtime = json::array(), failures = json::array();
  for (const auto& s : result.seeds) {
    seeds.push_back(to_json(s));
    json rt = runtime_json(s.runtime);
    rt["seed"] = s.seed;
    runtime.push_back(rt);
    if (s.failed) failures.push_back({{"seed", s.seed}, {"reason", s.failure_reason}, {"time", num(s.failure_time)}});
  }
  json links = json::array();
  for (int i = 0; i < config.plant.n_links; ++i) links.push_back(stats_json(aggregate(result.seeds, i)));
  const json metrics = {{"name", config.name},
                        {"controller", to_string(config.controller.kind)},
                        {"ok", result.ok()},
                        {"seeds", seeds},
                        {"summary", links}};
  write_file_atomic(out / "metrics.json", metrics.dump(2) + "\n");
  write_file_atomic(out / "runtime.json", json{{"seeds", runtime}}.dump(2) + "\n");
  if (!failures.empty())
    write_file_atomic(out / "failure.json",
                      json{{"name", config.name}, {"status", "control failure"}, {"failures", failures}}.dump(2) + "\n");
  else if (fs::exists(out / "failure.json"))
    fs::remove(out / "failure.json");
  return result;
}

// -- sweeps -------------------------------------------------------------------

const char* to_string(SweepAxis axis) {
  switch (axis) {
    case SweepAxis::Neurons: return "neurons";
    case SweepAxis::Intercepts: return "intercepts";
    case SweepAxis::MaxRates: return "max_rates";
    case SweepAxis::Ki: return "ki";
  }
  return "neurons";
}

SweepAxis sweep_axis_from_string(const std::string& name) {
  for (auto a : {SweepAxis::Neurons, SweepAxis::Intercepts, SweepAxis::MaxRates, SweepAxis::Ki})
    if (name == to_string(a)) return a;
  throw ConfigError("unknown sweep axis '" + name + "' (expected neurons, intercepts, max_rates or ki)");
}

namespace {

double parse_double(const std::string& text, const std::string& what) {
  std::size_t pos = 0;
  double v = 0.0;
  try {
    v = std::stod(text, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos == 0 || pos != text.size()) throw ConfigError(what + ": '" + text + "' is not a number");
  return v;
}

}  // namespace

ExperimentConfig apply_axis(const ExperimentConfig& base, SweepAxis axis, const std::string& value) {
  ExperimentConfig c = base;
  ControllerConfig& k = c.controller;
  const bool ensemble = uses_ensemble(k.kind);
  switch (axis) {
    case SweepAxis::Neurons: {
      if (!ensemble) throw ConfigError("the neurons axis needs an ensemble controller");
      const double v = parse_double(value, "neurons");
      if (!(v >= 1.0) || v != std::floor(v) || v > 1e6) range_error("neurons", v, "must be a positive integer");
      k.ensemble.n_neurons = static_cast<int>(v);
      break;
    }
    case SweepAxis::Intercepts: {
      if (!ensemble) throw ConfigError("the intercepts axis needs an ensemble controller");
      const double v = parse_double(value, "intercepts");
      if (!(v > 0.0 && v <= 1.0)) range_error("intercepts", v, "half-width must lie in (0, 1]");
      k.ensemble.intercepts = InterceptSpec::linspace(-v, v);
      break;
    }
    case SweepAxis::MaxRates: {
      if (!ensemble) throw ConfigError("the max_rates axis needs an ensemble controller");
      const auto sep = value.find_first_of(":-", 1);
      double lo = 0.0, hi = k.ensemble.max_rate_hi;
      if (sep == std::string::npos) {
        lo = parse_double(value, "max_rates");
      } else {
        lo = parse_double(value.substr(0, sep), "max_rates");
        hi = parse_double(value.substr(sep + 1), "max_rates");
      }
      if (!(lo > 0.0)) range_error("max_rates", lo, "lower limit must be > 0");
      if (!(hi >= lo)) range_error("max_rates", hi, "upper limit must be >= lower limit");
      if (!(hi * k.ensemble.tau_ref < 1.0)) range_error("max_rates", hi, "must stay below 1/tau_ref");
      k.ensemble.max_rate_lo = lo;
      k.ensemble.max_rate_hi = hi;
      break;
    }
    case SweepAxis::Ki: {
      if (k.kind != ControllerKind::Pid && k.kind != ControllerKind::SpikingPid)
        throw ConfigError("the ki axis needs a pid or spiking-pid controller");
      const double v = parse_double(value, "ki");
      if (!std::isfinite(v)) range_error("ki", v, "must be finite");
      k.pid.ki = v;
      break;
    }
  }
  return c;
}

Stat summarize(const std::vector<double>& samples) {
  Stat s;
  double sum = 0.0;
  for (double v : samples)
    if (std::isfinite(v)) {
      sum += v;
      ++s.count;
    }
  if (s.count == 0) {
    s.mean = s.stddev = kNaN;
    return s;
  }
  s.mean = sum / s.count;
  if (s.count < 2) return s;
  double ss = 0.0;
  for (double v : samples)
    if (std::isfinite(v)) ss += (v - s.mean) * (v - s.mean);
  s.stddev = std::sqrt(ss / (s.count - 1));
  return s;
}

const std::vector<std::string>& metric_columns() {
  static const std::vector<std::string> cols{"overshoot", "rise_time",  "settling_time",     "steady_state_error",
                                             "iae",       "itae",       "isc",               "ripple",
                                             "settling_time_max", "spikes_per_neuron", "energy_loihi_uj"};
  return cols;
}

std::map<std::string, Stat> aggregate(const std::vector<SeedResult>& seeds, int link) {
  std::map<std::string, std::vector<double>> v;
  for (const SeedResult& s : seeds) {
    if (s.failed || link >= static_cast<int>(s.links.size())) continue;
    const ControlMetrics& m = s.links[link];
    const bool timed = m.defined;
    v["overshoot"].push_back(timed ? m.overshoot : kNaN);
    v["rise_time"].push_back(timed ? m.rise_time : kNaN);
    v["settling_time"].push_back(timed && m.settled ? m.settling_time : kNaN);
    v["steady_state_error"].push_back(m.steady_state_error);
    v["iae"].push_back(m.iae);
    v["itae"].push_back(m.itae);
    v["isc"].push_back(m.isc);
    v["ripple"].push_back(s.ripple);
    v["settling_time_max"].push_back(s.settling_time_max);
    v["spikes_per_neuron"].push_back(s.neuro.spikes_per_neuron);
    v["energy_loihi_uj"].push_back(s.neuro.energy_loihi);
  }
  std::map<std::string, Stat> out;
  for (const auto& c : metric_columns()) out[c] = summarize(v[c]);
  return out;
}

int SweepRow::failed_count() const {
  return static_cast<int>(std::count_if(seeds.begin(), seeds.end(), [](const SeedResult& s) { return s.failed; }));
}

namespace {

int neurons_of(const ExperimentConfig& c) {
  if (uses_ensemble(c.controller.kind)) return c.controller.ensemble.n_neurons;
  if (c.controller.kind == ControllerKind::SpikingLqr2) return c.controller.two_neuron.single_neuron ? 1 : 2;
  return 0;
}

void finish_row(SweepRow& row, const ExperimentConfig& cfg) {
  row.stats = aggregate(row.seeds);
  row.n_neurons = neurons_of(cfg);
  if (row.n_neurons > 0) {
    row.utilization = core_utilization(row.n_neurons, cfg.hardware);
    row.area_theoretical = theoretical_chip_area(row.n_neurons, cfg.hardware);
    row.area_experimental =
        experimental_chip_area(row.utilization.reported_percent, row.utilization.n_cores, cfg.hardware);
  }
  std::string f;
  for (const SeedResult& s : row.seeds)
    if (s.failed) {
      if (!f.empty()) f += ';';
      f += std::to_string(s.seed) + ":" + s.failure_reason;
    }
  row.failures = f;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string q = "\"";
  for (char ch : s) q += ch == '"' ? std::string("\"\"") : std::string(1, ch);
  return q + "\"";
}

std::string rows_csv(const std::vector<SweepRow>& rows, const std::string& key) {
  std::string s = key + ",seeds_ok,seeds_failed";
  for (const auto& c : metric_columns()) s += "," + c + "_mean," + c + "_std";
  s += ",n_neurons,core_utilization,n_cores,area_theoretical,area_experimental,failures\n";
  for (const SweepRow& r : rows) {
    const int failed = r.failed_count();
    s += csv_field(r.value) + "," + std::to_string(static_cast<int>(r.seeds.size()) - failed) + "," +
         std::to_string(failed);
    for (const auto& c : metric_columns()) {
      const Stat& st = r.stats.at(c);
      s += "," + format_number(st.mean) + "," + format_number(st.count >= 2 ? st.stddev : kNaN);
    }
    s += "," + std::to_string(r.n_neurons) + "," + format_number(r.utilization.reported_percent) + "," +
         std::to_string(r.utilization.n_cores) + "," + format_number(r.area_theoretical) + "," +
         format_number(r.area_experimental) + "," + csv_field(r.failures) + "\n";
  }
  return s;
}

std::string runtime_csv(const std::vector<SweepRow>& rows, const std::string& key) {
  std::string s = key + ",seed,wall_time,cpu_time,cpu_utilization,real_time_factor,peak_rss_mb,energy_cpu_j\n";
  for (const SweepRow& r : rows)
    for (const SeedResult& sd : r.seeds)
      s += csv_field(r.value) + "," + std::to_string(sd.seed) + "," + format_number(sd.runtime.wall_time) + "," +
           format_number(sd.runtime.cpu_time) + "," + format_number(sd.runtime.cpu_utilization) + "," +
           format_number(sd.runtime.real_time_factor) + "," + format_number(sd.runtime.peak_rss_mb) + "," +
           format_number(sd.runtime.energy_cpu) + "\n";
  return s;
}

std::string cell_name(const std::string& value) {
  std::string s;
  for (char ch : value) s += std::isalnum(static_cast<unsigned char>(ch)) || ch == '.' || ch == '-' ? ch : '_';
  return s;
}

// Runs every (config, seed) cell and groups results per config.
std::vector<SweepRow> run_cells(const std::vector<ExperimentConfig>& configs, const std::vector<std::string>& labels,
                                int workers, const fs::path& out) {
  struct Cell {
    std::size_t row;
    std::uint64_t seed;
  };
  std::vector<Cell> cells;
  for (std::size_t r = 0; r < configs.size(); ++r)
    for (std::uint64_t s : configs[r].seeds) cells.push_back({r, s});
  std::vector<SeedResult> results(cells.size());
  parallel_for(cells.size(), workers, [&](std::size_t i) {
    results[i] = run_seed(configs[cells[i].row], cells[i].seed);
    if (!out.empty())
      write_file_atomic(out / "cells" / (cell_name(labels[cells[i].row]) + "_seed" + std::to_string(cells[i].seed) +
                                         ".json"),
                        to_json(results[i]).dump(2) + "\n");
  });
  std::vector<SweepRow> rows(configs.size());
  for (std::size_t r = 0; r < configs.size(); ++r) rows[r].value = labels[r];
  for (std::size_t i = 0; i < cells.size(); ++i) rows[cells[i].row].seeds.push_back(std::move(results[i]));
  for (std::size_t r = 0; r < configs.size(); ++r) finish_row(rows[r], configs[r]);
  return rows;
}

}  // namespace

SweepResult sweep(const ExperimentConfig& config, SweepAxis axis, const std::vector<std::string>& values, int workers,
                  const fs::path& out) {
  if (values.empty()) throw ConfigError("sweep: no axis values");
  std::vector<ExperimentConfig> configs;
  for (const auto& v : values) configs.push_back(apply_axis(config, axis, v));
  SweepResult res;
  res.axis = axis;
  res.rows = run_cells(configs, values, workers, out);
  if (!out.empty()) {
    write_file_atomic(out / "config.resolved.json", resolved_config(config).dump(2) + "\n");
    write_sweep_csv(res, out / "sweep.csv");
    write_file_atomic(out / "runtime.csv", runtime_csv(res.rows, to_string(axis)));
  }
  return res;
}

void write_sweep_csv(const SweepResult& result, const fs::path& path) {
  write_file_atomic(path, rows_csv(result.rows, to_string(result.axis)));
}

CompareResult compare(const ExperimentConfig& config, int workers, const fs::path& out) {
  if (config.controller.weights.Q.rows() != config.plant.state_size())
    throw ConfigError("compare: controller.weights is required for the LQR rows");
  const ControllerKind kinds[] = {ControllerKind::Lqr, ControllerKind::SpikingLqrEnsemble, ControllerKind::Pid,
                                  ControllerKind::SpikingPid, ControllerKind::Smc};
  std::vector<ExperimentConfig> configs;
  std::vector<std::string> labels;
  for (ControllerKind k : kinds) {
    ExperimentConfig c = config;
    c.controller.kind = k;
    c.controller.radius = 0.0;
    if (!is_spiking(k)) c.seeds = {config.seeds.front()};  // deterministic, one seed suffices
    try {
      c.controller.validate(c.plant, c.dt);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(std::string("compare (") + to_string(k) + "): " + e.what());
    }
    configs.push_back(c);
    labels.push_back(to_string(k));
  }
  CompareResult res;
  res.rows = run_cells(configs, labels, workers, out);
  if (!out.empty()) {
    write_file_atomic(out / "config.resolved.json", resolved_config(config).dump(2) + "\n");
    write_file_atomic(out / "compare.csv", rows_csv(res.rows, "controller"));
    write_file_atomic(out / "runtime.csv", runtime_csv(res.rows, "controller"));
  }
  return res;
}

// -- value lists ----------------------------------------------------------------

std::vector<std::string> parse_value_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    tok.erase(0, tok.find_first_not_of(" \t"));
    tok = strip_trailing(tok);
    if (tok.empty()) continue;
    if (std::count(tok.begin(), tok.end(), ':') == 2) {
      const auto a = tok.find(':'), b = tok.rfind(':');
      const double lo = parse_double(tok.substr(0, a), "values");
      const double step = parse_double(tok.substr(a + 1, b - a - 1), "values");
      const double hi = parse_double(tok.substr(b + 1), "values");
      if (!(step > 0.0) || !(hi >= lo)) throw ConfigError("values: range '" + tok + "' needs step > 0 and hi >= lo");
      const long count = std::lround(std::floor((hi - lo) / step + 1e-9)) + 1;
      if (count > 100000) throw ConfigError("values: range '" + tok + "' is too long");
      for (long i = 0; i < count; ++i) {
        const double v = lo + static_cast<double>(i) * step;
        out.push_back(format_number(v));
      }
    } else {
      out.push_back(tok);
    }
  }
  if (out.empty()) throw ConfigError("values: empty list");
  return out;
}

std::vector<std::uint64_t> parse_seed_list(const std::string& text) {
  std::vector<std::uint64_t> out;
  for (const auto& tok : parse_value_list(text)) {
    const double v = parse_double(tok, "seeds");
    if (!(v >= 0.0) || v != std::floor(v) || v > 9.007199254740992e15)
      throw ConfigError("seeds: '" + tok + "' is not a non-negative integer");
    out.push_back(static_cast<std::uint64_t>(v));
  }
  return out;
}

}  // namespace spikectl
