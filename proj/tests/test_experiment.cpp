#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

#include "spikectl/experiment.hpp"
#include "spikectl/plot.hpp"

namespace fs = std::filesystem;
using namespace spikectl;
using nlohmann::json;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("spikectl_test_" + std::to_string(::getpid()) + "_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

json minimal() {
  return json::parse(R"({
    "schema": "spikectl/1",
    "name": "mini",
    "plant": {"n_links": 1, "cart_mass": 5, "link_masses": [1], "link_lengths": [2]},
    "controller": {"kind": "lqr",
      "weights": {"cart_position": 200, "angles": [10000], "cart_velocity": 10, "angular_velocities": [1000], "r": 20}},
    "duration": 2,
    "seeds": [0]
  })");
}

std::string config_error(const json& doc) {
  try {
    parse_config(doc);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

int run_cli(const std::string& args) {
  const int status = std::system((std::string(SPIKECTL_CLI) + " " + args + " >/dev/null 2>&1").c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST_CASE("config errors name the offending field") {
  CHECK(config_error(json::object()).find("schema") != std::string::npos);

  json d = minimal();
  d["plant"]["link_masses"] = {-1.0};
  const std::string neg = config_error(d);
  CHECK(neg.find("link_masses") != std::string::npos);
  CHECK(neg.find("-1") != std::string::npos);

  d = minimal();
  d["controller"]["gain"] = 3;
  CHECK(config_error(d).find("controller.gain") != std::string::npos);

  d = minimal();
  d["schema"] = "spikectl/0";
  CHECK_FALSE(config_error(d).empty());

  d = minimal();
  d["duration"] = "long";
  CHECK(config_error(d).find("duration") != std::string::npos);

  d = minimal();
  d["initial_angles"] = {2.0};
  CHECK_FALSE(config_error(d).empty());

  CHECK_THROWS_AS(parse_config_text("{not json"), ConfigError);
  CHECK_THROWS_AS(load_config("/nonexistent/config.json"), ConfigError);
}

TEST_CASE("every shipped profile parses and round-trips") {
  int count = 0;
  for (const auto& e : fs::directory_iterator(SPIKECTL_PROFILE_DIR)) {
    CAPTURE(e.path().string());
    const ExperimentConfig cfg = load_config(e.path());
    CHECK(cfg.name == e.path().stem().string());
    const json once = resolved_config(cfg);
    const json twice = resolved_config(parse_config(once));
    CHECK(once == twice);
    ++count;
  }
  CHECK(count >= 10);
}

TEST_CASE("value and seed lists") {
  CHECK(parse_value_list("2,4,8") == std::vector<std::string>{"2", "4", "8"});
  CHECK(parse_value_list("0:0.5:1.5") == std::vector<std::string>{"0", "0.5", "1", "1.5"});
  CHECK(parse_value_list("200:400") == std::vector<std::string>{"200:400"});
  CHECK(parse_seed_list("0:1:3") == std::vector<std::uint64_t>{0, 1, 2, 3});
  CHECK(parse_seed_list("5,7") == std::vector<std::uint64_t>{5, 7});
  CHECK_THROWS(parse_seed_list("-1"));
}

TEST_CASE("axis application") {
  json d = minimal();
  d["controller"]["kind"] = "spiking-lqr-ensemble";
  const ExperimentConfig base = parse_config(d);
  CHECK(apply_axis(base, SweepAxis::Neurons, "64").controller.ensemble.n_neurons == 64);
  const ExperimentConfig ic = apply_axis(base, SweepAxis::Intercepts, "0.25");
  CHECK(ic.controller.ensemble.intercepts.kind == InterceptKind::Linspace);
  CHECK(ic.controller.ensemble.intercepts.lo == -0.25);
  CHECK(ic.controller.ensemble.intercepts.hi == 0.25);
  const ExperimentConfig mr = apply_axis(base, SweepAxis::MaxRates, "100:300");
  CHECK(mr.controller.ensemble.max_rate_lo == 100.0);
  CHECK(mr.controller.ensemble.max_rate_hi == 300.0);
  CHECK_THROWS(apply_axis(base, SweepAxis::Ki, "0.3"));
  d["controller"] = {{"kind", "spiking-pid"}};
  CHECK(apply_axis(parse_config(d), SweepAxis::Ki, "0.3").controller.pid.ki == 0.3);
  CHECK_THROWS(apply_axis(base, SweepAxis::Neurons, "many"));
  CHECK_THROWS(sweep_axis_from_string("tau"));
}

TEST_CASE("summary statistics skip non-finite samples") {
  const Stat s = summarize({1.0, 2.0, 3.0, NAN});
  CHECK(s.count == 3);
  CHECK(s.mean == doctest::Approx(2.0));
  CHECK(s.stddev == doctest::Approx(1.0));
  CHECK(summarize({}).count == 0);
}

TEST_CASE("runs are reproducible byte for byte") {
  json d = minimal();
  d["controller"]["kind"] = "spiking-lqr-ensemble";
  d["controller"]["ensemble"] = {{"n_neurons", 32}};
  d["seeds"] = {0, 1};
  const ExperimentConfig cfg = parse_config(d);
  const fs::path a = scratch("repro_a"), b = scratch("repro_b");
  run_experiment(cfg, a, 2);
  run_experiment(cfg, b, 1);
  for (const char* f : {"seed_0/trace.csv", "seed_0/raster.csv", "seed_1/trace.csv", "seed_0/metrics.json",
                        "metrics.json", "config.resolved.json"}) {
    CAPTURE(f);
    REQUIRE(fs::exists(a / f));
    CHECK(slurp(a / f) == slurp(b / f));
  }
  CHECK(fs::exists(a / "runtime.json"));
  CHECK_FALSE(fs::exists(a / "failure.json"));
  // The resolved config reproduces the run.
  CHECK(resolved_config(load_config(a / "config.resolved.json")) == resolved_config(cfg));
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST_CASE("a one-value sweep equals the corresponding run") {
  json d = minimal();
  d["controller"]["kind"] = "spiking-lqr-ensemble";
  d["controller"]["ensemble"] = {{"n_neurons", 16}};
  const ExperimentConfig cfg = parse_config(d);
  const fs::path dir = scratch("sweep");
  const SweepResult s = sweep(cfg, SweepAxis::Neurons, {"24"}, 1, dir);
  const SeedResult r = run_seed(apply_axis(cfg, SweepAxis::Neurons, "24"), 0);
  REQUIRE(s.rows.size() == 1);
  CHECK(s.rows[0].seeds[0].links[0].isc == r.links[0].isc);
  CHECK(s.rows[0].seeds[0].neuro.spikes_per_neuron == r.neuro.spikes_per_neuron);
  CHECK(s.rows[0].n_neurons == 24);
  CHECK(fs::exists(dir / "sweep.csv"));
  CHECK(fs::exists(dir / "cells"));
  const CsvTable t = read_csv(dir / "sweep.csv");
  CHECK(t.rows.size() == 1);
  CHECK(t.column("isc_mean") >= 0);
  fs::remove_all(dir);
}

TEST_CASE("a diverging run writes failure.json and the CLI exits 2") {
  const fs::path dir = scratch("fail");
  const std::string fixture = std::string(SPIKECTL_FIXTURE_DIR) + "/fourlink_two_neuron_ensemble.json";
  CHECK(run_cli("run --config " + fixture + " --out " + dir.string()) == 2);
  REQUIRE(fs::exists(dir / "failure.json"));
  const json f = json::parse(slurp(dir / "failure.json"));
  CHECK(f.dump().find("pole fell") != std::string::npos);
  CHECK(fs::exists(dir / "seed_0/trace.csv"));
  fs::remove_all(dir);
}

TEST_CASE("CLI usage errors exit 1") {
  CHECK(run_cli("run --config /nonexistent.json") == 1);
  CHECK(run_cli("frobnicate") != 0);
  const fs::path dir = scratch("cli_bad");
  std::ofstream(dir / "empty.json").close();
  CHECK(run_cli("run --config " + (dir / "empty.json").string()) == 1);
  fs::remove_all(dir);
}

TEST_CASE("plots: three figures per run, empty rasters allowed") {
  json d = minimal();
  const ExperimentConfig cfg = parse_config(d);
  const fs::path dir = scratch("plot");
  run_experiment(cfg, dir, 1);
  // Conventional LQR leaves the raster empty.
  CHECK(read_csv(dir / "seed_0/raster.csv").rows.empty());
  const auto figs = render_run_plots(dir / "seed_0", dir / "fig");
  CHECK(figs.size() == 3);
  for (const auto& f : figs) {
    CHECK(fs::file_size(f) > 0);
    CHECK(slurp(f).find("<svg") != std::string::npos);
  }
  fs::remove(dir / "seed_0/raster.csv");
  CHECK_THROWS_AS(render_run_plots(dir / "seed_0", dir / "fig2"), PlotError);
  fs::remove_all(dir);
}

TEST_CASE("number formatting") {
  CHECK(format_number(0.1) == "0.1");
  CHECK(format_number(1.0 / 3.0) == "0.333333333");
  CHECK(format_number(2184) == "2184");
}
