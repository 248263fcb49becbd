// Command-line runner for the spiking-control experiments.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <string>
#include <thread>

#include <CLI11.hpp>

#include "spikectl/experiment.hpp"
#include "spikectl/plot.hpp"
#include "spikectl/simd/lif_kernel.hpp"

namespace fs = std::filesystem;
using namespace spikectl;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitControlFailure = 2;

fs::path output_root() {
  const char* env = std::getenv("SPIKECTL_OUT");
  return env && *env ? fs::path(env) : fs::path("out");
}

fs::path resolve_out(const std::string& flag, const ExperimentConfig& cfg, const char* what) {
  if (!flag.empty()) return flag;
  if (!cfg.output.empty()) return cfg.output;
  return output_root() / cfg.name / what;
}

ExperimentConfig load(const std::string& path, const std::string& seeds) {
  ExperimentConfig cfg = load_config(path);
  if (!seeds.empty()) cfg.seeds = parse_seed_list(seeds);
  return cfg;
}

std::string cell(double v) { return format_number(v); }

void print_rows(const std::vector<SweepRow>& rows, const std::string& key) {
  std::printf("%-22s %6s %10s %9s %9s %11s %10s %10s %10s\n", key.c_str(), "fail", "PO(%)", "Tr(s)", "Ts(s)", "SSE",
              "IAE", "ITAE", "ISC");
  for (const auto& r : rows) {
    auto m = [&](const char* c) { return cell(r.stats.at(c).mean); };
    std::printf("%-22s %6d %10s %9s %9s %11s %10s %10s %10s\n", r.value.c_str(), r.failed_count(),
                m("overshoot").c_str(), m("rise_time").c_str(), m("settling_time").c_str(),
                m("steady_state_error").c_str(), m("iae").c_str(), m("itae").c_str(), m("isc").c_str());
  }
}

int workers_default() { return static_cast<int>(std::max(1u, std::thread::hardware_concurrency())); }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Spiking-neuron LQR control of multi-link pendula on a cart"};
  app.require_subcommand(1);

  std::string config, out, seeds, axis, values, artifacts;
  int workers = workers_default();

  auto* gains = app.add_subcommand("gains", "Print the LQR gain for a plant and weights");
  gains->add_option("--config", config, "Experiment config (JSON)")->required();

  auto* run = app.add_subcommand("run", "Run one experiment over its seeds");
  auto* sweep_cmd = app.add_subcommand("sweep", "Sweep one ensemble or PID parameter");
  auto* compare_cmd = app.add_subcommand("compare", "Compare LQR, PID and SMC, spiking and conventional");
  for (auto* c : {run, sweep_cmd, compare_cmd}) {
    c->add_option("--config", config, "Experiment config (JSON)")->required();
    c->add_option("--seeds", seeds, "Seed list, e.g. 0,1,2 or 0:1:4 (overrides the config)");
    c->add_option("--out", out, "Output directory (default $SPIKECTL_OUT/<name>/<command>)");
    c->add_option("--workers", workers, "Concurrent runs")->check(CLI::PositiveNumber);
  }
  sweep_cmd->add_option("--axis", axis, "neurons, intercepts, max_rates or ki")->required();
  sweep_cmd->add_option("--values", values, "Axis values, e.g. 2,4,8 or 0:0.1:1; max_rates takes lo:hi pairs")
      ->required();

  auto* plot = app.add_subcommand("plot", "Render SVG figures from run, sweep or compare artifacts");
  plot->add_option("artifacts", artifacts, "Artifact directory")->required();
  plot->add_option("--out", out, "Figure directory (default: the artifact directory)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gains) {
      const ExperimentConfig cfg = load_config(config);
      if (cfg.controller.weights.Q.rows() != cfg.plant.state_size())
        throw ConfigError("controller.weights: required for gains");
      const LinearModel model = linearize(cfg.plant);
      const CareSolution sol = solve_care(model, cfg.controller.weights);
      const GainVector g = lqr_gain(model, cfg.controller.weights);
      const ContractionReport rep = check_contraction(model, g);
      const int n = cfg.plant.n_links;
      std::printf("plant: %d link(s), cart %s kg\n", n, cell(cfg.plant.cart_mass).c_str());
      std::printf("%-12s %s\n", "state", "K");
      std::printf("%-12s %s\n", "x", cell(g.K[0]).c_str());
      for (int i = 0; i < n; ++i) std::printf("theta_%-6d %s\n", i + 1, cell(g.K[1 + i]).c_str());
      std::printf("%-12s %s\n", "xdot", cell(g.K[n + 1]).c_str());
      for (int i = 0; i < n; ++i) std::printf("thetadot_%-3d %s\n", i + 1, cell(g.K[n + 2 + i]).c_str());
      std::printf("residual %s (tolerance %s)\n", cell(sol.residual).c_str(),
                  cell(1e-8 * cfg.controller.weights.Q.norm()).c_str());
      std::printf("contraction %s (worst final norm %s)\n", rep.contracts ? "passes" : "FAILS",
                  cell(rep.worst_final_norm).c_str());
      return rep.contracts ? kExitOk : kExitControlFailure;
    }

    if (*run) {
      const ExperimentConfig cfg = load(config, seeds);
      const fs::path dir = resolve_out(out, cfg, "run");
      std::printf("%s: %zu seed(s), LIF kernel %s -> %s\n", cfg.name.c_str(), cfg.seeds.size(),
                  simd::isa_name(simd::active_isa()), dir.string().c_str());
      const RunResult res = run_experiment(cfg, dir, workers);
      std::printf("%6s %8s %10s %9s %9s %11s %10s %10s\n", "seed", "status", "PO(%)", "Tr(s)", "Ts_max(s)", "SSE",
                  "IAE", "ISC");
      for (const auto& s : res.seeds) {
        const ControlMetrics& m = s.links.empty() ? ControlMetrics{} : s.links.front();
        std::printf("%6llu %8s %10s %9s %9s %11s %10s %10s\n", static_cast<unsigned long long>(s.seed),
                    s.failed ? "FAILED" : "ok", cell(m.overshoot).c_str(), cell(m.rise_time).c_str(),
                    cell(s.settling_time_max).c_str(), cell(m.steady_state_error).c_str(), cell(m.iae).c_str(),
                    cell(m.isc).c_str());
        if (s.failed)
          std::fprintf(stderr, "seed %llu: %s at t=%s s\n", static_cast<unsigned long long>(s.seed),
                       s.failure_reason.c_str(), cell(s.failure_time).c_str());
      }
      return res.ok() ? kExitOk : kExitControlFailure;
    }

    if (*sweep_cmd) {
      const ExperimentConfig cfg = load(config, seeds);
      const SweepAxis ax = sweep_axis_from_string(axis);
      const fs::path dir = resolve_out(out, cfg, (std::string("sweep_") + to_string(ax)).c_str());
      const SweepResult res = sweep(cfg, ax, parse_value_list(values), workers, dir);
      print_rows(res.rows, to_string(ax));
      std::printf("table: %s\n", (dir / "sweep.csv").string().c_str());
      return kExitOk;
    }

    if (*compare_cmd) {
      const ExperimentConfig cfg = load(config, seeds);
      const fs::path dir = resolve_out(out, cfg, "compare");
      const CompareResult res = compare(cfg, workers, dir);
      print_rows(res.rows, "controller");
      std::printf("table: %s\n", (dir / "compare.csv").string().c_str());
      return kExitOk;
    }

    if (*plot) {
      const fs::path dir = out.empty() ? fs::path(artifacts) : fs::path(out);
      for (const auto& f : render_plots(artifacts, dir)) std::printf("%s\n", f.string().c_str());
      return kExitOk;
    }
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kExitUsage;
  } catch (const PlotError& e) {
    std::fprintf(stderr, "plot error: %s\n", e.what());
    return kExitUsage;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitUsage;
  }
  return kExitOk;
}
