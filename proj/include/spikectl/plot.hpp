#pragma once

// SVG figures rendered from run, sweep and compare artifacts.

#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

namespace spikectl {

class PlotError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  int column(const std::string& name) const;  // -1 if absent
  std::vector<double> numbers(int col) const;  // unparsable cells become NaN
};

CsvTable read_csv(const std::filesystem::path& path);

/// states.svg, control.svg (control over spike raster) and phase.svg from a
/// directory holding trace.csv and raster.csv. A missing raster.csv is an error;
/// an empty one renders an empty raster panel.
std::vector<std::filesystem::path> render_run_plots(const std::filesystem::path& dir,
                                                    const std::filesystem::path& out);

/// One metric-vs-value figure per metric column of a sweep.csv or compare.csv.
/// Numeric axes spanning more than a decade use a log x scale.
std::vector<std::filesystem::path> render_table_plots(const std::filesystem::path& csv,
                                                      const std::filesystem::path& out);

/// Dispatches on the artifacts found in `dir`: sweep.csv, compare.csv, a
/// single run (trace.csv) or a multi-seed run (seed_*/trace.csv).
std::vector<std::filesystem::path> render_plots(const std::filesystem::path& dir, const std::filesystem::path& out);

}  // namespace spikectl
