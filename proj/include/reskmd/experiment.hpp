// SPDX-License-Identifier: Apache-2.0
//
// Configuration-driven experiment commands behind the command-line tool.
#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "reskmd/dynamics.hpp"
#include "reskmd/evaluation.hpp"

namespace reskmd {

/// Every tunable of a simulate/analyze/roc run. Loaded from an INI-style file:
///
///   [system]    name, beta0, t_end, clamp, x0
///   [ensemble]  tipping_rate_min, tipping_rate_max, n_tipping, n_null
///   [sim]       dt, sample_every, sigma, seed
///   [analysis]  indicators, kernels, window_fraction, d_hankel, stride,
///               target_windows, rank_energy, max_rank, fixed_rank,
///               mode_weighting, threads
///   [output]    dir, plot_sqrt
///
/// List values are comma separated except `kernels`, which is whitespace
/// separated because kernel ids contain commas.
struct ExperimentConfig {
  std::string system = "saddle_node";
  RampSchedule ramp;
  double tipping_rate_min = -0.005;
  double tipping_rate_max = -0.02;
  int n_tipping = 20;
  int n_null = 20;
  SimConfig sim;

  std::vector<std::string> indicators;
  std::vector<KernelSpec> kernels;
  AnalysisSettings analysis;

  std::filesystem::path output_dir = "out";
  /// Plot sqrt(ResKMD) instead of the squared residual.
  bool plot_sqrt = false;

  /// Defaults for a system: beta0 = 1, decreasing rates for the saddle-node;
  /// beta0 = -1, increasing rates for the Hopf normal form.
  static ExperimentConfig defaults_for(const std::string& system);
  void validate() const;

  /// Tipping rates evenly spaced from min to max, followed by n_null zeros.
  std::vector<double> ensemble_rates() const;
  std::vector<Indicator> indicator_set() const;

  std::filesystem::path ensemble_dir() const { return output_dir / "ensemble"; }
  std::filesystem::path ews_dir() const { return output_dir / "ews"; }
  std::filesystem::path roc_dir() const { return output_dir / "roc"; }
  std::filesystem::path plot_dir() const { return output_dir / "plots"; }
};

/// Reads `path` (optional) and applies `section.key=value` overrides on top.
/// Unknown sections or keys are configuration errors.
ExperimentConfig load_config(const std::optional<std::filesystem::path>& path,
                             const std::vector<std::string>& overrides = {});

/// INI text for a config, suitable for load_config.
std::string render_config(const ExperimentConfig& cfg);

/// Simulates the ensemble into ensemble_dir(); returns the manifest.
std::vector<ManifestEntry> cmd_simulate(const ExperimentConfig& cfg);

/// One row of ews/index.csv.
struct EwsIndexRow {
  int run_id = 0;
  /// 1 tipping, 0 non-tipping, -1 unlabeled input.
  int label = -1;
  std::string indicator;
  std::filesystem::path path;
  std::string status = "ok";
};

/// Computes every indicator for each run of `input` (a manifest, or a single
/// series CSV with time in column 0; default: the simulated manifest) and
/// writes one EWS CSV per (run, indicator) plus index.csv into ews_dir().
std::vector<EwsIndexRow> cmd_analyze(const ExperimentConfig& cfg,
                                     const std::optional<std::filesystem::path>& input = {});

std::vector<EwsIndexRow> read_ews_index(const std::filesystem::path& index);

/// Trend-scores the analyzed traces, writes ROC CSVs, summary.json and
/// scores.csv into roc_dir() and SVG charts into plot_dir().
ExperimentReport cmd_roc(const ExperimentConfig& cfg);

ExperimentReport cmd_run_all(const ExperimentConfig& cfg);

/// Process exit code for an error category (0 is reserved for success).
int exit_code_for(ErrorKind kind);

}  // namespace reskmd
