// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "reskmd/dynamics.hpp"
#include "reskmd/ews.hpp"

namespace reskmd {

/// Scores of runs that tip (positives) and runs that do not (negatives).
struct LabeledScores {
  std::vector<double> positives;
  std::vector<double> negatives;

  void validate() const;
};

struct RocPoint {
  /// Scores >= threshold are called positive; +inf for the (0,0) point.
  double threshold = std::numeric_limits<double>::infinity();
  double fpr = 0.0;
  double tpr = 0.0;
};

struct RocCurve {
  std::vector<RocPoint> points;
  double auc = 0.0;
  std::string indicator;
};

/// Exact ROC from a descending sweep over the observed scores. Tied scores
/// produce one diagonal segment, so the area equals the Mann-Whitney
/// statistic with ties counted one half.
RocCurve roc_curve(const LabeledScores& scores, std::string indicator = {});

double trapezoid_area(const std::vector<RocPoint>& points);

/// Filesystem-safe form of an indicator id.
std::string file_stem(const std::string& indicator_id);

/// Expands the bare name "reskmd_kernel" into one indicator per kernel;
/// other names parse as-is.
std::vector<Indicator> expand_indicators(const std::vector<std::string>& names,
                                         const std::vector<KernelSpec>& kernels);

struct AnalysisSettings {
  WindowPolicy windows;
  RankPolicy rank;
  ModeWeighting weighting = ModeWeighting::Uniform;
  /// Worker threads for per-run analysis; 0 uses the hardware concurrency.
  unsigned threads = 0;
};

/// Trend score and terminal value of one (run, indicator) cell. `status` is
/// "ok" or the reason the cell is missing.
struct RunScore {
  int run_id = 0;
  bool tipping = false;
  std::string indicator;
  std::optional<double> score;
  std::optional<double> terminal_value;
  std::string status = "ok";
};

struct RunAnalysis {
  ManifestEntry entry;
  /// One per requested indicator, in order; nullopt where the indicator failed.
  std::vector<std::optional<EwsSeries>> series;
  std::vector<RunScore> scores;
};

/// Every indicator on one run's series (read from entry.path).
RunAnalysis analyze_run(const ManifestEntry& entry, const std::vector<Indicator>& indicators,
                        const AnalysisSettings& settings);

/// Runs analyze_run over the manifest on a worker pool; output keeps manifest
/// order. Unreadable trajectories yield cells with status "unreadable: ...".
std::vector<RunAnalysis> analyze_manifest(const std::vector<ManifestEntry>& manifest,
                                          const std::vector<Indicator>& indicators,
                                          const AnalysisSettings& settings);

struct IndicatorSummary {
  std::string indicator;
  RocCurve curve;
  int n_pos = 0;
  int n_neg = 0;
  int missing = 0;
};

struct ExperimentReport {
  std::vector<RunScore> scores;
  std::vector<IndicatorSummary> indicators;
};

/// Groups scores by label into one ROC per indicator, in the order given.
ExperimentReport assemble_report(std::vector<RunScore> scores,
                                 const std::vector<std::string>& indicator_ids);

ExperimentReport run_experiment(const std::vector<ManifestEntry>& manifest,
                                const std::vector<Indicator>& indicators,
                                const AnalysisSettings& settings);

/// roc_<indicator>.csv (threshold,fpr,tpr), scores.csv and summary.json.
void write_report(const std::filesystem::path& dir, const ExperimentReport& report);

}  // namespace reskmd
