// SPDX-License-Identifier: Apache-2.0
//
// Sliding-window early-warning indicators: ResKMD through exact DMD and kernel
// EDMD, plus variance, lag-1 autocorrelation and the dominant DMD eigenvalue.
#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "reskmd/dmd.hpp"
#include "reskmd/resdmd.hpp"
#include "reskmd/timeseries.hpp"

namespace reskmd {

enum class IndicatorKind { ReskmdExact, ReskmdKernel, Variance, Lag1Ac, DmdMaxEig };

struct Indicator {
  IndicatorKind kind = IndicatorKind::ReskmdExact;
  std::optional<KernelSpec> kernel;

  /// reskmd_exact | reskmd_kernel:<kernel id> | variance | lag1_ac | dmd_max_eig
  std::string id() const;
  static Indicator parse(const std::string& text);
  static Indicator kernel_reskmd(const KernelSpec& kernel) {
    return {IndicatorKind::ReskmdKernel, kernel};
  }
};

struct EwsSeries {
  std::string indicator;
  /// Window end times.
  std::vector<double> times;
  std::vector<double> values;
  /// Windows skipped because the decomposition was degenerate.
  Index gaps = 0;

  size_t size() const { return values.size(); }
  void validate() const;
};

struct DetectionScore {
  std::string indicator;
  double score = 0.0;
  std::string method = "kendall_tau_b";
};

/// Unbiased sample variance, averaged over dimensions.
double variance_ews(const RawSeries& window);

/// Pearson correlation of consecutive samples, averaged over dimensions.
double lag1_autocorr(const RawSeries& window);

/// Largest |lambda| of exact DMD on the delay-embedded window.
double dmd_max_eig(const RawSeries& window, Index d_hankel, const RankPolicy& policy);

ResidualReport reskmd_exact_window(const RawSeries& window, Index d_hankel,
                                   const RankPolicy& policy,
                                   ModeWeighting weighting = ModeWeighting::Uniform);

ResidualReport reskmd_kernel_window(const RawSeries& window, Index d_hankel,
                                    const KernelSpec& kernel, const RankPolicy& policy,
                                    ModeWeighting weighting = ModeWeighting::Uniform);

struct PipelineOptions {
  DelayConfig delay;
  RankPolicy rank;
  ModeWeighting weighting = ModeWeighting::Uniform;
  Detrender detrend = no_detrend;
};

/// One value per window at the window end time. Windows whose decomposition
/// fails are left out and counted in `gaps`.
EwsSeries compute_indicator(const RawSeries& series, const Indicator& indicator,
                            const PipelineOptions& options);

EwsSeries reskmd_exact_pipeline(const RawSeries& series, const DelayConfig& cfg,
                                const RankPolicy& policy);

EwsSeries reskmd_kernel_pipeline(const RawSeries& series, const DelayConfig& cfg,
                                 const KernelSpec& kernel, const RankPolicy& policy);

/// Kendall tau-b between two equally long samples.
double kendall_tau_b(std::span<const double> x, std::span<const double> y);

/// Kendall tau-b between window index and value; 0 for a fully tied trace.
DetectionScore trend_score(const EwsSeries& series);

/// Window geometry derived from each series' length: t_window is
/// `window_fraction` of the samples, d_hankel defaults to min(300, t_window/2)
/// and stride defaults to whatever yields about `target_windows` windows.
struct WindowPolicy {
  double window_fraction = 0.5;
  Index d_hankel = 0;
  Index stride = 0;
  Index target_windows = 40;

  DelayConfig resolve(Index series_length) const;
};

/// `time,indicator,value` rows.
void write_ews_csv(const std::filesystem::path& path, const EwsSeries& series);
EwsSeries read_ews_csv(const std::filesystem::path& path);

}  // namespace reskmd
