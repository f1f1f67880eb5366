// SPDX-License-Identifier: Apache-2.0
#include "reskmd/ews.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

#include <spdlog/spdlog.h>

#include "reskmd/error.hpp"

namespace reskmd {

namespace {

constexpr std::string_view kKernelPrefix = "reskmd_kernel:";

}  // namespace

std::string Indicator::id() const {
  switch (kind) {
    case IndicatorKind::ReskmdExact: return "reskmd_exact";
    case IndicatorKind::ReskmdKernel:
      if (!kernel) throw Error(ErrorKind::Configuration, "kernel indicator without kernel");
      return std::string(kKernelPrefix) + kernel->id();
    case IndicatorKind::Variance: return "variance";
    case IndicatorKind::Lag1Ac: return "lag1_ac";
    case IndicatorKind::DmdMaxEig: return "dmd_max_eig";
  }
  return {};
}

Indicator Indicator::parse(const std::string& text) {
  if (text == "reskmd_exact") return {IndicatorKind::ReskmdExact, std::nullopt};
  if (text == "variance") return {IndicatorKind::Variance, std::nullopt};
  if (text == "lag1_ac") return {IndicatorKind::Lag1Ac, std::nullopt};
  if (text == "dmd_max_eig") return {IndicatorKind::DmdMaxEig, std::nullopt};
  if (text.rfind(kKernelPrefix, 0) == 0)
    return kernel_reskmd(KernelSpec::parse(text.substr(kKernelPrefix.size())));
  throw Error(ErrorKind::Configuration, "unknown indicator '" + text + "'");
}

void EwsSeries::validate() const {
  if (times.size() != values.size())
    throw Error(ErrorKind::Shape, indicator + ": times and values differ in length");
  for (size_t i = 0; i < values.size(); ++i) {
    if (!std::isfinite(values[i]))
      throw Error(ErrorKind::NumericalInconsistency, indicator + ": non-finite value");
    if (i > 0 && !(times[i] > times[i - 1]))
      throw Error(ErrorKind::Ordering, indicator + ": times not strictly increasing");
  }
}

double variance_ews(const RawSeries& window) {
  const Index n = window.length();
  if (n < 2) throw Error(ErrorKind::InsufficientData, "variance needs at least 2 samples");
  const MatrixXd centred = window.values().rowwise() - window.values().colwise().mean();
  const VectorXd per_dim = centred.colwise().squaredNorm() / static_cast<double>(n - 1);
  return per_dim.mean();
}

double lag1_autocorr(const RawSeries& window) {
  const Index n = window.length();
  if (n < 3) throw Error(ErrorKind::InsufficientData, "lag-1 autocorrelation needs >= 3 samples");
  double total = 0.0;
  for (Index j = 0; j < window.dims(); ++j) {
    const VectorXd head = window.values().col(j).head(n - 1);
    const VectorXd tail = window.values().col(j).tail(n - 1);
    const VectorXd a = head.array() - head.mean();
    const VectorXd b = tail.array() - tail.mean();
    const double denom = std::sqrt(a.squaredNorm() * b.squaredNorm());
    if (!(denom > 0.0))
      throw Error(ErrorKind::DegenerateWindow, "lag-1 autocorrelation of a constant window");
    total += std::clamp(a.dot(b) / denom, -1.0, 1.0);
  }
  return total / static_cast<double>(window.dims());
}

double dmd_max_eig(const RawSeries& window, Index d_hankel, const RankPolicy& policy) {
  if (window.length() < d_hankel + 2)
    throw Error(ErrorKind::InsufficientData, "window too short for the delay depth");
  const KoopmanApprox approx = exact_dmd(hankel_embed(window, d_hankel), policy);
  return approx.eigenvalues.cwiseAbs().maxCoeff();
}

ResidualReport reskmd_exact_window(const RawSeries& window, Index d_hankel,
                                   const RankPolicy& policy, ModeWeighting weighting) {
  const KoopmanApprox approx = exact_dmd(hankel_embed(window, d_hankel), policy);
  return residual_report(approx, window.end_time(), weighting);
}

ResidualReport reskmd_kernel_window(const RawSeries& window, Index d_hankel,
                                    const KernelSpec& kernel, const RankPolicy& policy,
                                    ModeWeighting weighting) {
  const KoopmanApprox approx = kernel_edmd(hankel_embed(window, d_hankel), kernel, policy);
  return residual_report(approx, window.end_time(), weighting);
}

EwsSeries compute_indicator(const RawSeries& series, const Indicator& indicator,
                            const PipelineOptions& options) {
  const bool uses_delay = indicator.kind == IndicatorKind::ReskmdExact ||
                          indicator.kind == IndicatorKind::ReskmdKernel ||
                          indicator.kind == IndicatorKind::DmdMaxEig;
  if (uses_delay) options.delay.validate();

  EwsSeries out;
  out.indicator = indicator.id();
  const Index d = options.delay.d_hankel;
  for (const RawSeries& raw : windows(series, options.delay)) {
    const RawSeries window = options.detrend(raw);
    try {
      double value = 0.0;
      switch (indicator.kind) {
        case IndicatorKind::ReskmdExact:
          value = reskmd_exact_window(window, d, options.rank, options.weighting).reskmd_sq;
          break;
        case IndicatorKind::ReskmdKernel:
          value = reskmd_kernel_window(window, d, *indicator.kernel, options.rank,
                                       options.weighting)
                      .reskmd_sq;
          break;
        case IndicatorKind::Variance: value = variance_ews(window); break;
        case IndicatorKind::Lag1Ac: value = lag1_autocorr(window); break;
        case IndicatorKind::DmdMaxEig: value = dmd_max_eig(window, d, options.rank); break;
      }
      out.times.push_back(window.end_time());
      out.values.push_back(value);
    } catch (const Error& e) {
      if (e.kind() == ErrorKind::Configuration || e.kind() == ErrorKind::Shape) throw;
      ++out.gaps;
      spdlog::debug("{}: window ending at {} skipped ({})", out.indicator, window.end_time(),
                    e.what());
    }
  }
  if (out.gaps > 0)
    spdlog::info("{}: {} of {} windows skipped", out.indicator, out.gaps,
                 out.gaps + static_cast<Index>(out.size()));
  return out;
}

EwsSeries reskmd_exact_pipeline(const RawSeries& series, const DelayConfig& cfg,
                                const RankPolicy& policy) {
  return compute_indicator(series, {IndicatorKind::ReskmdExact, std::nullopt},
                           PipelineOptions{cfg, policy});
}

EwsSeries reskmd_kernel_pipeline(const RawSeries& series, const DelayConfig& cfg,
                                 const KernelSpec& kernel, const RankPolicy& policy) {
  return compute_indicator(series, Indicator::kernel_reskmd(kernel), PipelineOptions{cfg, policy});
}

double kendall_tau_b(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw Error(ErrorKind::Shape, "Kendall tau needs equal lengths");
  const size_t n = x.size();
  long long concordant = 0;
  long long discordant = 0;
  long long tied_x = 0;
  long long tied_y = 0;
  for (size_t i = 0; i < n; ++i) {
    for (size_t j = i + 1; j < n; ++j) {
      const double dx = x[j] - x[i];
      const double dy = y[j] - y[i];
      if (dx == 0.0 && dy == 0.0) continue;
      if (dx == 0.0) ++tied_x;
      else if (dy == 0.0) ++tied_y;
      else if ((dx > 0.0) == (dy > 0.0)) ++concordant;
      else ++discordant;
    }
  }
  const double denom = std::sqrt(static_cast<double>(concordant + discordant + tied_x) *
                                 static_cast<double>(concordant + discordant + tied_y));
  if (!(denom > 0.0)) return 0.0;
  return std::clamp(static_cast<double>(concordant - discordant) / denom, -1.0, 1.0);
}

DetectionScore trend_score(const EwsSeries& series) {
  if (series.size() < 3)
    throw Error(ErrorKind::InsufficientData, series.indicator + ": trend needs >= 3 values");
  std::vector<double> index(series.size());
  for (size_t i = 0; i < index.size(); ++i) index[i] = static_cast<double>(i);
  return {series.indicator, kendall_tau_b(index, series.values), "kendall_tau_b"};
}

DelayConfig WindowPolicy::resolve(Index series_length) const {
  if (!(window_fraction > 0.0 && window_fraction <= 1.0))
    throw Error(ErrorKind::Configuration, "window_fraction must lie in (0, 1]");
  DelayConfig cfg;
  cfg.t_window = std::max<Index>(
      2, static_cast<Index>(std::floor(window_fraction * static_cast<double>(series_length))));
  cfg.d_hankel = d_hankel > 0 ? std::min(d_hankel, cfg.t_window - 1)
                              : default_delay_depth(cfg.t_window);
  if (stride > 0) {
    cfg.stride = stride;
  } else {
    const Index span = std::max<Index>(0, series_length - cfg.t_window);
    const Index target = std::max<Index>(1, target_windows - 1);
    cfg.stride = std::max<Index>(1, span / target);
  }
  return cfg;
}

void write_ews_csv(const std::filesystem::path& path, const EwsSeries& series) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
  out << "time,indicator,value\n" << std::setprecision(std::numeric_limits<double>::max_digits10);
  for (size_t i = 0; i < series.size(); ++i)
    out << series.times[i] << ',' << series.indicator << ',' << series.values[i] << '\n';
  if (!out) throw Error(ErrorKind::Io, "write failed for " + path.string());
}

EwsSeries read_ews_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
  EwsSeries out;
  std::string line;
  long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line_no == 1) continue;
    // The indicator id may itself contain commas (kernel parameters).
    const size_t first = line.find(',');
    const size_t last = line.rfind(',');
    if (first == std::string::npos || first == last)
      throw ParseError(line_no, "expected time,indicator,value");
    try {
      out.times.push_back(std::stod(line.substr(0, first)));
      out.values.push_back(std::stod(line.substr(last + 1)));
    } catch (const std::logic_error&) {
      throw ParseError(line_no, "malformed number");
    }
    std::string id = line.substr(first + 1, last - first - 1);
    if (out.indicator.empty()) out.indicator = std::move(id);
    else if (id != out.indicator) throw ParseError(line_no, "mixed indicators in one file");
  }
  out.validate();
  return out;
}

}  // namespace reskmd
