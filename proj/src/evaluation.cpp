// SPDX-License-Identifier: Apache-2.0
#include "reskmd/evaluation.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <thread>

#include <json.hpp>
#include <spdlog/spdlog.h>

#include "reskmd/error.hpp"

namespace reskmd {

namespace {

std::string format_double(double v) {
  std::ostringstream os;
  os << std::setprecision(std::numeric_limits<double>::max_digits10) << v;
  return os.str();
}

template <typename Fn>
void parallel_for(size_t count, unsigned threads, Fn&& fn) {
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(std::min<size_t>(threads, count));
  if (threads <= 1) {
    for (size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<size_t> next{0};
  std::vector<std::jthread> pool;
  pool.reserve(threads);
  for (unsigned t = 0; t < threads; ++t) {
    pool.emplace_back([&] {
      for (size_t i = next++; i < count; i = next++) fn(i);
    });
  }
}

}  // namespace

void LabeledScores::validate() const {
  if (positives.empty() || negatives.empty())
    throw Error(ErrorKind::Configuration,
                "ROC needs at least one positive and one negative score");
  auto finite = [](const std::vector<double>& v) {
    return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
  };
  if (!finite(positives) || !finite(negatives))
    throw Error(ErrorKind::NumericalInconsistency, "ROC scores must be finite");
}

RocCurve roc_curve(const LabeledScores& scores, std::string indicator) {
  scores.validate();
  std::vector<std::pair<double, bool>> all;
  all.reserve(scores.positives.size() + scores.negatives.size());
  for (double s : scores.positives) all.emplace_back(s, true);
  for (double s : scores.negatives) all.emplace_back(s, false);
  std::sort(all.begin(), all.end(),
            [](const auto& a, const auto& b) { return a.first > b.first; });

  const double n_pos = static_cast<double>(scores.positives.size());
  const double n_neg = static_cast<double>(scores.negatives.size());
  RocCurve curve;
  curve.indicator = std::move(indicator);
  curve.points.push_back({std::numeric_limits<double>::infinity(), 0.0, 0.0});
  size_t tp = 0;
  size_t fp = 0;
  for (size_t i = 0; i < all.size();) {
    const double threshold = all[i].first;
    for (; i < all.size() && all[i].first == threshold; ++i) (all[i].second ? tp : fp)++;
    curve.points.push_back(
        {threshold, static_cast<double>(fp) / n_neg, static_cast<double>(tp) / n_pos});
  }
  curve.points.back().fpr = 1.0;
  curve.points.back().tpr = 1.0;
  curve.auc = trapezoid_area(curve.points);
  return curve;
}

double trapezoid_area(const std::vector<RocPoint>& points) {
  double area = 0.0;
  for (size_t i = 1; i < points.size(); ++i)
    area += (points[i].fpr - points[i - 1].fpr) * 0.5 * (points[i].tpr + points[i - 1].tpr);
  return area;
}

std::string file_stem(const std::string& indicator_id) {
  std::string out = indicator_id;
  for (char& c : out)
    if (c == ',' || c == ':' || c == '/' || c == ' ') c = '_';
  return out;
}

std::vector<Indicator> expand_indicators(const std::vector<std::string>& names,
                                         const std::vector<KernelSpec>& kernels) {
  if (names.empty()) throw Error(ErrorKind::Configuration, "indicator list is empty");
  std::vector<Indicator> out;
  for (const auto& name : names) {
    if (name == "reskmd_kernel") {
      if (kernels.empty())
        throw Error(ErrorKind::Configuration, "reskmd_kernel requested without kernels");
      for (const auto& k : kernels) out.push_back(Indicator::kernel_reskmd(k));
    } else {
      out.push_back(Indicator::parse(name));
    }
  }
  return out;
}

RunAnalysis analyze_run(const ManifestEntry& entry, const std::vector<Indicator>& indicators,
                        const AnalysisSettings& settings) {
  RunAnalysis out;
  out.entry = entry;
  out.series.resize(indicators.size());

  std::optional<RawSeries> series;
  std::string load_error;
  try {
    series = load_csv(entry.path, ColumnSpec{0, {}, std::nullopt});
  } catch (const Error& e) {
    load_error = std::string("unreadable: ") + e.what();
    spdlog::warn("run {}: skipped ({})", entry.run_id, e.what());
  }

  for (size_t k = 0; k < indicators.size(); ++k) {
    RunScore cell;
    cell.run_id = entry.run_id;
    cell.tipping = entry.tipping;
    cell.indicator = indicators[k].id();
    if (!series) {
      cell.status = load_error;
      out.scores.push_back(std::move(cell));
      continue;
    }
    try {
      PipelineOptions options;
      options.delay = settings.windows.resolve(series->length());
      options.rank = settings.rank;
      options.weighting = settings.weighting;
      EwsSeries ews = compute_indicator(*series, indicators[k], options);
      cell.score = trend_score(ews).score;
      cell.terminal_value = ews.values.back();
      out.series[k] = std::move(ews);
    } catch (const Error& e) {
      cell.status = std::string(to_string(e.kind())) + ": " + e.what();
      spdlog::warn("run {} / {}: missing ({})", entry.run_id, cell.indicator, e.what());
    }
    out.scores.push_back(std::move(cell));
  }
  return out;
}

std::vector<RunAnalysis> analyze_manifest(const std::vector<ManifestEntry>& manifest,
                                          const std::vector<Indicator>& indicators,
                                          const AnalysisSettings& settings) {
  std::vector<RunAnalysis> out(manifest.size());
  parallel_for(manifest.size(), settings.threads,
               [&](size_t i) { out[i] = analyze_run(manifest[i], indicators, settings); });
  return out;
}

ExperimentReport assemble_report(std::vector<RunScore> scores,
                                 const std::vector<std::string>& indicator_ids) {
  ExperimentReport report;
  for (const auto& id : indicator_ids) {
    IndicatorSummary summary;
    summary.indicator = id;
    LabeledScores labeled;
    for (const auto& s : scores) {
      if (s.indicator != id) continue;
      if (!s.score) {
        ++summary.missing;
        continue;
      }
      (s.tipping ? labeled.positives : labeled.negatives).push_back(*s.score);
    }
    summary.n_pos = static_cast<int>(labeled.positives.size());
    summary.n_neg = static_cast<int>(labeled.negatives.size());
    if (summary.missing > 0)
      spdlog::warn("{}: ROC over {} runs, {} missing", id, summary.n_pos + summary.n_neg,
                   summary.missing);
    summary.curve = roc_curve(labeled, id);
    report.indicators.push_back(std::move(summary));
  }
  report.scores = std::move(scores);
  return report;
}

ExperimentReport run_experiment(const std::vector<ManifestEntry>& manifest,
                                const std::vector<Indicator>& indicators,
                                const AnalysisSettings& settings) {
  if (indicators.empty()) throw Error(ErrorKind::Configuration, "indicator list is empty");
  std::vector<RunScore> scores;
  for (auto& run : analyze_manifest(manifest, indicators, settings))
    for (auto& s : run.scores) scores.push_back(std::move(s));
  std::vector<std::string> ids;
  for (const auto& ind : indicators) ids.push_back(ind.id());
  return assemble_report(std::move(scores), ids);
}

void write_report(const std::filesystem::path& dir, const ExperimentReport& report) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error(ErrorKind::Io, "cannot create " + dir.string() + ": " + ec.message());

  nlohmann::ordered_json summary = nlohmann::ordered_json::object();
  for (const auto& ind : report.indicators) {
    const auto path = dir / ("roc_" + file_stem(ind.indicator) + ".csv");
    std::ofstream out(path);
    if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
    out << "threshold,fpr,tpr\n";
    for (const auto& p : ind.curve.points)
      out << format_double(p.threshold) << ',' << format_double(p.fpr) << ','
          << format_double(p.tpr) << '\n';
    summary[ind.indicator] = {{"auc", ind.curve.auc},
                              {"n_pos", ind.n_pos},
                              {"n_neg", ind.n_neg},
                              {"missing_count", ind.missing}};
  }
  {
    std::ofstream out(dir / "summary.json");
    if (!out) throw Error(ErrorKind::Io, "cannot write " + (dir / "summary.json").string());
    out << summary.dump(2) << '\n';
  }
  std::ofstream out(dir / "scores.csv");
  if (!out) throw Error(ErrorKind::Io, "cannot write " + (dir / "scores.csv").string());
  out << "run_id,label,indicator,score,terminal_value,status\n";
  for (const auto& s : report.scores) {
    out << s.run_id << ',' << (s.tipping ? 1 : 0) << ",\"" << s.indicator << "\","
        << (s.score ? format_double(*s.score) : "") << ','
        << (s.terminal_value ? format_double(*s.terminal_value) : "") << ",\"" << s.status
        << "\"\n";
  }
}

}  // namespace reskmd
