// SPDX-License-Identifier: Apache-2.0
#include "reskmd/experiment.hpp"

#include <fstream>
#include <iomanip>
#include <map>
#include <set>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <spdlog/spdlog.h>

#include "reskmd/error.hpp"
#include "reskmd/svg.hpp"

namespace reskmd {

namespace {

namespace pt = boost::property_tree;

const std::map<std::string, std::set<std::string>> kKnownKeys = {
    {"system", {"name", "beta0", "t_end", "clamp", "x0"}},
    {"ensemble", {"tipping_rate_min", "tipping_rate_max", "n_tipping", "n_null"}},
    {"sim", {"dt", "sample_every", "sigma", "seed"}},
    {"analysis",
     {"indicators", "kernels", "window_fraction", "d_hankel", "stride", "target_windows",
      "rank_energy", "max_rank", "fixed_rank", "mode_weighting", "threads"}},
    {"output", {"dir", "plot_sqrt"}},
};

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  for (std::string item; std::getline(ss, item, sep);) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::vector<std::string> split_ws(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream ss(s);
  for (std::string item; ss >> item;) out.push_back(item);
  return out;
}

std::string format_double(double v) {
  std::ostringstream os;
  os << std::setprecision(std::numeric_limits<double>::max_digits10) << v;
  return os.str();
}

template <typename T>
T get_or(const pt::ptree& tree, const std::string& key, T fallback) {
  auto node = tree.get_optional<std::string>(key);
  if (!node) return fallback;
  try {
    if constexpr (std::is_same_v<T, std::string>) {
      return trim(*node);
    } else if constexpr (std::is_same_v<T, bool>) {
      const std::string v = trim(*node);
      if (v == "true" || v == "1" || v == "yes") return true;
      if (v == "false" || v == "0" || v == "no") return false;
      throw std::invalid_argument(v);
    } else if constexpr (std::is_same_v<T, std::uint64_t>) {
      return std::stoull(trim(*node));
    } else if constexpr (std::is_integral_v<T>) {
      return static_cast<T>(std::stoll(trim(*node)));
    } else {
      return std::stod(trim(*node));
    }
  } catch (const std::logic_error&) {
    throw Error(ErrorKind::Configuration, "invalid value '" + *node + "' for " + key);
  }
}

VectorXd parse_vector(const std::string& text, const std::string& key) {
  const auto parts = split(text, ',');
  VectorXd v(static_cast<Index>(parts.size()));
  try {
    for (size_t i = 0; i < parts.size(); ++i) v(static_cast<Index>(i)) = std::stod(parts[i]);
  } catch (const std::logic_error&) {
    throw Error(ErrorKind::Configuration, "invalid vector '" + text + "' for " + key);
  }
  return v;
}

std::vector<std::string> split_quoted_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  bool quoted = false;
  for (size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') field += '"', ++i;
      else if (c == '"') quoted = false;
      else field += c;
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(std::move(field));
      field.clear();
    } else {
      field += c;
    }
  }
  out.push_back(std::move(field));
  return out;
}

std::string quote(const std::string& s) {
  std::string out = "\"";
  for (char c : s) out += c == '"' ? std::string("\"\"") : std::string(1, c);
  return out + "\"";
}

std::string run_name(int run_id) {
  std::ostringstream os;
  os << "run_" << std::setw(4) << std::setfill('0') << run_id;
  return os.str();
}

bool is_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  std::string header;
  std::getline(in, header);
  return trim(header).rfind("run_id,rate,seed,label,path", 0) == 0;
}

void ensure_dir(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error(ErrorKind::Io, "cannot create " + dir.string() + ": " + ec.message());
}

}  // namespace

ExperimentConfig ExperimentConfig::defaults_for(const std::string& system) {
  ExperimentConfig cfg;
  cfg.system = system;
  const OdeSystem sys = system_by_name(system);
  cfg.sim.x0 = sys.default_x0;
  cfg.sim.seed = 1;
  cfg.ramp.t_end = 200.0;
  if (system == "hopf") {
    cfg.ramp.beta0 = -1.0;
    cfg.tipping_rate_min = 0.005;
    cfg.tipping_rate_max = 0.02;
  } else {
    cfg.ramp.beta0 = 1.0;
    cfg.tipping_rate_min = -0.005;
    cfg.tipping_rate_max = -0.02;
  }
  cfg.indicators = {"reskmd_exact", "reskmd_kernel", "variance", "lag1_ac", "dmd_max_eig"};
  cfg.kernels = {KernelSpec{KernelKind::Rbf, 0.01}, KernelSpec{KernelKind::Rbf, 0.001}};
  return cfg;
}

void ExperimentConfig::validate() const {
  const OdeSystem sys = system_by_name(system);
  ramp.validate();
  sim.validate();
  if (sim.x0.size() != 0 && sim.x0.size() != sys.dim)
    throw Error(ErrorKind::Configuration, "x0 has the wrong dimension for " + system);
  if (n_tipping < 0 || n_null < 0 || n_tipping + n_null == 0)
    throw Error(ErrorKind::Configuration, "ensemble needs at least one run");
  if (indicators.empty()) throw Error(ErrorKind::Configuration, "indicator list is empty");
  indicator_set();
  analysis.rank.validate();
  analysis.windows.resolve(100);
  for (const auto& k : kernels) k.validate();
}

std::vector<double> ExperimentConfig::ensemble_rates() const {
  std::vector<double> rates;
  for (int i = 0; i < n_tipping; ++i) {
    const double f = n_tipping == 1 ? 0.0 : static_cast<double>(i) / (n_tipping - 1);
    rates.push_back(tipping_rate_min + f * (tipping_rate_max - tipping_rate_min));
  }
  rates.insert(rates.end(), static_cast<size_t>(n_null), 0.0);
  return rates;
}

std::vector<Indicator> ExperimentConfig::indicator_set() const {
  return expand_indicators(indicators, kernels);
}

ExperimentConfig load_config(const std::optional<std::filesystem::path>& path,
                             const std::vector<std::string>& overrides) {
  pt::ptree tree;
  if (path) {
    try {
      pt::read_ini(path->string(), tree);
    } catch (const pt::ini_parser_error& e) {
      throw Error(ErrorKind::Configuration, std::string("config: ") + e.what());
    }
  }
  for (const auto& ov : overrides) {
    const auto eq = ov.find('=');
    if (eq == std::string::npos || ov.find('.') > eq)
      throw Error(ErrorKind::Configuration, "override '" + ov + "' is not section.key=value");
    tree.put(trim(ov.substr(0, eq)), trim(ov.substr(eq + 1)));
  }
  for (const auto& [section, body] : tree) {
    auto known = kKnownKeys.find(section);
    if (known == kKnownKeys.end())
      throw Error(ErrorKind::Configuration, "unknown config section [" + section + "]");
    for (const auto& [key, value] : body)
      if (!known->second.count(key))
        throw Error(ErrorKind::Configuration, "unknown config key " + section + "." + key);
  }

  ExperimentConfig cfg =
      ExperimentConfig::defaults_for(get_or<std::string>(tree, "system.name", "saddle_node"));
  cfg.ramp.beta0 = get_or(tree, "system.beta0", cfg.ramp.beta0);
  cfg.ramp.t_end = get_or(tree, "system.t_end", cfg.ramp.t_end);
  if (auto clamp = tree.get_optional<std::string>("system.clamp"); clamp && !trim(*clamp).empty())
    cfg.ramp.clamp = get_or(tree, "system.clamp", 0.0);
  if (auto x0 = tree.get_optional<std::string>("system.x0"); x0 && !trim(*x0).empty())
    cfg.sim.x0 = parse_vector(*x0, "system.x0");

  cfg.tipping_rate_min = get_or(tree, "ensemble.tipping_rate_min", cfg.tipping_rate_min);
  cfg.tipping_rate_max = get_or(tree, "ensemble.tipping_rate_max", cfg.tipping_rate_max);
  cfg.n_tipping = get_or(tree, "ensemble.n_tipping", cfg.n_tipping);
  cfg.n_null = get_or(tree, "ensemble.n_null", cfg.n_null);

  cfg.sim.dt = get_or(tree, "sim.dt", cfg.sim.dt);
  cfg.sim.sample_every = get_or(tree, "sim.sample_every", cfg.sim.sample_every);
  cfg.sim.sigma = get_or(tree, "sim.sigma", cfg.sim.sigma);
  cfg.sim.seed = get_or<std::uint64_t>(tree, "sim.seed", cfg.sim.seed);

  if (auto ind = tree.get_optional<std::string>("analysis.indicators"))
    cfg.indicators = split(*ind, ',');
  if (auto ks = tree.get_optional<std::string>("analysis.kernels")) {
    cfg.kernels.clear();
    for (const auto& k : split_ws(*ks)) cfg.kernels.push_back(KernelSpec::parse(k));
  }
  auto& a = cfg.analysis;
  a.windows.window_fraction = get_or(tree, "analysis.window_fraction", a.windows.window_fraction);
  a.windows.d_hankel = get_or(tree, "analysis.d_hankel", a.windows.d_hankel);
  a.windows.stride = get_or(tree, "analysis.stride", a.windows.stride);
  a.windows.target_windows = get_or(tree, "analysis.target_windows", a.windows.target_windows);
  a.rank.energy = get_or(tree, "analysis.rank_energy", a.rank.energy);
  a.rank.max_rank = get_or(tree, "analysis.max_rank", a.rank.max_rank);
  a.rank.fixed = get_or(tree, "analysis.fixed_rank", a.rank.fixed);
  const std::string weighting = get_or<std::string>(tree, "analysis.mode_weighting", "uniform");
  if (weighting == "uniform") a.weighting = ModeWeighting::Uniform;
  else if (weighting == "koopman_modes") a.weighting = ModeWeighting::KoopmanModes;
  else throw Error(ErrorKind::Configuration, "mode_weighting must be uniform or koopman_modes");
  a.threads = get_or(tree, "analysis.threads", a.threads);

  cfg.output_dir = get_or<std::string>(tree, "output.dir", cfg.output_dir.string());
  cfg.plot_sqrt = get_or(tree, "output.plot_sqrt", cfg.plot_sqrt);
  cfg.validate();
  return cfg;
}

std::string render_config(const ExperimentConfig& cfg) {
  std::ostringstream os;
  os << "[system]\nname = " << cfg.system << "\nbeta0 = " << format_double(cfg.ramp.beta0)
     << "\nt_end = " << format_double(cfg.ramp.t_end) << '\n';
  if (cfg.ramp.clamp) os << "clamp = " << format_double(*cfg.ramp.clamp) << '\n';
  if (cfg.sim.x0.size()) {
    os << "x0 = ";
    for (Index i = 0; i < cfg.sim.x0.size(); ++i)
      os << (i ? "," : "") << format_double(cfg.sim.x0(i));
    os << '\n';
  }
  os << "\n[ensemble]\ntipping_rate_min = " << format_double(cfg.tipping_rate_min)
     << "\ntipping_rate_max = " << format_double(cfg.tipping_rate_max)
     << "\nn_tipping = " << cfg.n_tipping << "\nn_null = " << cfg.n_null << '\n';
  os << "\n[sim]\ndt = " << format_double(cfg.sim.dt) << "\nsample_every = " << cfg.sim.sample_every
     << "\nsigma = " << format_double(cfg.sim.sigma) << "\nseed = " << cfg.sim.seed << '\n';
  os << "\n[analysis]\nindicators = ";
  for (size_t i = 0; i < cfg.indicators.size(); ++i) os << (i ? "," : "") << cfg.indicators[i];
  os << "\nkernels =";
  for (const auto& k : cfg.kernels) os << ' ' << k.id();
  const auto& a = cfg.analysis;
  os << "\nwindow_fraction = " << format_double(a.windows.window_fraction)
     << "\nd_hankel = " << a.windows.d_hankel << "\nstride = " << a.windows.stride
     << "\ntarget_windows = " << a.windows.target_windows
     << "\nrank_energy = " << format_double(a.rank.energy) << "\nmax_rank = " << a.rank.max_rank
     << "\nfixed_rank = " << a.rank.fixed << "\nmode_weighting = "
     << (a.weighting == ModeWeighting::Uniform ? "uniform" : "koopman_modes")
     << "\nthreads = " << a.threads << '\n';
  os << "\n[output]\ndir = " << cfg.output_dir.string()
     << "\nplot_sqrt = " << (cfg.plot_sqrt ? "true" : "false") << '\n';
  return os.str();
}

std::vector<ManifestEntry> cmd_simulate(const ExperimentConfig& cfg) {
  cfg.validate();
  const OdeSystem sys = system_by_name(cfg.system);
  const auto members = make_ensemble(sys, cfg.ramp, cfg.ensemble_rates(), 1, cfg.sim);
  auto entries = write_ensemble(cfg.ensemble_dir(), members);
  spdlog::info("simulate: {} runs written to {}", entries.size(), cfg.ensemble_dir().string());
  return entries;
}

std::vector<EwsIndexRow> cmd_analyze(const ExperimentConfig& cfg,
                                     const std::optional<std::filesystem::path>& input) {
  cfg.validate();
  const std::filesystem::path source = input ? *input : cfg.ensemble_dir() / "manifest.csv";
  if (!std::filesystem::exists(source))
    throw Error(ErrorKind::Io, "analysis input " + source.string() + " does not exist");

  std::vector<ManifestEntry> manifest;
  bool labeled = true;
  if (is_manifest(source)) {
    manifest = read_manifest(source);
  } else {
    manifest.push_back(ManifestEntry{0, 0.0, 0, false, source});
    labeled = false;
  }

  const auto indicators = cfg.indicator_set();
  const auto analyses = analyze_manifest(manifest, indicators, cfg.analysis);

  const auto dir = cfg.ews_dir();
  ensure_dir(dir);
  std::vector<EwsIndexRow> rows;
  for (const auto& run : analyses) {
    for (size_t k = 0; k < indicators.size(); ++k) {
      EwsIndexRow row;
      row.run_id = run.entry.run_id;
      row.label = labeled ? (run.entry.tipping ? 1 : 0) : -1;
      row.indicator = run.scores[k].indicator;
      row.status = run.scores[k].status;
      if (run.series[k]) {
        row.path = run_name(row.run_id) + "__" + file_stem(row.indicator) + ".csv";
        write_ews_csv(dir / row.path, *run.series[k]);
      }
      rows.push_back(std::move(row));
    }
  }

  std::ofstream index(dir / "index.csv");
  if (!index) throw Error(ErrorKind::Io, "cannot write " + (dir / "index.csv").string());
  index << "run_id,label,indicator,path,status\n";
  for (const auto& r : rows)
    index << r.run_id << ',' << r.label << ',' << quote(r.indicator) << ','
          << quote(r.path.string()) << ',' << quote(r.status) << '\n';
  spdlog::info("analyze: {} traces written to {}", rows.size(), dir.string());
  return rows;
}

std::vector<EwsIndexRow> read_ews_index(const std::filesystem::path& index) {
  std::ifstream in(index);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + index.string());
  std::vector<EwsIndexRow> rows;
  std::string line;
  long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line_no == 1) continue;
    const auto f = split_quoted_csv(line);
    if (f.size() != 5) throw ParseError(line_no, "index row needs 5 fields");
    EwsIndexRow r;
    try {
      r.run_id = std::stoi(f[0]);
      r.label = std::stoi(f[1]);
    } catch (const std::logic_error&) {
      throw ParseError(line_no, "malformed run id or label");
    }
    r.indicator = f[2];
    r.path = f[3].empty() ? std::filesystem::path{} : index.parent_path() / f[3];
    r.status = f[4];
    rows.push_back(std::move(r));
  }
  return rows;
}

ExperimentReport cmd_roc(const ExperimentConfig& cfg) {
  const auto rows = read_ews_index(cfg.ews_dir() / "index.csv");
  std::vector<std::string> ids;
  std::vector<RunScore> scores;
  std::map<std::string, std::vector<std::pair<int, EwsSeries>>> traces;
  for (const auto& r : rows) {
    if (std::find(ids.begin(), ids.end(), r.indicator) == ids.end()) ids.push_back(r.indicator);
    if (r.label < 0) {
      spdlog::warn("roc: run {} is unlabeled and is ignored", r.run_id);
      continue;
    }
    RunScore s;
    s.run_id = r.run_id;
    s.tipping = r.label == 1;
    s.indicator = r.indicator;
    s.status = r.status;
    if (r.status == "ok") {
      try {
        EwsSeries ews = read_ews_csv(r.path);
        s.score = trend_score(ews).score;
        s.terminal_value = ews.values.back();
        traces[r.indicator].emplace_back(r.run_id, std::move(ews));
      } catch (const Error& e) {
        s.status = std::string(to_string(e.kind())) + ": " + e.what();
      }
    }
    scores.push_back(std::move(s));
  }
  if (ids.empty()) throw Error(ErrorKind::Configuration, "no analyzed indicators to score");

  ExperimentReport report = assemble_report(std::move(scores), ids);
  write_report(cfg.roc_dir(), report);

  ensure_dir(cfg.plot_dir());
  std::vector<PlotLine> all_curves;
  for (const auto& ind : report.indicators) {
    PlotLine curve{{}, {}, ind.indicator};
    for (const auto& p : ind.curve.points) {
      curve.x.push_back(p.fpr);
      curve.y.push_back(p.tpr);
    }
    std::ostringstream title;
    title << "ROC " << ind.indicator << " (AUC " << std::setprecision(3) << ind.curve.auc << ")";
    write_line_chart(cfg.plot_dir() / ("roc_" + file_stem(ind.indicator) + ".svg"), {curve},
                     {title.str(), "false positive rate", "true positive rate", true, true});
    all_curves.push_back(std::move(curve));
  }
  write_line_chart(cfg.plot_dir() / "roc_all.svg", all_curves,
                   {"ROC curves", "false positive rate", "true positive rate", true, true});

  for (const auto& [id, runs] : traces) {
    const bool sqrt_scale = cfg.plot_sqrt && id.rfind("reskmd", 0) == 0;
    for (const auto& [run_id, ews] : runs) {
      PlotLine line{ews.times, ews.values, id};
      if (sqrt_scale)
        for (double& v : line.y) v = std::sqrt(std::max(v, 0.0));
      write_line_chart(cfg.plot_dir() / ("ews_" + run_name(run_id) + "__" + file_stem(id) + ".svg"),
                       {line},
                       {run_name(run_id) + " " + id, "time", sqrt_scale ? "sqrt(value)" : "value"});
    }
  }
  for (const auto& ind : report.indicators)
    spdlog::info("roc: {} AUC {:.4f} ({} pos, {} neg, {} missing)", ind.indicator, ind.curve.auc,
                 ind.n_pos, ind.n_neg, ind.missing);
  return report;
}

ExperimentReport cmd_run_all(const ExperimentConfig& cfg) {
  cmd_simulate(cfg);
  cmd_analyze(cfg);
  return cmd_roc(cfg);
}

int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Configuration: return 2;
    case ErrorKind::Io: return 3;
    case ErrorKind::Parse:
    case ErrorKind::Ordering: return 4;
    case ErrorKind::InsufficientData: return 5;
    default: return 6;
  }
}

}  // namespace reskmd
