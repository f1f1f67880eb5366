// SPDX-License-Identifier: Apache-2.0
#include "reskmd/dynamics.hpp"

#include <array>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <random>
#include <sstream>

#include "reskmd/error.hpp"

namespace reskmd {

namespace {

// Dormand-Prince 5(4) tableau, fifth-order weights.
constexpr std::array<double, 6> kNodes = {0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0};
constexpr double kA[6][5] = {
    {0, 0, 0, 0, 0},
    {1.0 / 5.0, 0, 0, 0, 0},
    {3.0 / 40.0, 9.0 / 40.0, 0, 0, 0},
    {44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0, 0},
    {19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0},
    {9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0},
};
constexpr std::array<double, 6> kWeights = {35.0 / 384.0,     0.0,          500.0 / 1113.0,
                                            125.0 / 192.0,    -2187.0 / 6784.0, 11.0 / 84.0};

constexpr double kEscapeNorm = 1e6;

template <typename BetaAt>
VectorXd dormand_prince(const OdeSystem& sys, const VectorXd& state, BetaAt beta_at, double t,
                        double dt) {
  if (!(dt > 0.0)) throw Error(ErrorKind::Configuration, "dt must be positive");
  std::array<VectorXd, 6> k;
  for (int s = 0; s < 6; ++s) {
    VectorXd stage = state;
    for (int j = 0; j < s; ++j) stage.noalias() += dt * kA[s][j] * k[j];
    k[s] = sys.drift(stage, beta_at(t + kNodes[s] * dt));
    if (!k[s].allFinite())
      throw DivergenceError(t, sys.name + ": non-finite stage at t=" + std::to_string(t));
  }
  VectorXd next = state;
  for (int s = 0; s < 6; ++s)
    if (kWeights[s] != 0.0) next.noalias() += dt * kWeights[s] * k[s];
  if (!next.allFinite())
    throw DivergenceError(t, sys.name + ": non-finite state at t=" + std::to_string(t));
  return next;
}

std::string format_double(double v) {
  std::ostringstream os;
  os << std::setprecision(std::numeric_limits<double>::max_digits10) << v;
  return os.str();
}

}  // namespace

OdeSystem saddle_node() {
  OdeSystem sys;
  sys.dim = 1;
  sys.name = "saddle_node";
  sys.critical_beta = 0.0;
  sys.default_x0 = VectorXd::Constant(1, 1.8);
  sys.drift = [](const VectorXd& x, double beta) {
    VectorXd dx(1);
    const double d = x(0) - 1.0;
    dx(0) = -(x(0) + 1.0) * (d * d - beta);
    return dx;
  };
  return sys;
}

OdeSystem hopf() {
  OdeSystem sys;
  sys.dim = 2;
  sys.name = "hopf";
  sys.critical_beta = 0.0;
  sys.default_x0 = (VectorXd(2) << 0.1, 0.0).finished();
  sys.drift = [](const VectorXd& s, double beta) {
    constexpr double omega = 2.0 * 3.14159265358979323846;
    const double x = s(0);
    const double y = s(1);
    const double r2 = x * x + y * y;
    const double cubic = r2 * (r2 - 1.0);
    VectorXd dx(2);
    dx(0) = beta * x - omega * y - x * cubic;
    dx(1) = omega * x + beta * y - y * cubic;
    return dx;
  };
  return sys;
}

OdeSystem system_by_name(const std::string& name) {
  if (name == "saddle_node") return saddle_node();
  if (name == "hopf") return hopf();
  throw Error(ErrorKind::Configuration, "unknown system '" + name + "'");
}

double RampSchedule::beta_at(double t) const {
  double beta = beta0 + rate * t;
  if (clamp) beta = rate < 0.0 ? std::max(beta, *clamp) : std::min(beta, *clamp);
  return beta;
}

std::optional<double> RampSchedule::crossing_time(double critical) const {
  if (rate == 0.0) return std::nullopt;
  const double t = (critical - beta0) / rate;
  if (t < 0.0 || t > t_end) return std::nullopt;
  if (clamp && ((rate < 0.0 && *clamp > critical) || (rate > 0.0 && *clamp < critical)))
    return std::nullopt;
  return t;
}

void RampSchedule::validate() const {
  if (!(t_end > 0.0)) throw Error(ErrorKind::Configuration, "t_end must be positive");
  if (!std::isfinite(beta0) || !std::isfinite(rate))
    throw Error(ErrorKind::Configuration, "ramp parameters must be finite");
}

void SimConfig::validate() const {
  if (!(dt > 0.0)) throw Error(ErrorKind::Configuration, "dt must be positive");
  if (sample_every < 1) throw Error(ErrorKind::Configuration, "sample_every must be >= 1");
  if (!(sigma >= 0.0)) throw Error(ErrorKind::Configuration, "sigma must be nonnegative");
}

VectorXd rk5_step(const OdeSystem& sys, const VectorXd& state, double beta, double dt,
                  double t) {
  return dormand_prince(sys, state, [beta](double) { return beta; }, t, dt);
}

VectorXd rk5_step(const OdeSystem& sys, const VectorXd& state, const RampSchedule& ramp,
                  double t, double dt) {
  return dormand_prince(sys, state, [&ramp](double s) { return ramp.beta_at(s); }, t, dt);
}

Trajectory simulate(const OdeSystem& sys, const RampSchedule& ramp, const SimConfig& cfg) {
  ramp.validate();
  cfg.validate();
  VectorXd state = cfg.x0.size() ? cfg.x0 : sys.default_x0;
  if (state.size() != sys.dim)
    throw Error(ErrorKind::Configuration, "initial state has wrong dimension for " + sys.name);

  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> normal(0.0, 1.0);

  const long steps = std::lround(ramp.t_end / cfg.dt);
  std::vector<double> times{0.0};
  std::vector<VectorXd> samples{state};
  bool diverged = false;
  std::optional<double> escape;

  for (long k = 0; k < steps; ++k) {
    const double t = static_cast<double>(k) * cfg.dt;
    try {
      state = rk5_step(sys, state, ramp, t, cfg.dt);
    } catch (const DivergenceError& e) {
      diverged = true;
      escape = e.time();
      break;
    }
    if (state.lpNorm<Eigen::Infinity>() > kEscapeNorm) {
      diverged = true;
      escape = t + cfg.dt;
      break;
    }
    if ((k + 1) % cfg.sample_every == 0) {
      if (cfg.sigma > 0.0)
        for (Index i = 0; i < state.size(); ++i) state(i) += cfg.sigma * normal(rng);
      times.push_back(static_cast<double>(k + 1) * cfg.dt);
      samples.push_back(state);
    }
  }
  if (samples.size() < 2)
    throw Error(ErrorKind::InsufficientData, sys.name + ": run produced fewer than 2 samples");

  VectorXd tv = Eigen::Map<VectorXd>(times.data(), static_cast<Index>(times.size()));
  MatrixXd values(static_cast<Index>(samples.size()), sys.dim);
  for (Index i = 0; i < values.rows(); ++i) values.row(i) = samples[i].transpose();
  return Trajectory{RawSeries(std::move(tv), std::move(values), sys.name), diverged, escape};
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index) {
  std::uint64_t z = base + 0x9E3779B97F4A7C15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

std::vector<EnsembleMember> make_ensemble(const OdeSystem& sys, const RampSchedule& ramp,
                                          const std::vector<double>& rates, int n_per_rate,
                                          const SimConfig& cfg) {
  if (rates.empty()) throw Error(ErrorKind::Configuration, "ensemble needs at least one rate");
  if (n_per_rate < 1) throw Error(ErrorKind::Configuration, "n_per_rate must be >= 1");

  std::vector<EnsembleMember> out;
  out.reserve(rates.size() * static_cast<size_t>(n_per_rate));
  int run_id = 0;
  for (double rate : rates) {
    RampSchedule run_ramp = ramp;
    run_ramp.rate = rate;
    const auto crossing = run_ramp.crossing_time(sys.critical_beta);
    for (int k = 0; k < n_per_rate; ++k, ++run_id) {
      SimConfig run_cfg = cfg;
      run_cfg.seed = derive_seed(cfg.seed, static_cast<std::uint64_t>(run_id));
      Trajectory traj = simulate(sys, run_ramp, run_cfg);

      Index keep = traj.series.length();
      if (crossing) {
        const VectorXd& t = traj.series.times();
        keep = 0;
        while (keep < t.size() && t(keep) < *crossing) ++keep;
      }
      RawSeries pre = traj.series.slice(0, keep);
      out.push_back(EnsembleMember{run_id, rate, run_cfg.seed, crossing.has_value(),
                                   std::move(traj), std::move(pre)});
    }
  }
  return out;
}

std::vector<ManifestEntry> write_ensemble(const std::filesystem::path& dir,
                                          const std::vector<EnsembleMember>& members) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error(ErrorKind::Io, "cannot create " + dir.string() + ": " + ec.message());

  std::vector<ManifestEntry> entries;
  std::ofstream manifest(dir / "manifest.csv");
  if (!manifest) throw Error(ErrorKind::Io, "cannot write " + (dir / "manifest.csv").string());
  manifest << "run_id,rate,seed,label,path\n";
  for (const auto& m : members) {
    std::ostringstream name;
    name << "run_" << std::setw(4) << std::setfill('0') << m.run_id << ".csv";
    write_csv(dir / name.str(), m.pre_tipping);
    manifest << m.run_id << ',' << format_double(m.rate) << ',' << m.seed << ','
             << (m.tipping ? 1 : 0) << ',' << name.str() << '\n';
    entries.push_back(ManifestEntry{m.run_id, m.rate, m.seed, m.tipping, dir / name.str()});
  }
  if (!manifest) throw Error(ErrorKind::Io, "write failed for manifest in " + dir.string());
  return entries;
}

std::vector<ManifestEntry> read_manifest(const std::filesystem::path& manifest) {
  std::ifstream in(manifest);
  if (!in) throw Error(ErrorKind::Io, "cannot open manifest " + manifest.string());
  std::vector<ManifestEntry> out;
  std::string line;
  long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line_no == 1) continue;
    std::stringstream ss(line);
    std::string id, rate, seed, label, path;
    if (!std::getline(ss, id, ',') || !std::getline(ss, rate, ',') ||
        !std::getline(ss, seed, ',') || !std::getline(ss, label, ',') ||
        !std::getline(ss, path))
      throw ParseError(line_no, "manifest row needs 5 fields");
    try {
      ManifestEntry e;
      e.run_id = std::stoi(id);
      e.rate = std::stod(rate);
      e.seed = std::stoull(seed);
      e.tipping = std::stoi(label) != 0;
      std::filesystem::path p(path);
      e.path = p.is_absolute() ? p : manifest.parent_path() / p;
      out.push_back(std::move(e));
    } catch (const std::logic_error&) {
      throw ParseError(line_no, "malformed manifest field");
    }
  }
  return out;
}

}  // namespace reskmd
