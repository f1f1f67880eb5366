// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "reskmd/timeseries.hpp"
#include "reskmd/types.hpp"

namespace reskmd {

/// Autonomous-in-state vector field parameterised by a bifurcation parameter.
struct OdeSystem {
  int dim = 1;
  std::function<VectorXd(const VectorXd& state, double beta)> drift;
  std::string name;
  /// Parameter value at which the attracting state is lost.
  double critical_beta = 0.0;
  /// Standard initial condition for this system.
  VectorXd default_x0;
};

/// dx/dt = -(x+1)((x-1)^2 - beta); stable branch 1 + sqrt(beta) dies at beta = 0.
OdeSystem saddle_node();

/// Subcritical Hopf normal form with angular frequency 2*pi; the origin loses
/// stability at beta = 0.
OdeSystem hopf();

/// Looks a system up by name ("saddle_node" or "hopf").
OdeSystem system_by_name(const std::string& name);

struct RampSchedule {
  double beta0 = 1.0;
  /// dbeta/dt; zero encodes a fixed-parameter (non-tipping) run.
  double rate = 0.0;
  double t_end = 200.0;
  std::optional<double> clamp;

  double beta_at(double t) const;
  /// First time beta reaches `critical` within [0, t_end], if it does.
  std::optional<double> crossing_time(double critical) const;
  void validate() const;
};

struct SimConfig {
  double dt = 0.01;
  int sample_every = 10;
  /// Standard deviation of the isotropic kick added at each sample.
  double sigma = 0.01;
  std::uint64_t seed = 0;
  /// Empty selects the system's default initial state.
  VectorXd x0;

  void validate() const;
};

/// One Dormand-Prince fifth-order step. `t` is the time at the start of the
/// step and is only used to report blow-ups.
VectorXd rk5_step(const OdeSystem& sys, const VectorXd& state, double beta, double dt,
                  double t = 0.0);

/// Same step with beta evaluated at each stage time along a ramp.
VectorXd rk5_step(const OdeSystem& sys, const VectorXd& state, const RampSchedule& ramp,
                  double t, double dt);

struct Trajectory {
  RawSeries series;
  bool diverged = false;
  std::optional<double> escape_time;
};

/// Fixed-step integration with noise kicks at the sampled steps. The noisy
/// sample is fed back as the new state. Deterministic in (cfg.seed, inputs).
Trajectory simulate(const OdeSystem& sys, const RampSchedule& ramp, const SimConfig& cfg);

struct EnsembleMember {
  int run_id = 0;
  double rate = 0.0;
  std::uint64_t seed = 0;
  bool tipping = false;
  Trajectory trajectory;
  /// Samples strictly before the parameter crossing; the whole run otherwise.
  RawSeries pre_tipping;
};

/// Seed for run `index` derived from a base seed (splitmix64 mixing).
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index);

/// n_per_rate runs per rate, run ids assigned in order. `ramp` supplies beta0,
/// t_end and clamp; its rate is replaced by each entry of `rates`.
std::vector<EnsembleMember> make_ensemble(const OdeSystem& sys, const RampSchedule& ramp,
                                          const std::vector<double>& rates, int n_per_rate,
                                          const SimConfig& cfg);

struct ManifestEntry {
  int run_id = 0;
  double rate = 0.0;
  std::uint64_t seed = 0;
  bool tipping = false;
  std::filesystem::path path;
};

/// Writes one pre-tipping CSV per member plus `manifest.csv`
/// (run_id,rate,seed,label,path) into `dir`. Returns the manifest entries.
std::vector<ManifestEntry> write_ensemble(const std::filesystem::path& dir,
                                          const std::vector<EnsembleMember>& members);

/// Reads a manifest; relative trajectory paths resolve against its directory.
std::vector<ManifestEntry> read_manifest(const std::filesystem::path& manifest);

}  // namespace reskmd
