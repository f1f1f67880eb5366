// SPDX-License-Identifier: Apache-2.0
//
// Data-driven eigenpair residuals and their aggregate (ResKMD).
#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <vector>

#include "reskmd/dmd.hpp"
#include "reskmd/error.hpp"
#include "reskmd/types.hpp"

namespace reskmd {

/// Quadratic forms in (-kResidualTolerance, 0) are rounding noise and clamp to
/// zero; anything more negative means the inputs are inconsistent.
inline constexpr double kResidualTolerance = 1e-10;

struct EigenResidual {
  Complex eigenvalue;
  double res_sq = 0.0;
};

struct ResidualReport {
  std::vector<EigenResidual> per_pair;
  double reskmd_sq = 0.0;
  Index rank_used = 0;
  double window_time = 0.0;
};

/// xi^* [Psi_Y^*WPsi_Y - lambda (Psi_X^*WPsi_Y)^* - conj(lambda) Psi_X^*WPsi_Y
///       + |lambda|^2 Psi_X^*WPsi_X] xi, i.e. the weighted mean of
/// |phi(y_i) - lambda phi(x_i)|^2 for phi = Psi xi.
template <typename Scalar>
double residual_numerator(const GalerkinMatrices<Scalar>& g, Complex lambda,
                          const VectorXcd& xi) {
  if (xi.size() != g.xx.rows())
    throw Error(ErrorKind::Shape, "eigenvector length does not match the dictionary");
  const Complex yy = xi.dot(g.yy.template cast<Complex>() * xi);
  const Complex xy = xi.dot(g.xy.template cast<Complex>() * xi);
  const Complex xx = xi.dot(g.xx.template cast<Complex>() * xi);
  return yy.real() - 2.0 * (std::conj(lambda) * xy).real() + std::norm(lambda) * xx.real();
}

/// Squared residual of the candidate pair (lambda, Psi xi), normalised by
/// ||Psi xi||^2. Invariant under xi -> c xi.
template <typename Scalar>
double eigpair_residual(const GalerkinMatrices<Scalar>& g, Complex lambda, const VectorXcd& xi) {
  if (xi.size() != g.xx.rows())
    throw Error(ErrorKind::Shape, "eigenvector length does not match the dictionary");
  const double den = xi.dot(g.xx.template cast<Complex>() * xi).real();
  const double scale = g.xx.norm() * xi.squaredNorm();
  if (!(den > 1e-14 * scale) || !std::isfinite(den))
    throw Error(ErrorKind::DegenerateEigenfunction,
                "candidate eigenfunction has zero norm on the data");
  const double value = residual_numerator(g, lambda, xi) / den;
  if (!std::isfinite(value))
    throw Error(ErrorKind::NumericalInconsistency, "residual is not finite");
  if (value < -kResidualTolerance)
    throw Error(ErrorKind::NumericalInconsistency,
                "negative residual " + std::to_string(value) + " from inconsistent inputs");
  return std::max(value, 0.0);
}

/// Same quantity evaluated on the data as sum_i w_i |phi(y_i) - lambda phi(x_i)|^2
/// over sum_i w_i |phi(x_i)|^2, which avoids cancellation when the residual
/// is small relative to ||phi||^2.
template <typename Scalar>
double eigpair_residual(const DictionaryMatrices<Scalar>& dict, Complex lambda,
                        const VectorXcd& xi) {
  dict.validate();
  if (xi.size() != dict.size())
    throw Error(ErrorKind::Shape, "eigenvector length does not match the dictionary");
  const VectorXcd phi_x = dict.psi_x.template cast<Complex>() * xi;
  const VectorXcd phi_y = dict.psi_y.template cast<Complex>() * xi;
  const double den = dict.weights.dot(phi_x.cwiseAbs2());
  const double scale = dict.weights.dot(
      (dict.psi_x.template cast<Complex>().rowwise().squaredNorm()).real()) * xi.squaredNorm();
  if (!(den > 1e-14 * scale) || !std::isfinite(den))
    throw Error(ErrorKind::DegenerateEigenfunction,
                "candidate eigenfunction has zero norm on the data");
  const double value = dict.weights.dot((phi_y - lambda * phi_x).cwiseAbs2()) / den;
  if (!std::isfinite(value))
    throw Error(ErrorKind::NumericalInconsistency, "residual is not finite");
  return value;
}

/// Arithmetic mean of the squared residuals.
double reskmd(std::span<const EigenResidual> pairs);

/// Mean weighted by `mode_weights` (one nonnegative weight per pair).
double reskmd_mode_weighted(std::span<const EigenResidual> pairs, const VectorXd& mode_weights);

/// |v_n|^2 for each eigenpair: squared row norms of Xi^{-1} after scaling
/// each eigenfunction to unit norm on the data.
VectorXd koopman_mode_weights(const KoopmanApprox& approx);

enum class ModeWeighting { Uniform, KoopmanModes };

/// Residuals of every eigenpair of `approx` plus their aggregate.
ResidualReport residual_report(const KoopmanApprox& approx, double window_time = 0.0,
                               ModeWeighting weighting = ModeWeighting::Uniform);

using Rng = std::mt19937_64;
using Observable = std::function<double(const VectorXd&)>;

/// x -> F(x) + omega with omega drawn from `noise`.
struct StochasticMap {
  std::function<VectorXd(const VectorXd&)> deterministic;
  std::function<VectorXd(Rng&)> noise;

  VectorXd operator()(const VectorXd& x, Rng& rng) const { return deterministic(x) + noise(rng); }
};

struct BiasVarianceCheck {
  double lhs = 0.0;  ///< E ||g1 o F_w + g2||^2
  double rhs = 0.0;  ///< ||U g1 + g2||^2 + Var[g1 o F_w]
  /// |lhs - rhs| / lhs.
  double discrepancy = 0.0;
  /// Standard error of (lhs - rhs), also relative to lhs.
  double standard_error = 0.0;
};

/// Monte Carlo estimate of both sides of the bias-variance identity. Each of the
/// n samples draws a state and then five independent noise realisations, in
/// that order from one generator seeded with `seed`: the first feeds the left
/// side, the next two an unbiased product estimate of |U g1 + g2|^2 and the
/// last two an unbiased estimate of the conditional variance.
BiasVarianceCheck monte_carlo_bias_variance_check(const Observable& g1, const Observable& g2,
                                                  const std::function<VectorXd(Rng&)>& sampler,
                                                  const StochasticMap& map, long n,
                                                  std::uint64_t seed);

}  // namespace reskmd
