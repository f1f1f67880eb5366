// SPDX-License-Identifier: Apache-2.0
#include "reskmd/resdmd.hpp"

#include <cmath>

namespace reskmd {

double reskmd(std::span<const EigenResidual> pairs) {
  if (pairs.empty()) throw Error(ErrorKind::Configuration, "ResKMD needs at least one eigenpair");
  double sum = 0.0;
  for (const auto& p : pairs) sum += p.res_sq;
  return sum / static_cast<double>(pairs.size());
}

double reskmd_mode_weighted(std::span<const EigenResidual> pairs, const VectorXd& mode_weights) {
  if (pairs.empty()) throw Error(ErrorKind::Configuration, "ResKMD needs at least one eigenpair");
  if (mode_weights.size() != static_cast<Index>(pairs.size()))
    throw Error(ErrorKind::Shape, "one mode weight per eigenpair is required");
  if ((mode_weights.array() < 0.0).any() || !(mode_weights.sum() > 0.0))
    throw Error(ErrorKind::Configuration, "mode weights must be nonnegative with positive sum");
  double sum = 0.0;
  for (size_t i = 0; i < pairs.size(); ++i) sum += mode_weights(static_cast<Index>(i)) * pairs[i].res_sq;
  return sum / mode_weights.sum();
}

VectorXd koopman_mode_weights(const KoopmanApprox& approx) {
  const GalerkinMatrices<Complex> g = galerkin(approx.basis);
  MatrixXcd xi = approx.eigenvectors;
  for (Index n = 0; n < xi.cols(); ++n) {
    const double norm2 = xi.col(n).dot(g.xx * xi.col(n)).real();
    if (norm2 > 0.0) xi.col(n) /= std::sqrt(norm2);
  }
  const MatrixXcd modes = pseudo_inverse(xi);
  return modes.rowwise().squaredNorm();
}

ResidualReport residual_report(const KoopmanApprox& approx, double window_time,
                               ModeWeighting weighting) {
  ResidualReport report;
  report.rank_used = approx.rank;
  report.window_time = window_time;
  report.per_pair.reserve(static_cast<size_t>(approx.eigenvalues.size()));
  for (Index n = 0; n < approx.eigenvalues.size(); ++n) {
    const Complex lambda = approx.eigenvalues(n);
    report.per_pair.push_back({lambda, eigpair_residual(approx.basis, lambda, approx.eigenvectors.col(n))});
  }
  report.reskmd_sq = weighting == ModeWeighting::Uniform
                         ? reskmd(report.per_pair)
                         : reskmd_mode_weighted(report.per_pair, koopman_mode_weights(approx));
  return report;
}

BiasVarianceCheck monte_carlo_bias_variance_check(const Observable& g1, const Observable& g2,
                                                  const std::function<VectorXd(Rng&)>& sampler,
                                                  const StochasticMap& map, long n,
                                                  std::uint64_t seed) {
  if (n < 1000) throw Error(ErrorKind::Configuration, "Monte Carlo check needs n >= 1000");
  Rng rng(seed);
  double sum_lhs = 0.0;
  double sum_rhs = 0.0;
  double sum_d = 0.0;
  double sum_d2 = 0.0;
  for (long i = 0; i < n; ++i) {
    const VectorXd x = sampler(rng);
    const double shift = g2(x);
    const double a1 = g1(map(x, rng)) + shift;
    const double b2 = g1(map(x, rng)) + shift;
    const double b3 = g1(map(x, rng)) + shift;
    const double c4 = g1(map(x, rng));
    const double c5 = g1(map(x, rng));
    const double lhs = a1 * a1;
    const double rhs = b2 * b3 + 0.5 * (c4 - c5) * (c4 - c5);
    if (!std::isfinite(lhs) || !std::isfinite(rhs))
      throw Error(ErrorKind::NumericalInconsistency,
                  "non-finite Monte Carlo sample at index " + std::to_string(i));
    sum_lhs += lhs;
    sum_rhs += rhs;
    sum_d += lhs - rhs;
    sum_d2 += (lhs - rhs) * (lhs - rhs);
  }
  const double dn = static_cast<double>(n);
  BiasVarianceCheck out;
  out.lhs = sum_lhs / dn;
  out.rhs = sum_rhs / dn;
  const double mean_d = sum_d / dn;
  const double var_d = std::max(0.0, (sum_d2 - dn * mean_d * mean_d) / (dn - 1.0));
  out.discrepancy = std::abs(out.lhs - out.rhs) / out.lhs;
  out.standard_error = std::sqrt(var_d / dn) / out.lhs;
  return out;
}

}  // namespace reskmd
