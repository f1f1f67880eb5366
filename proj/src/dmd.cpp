// SPDX-License-Identifier: Apache-2.0
#include "reskmd/dmd.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

#include <json.hpp>
#include <spdlog/spdlog.h>

namespace reskmd {

void RankPolicy::validate() const {
  if (fixed < 0) throw Error(ErrorKind::Configuration, "fixed rank must be >= 0");
  if (fixed == 0 && !(energy > 0.0 && energy <= 1.0))
    throw Error(ErrorKind::Configuration, "energy fraction must lie in (0, 1]");
  if (max_rank < 1) throw Error(ErrorKind::Configuration, "max_rank must be >= 1");
}

Index select_rank(const VectorXd& s, const RankPolicy& policy, std::optional<double> total_energy) {
  policy.validate();
  if (s.size() == 0 || !(s(0) > 0.0)) return 0;
  Index numerical = 0;
  while (numerical < s.size() && s(numerical) >= kPinvCutoff * s(0) && s(numerical) > 0.0)
    ++numerical;
  if (policy.fixed > 0) return std::min(policy.fixed, numerical);

  const double total = total_energy ? *total_energy : s.squaredNorm();
  double acc = 0.0;
  Index r = 0;
  while (r < s.size()) {
    acc += s(r) * s(r);
    ++r;
    if (acc >= policy.energy * total) break;
  }
  return std::max<Index>(1, std::min({r, policy.max_rank, numerical}));
}

std::vector<Index> eigen_order(const VectorXcd& eigenvalues) {
  // Quantize before comparing so conjugate pairs and repeated roots that agree
  // to rounding order by the tie-breakers rather than by noise.
  auto quantize = [](double v) { return std::round(v * 1e10); };
  std::vector<Index> order(static_cast<size_t>(eigenvalues.size()));
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) {
    const Complex la = eigenvalues(a);
    const Complex lb = eigenvalues(b);
    const double ma = quantize(std::abs(la));
    const double mb = quantize(std::abs(lb));
    if (ma != mb) return ma > mb;
    const double ra = quantize(la.real());
    const double rb = quantize(lb.real());
    if (ra != rb) return ra > rb;
    return la.imag() > lb.imag();
  });
  return order;
}

KoopmanApprox koopman_from_dictionary(DictionaryMatrices<Complex> dict, std::string method) {
  const GalerkinMatrices<Complex> g = galerkin(dict);
  const MatrixXcd k = pseudo_inverse(g.xx) * g.xy;

  Eigen::ComplexEigenSolver<MatrixXcd> eig(k, true);
  if (eig.info() != Eigen::Success)
    throw Error(ErrorKind::NumericalInconsistency, method + ": eigendecomposition failed");

  const auto order = eigen_order(eig.eigenvalues());
  const Index r = k.rows();
  KoopmanApprox out;
  out.eigenvalues.resize(r);
  out.eigenvectors.resize(r, r);
  for (Index i = 0; i < r; ++i) {
    out.eigenvalues(i) = eig.eigenvalues()(order[i]);
    out.eigenvectors.col(i) = eig.eigenvectors().col(order[i]).normalized();
  }
  out.k_matrix = k;
  out.rank = r;
  out.requested_rank = r;
  out.basis = std::move(dict);
  out.method = std::move(method);
  return out;
}

KoopmanApprox exact_dmd(const SnapshotSet& snapshots, const RankPolicy& policy) {
  policy.validate();
  const Index rows = snapshots.size();
  const Index cols = snapshots.dim();
  if (policy.fixed > std::min(rows, cols))
    throw Error(ErrorKind::Rank, "requested rank " + std::to_string(policy.fixed) +
                                     " exceeds snapshot matrix dimensions");
  if (!snapshots.x.allFinite() || !snapshots.y.allFinite())
    throw Error(ErrorKind::DegenerateWindow, "snapshot data contain non-finite values");

  const MatrixXd scaled = snapshots.x / static_cast<double>(rows);
  Eigen::BDCSVD<MatrixXd> svd(scaled, Eigen::ComputeThinV);
  const VectorXd& s = svd.singularValues();
  const Index r = select_rank(s, policy);
  if (r == 0) throw Error(ErrorKind::DegenerateWindow, "snapshot matrix is identically zero");

  const Index requested = policy.fixed > 0 ? policy.fixed : r;
  const MatrixXd proj = svd.matrixV().leftCols(r) * s.head(r).cwiseInverse().asDiagonal();
  DictionaryMatrices<Complex> dict{(snapshots.x * proj).cast<Complex>(),
                                   (snapshots.y * proj).cast<Complex>(), snapshots.weights};
  KoopmanApprox out = koopman_from_dictionary(std::move(dict), "exact_dmd");
  out.requested_rank = requested;
  return out;
}

namespace {

SymmetricEigen dense_eigen(const MatrixXd& a) {
  Eigen::SelfAdjointEigenSolver<MatrixXd> eig(a);
  if (eig.info() != Eigen::Success)
    throw Error(ErrorKind::NumericalInconsistency, "symmetric eigendecomposition failed");
  return {eig.eigenvalues().reverse(), eig.eigenvectors().rowwise().reverse()};
}

// Subspace iteration on `block` columns; nullopt unless the leading `want`
// Ritz pairs converge.
std::optional<SymmetricEigen> subspace_iteration(const MatrixXd& a, Index want, Index block) {
  const Index n = a.rows();
  std::mt19937_64 rng(0x5eed);
  std::normal_distribution<double> normal;
  MatrixXd q = MatrixXd::NullaryExpr(n, block, [&] { return normal(rng); });
  for (int iter = 0; iter < 200; ++iter) {
    q = Eigen::HouseholderQR<MatrixXd>(q).householderQ() * MatrixXd::Identity(n, block);
    MatrixXd aq = a * q;
    const MatrixXd h = q.transpose() * aq;
    Eigen::SelfAdjointEigenSolver<MatrixXd> small(0.5 * (h + h.transpose()));
    const VectorXd theta = small.eigenvalues().reverse();
    const MatrixXd s = small.eigenvectors().rowwise().reverse();
    q = q * s;
    aq = aq * s;
    const double scale = std::abs(theta(0));
    if (!(scale > 0.0)) return std::nullopt;
    bool converged = true;
    for (Index i = 0; i < want && converged; ++i)
      converged = (aq.col(i) - theta(i) * q.col(i)).norm() <= 1e-12 * scale;
    if (converged) return SymmetricEigen{theta.head(want), q.leftCols(want)};
    q = std::move(aq);
  }
  return std::nullopt;
}

}  // namespace

SymmetricEigen leading_eigenpairs(const MatrixXd& a, const RankPolicy& policy) {
  policy.validate();
  const Index n = a.rows();
  const Index cap = std::min(n, policy.fixed > 0 ? policy.fixed : policy.max_rank);
  const double trace = a.trace();
  const double floor = static_cast<double>(n) * std::numeric_limits<double>::epsilon();
  for (Index want = std::min<Index>(cap, 8);; want = std::min(cap, 2 * want)) {
    const Index block = want + 16;
    if (n < 256 || 3 * block > n) break;
    auto part = subspace_iteration(a, want, block);
    if (!part) break;
    VectorXd sigma = part->values.cwiseMax(0.0);
    for (Index i = 0; i < want; ++i)
      sigma(i) = sigma(i) > floor * sigma(0) ? std::sqrt(sigma(i)) : 0.0;
    if (want == cap || select_rank(sigma, policy, std::max(trace, 0.0)) < want) return *part;
  }
  return dense_eigen(a);
}

void KernelSpec::validate() const {
  if (!(gamma > 0.0)) throw Error(ErrorKind::Configuration, "kernel gamma must be positive");
  if (kind == KernelKind::Polynomial && degree < 1)
    throw Error(ErrorKind::Configuration, "polynomial degree must be >= 1");
}

std::string KernelSpec::id() const {
  std::ostringstream os;
  os << std::setprecision(15);
  switch (kind) {
    case KernelKind::Polynomial:
      os << "polynomial," << gamma << ',' << degree << ',' << coef0;
      break;
    case KernelKind::Rbf: os << "rbf," << gamma; break;
    case KernelKind::Laplacian: os << "laplacian," << gamma; break;
  }
  return os.str();
}

KernelSpec KernelSpec::parse(const std::string& text) {
  std::vector<std::string> parts;
  std::stringstream ss(text);
  for (std::string p; std::getline(ss, p, ',');) parts.push_back(p);
  if (parts.size() < 2)
    throw Error(ErrorKind::Configuration, "kernel '" + text + "' needs kind,gamma");
  KernelSpec k;
  if (parts[0] == "rbf") k.kind = KernelKind::Rbf;
  else if (parts[0] == "laplacian") k.kind = KernelKind::Laplacian;
  else if (parts[0] == "polynomial") k.kind = KernelKind::Polynomial;
  else throw Error(ErrorKind::Configuration, "unknown kernel kind '" + parts[0] + "'");
  try {
    k.gamma = std::stod(parts[1]);
    if (k.kind == KernelKind::Polynomial) {
      if (parts.size() > 2) k.degree = std::stoi(parts[2]);
      if (parts.size() > 3) k.coef0 = std::stod(parts[3]);
    } else if (parts.size() > 2) {
      throw Error(ErrorKind::Configuration, "kernel '" + text + "' has extra fields");
    }
  } catch (const std::logic_error&) {
    throw Error(ErrorKind::Configuration, "malformed kernel '" + text + "'");
  }
  k.validate();
  return k;
}

MatrixXd kernel_matrix(const MatrixXd& a, const MatrixXd& b, const KernelSpec& kernel) {
  kernel.validate();
  if (a.cols() != b.cols())
    throw Error(ErrorKind::Shape, "kernel arguments have different dimensions");
  switch (kernel.kind) {
    case KernelKind::Polynomial: {
      MatrixXd inner = kernel.gamma * (a * b.transpose());
      return (inner.array() + kernel.coef0).pow(static_cast<double>(kernel.degree)).matrix();
    }
    case KernelKind::Rbf: {
      // Distances are translation invariant; centring keeps the Gram-trick
      // cancellation small when samples sit far from the origin.
      const Eigen::RowVectorXd centre = a.colwise().mean();
      const MatrixXd ac = a.rowwise() - centre;
      const MatrixXd bc = b.rowwise() - centre;
      const VectorXd na = ac.rowwise().squaredNorm();
      const VectorXd nb = bc.rowwise().squaredNorm();
      MatrixXd d2 = -2.0 * (ac * bc.transpose());
      d2.colwise() += na;
      d2.rowwise() += nb.transpose();
      return (-kernel.gamma * d2.cwiseMax(0.0)).array().exp().matrix();
    }
    case KernelKind::Laplacian: {
      MatrixXd out(a.rows(), b.rows());
      for (Index j = 0; j < b.rows(); ++j)
        for (Index i = 0; i < a.rows(); ++i)
          out(i, j) = std::exp(-kernel.gamma * (a.row(i) - b.row(j)).lpNorm<1>());
      return out;
    }
  }
  throw Error(ErrorKind::Configuration, "unknown kernel kind");
}

GramPair gram_matrices(const MatrixXd& x_rows, const MatrixXd& y_rows, const KernelSpec& kernel) {
  if (x_rows.rows() != y_rows.rows() || x_rows.cols() != y_rows.cols())
    throw Error(ErrorKind::Shape, "x and y snapshot rows differ in shape");
  return {kernel_matrix(x_rows, x_rows, kernel), kernel_matrix(y_rows, x_rows, kernel)};
}

KoopmanApprox kernel_edmd(const MatrixXd& x_rows, const MatrixXd& y_rows, const VectorXd& weights,
                          const KernelSpec& kernel, const RankPolicy& policy) {
  policy.validate();
  const Index n = x_rows.rows();
  if (weights.size() != n) throw Error(ErrorKind::Shape, "weights do not match snapshot count");
  if (policy.fixed > n)
    throw Error(ErrorKind::Rank, "requested rank exceeds snapshot count");

  const GramPair gram = gram_matrices(x_rows, y_rows, kernel);
  if (!gram.psi_x.allFinite() || !gram.psi_y.allFinite())
    throw Error(ErrorKind::DegenerateWindow, "kernel evaluations are not finite");
  const VectorXd sqrt_w = weights.cwiseSqrt();
  const MatrixXd gx = sqrt_w.asDiagonal() * gram.psi_x * sqrt_w.asDiagonal();
  const MatrixXd gyx = sqrt_w.asDiagonal() * gram.psi_y * sqrt_w.asDiagonal();

  // sqrt(W) Psi_X Psi_X^* sqrt(W) = U Sigma^2 U^*.
  const SymmetricEigen eig = leading_eigenpairs(0.5 * (gx + gx.transpose()), policy);
  const VectorXd& lam = eig.values;
  const MatrixXd& vecs = eig.vectors;
  const Index m = lam.size();
  // Eigenvalues below n * eps * lambda_1 are rounding noise; their square
  // roots would otherwise pass the sigma cutoff.
  const double noise_floor = static_cast<double>(n) * std::numeric_limits<double>::epsilon() *
                             std::max(lam(0), 0.0);
  VectorXd sigma(m);
  for (Index i = 0; i < m; ++i) sigma(i) = lam(i) > noise_floor ? std::sqrt(lam(i)) : 0.0;
  const double energy =
      m == n ? sigma.squaredNorm() : std::max(gx.trace(), 0.0);

  const Index r = select_rank(sigma, policy, energy);
  if (r == 0) throw Error(ErrorKind::DegenerateWindow, "kernel Gram matrix is numerically zero");
  const Index requested = policy.fixed > 0 ? policy.fixed : r;
  if (r < requested)
    spdlog::warn("kernel_edmd: rank truncated from {} to {} (sigma below cutoff)", requested, r);

  const MatrixXd u_sinv = vecs.leftCols(r) * sigma.head(r).cwiseInverse().asDiagonal();
  const MatrixXd k_tilde = u_sinv.transpose() * gyx * u_sinv;

  Eigen::EigenSolver<MatrixXd> keig(k_tilde, true);
  if (keig.info() != Eigen::Success)
    throw Error(ErrorKind::NumericalInconsistency, "kernel Koopman eigendecomposition failed");
  const auto order = eigen_order(keig.eigenvalues());
  MatrixXcd z(r, r);
  for (Index i = 0; i < r; ++i) z.col(i) = keig.eigenvectors().col(order[i]);

  Eigen::ColPivHouseholderQR<MatrixXcd> qr(z);
  const MatrixXcd q = qr.householderQ() * MatrixXcd::Identity(r, r);
  std::vector<Index> pivots(static_cast<size_t>(r));
  for (Index i = 0; i < r; ++i) pivots[static_cast<size_t>(i)] = qr.colsPermutation().indices()(i);

  // Selected dictionary psi_j(x) = [S(x, x_1) ... S(x, x_n)] (U Sigma^+) Q_j.
  const MatrixXcd selector = u_sinv.cast<Complex>() * q;
  DictionaryMatrices<Complex> dict{gram.psi_x.cast<Complex>() * selector,
                                   gram.psi_y.cast<Complex>() * selector, weights};
  KoopmanApprox out = koopman_from_dictionary(std::move(dict), "kernel_edmd:" + kernel.id());
  out.requested_rank = requested;
  out.pivots = std::move(pivots);
  return out;
}

std::string to_debug_json(const KoopmanApprox& approx) {
  nlohmann::json j;
  j["method"] = approx.method;
  j["rank"] = approx.rank;
  j["requested_rank"] = approx.requested_rank;
  j["samples"] = approx.basis.samples();
  auto& ev = j["eigenvalues"] = nlohmann::json::array();
  for (Index i = 0; i < approx.eigenvalues.size(); ++i)
    ev.push_back({approx.eigenvalues(i).real(), approx.eigenvalues(i).imag()});
  auto& km = j["k_matrix"] = nlohmann::json::array();
  for (Index i = 0; i < approx.k_matrix.rows(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (Index c = 0; c < approx.k_matrix.cols(); ++c)
      row.push_back({approx.k_matrix(i, c).real(), approx.k_matrix(i, c).imag()});
    km.push_back(std::move(row));
  }
  j["pivots"] = approx.pivots;
  return j.dump(2);
}

}  // namespace reskmd
