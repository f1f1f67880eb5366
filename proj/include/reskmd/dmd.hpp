// SPDX-License-Identifier: Apache-2.0
//
// Finite-dimensional Koopman approximations from snapshot data: exact DMD on
// delay coordinates and kernel EDMD with a QR-selected dictionary.
#pragma once

#include <optional>
#include <string>
#include <vector>

#include <Eigen/Eigenvalues>
#include <Eigen/QR>
#include <Eigen/SVD>

#include "reskmd/error.hpp"
#include "reskmd/timeseries.hpp"
#include "reskmd/types.hpp"

namespace reskmd {

/// Singular values below this fraction of the largest are treated as zero.
inline constexpr double kPinvCutoff = 1e-12;

/// How many singular directions a decomposition keeps.
///
/// With `fixed == 0` the rank is the smallest r whose leading squared singular
/// values reach `energy` of the total, capped at `max_rank`. A positive
/// `fixed` requests exactly that rank. Either way directions below
/// kPinvCutoff * sigma_1 are dropped.
struct RankPolicy {
  double energy = 0.999;
  Index max_rank = 50;
  Index fixed = 0;

  static RankPolicy fixed_rank(Index r) {
    RankPolicy p;
    p.fixed = r;
    p.max_rank = r;
    return p;
  }
  void validate() const;
};

/// Rank chosen for descending singular values `s` under `policy`. Returns 0
/// only when every singular value is zero. `total_energy` is the sum of all
/// squared singular values when `s` holds only the leading ones.
Index select_rank(const VectorXd& s, const RankPolicy& policy,
                  std::optional<double> total_energy = std::nullopt);

/// Leading eigenpairs (descending) of a symmetric positive semi-definite
/// matrix: at least enough to apply `policy` with total energy trace(a).
/// Block subspace iteration with Rayleigh-Ritz; every returned pair has
/// residual below 1e-12 * lambda_1, otherwise the dense solver is used.
struct SymmetricEigen {
  VectorXd values;
  MatrixXd vectors;
};
SymmetricEigen leading_eigenpairs(const MatrixXd& a, const RankPolicy& policy);

template <typename Scalar>
struct TruncatedSvd {
  Matrix<Scalar> u;
  Vector<RealOf<Scalar>> s;
  Matrix<Scalar> v;
};

/// Leading r singular triplets, sigma_1 >= ... >= sigma_r >= 0.
template <typename Derived>
TruncatedSvd<typename Derived::Scalar> truncated_svd(const Eigen::MatrixBase<Derived>& mat,
                                                     Index r) {
  using Scalar = typename Derived::Scalar;
  if (r < 1 || r > std::min(mat.rows(), mat.cols()))
    throw Error(ErrorKind::Rank, "truncation rank " + std::to_string(r) +
                                     " outside [1, min(rows, cols)]");
  Eigen::BDCSVD<Matrix<Scalar>> svd(mat.derived(), Eigen::ComputeThinU | Eigen::ComputeThinV);
  return {svd.matrixU().leftCols(r), svd.singularValues().head(r), svd.matrixV().leftCols(r)};
}

/// Moore-Penrose pseudoinverse with a relative singular value cutoff.
template <typename Derived>
Matrix<typename Derived::Scalar> pseudo_inverse(const Eigen::MatrixBase<Derived>& mat,
                                                double rel_cutoff = kPinvCutoff) {
  using Scalar = typename Derived::Scalar;
  Eigen::JacobiSVD<Matrix<Scalar>> svd(mat.derived(), Eigen::ComputeThinU | Eigen::ComputeThinV);
  const auto& s = svd.singularValues();
  Vector<RealOf<Scalar>> inv = Vector<RealOf<Scalar>>::Zero(s.size());
  if (s.size() > 0 && s(0) > 0) {
    for (Index i = 0; i < s.size(); ++i)
      if (s(i) >= rel_cutoff * s(0)) inv(i) = 1.0 / s(i);
  }
  return svd.matrixV() * inv.asDiagonal() * svd.matrixU().adjoint();
}

/// Dictionary evaluated on snapshot pairs: row i holds Psi(x_i) / Psi(y_i).
template <typename Scalar>
struct DictionaryMatrices {
  Matrix<Scalar> psi_x;
  Matrix<Scalar> psi_y;
  VectorXd weights;

  Index samples() const { return psi_x.rows(); }
  Index size() const { return psi_x.cols(); }
  void validate() const {
    if (psi_x.rows() != psi_y.rows() || psi_x.cols() != psi_y.cols() ||
        weights.size() != psi_x.rows())
      throw Error(ErrorKind::Shape, "dictionary matrices and weights disagree in shape");
    if (!psi_x.allFinite() || !psi_y.allFinite() || !weights.allFinite())
      throw Error(ErrorKind::NumericalInconsistency, "dictionary matrices contain non-finite values");
  }
};

/// Weighted second-moment matrices of a dictionary:
/// xx = Psi_X^* W Psi_X, xy = Psi_X^* W Psi_Y, yy = Psi_Y^* W Psi_Y.
template <typename Scalar>
struct GalerkinMatrices {
  Matrix<Scalar> xx;
  Matrix<Scalar> xy;
  Matrix<Scalar> yy;
};

template <typename Scalar>
GalerkinMatrices<Scalar> galerkin(const DictionaryMatrices<Scalar>& dict) {
  dict.validate();
  const Matrix<Scalar> wx = dict.weights.template cast<Scalar>().asDiagonal() * dict.psi_x;
  const Matrix<Scalar> wy = dict.weights.template cast<Scalar>().asDiagonal() * dict.psi_y;
  return {dict.psi_x.adjoint() * wx, dict.psi_x.adjoint() * wy, dict.psi_y.adjoint() * wy};
}

struct KoopmanApprox {
  MatrixXcd k_matrix;
  /// Descending modulus, ties by descending real then imaginary part.
  VectorXcd eigenvalues;
  /// Unit-norm columns matching `eigenvalues`.
  MatrixXcd eigenvectors;
  Index rank = 0;
  /// Rank the policy asked for before zero singular directions were dropped.
  Index requested_rank = 0;
  DictionaryMatrices<Complex> basis;
  /// Column pivots of the kernel dictionary selection; empty for exact DMD.
  std::vector<Index> pivots;
  std::string method;
};

/// Deterministic eigenvalue order; returns the permutation to apply.
std::vector<Index> eigen_order(const VectorXcd& eigenvalues);

/// K = (Psi_X^* W Psi_X)^+ (Psi_X^* W Psi_Y) and its sorted eigenpairs.
KoopmanApprox koopman_from_dictionary(DictionaryMatrices<Complex> dict, std::string method);

/// Exact DMD with the identity dictionary on (delay) coordinates, projected onto
/// the leading right singular subspace scaled by Sigma^+.
KoopmanApprox exact_dmd(const SnapshotSet& snapshots, const RankPolicy& policy);

enum class KernelKind { Polynomial, Rbf, Laplacian };

struct KernelSpec {
  KernelKind kind = KernelKind::Rbf;
  double gamma = 0.01;
  int degree = 2;
  double coef0 = 1.0;

  void validate() const;
  /// "rbf,0.01", "laplacian,0.001", "polynomial,0.01,2,1".
  std::string id() const;
  static KernelSpec parse(const std::string& text);
};

/// K[i][j] = S(a_i, b_j) for row sets a and b.
MatrixXd kernel_matrix(const MatrixXd& a, const MatrixXd& b, const KernelSpec& kernel);

struct GramPair {
  MatrixXd psi_x;  ///< S(x_i, x_j)
  MatrixXd psi_y;  ///< S(y_i, x_j)
};

GramPair gram_matrices(const MatrixXd& x_rows, const MatrixXd& y_rows, const KernelSpec& kernel);

KoopmanApprox kernel_edmd(const MatrixXd& x_rows, const MatrixXd& y_rows, const VectorXd& weights,
                          const KernelSpec& kernel, const RankPolicy& policy);

inline KoopmanApprox kernel_edmd(const SnapshotSet& snapshots, const KernelSpec& kernel,
                                 const RankPolicy& policy) {
  return kernel_edmd(snapshots.x, snapshots.y, snapshots.weights, kernel, policy);
}

/// JSON dump of a decomposition for inspection.
std::string to_debug_json(const KoopmanApprox& approx);

}  // namespace reskmd
