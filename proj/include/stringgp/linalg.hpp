#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <optional>
#include <string>

#include "stringgp/errors.hpp"
#include "stringgp/logging.hpp"

namespace stringgp {

using Vec2 = Eigen::Vector2d;
using Mat2 = Eigen::Matrix2d;
using Vec4 = Eigen::Vector4d;
using Mat4 = Eigen::Matrix4d;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace linalg {

inline constexpr double kDegeneracyTol = 1e-9;

// Smallest eigenvalue of the correlation matrix built from a symmetric PSD block.
// Zero diagonal entries count as fully degenerate.
template <class Derived>
double min_correlation_eigenvalue(const Eigen::MatrixBase<Derived>& S) {
  const Eigen::Index n = S.rows();
  VectorXd d(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!(S(i, i) > 0.0)) return 0.0;
    d(i) = 1.0 / std::sqrt(S(i, i));
  }
  MatrixXd C = d.asDiagonal() * S.derived().template cast<double>() * d.asDiagonal();
  C = 0.5 * (C + C.transpose()).eval();
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(C, Eigen::EigenvaluesOnly);
  return es.eigenvalues()(0);
}

template <class Derived>
bool is_degenerate(const Eigen::MatrixBase<Derived>& S, double tol = kDegeneracyTol) {
  return min_correlation_eigenvalue(S) < tol;
}

// Inverse of a symmetric positive definite block. Adds a diagonal jitter of
// 1e-10 times the mean diagonal when the factorization fails, and throws
// DegeneracyError if that is not enough.
template <int N>
Eigen::Matrix<double, N, N> spd_inverse(const Eigen::Matrix<double, N, N>& A, double time,
                                        const char* what) {
  using M = Eigen::Matrix<double, N, N>;
  M S = 0.5 * (A + A.transpose());
  const double scale = std::max(S.diagonal().cwiseAbs().mean(), std::numeric_limits<double>::min());
  double jitter = 0.0;
  for (int attempt = 0; attempt < 2; ++attempt) {
    M Sj = S;
    Sj.diagonal().array() += jitter;
    Eigen::LDLT<M> ldlt(Sj);
    if (ldlt.info() == Eigen::Success && ldlt.isPositive() && ldlt.rcond() > 1e-15) {
      M inv = ldlt.solve(M::Identity());
      if (inv.allFinite()) {
        if (jitter > 0.0)
          log::warn(std::string(what) + ": jitter " + std::to_string(jitter) + " added at t = " +
                    std::to_string(time));
        return 0.5 * (inv + inv.transpose());
      }
    }
    jitter = 1e-10 * scale;
  }
  throw DegeneracyError(std::string(what) + ": singular covariance", time);
}

// Square root factor L with L L^T = S for a symmetric 2x2 block, from its
// eigendecomposition. Small negative eigenvalues are clamped to zero.
inline Mat2 psd_sqrt(const Mat2& S, bool* clamped = nullptr) {
  Mat2 Ssym = 0.5 * (S + S.transpose());
  Eigen::SelfAdjointEigenSolver<Mat2> es(Ssym);
  Vec2 ev = es.eigenvalues();
  const double scale = std::max(std::abs(ev(0)), std::abs(ev(1)));
  bool c = false;
  for (int i = 0; i < 2; ++i) {
    if (ev(i) < 0.0) {
      if (ev(i) < -1e-12 * std::max(scale, 1.0)) c = true;
      ev(i) = 0.0;
    }
  }
  if (c) log::warn("negative eigenvalue clamped in 2x2 square root");
  if (clamped) *clamped = c;
  return es.eigenvectors() * ev.cwiseSqrt().asDiagonal();
}

// Moore-Penrose pseudo-inverse of a 2x2 matrix through its SVD.
inline Mat2 pinv(const Mat2& A, double rel_tol = 1e-12) {
  Eigen::JacobiSVD<Mat2> svd(A, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Vec2 s = svd.singularValues();
  const double cut = rel_tol * std::max(s(0), std::numeric_limits<double>::min());
  Vec2 inv;
  for (int i = 0; i < 2; ++i) inv(i) = s(i) > cut ? 1.0 / s(i) : 0.0;
  return svd.matrixV() * inv.asDiagonal() * svd.matrixU().transpose();
}

// Cholesky factor of a dense covariance with an escalating jitter ladder
// 1e-10 ... 1e-6 times the mean diagonal.
struct JitteredCholesky {
  Eigen::LLT<MatrixXd> llt;
  double jitter = 0.0;
};

inline std::optional<JitteredCholesky> try_cholesky(const MatrixXd& K) {
  const double scale = K.rows() > 0 ? std::max(K.diagonal().mean(), 1e-300) : 1.0;
  JitteredCholesky out;
  out.llt.compute(K);
  if (out.llt.info() == Eigen::Success) return out;
  for (double rel : {1e-10, 1e-9, 1e-8, 1e-7, 1e-6}) {
    MatrixXd Kj = K;
    Kj.diagonal().array() += rel * scale;
    out.llt.compute(Kj);
    if (out.llt.info() == Eigen::Success) {
      out.jitter = rel * scale;
      return out;
    }
  }
  return std::nullopt;
}

inline JitteredCholesky cholesky(const MatrixXd& K) {
  auto c = try_cholesky(K);
  if (!c) throw NumericalError("covariance matrix is not positive definite after jitter");
  if (c->jitter > 0.0) log::debug("cholesky jitter " + std::to_string(c->jitter));
  return *c;
}

// Symmetric square root factor of a PSD matrix (for sampling), tolerant of
// exact rank deficiency.
inline MatrixXd psd_factor(const MatrixXd& S) {
  MatrixXd Ssym = 0.5 * (S + S.transpose());
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(Ssym);
  VectorXd ev = es.eigenvalues().cwiseMax(0.0);
  return es.eigenvectors() * ev.cwiseSqrt().asDiagonal();
}

}  // namespace linalg
}  // namespace stringgp
