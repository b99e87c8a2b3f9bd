#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <complex>
#include <vector>

namespace rlqe {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

/// Operator (spectral) 2-norm.
template <typename Derived>
typename Derived::Scalar spectral_norm(const Eigen::MatrixBase<Derived>& M)
{
    using Scalar = typename Derived::Scalar;
    if (M.size() == 0)
        return Scalar(0);
    Eigen::JacobiSVD<Matrix<Scalar>> svd(M.eval());
    return svd.singularValues()(0);
}

/// Largest modulus among the eigenvalues of a square matrix.
template <typename Derived>
typename Derived::Scalar spectral_radius(const Eigen::MatrixBase<Derived>& M)
{
    using Scalar = typename Derived::Scalar;
    if (M.size() == 0)
        return Scalar(0);
    Eigen::EigenSolver<Matrix<Scalar>> es(M.eval(), false);
    return es.eigenvalues().cwiseAbs().maxCoeff();
}

template <typename Derived>
Matrix<typename Derived::Scalar> symmetrized(const Eigen::MatrixBase<Derived>& M)
{
    return (M + M.transpose()) / typename Derived::Scalar(2);
}

/// Smallest eigenvalue of the symmetric part.
template <typename Derived>
typename Derived::Scalar min_eigenvalue(const Eigen::MatrixBase<Derived>& M)
{
    Eigen::SelfAdjointEigenSolver<Matrix<typename Derived::Scalar>> es(symmetrized(M), Eigen::EigenvaluesOnly);
    return es.eigenvalues()(0);
}

/// Largest eigenvalue of the symmetric part.
template <typename Derived>
typename Derived::Scalar max_eigenvalue(const Eigen::MatrixBase<Derived>& M)
{
    Eigen::SelfAdjointEigenSolver<Matrix<typename Derived::Scalar>> es(symmetrized(M), Eigen::EigenvaluesOnly);
    return es.eigenvalues()(es.eigenvalues().size() - 1);
}

/// A^k by binary powering.
template <typename Derived>
Matrix<typename Derived::Scalar> matrix_power(const Eigen::MatrixBase<Derived>& A, long long k)
{
    using Scalar = typename Derived::Scalar;
    Matrix<Scalar> result = Matrix<Scalar>::Identity(A.rows(), A.cols());
    Matrix<Scalar> base = A;
    while (k > 0) {
        if (k & 1)
            result = result * base;
        k >>= 1;
        if (k > 0)
            base = base * base;
    }
    return result;
}

/// Powers A^0 .. A^{n-1}.
template <typename Derived>
std::vector<Matrix<typename Derived::Scalar>> matrix_powers(const Eigen::MatrixBase<Derived>& A, Index n)
{
    using Scalar = typename Derived::Scalar;
    std::vector<Matrix<Scalar>> out;
    out.reserve(static_cast<std::size_t>(std::max<Index>(n, 0)));
    Matrix<Scalar> P = Matrix<Scalar>::Identity(A.rows(), A.cols());
    for (Index i = 0; i < n; ++i) {
        out.push_back(P);
        P = A * P;
    }
    return out;
}

/// Orthogonal projector onto the eigenvectors of symmetric S whose eigenvalue is at least `threshold`.
template <typename Derived>
Matrix<typename Derived::Scalar> spectral_projector(const Eigen::MatrixBase<Derived>& S,
                                                    typename Derived::Scalar threshold,
                                                    typename Derived::Scalar tie_tol)
{
    using Scalar = typename Derived::Scalar;
    Eigen::SelfAdjointEigenSolver<Matrix<Scalar>> es(symmetrized(S));
    const Index n = S.rows();
    Matrix<Scalar> P = Matrix<Scalar>::Zero(n, n);
    for (Index j = 0; j < n; ++j) {
        if (es.eigenvalues()(j) >= threshold - tie_tol) {
            const auto v = es.eigenvectors().col(j);
            P.noalias() += v * v.transpose();
        }
    }
    return P;
}

/// Projection of a symmetric matrix onto the PSD cone.
template <typename Derived>
Matrix<typename Derived::Scalar> psd_part(const Eigen::MatrixBase<Derived>& S)
{
    using Scalar = typename Derived::Scalar;
    Eigen::SelfAdjointEigenSolver<Matrix<Scalar>> es(symmetrized(S));
    const auto lam = es.eigenvalues().cwiseMax(Scalar(0));
    return es.eigenvectors() * lam.asDiagonal() * es.eigenvectors().transpose();
}

inline bool all_finite(const MatrixXd& M)
{
    return M.allFinite();
}

}  // namespace rlqe
