#pragma once

#include "rlqe/lds.hpp"

#include <optional>
#include <stdexcept>
#include <string>

namespace rlqe {

/// O_s = sum_{i<s} (A^i)^T B^T B A^i, accumulated by doubling.
template <typename DerivedA, typename DerivedB>
Matrix<typename DerivedA::Scalar> observability_gram(const Eigen::MatrixBase<DerivedA>& A,
                                                     const Eigen::MatrixBase<DerivedB>& B, long long s)
{
    using Scalar = typename DerivedA::Scalar;
    const Index d = A.rows();
    if (s < 1)
        throw std::invalid_argument("observability_gram: s must be >= 1");
    // Invariant: acc = O_done, pw = A^done; block = O_len, blockpw = A^len for len = 2^k.
    Matrix<Scalar> acc = Matrix<Scalar>::Zero(d, d);
    Matrix<Scalar> pw = Matrix<Scalar>::Identity(d, d);
    Matrix<Scalar> block = B.transpose() * B;
    Matrix<Scalar> blockpw = A;
    long long remaining = s;
    while (remaining > 0) {
        if (remaining & 1) {
            acc += pw.transpose() * block * pw;
            pw = blockpw * pw;
        }
        remaining >>= 1;
        if (remaining > 0) {
            block = block + blockpw.transpose() * block * blockpw;
            blockpw = blockpw * blockpw;
        }
    }
    return symmetrized(acc);
}

struct ObservabilityProfile {
    int s = 1;
    double kappa = 0.0;
    double alpha = 0.0;
    double rho = 1.0;
    double B_norm = 0.0;
    MatrixXd gram_s;
    long long horizon_checked = 0;
    /// Set when ||A^horizon|| > 10 ||A^{horizon/2}||.
    std::string warning;
};

class UnobservableSystem : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class HorizonTooShort : public std::runtime_error {
public:
    HorizonTooShort(long long t, long long min_T);
    long long window = 0;
    long long min_viable_T = 0;
};

ObservabilityProfile estimate_constants(const MatrixXd& A, const MatrixXd& B, int s_max, long long horizon);

enum class WindowStage { logT, loglogT };

/// Raw window length before the horizon check: max(s, C_win kappa^-2 rho^12 ||B||^4 log(arg)) rounded up
/// to a multiple of s, with arg = dT/delta (logT) or d/delta (loglogT, delta playing delta_1).
long long window_length(const ObservabilityProfile& profile, Index d, long long T, double delta, WindowStage stage,
                        double C_win = 4.0);

/// window_length with the horizon check; throws HorizonTooShort carrying the smallest workable T.
long long window_size(const ObservabilityProfile& profile, Index d, long long T, double delta, WindowStage stage,
                      double C_win = 4.0);

struct SubspaceSplit {
    long long t = 0;
    double zeta = 0.0;
    MatrixXd Pi;
    MatrixXd Pi_perp;
    MatrixXd gram_t;
};

/// Default threshold kappa t / (40000 rho^4).
double default_zeta(const ObservabilityProfile& profile, long long t);

SubspaceSplit subspace_split(const MatrixXd& A, const MatrixXd& B, const ObservabilityProfile& profile, long long t,
                             std::optional<double> zeta = std::nullopt);

/// lambda_max of Pi_perp (A^t)^T A^t Pi_perp.
double check_unobservable_decay(const SubspaceSplit& split, const MatrixXd& A);

/// || sum_i mask_i (A^i)^T B^T B A^i - (1 - eta) O_t || with eta the empirical corruption rate of the window.
double subsample_deviation(const Mask& mask_window, const MatrixXd& A, const MatrixXd& B);

/// Same deviation against a known corruption rate.
double subsample_deviation(const Mask& mask_window, const MatrixXd& A, const MatrixXd& B, double eta);

}  // namespace rlqe
