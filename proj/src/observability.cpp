#include "rlqe/observability.hpp"

#include <cmath>
#include <string>

namespace rlqe {

HorizonTooShort::HorizonTooShort(long long t, long long min_T)
    : std::runtime_error("horizon too short: window " + std::to_string(t) + " exceeds T; minimum viable T is " +
                         std::to_string(min_T)),
      window(t), min_viable_T(min_T)
{
}

ObservabilityProfile estimate_constants(const MatrixXd& A, const MatrixXd& B, int s_max, long long horizon)
{
    if (s_max < 1 || horizon < 1)
        throw std::invalid_argument("estimate_constants: s_max and horizon must be >= 1");
    ObservabilityProfile p;
    p.B_norm = spectral_norm(B);

    bool found = false;
    MatrixXd gram = MatrixXd::Zero(A.rows(), A.cols());
    MatrixXd pw = MatrixXd::Identity(A.rows(), A.cols());
    for (int s = 1; s <= s_max; ++s) {
        gram += pw.transpose() * B.transpose() * B * pw;
        pw = A * pw;
        const MatrixXd sym = symmetrized(gram);
        Eigen::SelfAdjointEigenSolver<MatrixXd> es(sym, Eigen::EigenvaluesOnly);
        const double lo = es.eigenvalues()(0);
        const double hi = es.eigenvalues()(es.eigenvalues().size() - 1);
        if (lo > 1e-12 * std::max(1.0, hi)) {
            p.s = s;
            p.kappa = lo / s;
            p.alpha = hi / s;
            p.gram_s = sym;
            found = true;
            break;
        }
    }
    if (!found)
        throw UnobservableSystem("unobservable system: O_s singular for every s <= " + std::to_string(s_max));

    double rho = 1.0;
    double half_norm = 1.0;
    MatrixXd P = MatrixXd::Identity(A.rows(), A.cols());
    const long long half = horizon / 2;
    for (long long j = 1; j <= horizon; ++j) {
        P = A * P;
        const double nrm = spectral_norm(P);
        rho = std::max(rho, nrm);
        if (j == half)
            half_norm = nrm;
        if (!std::isfinite(nrm))
            break;
    }
    p.rho = rho;
    p.horizon_checked = horizon;
    const double last = spectral_norm(P);
    if (last > 10.0 * half_norm)
        p.warning = "possibly unstable: ||A^horizon|| exceeds 10 ||A^(horizon/2)||";
    return p;
}

long long window_length(const ObservabilityProfile& profile, Index d, long long T, double delta, WindowStage stage,
                        double C_win)
{
    const double arg = stage == WindowStage::logT ? static_cast<double>(d) * static_cast<double>(T) / delta
                                                  : static_cast<double>(d) / delta;
    const double logterm = std::max(std::log(arg), 0.0);
    const double raw = C_win * std::pow(profile.kappa, -2.0) * std::pow(profile.rho, 12.0) *
                       std::pow(profile.B_norm, 4.0) * logterm;
    const long long s = profile.s;
    // Guard against rounding a value like 1 + 1e-15 up to 2.
    long long t = static_cast<long long>(std::ceil(raw - 1e-9));
    t = std::max(t, s);
    t = ((t + s - 1) / s) * s;
    return t;
}

long long window_size(const ObservabilityProfile& profile, Index d, long long T, double delta, WindowStage stage,
                      double C_win)
{
    const long long t = window_length(profile, d, T, delta, stage, C_win);
    if (t <= T)
        return t;
    long long lo = T, hi = std::max<long long>(2 * T, t);
    while (window_length(profile, d, hi, delta, stage, C_win) > hi)
        hi *= 2;
    while (hi - lo > 1) {
        const long long mid = lo + (hi - lo) / 2;
        if (window_length(profile, d, mid, delta, stage, C_win) <= mid)
            hi = mid;
        else
            lo = mid;
    }
    throw HorizonTooShort(t, hi);
}

double default_zeta(const ObservabilityProfile& profile, long long t)
{
    return profile.kappa * static_cast<double>(t) / (40000.0 * std::pow(profile.rho, 4.0));
}

SubspaceSplit subspace_split(const MatrixXd& A, const MatrixXd& B, const ObservabilityProfile& profile, long long t,
                             std::optional<double> zeta)
{
    if (t < 1 || t % profile.s != 0)
        throw std::invalid_argument("subspace_split: t must be a positive multiple of s");
    SubspaceSplit split;
    split.t = t;
    split.zeta = zeta.value_or(default_zeta(profile, t));
    split.gram_t = observability_gram(A, B, t);
    split.Pi = spectral_projector(split.gram_t, split.zeta, 1e-9);
    split.Pi_perp = MatrixXd::Identity(A.rows(), A.cols()) - split.Pi;
    return split;
}

double check_unobservable_decay(const SubspaceSplit& split, const MatrixXd& A)
{
    if (split.Pi_perp.norm() < 1e-12)
        return 0.0;
    const MatrixXd At = matrix_power(A, split.t);
    const MatrixXd M = split.Pi_perp * At.transpose() * At * split.Pi_perp;
    return std::max(0.0, max_eigenvalue(M));
}

double subsample_deviation(const Mask& mask_window, const MatrixXd& A, const MatrixXd& B, double eta)
{
    const auto t = static_cast<long long>(mask_window.size());
    const Index d = A.rows();
    MatrixXd sub = MatrixXd::Zero(d, d);
    MatrixXd full = MatrixXd::Zero(d, d);
    MatrixXd P = MatrixXd::Identity(d, d);
    const MatrixXd BtB = B.transpose() * B;
    for (long long i = 0; i < t; ++i) {
        const MatrixXd term = P.transpose() * BtB * P;
        full += term;
        if (mask_window[static_cast<std::size_t>(i)])
            sub += term;
        P = A * P;
    }
    return spectral_norm(symmetrized(sub - (1.0 - eta) * full));
}

double subsample_deviation(const Mask& mask_window, const MatrixXd& A, const MatrixXd& B)
{
    if (mask_window.empty())
        return 0.0;
    std::size_t bad = 0;
    for (auto a : mask_window)
        bad += (a == 0);
    const double eta_hat = static_cast<double>(bad) / static_cast<double>(mask_window.size());
    return subsample_deviation(mask_window, A, B, eta_hat);
}

}  // namespace rlqe
