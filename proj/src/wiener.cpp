#include "rlqe/wiener.hpp"

#include "rlqe/kalman.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace rlqe {

MatrixXd stationary_covariance(const SystemModel& model)
{
    if (spectral_radius(model.A) >= 1.0 - 1e-9)
        throw std::invalid_argument("not strictly stable: spectral radius of A must be < 1");
    const Index d = model.d();
    MatrixXd Sigma = MatrixXd::Zero(d, d);
    MatrixXd P = MatrixXd::Identity(d, d);
    for (int k = 0; k < 10000000; ++k) {
        const MatrixXd inc = model.sigma2 * P * P.transpose();
        Sigma += inc;
        if (inc.norm() < 1e-14 * Sigma.norm())
            break;
        P = model.A * P;
    }
    return symmetrized(Sigma);
}

WienerModel stationary_gain(const SystemModel& model)
{
    WienerModel wm;
    wm.model = model;
    wm.Sigma = stationary_covariance(model);
    const auto ss = steady_state_gain(model, wm.Sigma);
    wm.K = model.A * ss.K;
    wm.F = model.A - wm.K * model.B;
    wm.P = symmetrized(model.A * ss.P_post * model.A.transpose()) +
           model.sigma2 * MatrixXd::Identity(model.d(), model.d());
    if (spectral_radius(wm.F) >= 1.0)
        throw std::runtime_error("stationary_gain: closed loop A - K B is not stable");

    // K y ~ N(0, C) under the stationary law.
    const MatrixXd C = wm.K * (model.B * wm.Sigma * model.B.transpose() +
                              model.tau2 * MatrixXd::Identity(model.m(), model.m())) *
                       wm.K.transpose();
    const double tr = C.trace();
    wm.sigma_y = std::sqrt(tr);
    wm.fourth_moment_root = std::sqrt(tr * tr + 2.0 * (C * C).trace());
    wm.F_norm = spectral_norm(wm.F);
    return wm;
}

ScheduleParams schedule_params(double eta, const WienerModel& wm, double C_h, double C_tau)
{
    if (!(eta > 0.0) || eta >= 0.5)
        throw std::invalid_argument("schedule_params: eta must lie in (0, 1/2)");
    const double log_inv = std::log(1.0 / eta);
    double rate = spectral_norm(wm.F);
    if (rate >= 1.0)
        rate = spectral_radius(wm.F);
    ScheduleParams p;
    if (rate <= 0.0) {
        p.h = 1;
    } else {
        const double raw = C_h * log_inv / std::log(1.0 / rate);
        p.h = std::max(1, static_cast<int>(std::ceil(raw - 1e-12)));
    }
    p.tau_trunc = C_tau * wm.sigma_y * std::cbrt(log_inv / eta);
    return p;
}

WienerModel with_schedule(WienerModel wm, double eta, double C_h, double C_tau)
{
    const auto p = schedule_params(eta, wm, C_h, C_tau);
    wm.h = p.h;
    wm.tau_trunc = p.tau_trunc;
    return wm;
}

TruncatedOutput truncated_filter(const WienerModel& wm, const MatrixXd& window)
{
    TruncatedOutput out;
    const Index d = wm.model.d();
    out.estimate = VectorXd::Zero(d);
    const Index n = window.rows();
    out.padded = n < wm.h;
    MatrixXd P = MatrixXd::Identity(d, d);
    for (int s = 1; s <= wm.h && s <= n; ++s) {
        out.estimate.noalias() += P * wm.K * window.row(n - s).transpose();
        P = wm.F * P;
    }
    if (out.estimate.norm() > wm.tau_trunc) {
        out.estimate.setZero();
        out.truncated = true;
    }
    return out;
}

MatrixXd wiener_predictions(const WienerModel& wm, const MatrixXd& y)
{
    const Index T = y.rows(), d = wm.model.d();
    MatrixXd out(T, d);
    VectorXd x = VectorXd::Zero(d);
    for (Index t = 0; t < T; ++t) {
        out.row(t) = x.transpose();
        x = wm.F * x + wm.K * y.row(t).transpose();
    }
    return out;
}

MatrixXd truncated_predictions(const WienerModel& wm, const MatrixXd& y)
{
    const Index T = y.rows(), d = wm.model.d();
    MatrixXd out(T, d);
    for (Index t = 0; t < T; ++t) {
        const Index start = std::max<Index>(0, t - wm.h);
        out.row(t) = truncated_filter(wm, y.middleRows(start, t - start)).estimate.transpose();
    }
    return out;
}

double truncation_error_bound(double F_norm, int h, double tau, double second_moment_root,
                              double fourth_moment_root)
{
    if (F_norm >= 1.0)
        return std::numeric_limits<double>::infinity();
    const double S = 1.0 / (1.0 - F_norm);
    return std::pow(F_norm, h) * S * second_moment_root + S * S * fourth_moment_root / tau;
}

}  // namespace rlqe
