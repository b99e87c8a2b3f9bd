#pragma once

#include "rlqe/lds.hpp"

namespace rlqe {

/// Stationary one-step predictor x_{t+1|t} = F x_{t|t-1} + K y_t with F = A - K B.
struct WienerModel {
    SystemModel model;
    MatrixXd K;
    MatrixXd F;
    MatrixXd Sigma;
    /// Stationary covariance of the predictor error.
    MatrixXd P;
    /// sqrt(E ||K y_0||^2) and sqrt(E ||K y_0||^4)^(1/2) under the stationary law.
    double sigma_y = 0.0;
    double fourth_moment_root = 0.0;
    double F_norm = 0.0;
    int h = 1;
    double tau_trunc = 0.0;
};

/// Sigma = sigma2 sum_k A^k (A^k)^T; throws when the spectral radius of A is >= 1 - 1e-9.
MatrixXd stationary_covariance(const SystemModel& model);

WienerModel stationary_gain(const SystemModel& model);

struct ScheduleParams {
    int h = 1;
    double tau_trunc = 0.0;
};

/// h = ceil(C_h log(1/eta) / log(1/||F||)), tau = C_tau sigma_y ((1/eta) log(1/eta))^(1/3).
ScheduleParams schedule_params(double eta, const WienerModel& wm, double C_h = 2.0, double C_tau = 1.0);

WienerModel with_schedule(WienerModel wm, double eta, double C_h = 2.0, double C_tau = 1.0);

struct TruncatedOutput {
    VectorXd estimate;
    bool padded = false;
    bool truncated = false;
};

/// f_tau(sum_{s=1}^{h} F^{s-1} K y_{t-s}); rows of `window` run oldest to newest, the last row is y_{t-1}.
TruncatedOutput truncated_filter(const WienerModel& wm, const MatrixXd& window);

/// Untruncated predictions: row t estimates x_t from y_0 .. y_{t-1}, starting from 0.
MatrixXd wiener_predictions(const WienerModel& wm, const MatrixXd& y);

/// Truncated predictions for every t using the last h observations (zero-padded at the start).
MatrixXd truncated_predictions(const WienerModel& wm, const MatrixXd& y);

/// Right-hand side of the truncation error bound on sqrt(E ||x_t - x_{t,h,tau}||^2).
double truncation_error_bound(double F_norm, int h, double tau, double second_moment_root,
                              double fourth_moment_root);

}  // namespace rlqe
