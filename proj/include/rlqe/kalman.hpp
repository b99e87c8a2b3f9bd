#pragma once

#include "rlqe/lds.hpp"

#include <optional>
#include <vector>

namespace rlqe {

struct FilterState {
    VectorXd x_pred;
    MatrixXd P_pred;
    VectorXd x_post;
    MatrixXd P_post;
    MatrixXd K;
    MatrixXd S;
    VectorXd innovation;
};

/// Prior at time 0 before any measurement: x_pred = 0, P_pred = R2 I.
FilterState filter_prior(const SystemModel& model);

/// Measurement update of a state whose x_pred / P_pred are set. Absent y leaves the prediction untouched.
FilterState measurement_update(FilterState state, const std::optional<VectorXd>& y_t, const SystemModel& model);

/// Time update from `state`'s posterior, then measurement update with y_t.
FilterState filter_step(const FilterState& state, const std::optional<VectorXd>& y_t, const SystemModel& model);

/// Filter over all rows of y; steps with mask 0 are dropped (time update only).
std::vector<FilterState> run_filter(const SystemModel& model, const MatrixXd& y, const Mask& mask);
std::vector<FilterState> run_filter(const SystemModel& model, const MatrixXd& y);

/// Per-step weights of the generalised MAP objective
///   sum_i obs_i ||B x_i - y_i||^2 / tau2 + sum_{i>=1} step_i ||x_i - A x_{i-1}||^2 / sigma2
///   + prior ||x_0||^2 / R2 + sum_i anchor_i ||x_i - center_i||^2.
struct QuadraticWeights {
    VectorXd obs;
    VectorXd step;
    double prior = 1.0;
    VectorXd anchor;
    MatrixXd center;

    static QuadraticWeights from_mask(const Mask& mask);
};

/// Exact minimiser of the weighted objective via block-tridiagonal Cholesky in information form.
MatrixXd solve_weighted_map(const SystemModel& model, const MatrixXd& y, const QuadraticWeights& weights);

struct SmootherResult {
    MatrixXd x_hat;
    MatrixXd w_hat;
    double opt_value = 0.0;
};

/// w rows for a trajectory: row 0 zero, row i = x_i - A x_{i-1}.
MatrixXd steps_of(const SystemModel& model, const MatrixXd& x);

/// (1/T)(sum_i mask_i ||B x_i - y_i||^2/tau2 + sum_{i>=1} ||w_i||^2/sigma2) + ||x_0||^2/(R2 T).
double masked_objective(const SystemModel& model, const MatrixXd& y, const Mask& mask, const MatrixXd& x);

SmootherResult smoother(const SystemModel& model, const MatrixXd& y, const Mask& mask);

/// Clean posterior NLL scored with the episode's true mask.
double clean_nll(const MatrixXd& x_hat, const EpisodeData& episode, const SystemModel& model);
double clean_nll(const MatrixXd& x_hat, const EpisodeData& episode);

/// Minimum of the clean posterior NLL: oracle smoother on the true mask.
SmootherResult oracle_smoother(const EpisodeData& episode);

struct RiskReport {
    double nll = 0.0;
    double opt = 0.0;
    double excess = 0.0;
    std::vector<double> per_window_state_err;
};

RiskReport risk_report(const MatrixXd& x_hat, const EpisodeData& episode, double opt, int window);
RiskReport risk_report(const MatrixXd& x_hat, const EpisodeData& episode, int window);

struct SteadyStateGain {
    MatrixXd K;
    MatrixXd P_pred;
    MatrixXd P_post;
    int iterations = 0;
    bool converged = false;
    /// Gains K_0, K_1, ... up to convergence.
    std::vector<MatrixXd> gains;
};

/// Iterates the covariance recursion from P_pred = `P0` until ||P_t - P_{t-1}|| <= 1e-12 ||P_t|| or max_iter.
SteadyStateGain steady_state_gain(const SystemModel& model, const MatrixXd& P0, int max_iter = 100000);

struct StabilityConstants {
    double lambda = 1.0;
    double delta_stab = 0.0;
    double K_bound = 0.0;
    MatrixXd K_inf;
    MatrixXd F_inf;
    int converged_steps = 0;
};

/// Envelope constants with ||F_t ... F_{s+1}|| <= lambda delta_stab^{t-s}, F_t = (I - K_t B) A,
/// for the gains of the filter started at P_pred = R2 I.
StabilityConstants stability_constants(const SystemModel& model);

}  // namespace rlqe
