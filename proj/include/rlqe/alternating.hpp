#pragma once

#include "rlqe/solution.hpp"

namespace rlqe {

struct AlternatingConfig {
    int max_rounds = 200;
    double tol = 1e-8;
    /// Soft-constraint escalation rounds inside each trajectory solve.
    int penalty_rounds = 40;
    double penalty_growth = 4.0;
    /// Pairwise swap local search after convergence when T is at most this.
    int swap_max_T = 64;
    bool swap_refine = true;
    /// Second alternation started from the unpenalized smoother.
    bool plain_start = true;
};

/// Trajectory step for fixed indicators: masked smoother with band and noise bounds enforced by
/// escalating quadratic penalties. Returns x.
MatrixXd solve_for_indicators(const ProgramSpec& spec, const VectorXd& a, const VectorXd& b,
                              const AlternatingConfig& config = {});

/// Observation residuals a_i (y_i - B x_src(i)) used as the v variables.
MatrixXd residual_noise(const ProgramSpec& spec, const MatrixXd& x, const VectorXd& a);

/// Whether a (with b for Program 2) satisfies every constraint involving only the indicators
/// (booleans, cardinality, window mixing, window psd).
bool indicators_feasible(const ProgramSpec& spec, const VectorXd& a, const VectorXd& b);

/// Assembles a solution for given indicators: trajectory, residuals, objective and feasibility report.
SmootherSolution evaluate_indicators(const ProgramSpec& spec, const VectorXd& a, const VectorXd& b,
                                     const AlternatingConfig& config, const std::string& backend);

SmootherSolution solve_alternating(const ProgramSpec& spec, const AlternatingConfig& config = {});

/// Exhaustive search over every indicator pattern allowed by the cardinality and window constraints
/// (b set to the window indicators of a). Refuses T > 14. `rounds` holds the number of masks meeting
/// the cardinality bound.
SmootherSolution brute_force_oracle(const ProgramSpec& spec, const AlternatingConfig& config = {});

/// Program 1 built with default options around (model, y, eta) and solved exhaustively.
SmootherSolution brute_force_oracle(const SystemModel& model, const MatrixXd& y, double eta);

}  // namespace rlqe
