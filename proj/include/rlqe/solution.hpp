#pragma once

#include "rlqe/program.hpp"

#include <optional>
#include <string>
#include <vector>

namespace rlqe {

/// Per-step confidence band ||x_i - center_i|| <= radius_i.
struct ConfidenceBand {
    MatrixXd center;
    VectorXd radius;
    /// Geometric floor sqrt(eps_geo) that every radius is bounded below by.
    double floor = 0.0;
    long long window = 1;
    double e_noise = 0.0;
    double eps_geo = 0.0;

    bool contains(const MatrixXd& x, double slack = 0.0) const;
    /// Fraction of rows of x inside the band.
    double coverage(const MatrixXd& x) const;
};

struct SmootherSolution {
    MatrixXd x_hat;
    MatrixXd w_hat;
    MatrixXd v_hat;
    VectorXd a_hat;
    VectorXd b_hat;
    double objective = 0.0;
    /// Dual bound from the conic backend; equal to objective for exact backends.
    std::optional<double> lower_bound;
    FeasibilityReport feasibility;
    std::string backend;
    int rounds = 0;
    bool converged = false;
    std::vector<std::string> flags;
    std::optional<ConfidenceBand> band;

    Candidate candidate() const;
    /// a_hat thresholded at 1/2.
    Mask rounded_mask() const;
};

json band_to_json(const ConfidenceBand& band);
json solution_to_json(const SmootherSolution& sol);

}  // namespace rlqe
