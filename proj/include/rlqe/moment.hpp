#pragma once

#include "rlqe/sdp.hpp"
#include "rlqe/solution.hpp"

namespace rlqe {

struct MomentConfig {
    /// Largest moment matrix side accepted.
    Index max_side = 2000;
    /// Cardinality constraint multiplied by a_j and 1 - a_j.
    bool lifted_cardinality = true;
    /// Pairwise bounds 0 <= E[a_i a_j] <= min(E[a_i], E[a_j]) and E[a_i] + E[a_j] - E[a_i a_j] <= 1.
    bool pairwise_bounds = true;
    /// Degenerate relaxations stall near relative gap 1e-6, hence the looser defaults.
    ConicSettings conic = {.method = ConicMethod::interior_point, .eps = 1e-6, .gap_tol = 1e-5};
    /// Splitting iterations warm-started from the interior point solution; the polished point replaces
    /// it when it reaches polish_eps. Interior point first moments are accurate only to about sqrt(gap).
    int polish_iter = 2000;
    double polish_eps = 1e-8;
};

/// Layout of the base variables inside the moment matrix (index 0 is the constant monomial).
struct MomentLayout {
    Index T = 0, d = 0, m = 0, windows = 0;
    bool has_b = false;

    Index x0(Index c) const { return 1 + c; }
    Index w(Index i, Index c) const { return 1 + d + (i - 1) * d + c; }
    Index v(Index i, Index c) const { return 1 + T * d + i * m + c; }
    Index a(Index i) const { return 1 + T * d + T * m + i; }
    /// e_i = a_i (y_i - B x_i).
    Index e(Index i, Index c) const { return 1 + T * d + T * m + T + i * m + c; }
    Index b(Index l) const { return 1 + T * d + 2 * T * m + T + l; }
    Index side() const { return 1 + T * d + 2 * T * m + T + (has_b ? windows : 0); }
};

MomentLayout moment_layout(const ProgramSpec& spec);

struct MomentDiagnostics {
    ConicResult conic;
    MatrixXd moment_matrix;
    Index rows = 0;
};

/// Degree-2 moment relaxation of the program solved by the conic solver (interior point by default).
/// x_hat, w_hat, v_hat, a_hat and b_hat are first moments. objective and lower_bound both hold the dual
/// value; the primal value is in the diagnostics.
SmootherSolution solve_moment_relaxation(const ProgramSpec& spec, const MomentConfig& config = {},
                                         MomentDiagnostics* diagnostics = nullptr);

}  // namespace rlqe
