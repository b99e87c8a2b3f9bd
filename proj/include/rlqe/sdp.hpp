#pragma once

#include "rlqe/linalg.hpp"

#include <Eigen/Sparse>

#include <string>
#include <vector>

namespace rlqe {

/// Product cone: PSD blocks stored as scaled lower-triangular vectors (off-diagonals times sqrt 2),
/// followed by a nonnegative orthant.
struct ConeSpec {
    std::vector<Index> psd_sizes;
    Index nonneg = 0;

    Index dim() const;
    Index block_offset(std::size_t block) const;
    Index nonneg_offset() const;
};

/// min c^T x  s.t.  A x = b,  x in K.
struct ConicProblem {
    ConeSpec cones;
    Eigen::SparseMatrix<double> A;
    VectorXd b;
    VectorXd c;
};

enum class ConicMethod { admm, interior_point };

struct ConicSettings {
    ConicMethod method = ConicMethod::admm;
    int max_iter = 100000;
    double eps = 1e-8;
    double gap_tol = 1e-7;
    double mu = 1.0;
    int check_every = 10;
    int adapt_every = 100;
    /// Anderson acceleration memory; 0 runs the plain splitting.
    int anderson_memory = 10;
    /// An accelerated step is rejected when its residual exceeds safeguard times the base residual.
    double safeguard = 1.0;
    /// mu is rescaled by adapt_factor when one residual exceeds the other by adapt_ratio.
    double adapt_ratio = 10.0;
    double adapt_factor = 2.0;
    /// Interior point: iteration cap and fraction of the distance to the cone boundary taken per step.
    int ipm_max_iter = 100;
    double step_fraction = 0.98;
};

struct ConicResult {
    VectorXd x;
    VectorXd y;
    VectorXd s;
    double primal_objective = 0.0;
    double dual_objective = 0.0;
    double primal_residual = 0.0;
    double dual_residual = 0.0;
    double gap = 0.0;
    int iterations = 0;
    /// Accelerated steps discarded by the safeguard.
    int rejected = 0;
    bool converged = false;
};

/// Position of entry (i, j) of an n x n block inside its scaled vector.
Index svec_index(Index n, Index i, Index j);
VectorXd svec(const MatrixXd& X);
MatrixXd smat(const VectorXd& v, Index n);

/// Euclidean projection onto the cone.
VectorXd project_cone(const ConeSpec& cones, const VectorXd& v);

/// Dispatches on settings.method.
ConicResult solve_conic(const ConicProblem& problem, const ConicSettings& settings = {});

/// Alternating direction augmented Lagrangian method on the dual, with Anderson acceleration.
/// A warm start supplies the initial x and s.
ConicResult solve_conic_admm(const ConicProblem& problem, const ConicSettings& settings = {},
                             const ConicResult* warm_start = nullptr);

/// Infeasible-start primal-dual path following (HKM direction, Mehrotra predictor-corrector).
ConicResult solve_conic_ipm(const ConicProblem& problem, const ConicSettings& settings = {});

/// Row-by-row assembly of a ConicProblem in terms of symmetric matrix entries.
class ConicBuilder {
public:
    std::size_t add_psd_block(Index n);
    /// First column of `count` new nonnegative variables.
    Index add_nonneg(Index count);
    /// New equality row with the given right-hand side; returns its index.
    Index add_row(double rhs);
    /// New row lhs + slack = rhs (le) or lhs - slack = rhs (ge) with a fresh nonnegative slack.
    Index add_le_row(double rhs);
    Index add_ge_row(double rhs);
    /// Adds coef * X_ij of a PSD block to a row; (i, j) and (j, i) name the same variable.
    void add_entry(Index row, std::size_t block, Index i, Index j, double coef);
    /// Adds coef times nonnegative variable k (as returned by add_nonneg) to a row.
    void add_nonneg_term(Index row, Index k, double coef);
    void add_cost_entry(std::size_t block, Index i, Index j, double coef);
    Index rows() const { return static_cast<Index>(rhs_.size()); }
    const ConeSpec& cones() const { return cones_; }

    ConicProblem build() const;

private:
    struct Term {
        Index row;
        std::size_t block;
        Index local;
        double coef;
    };

    ConeSpec cones_;
    std::vector<double> rhs_;
    std::vector<Term> psd_terms_;
    std::vector<Term> nonneg_terms_;
    std::vector<Term> cost_terms_;
};

}  // namespace rlqe
