#pragma once

#include "rlqe/linalg.hpp"
#include "rlqe/rng.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace rlqe {

/// Per-step corruption indicator: 1 = clean, 0 = adversarial.
using Mask = std::vector<std::uint8_t>;

/// x_i = A x_{i-1} + w_i,  y_i = B x_i + v_i, isotropic Gaussian noise, x_0 ~ N(0, R2 I).
struct SystemModel {
    MatrixXd A;
    MatrixXd B;
    double sigma2 = 1.0;
    double tau2 = 1.0;
    double R2 = 1.0;
    int T = 1;

    Index d() const { return A.rows(); }
    Index m() const { return B.rows(); }

    /// Throws std::invalid_argument on inconsistent dimensions, non-finite entries or nonpositive scales.
    void validate() const;
};

/// Trajectories are stored one time step per row: x_star is T x d, y is T x m.
/// w_star has T rows with row 0 unused (identically zero).
struct EpisodeData {
    SystemModel model;
    MatrixXd x_star;
    MatrixXd y_star;
    MatrixXd w_star;
    MatrixXd v_star;
    Mask a_star;
    MatrixXd y;
    std::uint64_t seed = 0;

    int T() const { return static_cast<int>(x_star.rows()); }
    double corrupted_fraction() const;
};

enum class AdversaryKind { none, spike, random_walk_attack, parallel_path_attack, heavy_tail, custom };

/// How corrupted observations are rewritten. The adversary sees the whole clean episode.
struct AdversaryStrategy {
    using Callback = std::function<VectorXd(const EpisodeData&, Index i, Rng&)>;

    AdversaryKind kind = AdversaryKind::none;
    /// spike / random_walk_attack magnitude; heavy_tail multiplier.
    double scale = 0.0;
    /// Student-t degrees of freedom for heavy_tail.
    double df = 3.0;
    /// parallel_path_attack: choose corruption locations adversarially. Violates the corruption model.
    bool model_violating_locations = false;
    Callback callback;

    static AdversaryStrategy none();
    /// y_i = y*_i + scale * (random sign per coordinate).
    static AdversaryStrategy spike(double scale);
    /// y_i = -scale * sign(B x*_i) per coordinate: large values that stay inside the range of the walk.
    static AdversaryStrategy random_walk_attack(double scale);
    /// Observations of an independent walk branching 2*eta*T steps before the end.
    static AdversaryStrategy parallel_path_attack(bool model_violating_locations = false);
    /// y_i = y*_i + scale * t_df noise per coordinate.
    static AdversaryStrategy heavy_tail(double df, double scale);
    static AdversaryStrategy custom(Callback cb);
};

/// Clean episode: a_star all ones, y = y_star. x_0 ~ N(0, R2 I) unless `initial_cov` is given.
EpisodeData simulate(const SystemModel& model, std::uint64_t seed,
                     const std::optional<MatrixXd>& initial_cov = std::nullopt);

/// Flips an independent Ber(eta) corruption coin per step and lets the adversary rewrite those steps.
EpisodeData apply_corruptions(const EpisodeData& episode, double eta, const AdversaryStrategy& adversary,
                              std::uint64_t seed);

/// A^t x0 + sum_{j=1}^{t} A^{t-j} w_j, where row j of `w` holds w_j (row 0 ignored).
template <typename DerivedA, typename DerivedX, typename DerivedW>
Vector<typename DerivedA::Scalar> unroll_state(const Eigen::MatrixBase<DerivedA>& A,
                                               const Eigen::MatrixBase<DerivedX>& x0,
                                               const Eigen::MatrixBase<DerivedW>& w, Index t)
{
    if (t > w.rows() && t > 0)
        throw std::invalid_argument("unroll_state: t exceeds the number of noise steps");
    Vector<typename DerivedA::Scalar> x = matrix_power(A, t) * x0;
    for (Index j = 1; j <= t; ++j)
        x.noalias() += matrix_power(A, t - j) * w.row(j).transpose();
    return x;
}

/// Named example systems used by tests, the acceptance suite and the harness.
struct NamedSystem {
    std::string name;
    SystemModel model;
};

SystemModel random_walk_system(int T);
SystemModel coordinate_cycle_system(int d, int T);
SystemModel hard_subspace_system(int T);
SystemModel shift_system(int T, double R2 = 1.0);
SystemModel dimension_system(int d, int T);
SystemModel stable_scalar_system(double a, int T);
SystemModel rotation_system(double angle, int T);

std::vector<NamedSystem> builtin_systems(int T);

/// Row i of x as a column vector.
inline VectorXd row_vec(const MatrixXd& x, Index i)
{
    return x.row(i).transpose();
}

}  // namespace rlqe
