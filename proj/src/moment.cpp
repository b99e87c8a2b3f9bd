#include "rlqe/moment.hpp"

#include "rlqe/kalman.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace rlqe {

MomentLayout moment_layout(const ProgramSpec& spec)
{
    MomentLayout L;
    L.T = spec.T();
    L.d = spec.model.d();
    L.m = spec.model.m();
    L.windows = spec.num_windows;
    L.has_b = spec.version == 2;
    return L;
}

namespace {

/// Sparse affine form over the moment indices; index 0 carries the constant term.
using Affine = std::vector<std::pair<Index, double>>;

Affine compress(const VectorXd& dense)
{
    Affine f;
    for (Index p = 0; p < dense.size(); ++p)
        if (dense(p) != 0.0)
            f.emplace_back(p, dense(p));
    return f;
}

Affine single(Index p, double coef = 1.0)
{
    return {{p, coef}};
}

class MomentModel {
public:
    MomentModel(const ProgramSpec& spec, const MomentLayout& layout) : spec_(spec), L_(layout)
    {
        block_ = builder_.add_psd_block(L_.side());
        const auto powers = matrix_powers(spec.model.A, L_.T);
        // Dense coefficient rows of every state component in terms of (x_0, w_1, ..., w_{T-1}).
        x_.resize(static_cast<std::size_t>(L_.T));
        for (Index i = 0; i < L_.T; ++i) {
            auto& rows = x_[static_cast<std::size_t>(i)];
            rows = MatrixXd::Zero(L_.d, L_.side());
            const MatrixXd& Pi = powers[static_cast<std::size_t>(i)];
            for (Index c = 0; c < L_.d; ++c)
                for (Index q = 0; q < L_.d; ++q)
                    rows(c, L_.x0(q)) = Pi(c, q);
            for (Index j = 1; j <= i; ++j) {
                const MatrixXd& P = powers[static_cast<std::size_t>(i - j)];
                for (Index c = 0; c < L_.d; ++c)
                    for (Index q = 0; q < L_.d; ++q)
                        rows(c, L_.w(j, q)) = P(c, q);
            }
        }
    }

    ConicBuilder& builder() { return builder_; }
    std::size_t block() const { return block_; }

    Affine state(Index i, Index c) const { return compress(x_[static_cast<std::size_t>(i)].row(c).transpose()); }

    /// y_ic - (B x_src)_c.
    Affine fit_residual(Index i, Index src, Index c) const
    {
        VectorXd dense = -(spec_.model.B.row(c) * x_[static_cast<std::size_t>(src)]).transpose();
        dense(0) += spec_.y(i, c);
        return compress(dense);
    }

    void entry(Index row, Index p, Index q, double coef) { builder_.add_entry(row, block_, p, q, coef); }

    void cost(Index p, Index q, double coef) { builder_.add_cost_entry(block_, p, q, coef); }

    void expect(Index row, const Affine& f, double coef)
    {
        for (const auto& [p, fp] : f)
            entry(row, 0, p, coef * fp);
    }

    void product(Index row, const Affine& f, const Affine& g, double coef)
    {
        for (const auto& [p, fp] : f)
            for (const auto& [q, gq] : g)
                entry(row, p, q, coef * fp * gq);
    }

private:
    const ProgramSpec& spec_;
    MomentLayout L_;
    ConicBuilder builder_;
    std::size_t block_ = 0;
    std::vector<MatrixXd> x_;
};

}  // namespace

SmootherSolution solve_moment_relaxation(const ProgramSpec& spec, const MomentConfig& config,
                                         MomentDiagnostics* diagnostics)
{
    const MomentLayout L = moment_layout(spec);
    if (L.side() > config.max_side)
        throw std::invalid_argument("solve_moment_relaxation: moment matrix side " + std::to_string(L.side()) +
                                    " exceeds the configured cap");
    const auto& model = spec.model;
    const Index T = L.T, d = L.d, m = L.m;
    const double Td = static_cast<double>(T);

    MomentModel mm(spec, L);
    auto& B = mm.builder();
    const std::size_t blk = mm.block();

    mm.entry(B.add_row(1.0), 0, 0, 1.0);

    // Boolean indicators and the lifted measurement constraint.
    for (Index i = 0; i < T; ++i) {
        const Index r = B.add_row(0.0);
        mm.entry(r, L.a(i), L.a(i), 1.0);
        mm.entry(r, 0, L.a(i), -1.0);
    }
    for (Index i = 0; i < T; ++i) {
        const Index src = (spec.version == 2 && spec.measurement_uses_previous_state && i >= 1) ? i - 1 : i;
        for (Index c = 0; c < m; ++c) {
            Affine g = mm.fit_residual(i, src, c);
            g.emplace_back(L.v(i, c), -1.0);
            mm.product(B.add_row(0.0), single(L.a(i)), g, 1.0);
        }
    }

    // e_i = a_i (y_i - B x_i) carries the fit term of the objective.
    for (Index i = 0; i < T; ++i) {
        for (Index c = 0; c < m; ++c) {
            const Affine res = mm.fit_residual(i, i, c);
            Index r = B.add_row(0.0);
            mm.expect(r, single(L.e(i, c)), 1.0);
            mm.product(r, single(L.a(i)), res, -1.0);

            r = B.add_row(0.0);
            mm.product(r, single(L.a(i)), single(L.e(i, c)), 1.0);
            mm.expect(r, single(L.e(i, c)), -1.0);

            for (Index c2 = 0; c2 < m; ++c2) {
                r = B.add_row(0.0);
                mm.product(r, single(L.e(i, c)), single(L.e(i, c2)), 1.0);
                mm.product(r, single(L.e(i, c)), mm.fit_residual(i, i, c2), -1.0);
            }
        }
    }

    // Cardinality and its products with a_j and 1 - a_j.
    const double card = spec.family(4).rhs.front();
    {
        const Index r = B.add_ge_row(card);
        for (Index i = 0; i < T; ++i)
            mm.entry(r, 0, L.a(i), 1.0);
    }
    if (config.lifted_cardinality) {
        for (Index j = 0; j < T; ++j) {
            Index r = B.add_ge_row(0.0);
            for (Index i = 0; i < T; ++i)
                mm.entry(r, L.a(i), L.a(j), 1.0);
            mm.entry(r, 0, L.a(j), -card);

            r = B.add_ge_row(card);
            for (Index i = 0; i < T; ++i) {
                mm.entry(r, 0, L.a(i), 1.0);
                mm.entry(r, L.a(i), L.a(j), -1.0);
            }
            mm.entry(r, 0, L.a(j), card);
        }
    }
    if (config.pairwise_bounds) {
        for (Index i = 0; i < T; ++i)
            for (Index j = i + 1; j < T; ++j) {
                mm.entry(B.add_ge_row(0.0), L.a(i), L.a(j), 1.0);
                Index r = B.add_le_row(0.0);
                mm.entry(r, L.a(i), L.a(j), 1.0);
                mm.entry(r, 0, L.a(i), -1.0);
                r = B.add_le_row(0.0);
                mm.entry(r, L.a(i), L.a(j), 1.0);
                mm.entry(r, 0, L.a(j), -1.0);
                r = B.add_le_row(1.0);
                mm.entry(r, 0, L.a(i), 1.0);
                mm.entry(r, 0, L.a(j), 1.0);
                mm.entry(r, L.a(i), L.a(j), -1.0);
            }
    }

    auto x0_bound = [&](double rhs) {
        const Index r = B.add_le_row(rhs);
        for (Index c = 0; c < d; ++c)
            mm.entry(r, L.x0(c), L.x0(c), 1.0);
    };

    // Window subsampling as linear matrix inequalities in the first moments of a (and b).
    const int psd_id = spec.version == 1 ? 7 : 14;
    const auto& psd_fam = spec.family(psd_id);
    for (long long l = 0; l < spec.num_windows; ++l) {
        const std::size_t zb = B.add_psd_block(d);
        const MatrixXd& rhs = psd_fam.rhs_psd[static_cast<std::size_t>(l)];
        const long long start = spec.window_start(l);
        for (Index p = 0; p < d; ++p)
            for (Index q = 0; q <= p; ++q) {
                if (spec.version == 1) {
                    double fixed = rhs(p, q);
                    for (long long j = 0; j < spec.window_len(l); ++j)
                        fixed -= spec.gram_terms[static_cast<std::size_t>(j)](p, q);
                    const Index r = B.add_row(fixed);
                    B.add_entry(r, zb, p, q, 1.0);
                    for (long long j = 0; j < spec.window_len(l); ++j)
                        mm.entry(r, 0, L.a(static_cast<Index>(start + j)),
                                    -spec.gram_terms[static_cast<std::size_t>(j)](p, q));
                } else {
                    const Index r = B.add_row(0.0);
                    const Index bl = L.b(static_cast<Index>(l));
                    B.add_entry(r, zb, p, q, 1.0);
                    mm.entry(r, 0, bl, -rhs(p, q));
                    for (long long j = 0; j < spec.window_len(l); ++j) {
                        const double g = spec.gram_terms[static_cast<std::size_t>(j)](p, q);
                        mm.entry(r, 0, bl, g);
                        mm.entry(r, L.a(static_cast<Index>(start + j)), bl, -g);
                    }
                }
            }
    }

    if (spec.version == 1) {
        const auto& f5 = spec.family(5).rhs;
        const auto& f6 = spec.family(6).rhs;
        for (Index i = 0; i < T; ++i) {
            const Index r = B.add_le_row(f5[static_cast<std::size_t>(i)]);
            for (Index c = 0; c < m; ++c)
                mm.entry(r, L.v(i, c), L.v(i, c), 1.0);
        }
        for (Index i = 1; i < T; ++i) {
            const Index r = B.add_le_row(f6[static_cast<std::size_t>(i - 1)]);
            for (Index c = 0; c < d; ++c)
                mm.entry(r, L.w(i, c), L.w(i, c), 1.0);
        }
        x0_bound(spec.family(8).rhs.front());
    } else {
        x0_bound(spec.family(5).rhs.front());
        for (Index l = 0; l < L.windows; ++l) {
            const Index r = B.add_row(0.0);
            mm.entry(r, L.b(l), L.b(l), 1.0);
            mm.entry(r, 0, L.b(l), -1.0);
        }
        {
            const Index r = B.add_ge_row(spec.family(7).rhs.front());
            for (Index l = 0; l < L.windows; ++l)
                mm.entry(r, 0, L.b(l), 1.0);
        }
        {
            // sum_i (1 - b_l(i))(1 - a_i) expanded; the constant T moves to the right-hand side.
            const double scale = spec.normalize_window_mix ? 1.0 / Td : 1.0;
            const Index r = B.add_le_row(spec.family(8).rhs.front() - scale * Td);
            for (Index i = 0; i < T; ++i) {
                const Index bl = L.b(static_cast<Index>(spec.window_of(i)));
                mm.entry(r, 0, bl, -scale);
                mm.entry(r, 0, L.a(i), -scale);
                mm.entry(r, L.a(i), bl, scale);
            }
        }
        const auto& band = spec.family(9);
        for (Index i = 0; i < T; ++i) {
            const Index r = B.add_le_row(band.rhs[static_cast<std::size_t>(i)]);
            for (Index c = 0; c < d; ++c) {
                Affine f = mm.state(i, c);
                f.emplace_back(0, -spec.x_prime(i, c));
                mm.product(r, f, f, 1.0);
            }
        }
        {
            const auto powers = matrix_powers(model.A, static_cast<Index>(spec.t));
            const Index r = B.add_le_row(spec.family(11).rhs.front());
            for (long long l = 0; l < spec.num_windows; ++l) {
                const long long start = spec.window_start(l);
                for (Index c = 0; c < d; ++c) {
                    VectorXd dense = VectorXd::Zero(L.side());
                    for (long long i = 1; i <= spec.t && start + i < T; ++i) {
                        const MatrixXd& P = powers[static_cast<std::size_t>(spec.t - i)];
                        for (Index q = 0; q < d; ++q)
                            dense(L.w(static_cast<Index>(start + i), q)) += P(c, q);
                    }
                    const Affine u = compress(dense);
                    mm.product(r, u, u, 1.0 / Td);
                }
            }
        }
        {
            const Index r = B.add_le_row(spec.family(12).rhs.front());
            for (Index i = 0; i < T; ++i)
                for (Index c = 0; c < m; ++c)
                    mm.entry(r, L.v(i, c), L.v(i, c), 1.0 / Td);
        }
    }

    // Objective.
    for (Index i = 0; i < T; ++i)
        for (Index c = 0; c < m; ++c)
            mm.cost(L.e(i, c), L.e(i, c), spec.fit_weight);
    for (Index i = 1; i < T; ++i)
        for (Index c = 0; c < d; ++c)
            mm.cost(L.w(i, c), L.w(i, c), spec.step_weight);
    for (Index c = 0; c < d; ++c)
        mm.cost(L.x0(c), L.x0(c), spec.prior_weight);

    const ConicProblem problem = B.build();
    ConicResult res = solve_conic(problem, config.conic);
    if (config.polish_iter > 0 && config.conic.method == ConicMethod::interior_point && res.converged) {
        ConicSettings polish = config.conic;
        polish.method = ConicMethod::admm;
        polish.max_iter = config.polish_iter;
        polish.eps = config.polish_eps;
        polish.gap_tol = config.polish_eps;
        ConicResult refined = solve_conic_admm(problem, polish, &res);
        if (refined.converged) {
            refined.iterations += res.iterations;
            res = std::move(refined);
        }
    }
    const MatrixXd M = smat(res.x.head(L.side() * (L.side() + 1) / 2), L.side());

    SmootherSolution sol;
    sol.backend = "moment";
    // The dual value is a certified bound; the primal value can exceed it by the gap tolerance.
    sol.objective = res.dual_objective;
    sol.lower_bound = res.dual_objective;
    sol.converged = res.converged;
    sol.rounds = res.iterations;
    if (!res.converged)
        sol.flags.push_back("conic solver stopped before tolerance");

    const VectorXd mean = M.row(0).transpose();
    sol.x_hat.resize(T, d);
    sol.w_hat = MatrixXd::Zero(T, d);
    for (Index c = 0; c < d; ++c)
        sol.x_hat(0, c) = mean(L.x0(c));
    for (Index i = 1; i < T; ++i) {
        for (Index c = 0; c < d; ++c)
            sol.w_hat(i, c) = mean(L.w(i, c));
        sol.x_hat.row(i) = sol.x_hat.row(i - 1) * model.A.transpose() + sol.w_hat.row(i);
    }
    sol.v_hat.resize(T, m);
    sol.a_hat.resize(T);
    for (Index i = 0; i < T; ++i) {
        for (Index c = 0; c < m; ++c)
            sol.v_hat(i, c) = mean(L.v(i, c));
        sol.a_hat(i) = std::clamp(mean(L.a(i)), 0.0, 1.0);
    }
    if (L.has_b) {
        sol.b_hat.resize(L.windows);
        for (Index l = 0; l < L.windows; ++l)
            sol.b_hat(l) = std::clamp(mean(L.b(l)), 0.0, 1.0);
    }
    sol.feasibility = check_feasibility(sol.candidate(), spec);

    if (diagnostics) {
        diagnostics->conic = res;
        diagnostics->moment_matrix = M;
        diagnostics->rows = problem.A.rows();
    }
    return sol;
}

}  // namespace rlqe
