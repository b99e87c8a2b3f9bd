#include "rlqe/alternating.hpp"

#include "rlqe/kalman.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace rlqe {

namespace {

bool exceeds(double lhs, double rhs)
{
    return lhs > rhs + 1e-9 * std::max(1.0, std::abs(rhs));
}

double window_noise_response(const ProgramSpec& spec, const MatrixXd& w, const VectorXd& a)
{
    const auto& model = spec.model;
    double lhs = 0.0;
    for (long long l = 0; l < spec.num_windows; ++l) {
        VectorXd u = VectorXd::Zero(model.d());
        const long long start = spec.window_start(l);
        for (long long j = 0; j < spec.window_len(l); ++j) {
            if (j >= 1)
                u = model.A * u + row_vec(w, static_cast<Index>(start + j));
            lhs += (1.0 - a(static_cast<Index>(start + j))) * (model.B * u).squaredNorm();
        }
    }
    return lhs / spec.T();
}

double window_process_sum(const ProgramSpec& spec, const MatrixXd& w)
{
    const auto& model = spec.model;
    double lhs = 0.0;
    for (long long l = 0; l < spec.num_windows; ++l) {
        VectorXd u = VectorXd::Zero(model.d());
        const long long start = spec.window_start(l);
        for (long long j = 1; j <= spec.t && start + j < spec.T(); ++j)
            u = model.A * u + row_vec(w, static_cast<Index>(start + j));
        lhs += u.squaredNorm();
    }
    return lhs / spec.T();
}

Index source_index(const ProgramSpec& spec, Index i)
{
    return (spec.version == 2 && spec.measurement_uses_previous_state && i >= 1) ? i - 1 : i;
}

double psd_tol(const ProgramSpec& spec, long long l)
{
    const int id = spec.version == 1 ? 7 : 14;
    return 1e-9 * std::max(1.0, spec.family(id).rhs_psd[static_cast<std::size_t>(l)].norm());
}

double window_slack(const ProgramSpec& spec, const VectorXd& a, long long l)
{
    const int id = spec.version == 1 ? 7 : 14;
    MatrixXd lhs = MatrixXd::Zero(spec.model.d(), spec.model.d());
    const long long start = spec.window_start(l);
    for (long long j = 0; j < spec.window_len(l); ++j)
        lhs += (1.0 - a(static_cast<Index>(start + j))) * spec.gram_terms[static_cast<std::size_t>(j)];
    return min_eigenvalue(spec.family(id).rhs_psd[static_cast<std::size_t>(l)] - lhs);
}

/// Number of drops allowed inside windows with b = 0 under the window-mixing constraint.
long long bad_window_budget(const ProgramSpec& spec)
{
    double cap = spec.family(8).rhs.front();
    if (spec.normalize_window_mix)
        cap *= spec.T();
    return static_cast<long long>(std::floor(cap + 1e-9));
}

std::vector<Index> residual_order(const ProgramSpec& spec, const MatrixXd& x)
{
    const auto& model = spec.model;
    const Index T = spec.T();
    std::vector<double> r(static_cast<std::size_t>(T));
    for (Index i = 0; i < T; ++i)
        r[static_cast<std::size_t>(i)] = (model.B * row_vec(x, i) - row_vec(spec.y, i)).squaredNorm() / model.tau2;
    std::vector<Index> order(static_cast<std::size_t>(T));
    std::iota(order.begin(), order.end(), Index{0});
    std::stable_sort(order.begin(), order.end(), [&](Index p, Index q) {
        return r[static_cast<std::size_t>(p)] > r[static_cast<std::size_t>(q)];
    });
    return order;
}

/// Greedy drop of the largest residuals, re-admitting any index whose drop breaks its window constraint.
VectorXd drop_pass(const ProgramSpec& spec, const MatrixXd& x, const VectorXd& b)
{
    const Index T = spec.T();
    const long long budget = spec.drop_budget();
    const long long bad_budget = spec.version == 2 ? bad_window_budget(spec) : 0;
    VectorXd a = VectorXd::Ones(T);
    long long drops = 0, bad_drops = 0;
    for (Index i : residual_order(spec, x)) {
        if (drops >= budget)
            break;
        const long long l = spec.window_of(i);
        if (spec.version == 2 && b(static_cast<Index>(l)) < 0.5) {
            if (bad_drops < bad_budget) {
                a(i) = 0.0;
                ++drops;
                ++bad_drops;
            }
            continue;
        }
        a(i) = 0.0;
        if (window_slack(spec, a, l) < -psd_tol(spec, l))
            a(i) = 1.0;
        else
            ++drops;
    }
    return a;
}

/// Window indicators: zero on the floor(delta_1 nW) windows whose unrepaired drop pattern is worst.
VectorXd choose_windows(const ProgramSpec& spec, const MatrixXd& x)
{
    const Index T = spec.T();
    VectorXd desired = VectorXd::Ones(T);
    const auto order = residual_order(spec, x);
    for (long long k = 0; k < std::min<long long>(spec.drop_budget(), T); ++k)
        desired(order[static_cast<std::size_t>(k)]) = 0.0;
    std::vector<std::pair<double, long long>> bad;
    for (long long l = 0; l < spec.num_windows; ++l) {
        const double s = window_slack(spec, desired, l);
        if (s < -psd_tol(spec, l))
            bad.emplace_back(s, l);
    }
    std::stable_sort(bad.begin(), bad.end(), [](const auto& p, const auto& q) { return p.first < q.first; });
    const auto zeros = static_cast<std::size_t>(std::floor(spec.delta1 * static_cast<double>(spec.num_windows) + 1e-9));
    VectorXd b = VectorXd::Ones(spec.num_windows);
    for (std::size_t k = 0; k < std::min(zeros, bad.size()); ++k)
        b(static_cast<Index>(bad[k].second)) = 0.0;
    return b;
}

double objective_for(const ProgramSpec& spec, const VectorXd& a, const VectorXd& b, const AlternatingConfig& cfg,
                     MatrixXd* x_out = nullptr)
{
    MatrixXd x = solve_for_indicators(spec, a, b, cfg);
    const double obj = program_objective(spec, x, a);
    if (x_out)
        *x_out = std::move(x);
    return obj;
}

VectorXd final_windows(const ProgramSpec& spec, const VectorXd& a)
{
    return spec.version == 2 ? window_indicators(spec, a) : VectorXd();
}

}  // namespace

MatrixXd residual_noise(const ProgramSpec& spec, const MatrixXd& x, const VectorXd& a)
{
    const Index T = spec.T();
    MatrixXd v = MatrixXd::Zero(T, spec.model.m());
    for (Index i = 0; i < T; ++i)
        v.row(i) = a(i) * (row_vec(spec.y, i) - spec.model.B * row_vec(x, source_index(spec, i))).transpose();
    return v;
}

MatrixXd solve_for_indicators(const ProgramSpec& spec, const VectorXd& a, const VectorXd& b,
                              const AlternatingConfig& cfg)
{
    (void)b;
    const auto& model = spec.model;
    const Index T = spec.T();
    QuadraticWeights wts;
    wts.obs = a.cwiseMax(0.0).cwiseMin(1.0);
    wts.step = VectorXd::Ones(T);
    // A vanishing prior keeps the system nonsingular when the objective has no x_0 term.
    wts.prior = spec.include_prior_term ? 1.0 : 1e-12;
    if (spec.version == 2) {
        wts.anchor = VectorXd::Zero(T);
        wts.center = spec.x_prime;
    }
    const double g = cfg.penalty_growth;

    MatrixXd x;
    for (int round = 0; round <= cfg.penalty_rounds; ++round) {
        x = solve_weighted_map(model, spec.y, wts);
        if (round == cfg.penalty_rounds)
            break;
        bool any = false;
        const MatrixXd w = steps_of(model, x);
        if (spec.version == 1) {
            const auto& r5 = spec.family(5).rhs;
            const auto& r6 = spec.family(6).rhs;
            for (Index i = 0; i < T; ++i) {
                const auto s = static_cast<std::size_t>(i);
                if (a(i) > 0 && exceeds((row_vec(spec.y, i) - model.B * row_vec(x, i)).squaredNorm(), r5[s])) {
                    wts.obs(i) *= g;
                    any = true;
                }
                if (i >= 1 && exceeds(w.row(i).squaredNorm(), r6[s - 1])) {
                    wts.step(i) *= g;
                    any = true;
                }
            }
            if (exceeds(x.row(0).squaredNorm(), spec.family(8).rhs.front())) {
                wts.prior = std::max(wts.prior, 1.0) * g;
                any = true;
            }
        } else {
            if (exceeds(x.row(0).squaredNorm(), spec.family(5).rhs.front())) {
                wts.prior = std::max(wts.prior, 1.0) * g;
                any = true;
            }
            const auto& band = spec.family(9);
            for (Index i = 0; i < T; ++i) {
                if (exceeds((x.row(i) - spec.x_prime.row(i)).squaredNorm(), band.rhs[static_cast<std::size_t>(i)])) {
                    wts.anchor(i) = wts.anchor(i) > 0 ? wts.anchor(i) * g : 1.0 / model.sigma2;
                    any = true;
                }
            }
            if (exceeds(window_noise_response(spec, w, a), spec.family(10).rhs.front()) ||
                exceeds(window_process_sum(spec, w), spec.family(11).rhs.front())) {
                wts.step *= g;
                any = true;
            }
            const MatrixXd v = residual_noise(spec, x, a);
            if (exceeds(v.squaredNorm() / T, spec.family(12).rhs.front())) {
                for (Index i = 0; i < T; ++i)
                    if (a(i) > 0)
                        wts.obs(i) *= g;
                any = true;
            }
        }
        if (!any)
            break;
    }
    return x;
}

bool indicators_feasible(const ProgramSpec& spec, const VectorXd& a, const VectorXd& b)
{
    if (a.sum() < spec.family(4).rhs.front() - 1e-9)
        return false;
    if (spec.version == 2) {
        if (b.sum() < spec.family(7).rhs.front() - 1e-9)
            return false;
        double mix = 0.0;
        for (Index i = 0; i < spec.T(); ++i)
            mix += (1.0 - b(static_cast<Index>(spec.window_of(i)))) * (1.0 - a(i));
        if (spec.normalize_window_mix)
            mix /= spec.T();
        if (exceeds(mix, spec.family(8).rhs.front()))
            return false;
    }
    for (long long l = 0; l < spec.num_windows; ++l) {
        if (spec.version == 2 && b(static_cast<Index>(l)) < 0.5)
            continue;
        if (window_slack(spec, a, l) < -psd_tol(spec, l))
            return false;
    }
    return true;
}

SmootherSolution evaluate_indicators(const ProgramSpec& spec, const VectorXd& a, const VectorXd& b,
                                     const AlternatingConfig& cfg, const std::string& backend)
{
    SmootherSolution sol;
    sol.backend = backend;
    sol.a_hat = a;
    sol.b_hat = b;
    sol.x_hat = solve_for_indicators(spec, a, b, cfg);
    sol.w_hat = steps_of(spec.model, sol.x_hat);
    sol.v_hat = residual_noise(spec, sol.x_hat, a);
    sol.objective = program_objective(spec, sol.x_hat, a);
    sol.feasibility = check_feasibility(sol.candidate(), spec);
    return sol;
}

SmootherSolution solve_alternating(const ProgramSpec& spec, const AlternatingConfig& cfg)
{
    const Index T = spec.T();
    const VectorXd ones = VectorXd::Ones(T);
    const VectorXd ones_b = spec.version == 2 ? VectorXd::Ones(spec.num_windows) : VectorXd();

    VectorXd best_a = ones, best_b = ones_b;
    double best_obj = indicators_feasible(spec, ones, ones_b) ? objective_for(spec, ones, ones_b, cfg)
                                                              : std::numeric_limits<double>::infinity();
    int rounds = 0;
    bool converged = true;

    // Alternation from a starting trajectory; the all-clean mask is the starting indicator pattern.
    auto alternate = [&](MatrixXd x) {
        VectorXd a = ones, b = ones_b;
        double obj = program_objective(spec, x, a);
        for (int round = 1; round <= cfg.max_rounds; ++round) {
            ++rounds;
            VectorXd nb = b;
            if (spec.version == 2)
                nb = choose_windows(spec, x);
            const VectorXd na = drop_pass(spec, x, nb);
            MatrixXd nx;
            const double nobj = objective_for(spec, na, nb, cfg, &nx);
            const bool same = na == a && (spec.version == 1 || nb == b);
            if (nobj < best_obj && indicators_feasible(spec, na, nb)) {
                best_obj = nobj;
                best_a = na;
                best_b = nb;
            }
            const double change = std::abs(nobj - obj);
            a = na;
            b = nb;
            x = std::move(nx);
            obj = nobj;
            if (same || change < cfg.tol)
                return;
        }
        converged = false;
    };

    // Two starts: the constrained trajectory for the all-clean mask, and the plain smoother whose
    // residuals are not pulled toward outliers by the noise-bound penalties.
    alternate(solve_for_indicators(spec, ones, ones_b, cfg));
    if (cfg.plain_start) {
        AlternatingConfig plain = cfg;
        plain.penalty_rounds = 0;
        alternate(solve_for_indicators(spec, ones, ones_b, plain));
    }

    if (cfg.swap_refine && T <= cfg.swap_max_T) {
        // First-improvement local search over single swaps and single extra drops.
        const long long budget = spec.drop_budget();
        bool improved = true;
        while (improved) {
            improved = false;
            long long drops = 0;
            for (Index i = 0; i < T; ++i)
                drops += best_a(i) < 0.5;
            auto try_mask = [&](const VectorXd& cand) {
                const VectorXd cb = final_windows(spec, cand);
                if (!indicators_feasible(spec, cand, cb))
                    return false;
                const double o = objective_for(spec, cand, cb, cfg);
                if (o < best_obj - 1e-12) {
                    best_obj = o;
                    best_a = cand;
                    best_b = cb;
                    return true;
                }
                return false;
            };
            for (Index j = 0; j < T && !improved && drops < budget; ++j) {
                if (best_a(j) < 0.5)
                    continue;
                VectorXd cand = best_a;
                cand(j) = 0.0;
                improved = try_mask(cand);
            }
            for (Index i = 0; i < T && !improved; ++i) {
                if (best_a(i) > 0.5)
                    continue;
                for (Index j = 0; j < T && !improved; ++j) {
                    if (best_a(j) < 0.5)
                        continue;
                    VectorXd cand = best_a;
                    cand(i) = 1.0;
                    cand(j) = 0.0;
                    improved = try_mask(cand);
                }
            }
        }
    }

    if (spec.version == 2)
        best_b = final_windows(spec, best_a);
    SmootherSolution sol = evaluate_indicators(spec, best_a, best_b, cfg, "alternating");
    sol.rounds = rounds;
    sol.converged = converged;
    if (!converged)
        sol.flags.push_back("round limit reached");
    if (!sol.feasibility.feasible)
        sol.flags.push_back("infeasible solution");
    return sol;
}

SmootherSolution brute_force_oracle(const ProgramSpec& spec, const AlternatingConfig& cfg)
{
    const Index T = spec.T();
    if (T > 14)
        throw std::invalid_argument("brute_force_oracle: T must be at most 14");
    const long long budget = std::min<long long>(spec.drop_budget(), T);

    double best_obj = std::numeric_limits<double>::infinity();
    VectorXd best_a, best_b;
    VectorXd a = VectorXd::Ones(T);
    int enumerated = 0;
    std::function<void(Index, long long)> visit = [&](Index start, long long left) {
        ++enumerated;
        const VectorXd b = final_windows(spec, a);
        if (indicators_feasible(spec, a, b)) {
            const double o = objective_for(spec, a, b, cfg);
            if (o < best_obj) {
                best_obj = o;
                best_a = a;
                best_b = b;
            }
        }
        if (left == 0)
            return;
        for (Index i = start; i < T; ++i) {
            a(i) = 0.0;
            visit(i + 1, left - 1);
            a(i) = 1.0;
        }
    };
    visit(0, budget);
    if (best_a.size() == 0)
        throw std::runtime_error("brute_force_oracle: no indicator pattern satisfies the window constraints");
    SmootherSolution sol = evaluate_indicators(spec, best_a, best_b, cfg, "brute_force");
    sol.converged = true;
    sol.lower_bound = sol.objective;
    sol.rounds = enumerated;
    return sol;
}

SmootherSolution brute_force_oracle(const SystemModel& model, const MatrixXd& y, double eta)
{
    ProgramOptions opts;
    const auto profile = estimate_constants(model.A, model.B, static_cast<int>(model.d()), model.T);
    opts.profile = profile;
    const long long t =
        std::min<long long>(window_length(profile, model.d(), model.T, opts.delta, WindowStage::logT), model.T);
    return brute_force_oracle(build_program(1, model, y, eta, t, opts));
}

}  // namespace rlqe
