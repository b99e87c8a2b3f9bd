#include <catch_amalgamated.hpp>

#include "rlqe/alternating.hpp"
#include "rlqe/kalman.hpp"

#include <cmath>

using namespace rlqe;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

double rel_diff(const MatrixXd& a, const MatrixXd& b)
{
    return (a - b).norm() / std::max(1.0, b.norm());
}

ProgramSpec program1(const EpisodeData& ep, double eta, long long t)
{
    ProgramOptions opts;
    return build_program(1, ep.model, ep.y, eta, t, opts);
}

void check_dynamics(const SmootherSolution& sol, const SystemModel& m)
{
    for (Index i = 1; i < sol.x_hat.rows(); ++i)
        CHECK((row_vec(sol.x_hat, i) - m.A * row_vec(sol.x_hat, i - 1) - row_vec(sol.w_hat, i)).norm() <=
              1e-12 * std::max(1.0, sol.x_hat.row(i).norm()));
}

}  // namespace

TEST_CASE("brute force counts masks meeting the cardinality bound")
{
    const SystemModel m = stable_scalar_system(0.5, 3);
    const EpisodeData ep = simulate(m, 1);
    // floor(1.01 * 0.4 * 3) = 1 drop: the full mask plus three single drops.
    const SmootherSolution sol = brute_force_oracle(m, ep.y, 0.4);
    CHECK(sol.rounds == 4);
    CHECK(sol.backend == "brute_force");
    CHECK(sol.a_hat.sum() >= 2.0);

    const SmootherSolution clean = brute_force_oracle(m, ep.y, 0.0);
    CHECK(clean.rounds == 1);
    CHECK(clean.a_hat.isOnes());
}

TEST_CASE("brute force refuses long horizons")
{
    const SystemModel m = stable_scalar_system(0.5, 15);
    const EpisodeData ep = simulate(m, 1);
    REQUIRE_THROWS_AS(brute_force_oracle(program1(ep, 0.1, 5)), std::invalid_argument);
}

TEST_CASE("brute force at eta = 0 is the Kalman smoother")
{
    const SystemModel m = stable_scalar_system(0.7, 9);
    const EpisodeData ep = simulate(m, 3);
    const SmootherSolution sol = brute_force_oracle(program1(ep, 0.0, 3));
    const SmootherResult ks = smoother(m, ep.y, Mask(9, 1));
    CHECK(rel_diff(sol.x_hat, ks.x_hat) <= 1e-8);
    CHECK_THAT(sol.objective, WithinRel(ks.opt_value, 1e-8));
}

TEST_CASE("alternating solver at eta = 0 reproduces the smoother")
{
    for (std::uint64_t seed : {1u, 2u, 3u}) {
        const SystemModel m = rotation_system(0.4, 60);
        const EpisodeData ep = simulate(m, seed);
        const SmootherSolution sol = solve_alternating(program1(ep, 0.0, 6));
        const SmootherResult ks = smoother(m, ep.y, Mask(60, 1));
        CHECK(sol.converged);
        CHECK(sol.rounds <= 2);
        CHECK(sol.a_hat.isOnes());
        CHECK(rel_diff(sol.x_hat, ks.x_hat) <= 1e-6);
        check_dynamics(sol, m);
    }
}

TEST_CASE("one huge spike is dropped and the oracle trajectory recovered")
{
    const SystemModel m = stable_scalar_system(0.5, 8);
    EpisodeData ep = simulate(m, 4);
    ep.y(3, 0) += 1000.0;
    ep.a_star[3] = 0;
    const ProgramSpec spec = program1(ep, 0.15, 8);
    REQUIRE(spec.drop_budget() == 1);

    const SmootherSolution alt = solve_alternating(spec);
    const SmootherSolution brute = brute_force_oracle(spec);
    Mask expected(8, 1);
    expected[3] = 0;
    CHECK(alt.rounded_mask() == expected);
    CHECK(brute.rounded_mask() == expected);
    const MatrixXd oracle = oracle_smoother(ep).x_hat;
    CHECK((alt.x_hat - oracle).cwiseAbs().maxCoeff() <= 1e-5);
    CHECK((brute.x_hat - oracle).cwiseAbs().maxCoeff() <= 1e-5);
    check_dynamics(alt, m);
}

TEST_CASE("alternating matches brute force on small scalar instances")
{
    int agree = 0;
    const int n = 50;
    for (int s = 0; s < n; ++s) {
        const SystemModel m = stable_scalar_system(0.8, 10);
        const EpisodeData ep = apply_corruptions(simulate(m, 500 + s), 0.2, AdversaryStrategy::spike(8.0), 900 + s);
        const ProgramSpec spec = program1(ep, 0.2, 5);
        const SmootherSolution alt = solve_alternating(spec);
        const SmootherSolution brute = brute_force_oracle(spec);
        // Exhaustive search is the global optimum of the same program.
        CHECK(brute.objective <= alt.objective + 1e-9);
        agree += alt.objective - brute.objective <= 1e-6;
    }
    CHECK(agree >= 45);
}

TEST_CASE("alternating stays near the exhaustive optimum on 12-step windows of a 2-d episode")
{
    const SystemModel full = rotation_system(0.3, 400);
    const EpisodeData ep = apply_corruptions(simulate(full, 17), 0.2, AdversaryStrategy::spike(15.0), 18);
    for (Index start : {Index{0}, Index{96}, Index{204}, Index{336}}) {
        EpisodeData piece = ep;
        piece.model.T = 12;
        piece.y = ep.y.middleRows(start, 12);
        piece.x_star = ep.x_star.middleRows(start, 12);
        piece.a_star.assign(ep.a_star.begin() + start, ep.a_star.begin() + start + 12);
        const ProgramSpec spec = program1(piece, 0.2, 4);
        const SmootherSolution alt = solve_alternating(spec);
        const SmootherSolution brute = brute_force_oracle(spec);
        INFO("window at " << start);
        CHECK(alt.objective <= 1.05 * brute.objective);
        check_dynamics(alt, full);
    }
}

TEST_CASE("solutions respect the drop budget and report feasibility")
{
    const SystemModel m = random_walk_system(200);
    const EpisodeData ep =
        apply_corruptions(simulate(m, 8), 0.1, AdversaryStrategy::random_walk_attack(std::sqrt(200.0)), 9);
    const ProgramSpec spec = program1(ep, 0.1, 10);
    const SmootherSolution sol = solve_alternating(spec);
    CHECK(200 - sol.a_hat.sum() <= static_cast<double>(spec.drop_budget()) + 1e-12);
    CHECK((sol.a_hat.array() >= 0.0).all());
    CHECK((sol.a_hat.array() <= 1.0).all());
    CHECK(sol.feasibility.families.size() == 8);
    CHECK(sol.feasibility.family(4).feasible);
    check_dynamics(sol, m);
    // Recomputing the objective from the returned trajectory gives the reported value.
    CHECK_THAT(program_objective(spec, sol.x_hat, sol.a_hat), WithinRel(sol.objective, 1e-10));
}

TEST_CASE("solver is deterministic")
{
    const SystemModel m = stable_scalar_system(0.6, 80);
    const EpisodeData ep = apply_corruptions(simulate(m, 21), 0.15, AdversaryStrategy::heavy_tail(2.0, 5.0), 22);
    const ProgramSpec spec = program1(ep, 0.15, 8);
    const SmootherSolution a = solve_alternating(spec), b = solve_alternating(spec);
    CHECK(a.x_hat == b.x_hat);
    CHECK(a.a_hat == b.a_hat);
    CHECK(a.objective == b.objective);
}

TEST_CASE("Program 2 indicators: b marks the windows that keep their subsampling bound")
{
    const SystemModel m = stable_scalar_system(0.5, 48);
    const EpisodeData ep = apply_corruptions(simulate(m, 31), 0.1, AdversaryStrategy::spike(20.0), 32);
    ProgramOptions opts;
    opts.delta1 = 0.25;
    const ProgramSpec spec = build_program(2, m, ep.y, 0.1, 6, opts);
    const SmootherSolution sol = solve_alternating(spec);
    REQUIRE(sol.b_hat.size() == spec.num_windows);
    CHECK(sol.b_hat == window_indicators(spec, sol.a_hat));
    CHECK(sol.feasibility.families.size() == 14);
    check_dynamics(sol, m);
}

TEST_CASE("residual noise is zero on dropped steps")
{
    const SystemModel m = stable_scalar_system(0.5, 10);
    const EpisodeData ep = simulate(m, 3);
    const ProgramSpec spec = program1(ep, 0.2, 5);
    VectorXd a = VectorXd::Ones(10);
    a(4) = 0.0;
    const MatrixXd x = ep.x_star;
    const MatrixXd v = residual_noise(spec, x, a);
    CHECK(v(4, 0) == 0.0);
    CHECK_THAT(v(2, 0), WithinAbs(ep.y(2, 0) - x(2, 0), 1e-15));
}

TEST_CASE("indicator feasibility checks the cardinality bound")
{
    const SystemModel m = stable_scalar_system(0.5, 10);
    const EpisodeData ep = simulate(m, 3);
    const ProgramSpec spec = program1(ep, 0.2, 5);
    VectorXd a = VectorXd::Ones(10);
    const VectorXd none;
    CHECK(indicators_feasible(spec, a, none));
    a(0) = a(1) = 0.0;
    CHECK(indicators_feasible(spec, a, none));
    a(2) = 0.0;
    CHECK_FALSE(indicators_feasible(spec, a, none));
}

TEST_CASE("single-step programs have no process-noise instances")
{
    const SystemModel m = stable_scalar_system(0.5, 1);
    const EpisodeData ep = simulate(m, 2);
    const ProgramSpec spec = program1(ep, 0.0, 1);
    CHECK(spec.family(6).rhs.empty());
    const SmootherSolution sol = solve_alternating(spec);
    // T = 1 smoother: x0 = y0 R2 / (R2 + tau2).
    CHECK_THAT(sol.x_hat(0, 0), WithinAbs(ep.y(0, 0) * m.R2 / (m.R2 + m.tau2), 1e-10));
}
