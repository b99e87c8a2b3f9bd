#include <catch_amalgamated.hpp>

#include "rlqe/kalman.hpp"
#include "rlqe/pipeline.hpp"

#include <cmath>

using namespace rlqe;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

SmootherSolution trajectory_only(const MatrixXd& x)
{
    SmootherSolution s;
    s.x_hat = x;
    return s;
}

}  // namespace

TEST_CASE("band radius: geometric term plus a fixed floor")
{
    const SystemModel m = stable_scalar_system(0.5, 400);
    const ObservabilityProfile prof = estimate_constants(m.A, m.B, 1, m.T);
    const SmootherSolution sol = trajectory_only(MatrixXd::Zero(400, 1));
    const double delta = 0.05, C = 4.0;
    const long long t_pre = 10;
    const ConfidenceBand band = confidence_band(sol, prof, m, delta, t_pre, C);

    const double e_noise = m.tau2 * (1.0 + std::log(400 / delta)) +
                           10.0 * prof.rho * prof.rho * prof.B_norm * prof.B_norm * m.sigma2 * (1.0 + std::log(400 / delta));
    CHECK_THAT(band.e_noise, WithinRel(e_noise, 1e-14));
    const double floor = C * std::pow(prof.rho, 4) * std::sqrt(e_noise * 10.0 / prof.kappa);
    CHECK_THAT(band.floor, WithinRel(floor, 1e-14));
    const double geo = C * prof.rho * std::sqrt(m.R2) * (1.0 + std::sqrt(std::log(1.0 / delta)));
    CHECK_THAT(band.radius(0), WithinRel(geo + floor, 1e-14));
    CHECK_THAT(band.radius(25), WithinRel(geo / 2.0 + floor, 1e-14));
    // Deep windows: only the floor remains.
    CHECK_THAT(band.radius(399), WithinAbs(floor, 1e-5 * geo));

    for (Index i = 1; i < 400; ++i) {
        CHECK(band.radius(i) > 0.0);
        CHECK(band.radius(i) <= band.radius(i - 1));
    }
    REQUIRE_THROWS_AS(confidence_band(sol, prof, m, delta, 0), std::invalid_argument);
}

TEST_CASE("doubling R doubles only the geometric part of the band")
{
    SystemModel m = stable_scalar_system(0.5, 64);
    const ObservabilityProfile prof = estimate_constants(m.A, m.B, 1, m.T);
    const SmootherSolution sol = trajectory_only(MatrixXd::Zero(64, 1));
    const ConfidenceBand a = confidence_band(sol, prof, m, 0.05, 8);
    m.R2 *= 4.0;
    const ConfidenceBand b = confidence_band(sol, prof, m, 0.05, 8);
    CHECK(a.floor == b.floor);
    for (Index i : {Index{0}, Index{9}, Index{63}})
        CHECK_THAT(b.radius(i) - b.floor, WithinRel(2.0 * (a.radius(i) - a.floor), 1e-13));
}

TEST_CASE("band membership and coverage")
{
    ConfidenceBand band;
    band.center = MatrixXd::Zero(4, 2);
    band.radius = VectorXd::Constant(4, 1.0);
    MatrixXd x = MatrixXd::Zero(4, 2);
    x(1, 0) = 0.6;
    x(1, 1) = 0.8;
    CHECK(band.contains(x));
    x(2, 0) = 1.5;
    CHECK_FALSE(band.contains(x));
    CHECK(band.contains(x, 0.5));
    CHECK_THAT(band.coverage(x), WithinAbs(0.75, 1e-15));
}

TEST_CASE("plan: windows are multiples of s and delta1 is clamped")
{
    PipelineConfig cfg;
    cfg.eta = 0.1;
    for (const SystemModel& m : {stable_scalar_system(0.5, 2048), coordinate_cycle_system(3, 4096)}) {
        const PipelinePlan plan = plan_pipeline(m, 0.05, cfg);
        INFO("d = " << m.d());
        CHECK(plan.t_pre % plan.profile.s == 0);
        CHECK(plan.t % plan.profile.s == 0);
        CHECK(plan.t_pre <= m.T);
        CHECK(plan.t <= m.T);
        CHECK(plan.delta1 > 0.0);
        CHECK(plan.delta1 <= 0.5);
        const double logT = std::log(static_cast<double>(m.T));
        CHECK(plan.delta1 >= std::min(0.5, cfg.constants.C_delta * std::log(20.0) / (logT * logT * logT)) - 1e-15);
        CHECK_FALSE(plan.degraded);
    }
    REQUIRE_THROWS_AS(plan_pipeline(stable_scalar_system(0.5, 100), 1.0, cfg), std::invalid_argument);
}

TEST_CASE("uncorrupted pipeline returns the Kalman smoother")
{
    for (std::uint64_t seed : {1u, 2u}) {
        const SystemModel m = stable_scalar_system(0.5, 512);
        const EpisodeData ep = simulate(m, seed);
        const PipelineResult res = sos_kalman_pipeline(m, ep.y, 0.05);
        REQUIRE(res.stage2.has_value());
        const MatrixXd ks = smoother(m, ep.y, Mask(512, 1)).x_hat;
        CHECK((res.solution.x_hat - ks).norm() <= 1e-6 * ks.norm());
        CHECK((res.stage1.x_hat - ks).norm() <= 1e-6 * ks.norm());
        CHECK(res.solution.band.has_value());
        CHECK(res.flags.empty());
    }
}

TEST_CASE("short horizons degrade to a flagged stage-1 result")
{
    const SystemModel m = random_walk_system(6);
    const EpisodeData ep = apply_corruptions(simulate(m, 3), 0.2, AdversaryStrategy::spike(30.0), 4);
    PipelineConfig cfg;
    cfg.eta = 0.2;
    const PipelineResult res = sos_kalman_pipeline(m, ep.y, 0.05, cfg);
    CHECK(res.plan.degraded);
    CHECK(res.plan.t_pre == 6);
    CHECK_FALSE(res.stage2.has_value());
    CHECK(res.solution.x_hat == res.stage1.x_hat);
    REQUIRE_FALSE(res.flags.empty());
    CHECK(std::find(res.solution.flags.begin(), res.solution.flags.end(), res.flags.front()) !=
          res.solution.flags.end());
}

TEST_CASE("stage-1-only configuration skips Program 2")
{
    const SystemModel m = stable_scalar_system(0.5, 256);
    const EpisodeData ep = simulate(m, 5);
    PipelineConfig cfg;
    cfg.stage1_only = true;
    const PipelineResult res = sos_kalman_pipeline(m, ep.y, 0.05, cfg);
    CHECK_FALSE(res.stage2.has_value());
    CHECK(res.solution.x_hat == res.stage1.x_hat);
}

TEST_CASE("solver failures carry their stage")
{
    const SystemModel m = stable_scalar_system(0.5, 40);
    const EpisodeData ep = simulate(m, 6);
    PipelineConfig cfg;
    cfg.backend = SolverBackend::moment;
    cfg.moment.max_side = 10;
    try {
        sos_kalman_pipeline(m, ep.y, 0.05, cfg);
        FAIL("expected a stage-1 failure");
    } catch (const PipelineError& e) {
        CHECK(e.stage == 1);
        CHECK(std::string(e.what()).rfind("stage 1: ", 0) == 0);
    }
}

TEST_CASE("backend names")
{
    CHECK(backend_from_string("moment") == SolverBackend::moment);
    CHECK(backend_from_string("alternating") == SolverBackend::alternating);
    CHECK(to_string(SolverBackend::moment) == "moment");
    REQUIRE_THROWS_AS(backend_from_string("simplex"), std::invalid_argument);
}

TEST_CASE("spikes are removed by the pipeline")
{
    const SystemModel m = stable_scalar_system(0.5, 512);
    const EpisodeData ep = apply_corruptions(simulate(m, 7), 0.05, AdversaryStrategy::spike(200.0), 8);
    // The assumed rate bounds the realised one, so every spike fits in the drop budget.
    PipelineConfig cfg;
    cfg.eta = 0.08;
    REQUIRE(ep.corrupted_fraction() <= 0.08);
    const PipelineResult res = sos_kalman_pipeline(m, ep.y, 0.05, cfg);
    const Mask mask = res.solution.rounded_mask();
    int missed = 0;
    for (Index i = 0; i < 512; ++i)
        missed += !ep.a_star[static_cast<std::size_t>(i)] && mask[static_cast<std::size_t>(i)];
    CHECK(missed == 0);
    // The budget is spent in full, so a few clean outliers go too; the estimate is the smoother on that mask.
    CHECK((res.solution.x_hat - smoother(m, ep.y, mask).x_hat).norm() <= 1e-6 * res.solution.x_hat.norm());
    const double oracle = clean_nll(oracle_smoother(ep).x_hat, ep);
    const double naive = clean_nll(smoother(m, ep.y, Mask(512, 1)).x_hat, ep);
    CHECK(clean_nll(res.solution.x_hat, ep) - oracle <= 0.01 * (naive - oracle));
}

TEST_CASE("calibration widens only what the ground truth violates")
{
    const auto source = [](std::uint64_t seed) {
        return apply_corruptions(simulate(stable_scalar_system(0.5, 256), seed), 0.1, AdversaryStrategy::spike(10.0),
                                 seed ^ 0x5a5a);
    };
    PipelineConfig cfg;
    cfg.eta = 0.1;
    // Start from constants far too small so that several families must be widened.
    for (int id = 5; id <= 14; ++id) {
        cfg.constants.program1[id] = 0.05;
        cfg.constants.program2[id] = 0.05;
    }
    CalibrationConfig cal;
    cal.seeds = 12;
    cal.delta = 0.1;
    const CalibrationReport rep = calibrate_constants(source, cfg, cal);
    CHECK(rep.converged);
    CHECK(rep.iterations > 0);
    for (const auto& [id, rate] : rep.violation_rate_v1)
        CHECK(rate <= cal.delta);
    for (const auto& [id, rate] : rep.violation_rate_v2)
        CHECK(rate <= cal.delta);
    for (int id = 1; id <= 14; ++id) {
        CHECK(rep.constants.program1[id] >= cfg.constants.program1[id]);
        CHECK(rep.constants.program2[id] >= cfg.constants.program2[id]);
    }
    // Widening the cardinality multiplier enlarges the drop budget.
    CHECK(rep.constants.program1[4] >= 1.01);

    // Re-running from the calibrated constants needs no further widening.
    PipelineConfig again = cfg;
    again.constants = rep.constants;
    const CalibrationReport rep2 = calibrate_constants(source, again, cal);
    CHECK(rep2.iterations == 0);
    CHECK(rep2.constants.program1.C == rep.constants.program1.C);
}
