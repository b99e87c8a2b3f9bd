#include "rlqe/pipeline.hpp"

#include "rlqe/kalman.hpp"
#include "rlqe/rng.hpp"

#include <algorithm>
#include <cmath>

namespace rlqe {

namespace {

double safe_log(double x)
{
    return std::max(std::log(x), 0.0);
}

/// Largest multiple of s not above T (at least min(s, T)).
long long fit_window(long long t, long long T, int s)
{
    if (t <= T)
        return t;
    if (T < s)
        return T;
    return (T / s) * s;
}

}  // namespace

double noise_energy(const ObservabilityProfile& profile, const SystemModel& model, double delta, long long t)
{
    const double T = model.T;
    const double d = static_cast<double>(model.d()), m = static_cast<double>(model.m());
    const double rho = profile.rho, b = profile.B_norm;
    return model.tau2 * (m + safe_log(T / delta)) +
           static_cast<double>(t) * rho * rho * b * b * model.sigma2 * (d + safe_log(T / delta));
}

ConfidenceBand confidence_band(const SmootherSolution& solution, const ObservabilityProfile& profile,
                               const SystemModel& model, double delta, long long t_pre, double C_band)
{
    if (t_pre < 1)
        throw std::invalid_argument("confidence_band: window must be >= 1");
    ConfidenceBand band;
    band.center = solution.x_hat;
    band.window = t_pre;
    band.e_noise = noise_energy(profile, model, delta, t_pre);
    const double rho = profile.rho;
    band.floor = C_band * std::pow(rho, 4.0) * std::sqrt(band.e_noise * static_cast<double>(t_pre) / profile.kappa);
    band.eps_geo = band.floor * band.floor;
    const double geo = C_band * rho * std::sqrt(model.R2) *
                       (std::sqrt(static_cast<double>(model.d())) + std::sqrt(safe_log(1.0 / delta)));
    const Index T = solution.x_hat.rows();
    band.radius.resize(T);
    for (Index i = 0; i < T; ++i) {
        const double level = static_cast<double>(i / t_pre);
        band.radius(i) = geo * std::pow(2.0, -level / 2.0) + band.floor;
    }
    return band;
}

SolverBackend backend_from_string(const std::string& name)
{
    if (name == "alternating")
        return SolverBackend::alternating;
    if (name == "moment")
        return SolverBackend::moment;
    throw std::invalid_argument("unknown backend '" + name + "'");
}

std::string to_string(SolverBackend backend)
{
    return backend == SolverBackend::moment ? "moment" : "alternating";
}

PipelinePlan plan_pipeline(const SystemModel& model, double delta, const PipelineConfig& config)
{
    model.validate();
    if (!(delta > 0.0 && delta < 1.0))
        throw std::invalid_argument("plan_pipeline: delta must lie in (0, 1)");
    PipelinePlan plan;
    const long long T = model.T;
    const Index d = model.d();
    const int s_max = config.s_max > 0 ? config.s_max : static_cast<int>(d);
    plan.profile = estimate_constants(model.A, model.B, s_max, T);
    const int s = plan.profile.s;
    const double C_win = config.constants.C_win;

    const long long raw_pre = window_length(plan.profile, d, T, delta, WindowStage::logT, C_win);
    plan.degraded = raw_pre > T;
    plan.t_pre = fit_window(raw_pre, T, s);

    const double logT = std::log(std::max<double>(static_cast<double>(T), 2.0));
    const double raw = config.constants.C_delta * std::log(1.0 / delta) / (logT * logT * logT);
    const long long t_raw = window_length(plan.profile, d, T, std::clamp(raw, 1e-12, 0.5), WindowStage::loglogT, C_win);
    const double floor = config.eta > 0.0 ? static_cast<double>(t_raw) * std::log(1.0 / delta) / (config.eta * static_cast<double>(T))
                                          : 0.0;
    plan.delta1 = std::clamp(std::max(raw, floor), 1e-12, 0.5);
    plan.t = fit_window(window_length(plan.profile, d, T, plan.delta1, WindowStage::loglogT, C_win), T, s);
    return plan;
}

ProgramOptions stage1_options(const PipelinePlan& plan, double delta, const PipelineConfig& config)
{
    ProgramOptions o;
    o.delta = delta;
    o.profile = plan.profile;
    o.constants = config.constants;
    o.k = config.k;
    o.include_prior_term = config.include_prior_term;
    return o;
}

ProgramOptions stage2_options(const PipelinePlan& plan, const SystemModel& model, double delta,
                              const MatrixXd& x_prime, const PipelineConfig& config)
{
    ProgramOptions o = stage1_options(plan, delta, config);
    o.delta1 = plan.delta1;
    o.x_prime = x_prime;
    o.eps_geo = bounds::eps_geo(config.constants.C_band, plan.profile, model, model.T, delta,
                                static_cast<double>(plan.t_pre));
    o.band_window = plan.t_pre;
    o.measurement_uses_previous_state = config.measurement_uses_previous_state;
    return o;
}

PipelineError::PipelineError(int stage_, const std::string& what)
    : std::runtime_error("stage " + std::to_string(stage_) + ": " + what), stage(stage_)
{
}

SmootherSolution solve_program(const ProgramSpec& spec, const PipelineConfig& config)
{
    if (config.backend == SolverBackend::moment)
        return solve_moment_relaxation(spec, config.moment);
    return solve_alternating(spec, config.alternating);
}

PipelineResult sos_kalman_pipeline(const SystemModel& model, const MatrixXd& y, double delta,
                                   const PipelineConfig& config)
{
    PipelineResult res;
    res.plan = plan_pipeline(model, delta, config);
    const PipelinePlan& plan = res.plan;

    try {
        const ProgramSpec spec1 = build_program(1, model, y, config.eta, plan.t_pre, stage1_options(plan, delta, config));
        res.stage1 = solve_program(spec1, config);
    } catch (const std::exception& e) {
        throw PipelineError(1, e.what());
    }
    res.band = confidence_band(res.stage1, plan.profile, model, delta, plan.t_pre, config.constants.C_band);

    if (plan.degraded)
        res.flags.push_back("horizon shorter than the stage-1 window; stage 2 skipped");
    if (plan.degraded || config.stage1_only) {
        res.solution = res.stage1;
    } else {
        try {
            const ProgramSpec spec2 = build_program(2, model, y, config.eta, plan.t,
                                                    stage2_options(plan, model, delta, res.stage1.x_hat, config));
            res.stage2 = solve_program(spec2, config);
        } catch (const std::exception& e) {
            throw PipelineError(2, e.what());
        }
        res.solution = *res.stage2;
    }
    res.solution.band = res.band;
    for (const auto& f : res.flags)
        res.solution.flags.push_back(f);
    return res;
}

namespace {

/// Constant widened when a family is violated too often; 0 for families without one.
int constant_for_family(int version, int id)
{
    if (version == 1)
        return id >= 4 && id <= 8 ? id : 0;
    if (id == 7 || id == 8)
        return 14;
    if (id == 4 || id == 5 || (id >= 9 && id <= 14))
        return id;
    return 0;
}

/// Per-family violation rate: the worse of the ground-truth and oracle candidates.
std::map<int, double> violation_rates(const std::vector<ProgramSpec>& specs, const std::vector<EpisodeData>& episodes)
{
    std::map<int, int> gt, oc;
    for (std::size_t e = 0; e < specs.size(); ++e) {
        const auto r1 = check_feasibility(ground_truth_candidate(episodes[e], specs[e]), specs[e]);
        const auto r2 = check_feasibility(oracle_candidate(episodes[e], specs[e]), specs[e]);
        for (const auto& f : r1.families)
            gt[f.id] += !f.feasible;
        for (const auto& f : r2.families)
            oc[f.id] += !f.feasible;
    }
    std::map<int, double> rate;
    const double n = static_cast<double>(std::max<std::size_t>(specs.size(), 1));
    for (const auto& [id, count] : gt)
        rate[id] = std::max(count, oc[id]) / n;
    return rate;
}

}  // namespace

CalibrationReport calibrate_constants(const EpisodeSource& source, const PipelineConfig& config,
                                      const CalibrationConfig& calibration)
{
    if (calibration.seeds < 1)
        throw std::invalid_argument("calibrate_constants: need at least one seed");
    std::vector<EpisodeData> episodes;
    std::vector<PipelinePlan> plans;
    std::vector<MatrixXd> x_prime;
    for (int s = 0; s < calibration.seeds; ++s) {
        episodes.push_back(source(derive_seed(calibration.master_seed, {static_cast<std::uint64_t>(s)})));
        plans.push_back(plan_pipeline(episodes.back().model, calibration.delta, config));
        if (calibration.program2 && !plans.back().degraded) {
            // The stage-1 estimate is computed once, at the starting constants.
            const auto spec1 = build_program(1, episodes.back().model, episodes.back().y, config.eta, plans.back().t_pre,
                                             stage1_options(plans.back(), calibration.delta, config));
            x_prime.push_back(solve_program(spec1, config).x_hat);
        } else {
            x_prime.emplace_back();
        }
    }

    CalibrationReport report;
    PipelineConfig cfg = config;
    for (int iter = 0;; ++iter) {
        std::vector<ProgramSpec> specs1, specs2;
        std::vector<EpisodeData> eps2;
        for (std::size_t e = 0; e < episodes.size(); ++e) {
            const auto& ep = episodes[e];
            specs1.push_back(build_program(1, ep.model, ep.y, cfg.eta, plans[e].t_pre,
                                           stage1_options(plans[e], calibration.delta, cfg)));
            if (x_prime[e].size() > 0) {
                specs2.push_back(build_program(2, ep.model, ep.y, cfg.eta, plans[e].t,
                                               stage2_options(plans[e], ep.model, calibration.delta, x_prime[e], cfg)));
                eps2.push_back(ep);
            }
        }
        report.violation_rate_v1 = violation_rates(specs1, episodes);
        report.violation_rate_v2 = violation_rates(specs2, eps2);
        report.iterations = iter;

        bool widened = false;
        auto widen = [&](int version, const std::map<int, double>& rates) {
            std::vector<int> done;
            for (const auto& [id, rate] : rates) {
                const int c = constant_for_family(version, id);
                if (rate <= calibration.delta || c == 0 || std::find(done.begin(), done.end(), c) != done.end())
                    continue;
                done.push_back(c);
                auto& set = version == 1 ? cfg.constants.program1 : cfg.constants.program2;
                set[c] *= calibration.widen;
                widened = true;
            }
        };
        if (iter < calibration.max_iterations) {
            widen(1, report.violation_rate_v1);
            widen(2, report.violation_rate_v2);
        }
        if (!widened)
            break;
    }
    report.converged = true;
    for (const auto* rates : {&report.violation_rate_v1, &report.violation_rate_v2})
        for (const auto& [id, rate] : *rates)
            report.converged = report.converged && rate <= calibration.delta;
    report.constants = cfg.constants;
    return report;
}

}  // namespace rlqe
