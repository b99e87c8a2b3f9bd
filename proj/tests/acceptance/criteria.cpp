#include "criteria.hpp"

#include "rlqe/alternating.hpp"
#include "rlqe/harness.hpp"
#include "rlqe/kalman.hpp"
#include "rlqe/moment.hpp"
#include "rlqe/observability.hpp"
#include "rlqe/online_filter.hpp"
#include "rlqe/pipeline.hpp"
#include "rlqe/wiener.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

namespace acceptance {

using namespace rlqe;

namespace {

/// Appends labelled numbers to a record and keeps a short human-readable summary.
class Recorder {
public:
    void add(const std::string& label, double v)
    {
        char buf[48];
        std::snprintf(buf, sizeof buf, "%.17g", v);
        record_ << label << '=' << buf << '\n';
    }
    void add(const std::string& label, const MatrixXd& m)
    {
        for (Index i = 0; i < m.rows(); ++i)
            for (Index j = 0; j < m.cols(); ++j)
                add(label, m(i, j));
    }
    std::string str() const { return record_.str(); }

private:
    std::ostringstream record_;
};

std::string fmt(const char* pattern, double a)
{
    char buf[128];
    std::snprintf(buf, sizeof buf, pattern, a);
    return buf;
}

std::uint64_t seed_for(std::uint64_t master, int criterion, std::uint64_t index)
{
    return derive_seed(master, {static_cast<std::uint64_t>(Stream::trial), static_cast<std::uint64_t>(criterion),
                                index});
}

double mean(const std::vector<double>& v)
{
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

/// Random uniformly stable system: A = Q diag(s) with Q orthogonal and s in [0.6, 1], Gaussian B.
SystemModel random_system(std::uint64_t seed)
{
    Rng rng(seed, Stream::model);
    const Index d = 1 + static_cast<Index>(rng.below(3));
    const Index m = 1 + static_cast<Index>(rng.below(2));
    const MatrixXd G = MatrixXd::NullaryExpr(d, d, [&] { return rng.normal(); });
    const MatrixXd Q = Eigen::HouseholderQR<MatrixXd>(G).householderQ();
    VectorXd s(d);
    for (Index i = 0; i < d; ++i)
        s(i) = 0.6 + 0.4 * rng.uniform();
    SystemModel model;
    model.A = Q * s.asDiagonal();
    model.B = MatrixXd::NullaryExpr(m, d, [&] { return rng.normal(); });
    model.sigma2 = 0.5 + rng.uniform();
    model.tau2 = 0.5 + rng.uniform();
    model.R2 = 0.5 + rng.uniform();
    model.T = 64 + static_cast<int>(rng.below(449));
    model.validate();
    return model;
}

Outcome uncorrupted_equivalence(std::uint64_t master)
{
    Recorder rec;
    int matched = 0, degraded = 0;
    double worst = 0.0;
    for (int k = 0; k < 50; ++k) {
        const SystemModel model = random_system(seed_for(master, 1, 2 * k));
        const EpisodeData ep = simulate(model, seed_for(master, 1, 2 * k + 1));
        const PipelineResult res = sos_kalman_pipeline(model, ep.y, 0.05);
        const MatrixXd ks = smoother(model, ep.y, Mask(static_cast<std::size_t>(model.T), 1)).x_hat;
        const double rel = (res.solution.x_hat - ks).norm() / std::max(ks.norm(), 1e-300);
        worst = std::max(worst, rel);
        matched += rel <= 1e-6;
        degraded += res.plan.degraded;
        rec.add("rel", rel);
        rec.add("x", res.solution.x_hat);
    }
    Outcome o;
    o.pass = matched == 50;
    o.detail = std::to_string(matched) + "/50 systems within 1e-6" + fmt(", worst relative difference %.3g", worst) +
               ", " + std::to_string(degraded) + " degraded plans";
    o.record = rec.str();
    return o;
}

struct Testbed {
    std::string name;
    std::function<SystemModel()> model;
};

Outcome oracle_feasibility(std::uint64_t master)
{
    const double delta = 0.05, eta = 0.1;
    const std::vector<Testbed> beds{{"scalar", [] { return stable_scalar_system(0.5, 256); }},
                                    {"3-cycle", [] { return coordinate_cycle_system(3, 384); }}};
    Recorder rec;
    Outcome o;
    o.pass = true;
    for (std::size_t b = 0; b < beds.size(); ++b) {
        const SystemModel model = beds[b].model();
        const AdversaryStrategy adv = AdversaryStrategy::spike(10.0);
        auto source = [&](std::uint64_t seed) { return apply_corruptions(simulate(model, seed), eta, adv, seed ^ 0x9e37); };

        PipelineConfig cfg;
        cfg.eta = eta;
        CalibrationConfig cal;
        cal.delta = delta;
        cal.seeds = 40;
        // Calibration episodes are disjoint from the evaluation episodes.
        cal.master_seed = seed_for(master, 2, 1000 + b);
        const CalibrationReport report = calibrate_constants(source, cfg, cal);
        cfg.constants = report.constants;
        rec.add("iterations", report.iterations);
        for (int id = 1; id <= 14; ++id) {
            rec.add("C1_" + std::to_string(id), report.constants.program1[id]);
            rec.add("C2_" + std::to_string(id), report.constants.program2[id]);
        }

        int ok = 0;
        const int n = 200;
        for (int s = 0; s < n; ++s) {
            const EpisodeData ep = source(seed_for(master, 2, 10000 * (b + 1) + s));
            const PipelinePlan plan = plan_pipeline(model, delta, cfg);
            const ProgramSpec p1 = build_program(1, model, ep.y, eta, plan.t_pre, stage1_options(plan, delta, cfg));
            const MatrixXd x_prime = solve_program(p1, cfg).x_hat;
            const ProgramSpec p2 =
                build_program(2, model, ep.y, eta, plan.t, stage2_options(plan, model, delta, x_prime, cfg));
            bool all = true;
            for (const ProgramSpec* p : {&p1, &p2}) {
                const auto gt = check_feasibility(ground_truth_candidate(ep, *p), *p);
                const auto oc = check_feasibility(oracle_candidate(ep, *p), *p);
                all = all && gt.feasible && oc.feasible;
                rec.add("gt_worst", std::min_element(gt.families.begin(), gt.families.end(),
                                                     [](const auto& a, const auto& c) { return a.worst_slack < c.worst_slack; })
                                        ->worst_slack);
            }
            ok += all;
        }
        const double rate = static_cast<double>(ok) / n;
        rec.add("rate", rate);
        o.pass = o.pass && rate >= 0.9 && report.converged;
        o.detail += (b ? "; " : "") + beds[b].name + fmt(" %.3f of 200 seeds feasible", rate) +
                    " (calibration " + (report.converged ? "converged" : "did not converge") + " in " +
                    std::to_string(report.iterations) + " rounds)";
    }
    o.record = rec.str();
    return o;
}

Outcome tiny_optimality(std::uint64_t master)
{
    Recorder rec;
    int agree = 0, bounded = 0;
    double worst_gap = 0.0, worst_bound = 0.0;
    for (int k = 0; k < 50; ++k) {
        const SystemModel model = stable_scalar_system(0.8, 10);
        const EpisodeData ep = apply_corruptions(simulate(model, seed_for(master, 3, 2 * k)), 0.2,
                                                 AdversaryStrategy::spike(8.0), seed_for(master, 3, 2 * k + 1));
        ProgramOptions opts;
        const ProgramSpec spec = build_program(1, model, ep.y, 0.2, 5, opts);
        const double alt = solve_alternating(spec).objective;
        const double brute = brute_force_oracle(spec).objective;
        const SmootherSolution rel = solve_moment_relaxation(spec);
        agree += std::abs(alt - brute) <= 1e-6;
        // Slack of the lower bound: brute - relaxation >= -1e-6.
        const double slack = brute - rel.objective;
        bounded += rel.converged && slack >= -1e-6;
        worst_gap = std::max(worst_gap, alt - brute);
        worst_bound = std::min(worst_bound, slack);
        rec.add("alt", alt);
        rec.add("brute", brute);
        rec.add("moment", rel.objective);
    }
    Outcome o;
    o.pass = agree >= 45 && bounded == 50;
    o.detail = "alternating = brute force on " + std::to_string(agree) + "/50 (largest gap " + fmt("%.3g", worst_gap) +
               "); relaxation lower-bounds on " + std::to_string(bounded) + "/50 (smallest slack " +
               fmt("%.3g", worst_bound) + ")";
    o.record = rec.str();
    return o;
}

Outcome robustness_headline(std::uint64_t master)
{
    ExperimentConfig c;
    c.scenario = "B1_random_walk";
    c.adversary.kind = "random_walk_attack";
    c.adversary.scale = 1.0;
    c.adversary.scale_sqrt_T = true;
    c.etas = {0.1};
    c.Ts = {128, 256, 512};
    c.seeds = 100;
    c.methods = {"naive_kalman", "oblivious_threshold", "sos_kalman"};
    c.master_seed = seed_for(master, 4, 0);
    const auto rows = run_experiment(c, 1);

    Recorder rec;
    std::map<std::pair<std::string, int>, std::vector<double>> excess;
    int errors = 0;
    for (const auto& r : rows) {
        errors += !r.error.empty() && r.error.rfind("flag:", 0) != 0;
        excess[{r.method, r.T}].push_back(r.excess_risk);
        rec.add(r.method, r.excess_risk);
    }
    const double sos = mean(excess[{"sos_kalman", 512}]);
    const double naive = mean(excess[{"naive_kalman", 512}]);
    const double thr = mean(excess[{"oblivious_threshold", 512}]);
    // Least-squares slope of log excess against log T.
    std::vector<double> lx, ly;
    for (int T : c.Ts) {
        lx.push_back(std::log(static_cast<double>(T)));
        ly.push_back(std::log(mean(excess[{"oblivious_threshold", T}])));
    }
    const double mx = mean(lx), my = mean(ly);
    double sxy = 0.0, sxx = 0.0;
    for (std::size_t i = 0; i < lx.size(); ++i) {
        sxy += (lx[i] - mx) * (ly[i] - my);
        sxx += (lx[i] - mx) * (lx[i] - mx);
    }
    const double slope = sxy / sxx;
    rec.add("slope", slope);

    Outcome o;
    o.pass = errors == 0 && sos <= 0.1 * naive && sos <= 0.2 * thr && slope >= 0.8 && slope <= 1.2;
    o.detail = fmt("sos %.4g", sos) + fmt(", naive %.4g", naive) + fmt(", threshold %.4g", thr) +
               fmt(" (ratios %.3f", sos / naive) + fmt(", %.3f)", sos / thr) + fmt(", threshold slope %.3f", slope) +
               (errors ? ", " + std::to_string(errors) + " errors" : "");
    o.record = rec.str();
    return o;
}

Outcome band_coverage(std::uint64_t master)
{
    const SystemModel model = stable_scalar_system(0.5, 512);
    PipelineConfig cfg;
    cfg.eta = 0.1;
    Recorder rec;
    int good = 0;
    double lowest = 1.0;
    for (int s = 0; s < 100; ++s) {
        const EpisodeData ep = apply_corruptions(simulate(model, seed_for(master, 5, 2 * s)), 0.1,
                                                 AdversaryStrategy::spike(10.0), seed_for(master, 5, 2 * s + 1));
        const PipelineResult res = sos_kalman_pipeline(model, ep.y, 0.05, cfg);
        const ConfidenceBand& band = res.band;
        // Burn-in: the first two band windows.
        const Index start = std::min<Index>(2 * band.window, model.T - 1);
        Index inside = 0;
        for (Index i = start; i < model.T; ++i)
            inside += (ep.x_star.row(i) - band.center.row(i)).norm() <= band.radius(i);
        const double cov = static_cast<double>(inside) / static_cast<double>(model.T - start);
        good += cov >= 0.95;
        lowest = std::min(lowest, cov);
        rec.add("coverage", cov);
        rec.add("radius", band.radius);
    }
    Outcome o;
    o.pass = good >= 90;
    o.detail = std::to_string(good) + "/100 seeds with coverage >= 0.95" + fmt(" (lowest %.3f)", lowest);
    o.record = rec.str();
    return o;
}

Outcome unobservable_decay(std::uint64_t)
{
    const int T = 4096;
    const double delta = 0.05;
    Recorder rec;
    Outcome o;
    o.pass = true;
    for (const auto& [name, model] : builtin_systems(T)) {
        const ObservabilityProfile prof = estimate_constants(model.A, model.B, static_cast<int>(model.d()), T);
        const long long t = window_length(prof, model.d(), T, delta, WindowStage::logT);
        const SubspaceSplit split = subspace_split(model.A, model.B, prof, t);
        const double lmax = check_unobservable_decay(split, model.A);
        const double limit = 1.0 / (40000.0 * prof.rho * prof.rho);
        const bool ok = lmax <= limit;
        o.pass = o.pass && ok;
        rec.add(name, lmax);
        if (!ok)
            o.detail += (o.detail.empty() ? "" : "; ") + name + fmt(" %.3g", lmax) + fmt(" > %.3g", limit);
    }
    if (o.pass)
        o.detail = std::to_string(builtin_systems(T).size()) + " built-in systems within 1/(40000 rho^2)";
    o.record = rec.str();
    return o;
}

Outcome truncated_wiener(std::uint64_t master)
{
    const int T = 512, seeds = 200;
    const SystemModel model = stable_scalar_system(0.5, T);
    const WienerModel base = stationary_gain(model);
    const double spike = 100.0 * base.sigma_y;
    const MatrixXd P0 = stationary_covariance(model);
    const std::vector<double> etas{0.2, 0.1, 0.05, 0.025};

    auto mse = [](const MatrixXd& pred, const MatrixXd& x) { return (pred - x).squaredNorm() / x.rows(); };

    Recorder rec;
    std::vector<double> corrupted(etas.size()), clean(etas.size());
    double plain_clean = 0.0, plain_corrupted = 0.0;
    for (std::size_t e = 0; e < etas.size(); ++e) {
        const WienerModel wm = with_schedule(base, etas[e]);
        for (int s = 0; s < seeds; ++s) {
            const EpisodeData ep = apply_corruptions(simulate(model, seed_for(master, 7, 2 * s), P0), etas[e],
                                                     AdversaryStrategy::spike(spike), seed_for(master, 7, 2 * s + 1));
            corrupted[e] += mse(truncated_predictions(wm, ep.y), ep.x_star) / seeds;
            clean[e] += mse(truncated_predictions(wm, ep.y_star), ep.x_star) / seeds;
            if (etas[e] == 0.1) {
                plain_corrupted += mse(wiener_predictions(base, ep.y), ep.x_star) / seeds;
                plain_clean += mse(wiener_predictions(base, ep.y_star), ep.x_star) / seeds;
            }
        }
        rec.add("corrupted", corrupted[e]);
        rec.add("clean", clean[e]);
    }
    rec.add("plain_corrupted", plain_corrupted);
    rec.add("plain_clean", plain_clean);

    bool monotone = true;
    for (std::size_t e = 1; e < etas.size(); ++e)
        monotone = monotone && corrupted[e] < corrupted[e - 1];
    const double trunc_ratio = corrupted[1] / clean[1];
    const double plain_ratio = plain_corrupted / plain_clean;

    Outcome o;
    o.pass = monotone && trunc_ratio <= 5.0 && plain_ratio > 50.0;
    o.detail = "MSE at eta 0.2/0.1/0.05/0.025: " + fmt("%.4f", corrupted[0]) + fmt(" / %.4f", corrupted[1]) +
               fmt(" / %.4f", corrupted[2]) + fmt(" / %.4f", corrupted[3]) + (monotone ? " (monotone)" : " (not monotone)") +
               fmt("; truncated %.2fx clean", trunc_ratio) + fmt(", untruncated %.1fx clean", plain_ratio) +
               fmt(" (spike %.3g)", spike);
    o.record = rec.str();
    return o;
}

Outcome online_pathwise(std::uint64_t master)
{
    const int T = 512, seeds = 100;
    const double eta = 0.1;
    const SystemModel model = random_walk_system(T);
    TwoStageConfig cfg;
    cfg.offline.eta = eta;
    cfg.r = radius_for_model(model, cfg.delta, cfg.offline);
    cfg.stability = stability_constants(model);

    Recorder rec;
    double worst = -std::numeric_limits<double>::infinity();
    std::vector<double> excess;
    long long clean_fired = 0;
    for (int s = 0; s < seeds; ++s) {
        const EpisodeData ep = apply_corruptions(simulate(model, seed_for(master, 8, 2 * s)), eta,
                                                 AdversaryStrategy::spike(std::sqrt(static_cast<double>(T))),
                                                 seed_for(master, 8, 2 * s + 1));
        const OnlineTrial trial = run_two_stage(ep, cfg);
        worst = std::max(worst, trial.worst_violation);
        excess.push_back(trial.mean_excess);
        clean_fired += trial.clean_corrections;
        rec.add("violation", trial.worst_violation);
        rec.add("excess", trial.mean_excess);
        rec.add("pred", trial.prediction);
    }
    const double bound = online_excess_bound(*cfg.stability, spectral_norm(model.A), cfg.r, eta, T);
    const double avg = mean(excess);
    rec.add("r", cfg.r);
    rec.add("bound", bound);

    Outcome o;
    o.pass = worst <= 1e-8 && avg <= 3.0 * bound;
    o.detail = fmt("worst pathwise violation %.3g", worst) + fmt(" (r = %.4g)", cfg.r) +
               fmt("; mean excess %.4g", avg) + fmt(" vs 3 x bound %.4g", 3.0 * bound) + "; " +
               std::to_string(clean_fired) + " clean-step corrections";
    o.record = rec.str();
    return o;
}

Outcome dimension_dependence(std::uint64_t master)
{
    const double eta = 0.2;
    const std::vector<int> dims{2, 4, 8};
    Recorder rec;
    std::vector<double> per_d;
    for (int d : dims) {
        ExperimentConfig c;
        c.scenario = "B5_dimension";
        c.d = d;
        c.adversary.kind = "gaussian_replace";
        c.adversary.scale = 2.0;
        c.etas = {eta};
        c.Ts = {256};
        c.seeds = 100;
        c.methods = {"oblivious_shrinkage"};
        c.master_seed = seed_for(master, 9, static_cast<std::uint64_t>(d));
        const auto rows = run_experiment(c, 1);
        std::vector<double> ex;
        for (const auto& r : rows) {
            ex.push_back(r.excess_risk);
            rec.add("excess", r.excess_risk);
        }
        per_d.push_back(mean(ex) / d);
    }
    const auto [lo, hi] = std::minmax_element(per_d.begin(), per_d.end());
    const double spread = *hi / *lo;
    rec.add("spread", spread);

    Outcome o;
    o.pass = *lo > 0.0 && spread <= 1.25;
    o.detail = "excess / d at d = 2, 4, 8: " + fmt("%.4g", per_d[0]) + fmt(", %.4g", per_d[1]) +
               fmt(", %.4g", per_d[2]) + fmt(" (max/min %.3f)", spread);
    o.record = rec.str();
    return o;
}

}  // namespace

std::vector<Criterion> criteria()
{
    return {
        {1, "uncorrupted equivalence", 300.0, uncorrupted_equivalence},
        {2, "oracle feasibility", 600.0, oracle_feasibility},
        {3, "tiny-instance optimality", 900.0, tiny_optimality},
        {4, "robustness headline", 1800.0, robustness_headline},
        {5, "confidence band coverage", 900.0, band_coverage},
        {6, "unobservable decay", 60.0, unobservable_decay},
        {7, "truncated Wiener", 600.0, truncated_wiener},
        {8, "two-stage online pathwise bound", 900.0, online_pathwise},
        {9, "dimension dependence", 300.0, dimension_dependence},
    };
}

std::string digest(const std::string& record)
{
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : record) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

}  // namespace acceptance
