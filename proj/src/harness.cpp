#include "rlqe/harness.hpp"

#include "rlqe/episode_io.hpp"
#include "rlqe/kalman.hpp"
#include "rlqe/rng.hpp"
#include "rlqe/wiener.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <limits>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

namespace rlqe {

namespace {

constexpr double nan_value = std::numeric_limits<double>::quiet_NaN();

bool contains(const std::vector<std::string>& names, const std::string& name)
{
    return std::find(names.begin(), names.end(), name) != names.end();
}

std::string format_double(double v)
{
    if (std::isnan(v))
        return "nan";
    if (std::isinf(v))
        return v > 0 ? "inf" : "-inf";
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

/// CSV field with quoting when it holds a separator, quote or newline.
std::string csv_field(const std::string& s)
{
    if (s.find_first_of(",\"\n") == std::string::npos)
        return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"')
            out += '"';
        out += c == '\n' ? ' ' : c;
    }
    return out + "\"";
}

double seconds_since(std::chrono::steady_clock::time_point start)
{
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

PipelineConfig pipeline_config(const ExperimentConfig& config, double eta)
{
    PipelineConfig p;
    p.eta = eta;
    p.backend = backend_from_string(config.backend);
    p.constants = config.constants;
    return p;
}

/// Fraction of rows past two band windows inside the band; NaN when there are none.
double post_burn_in_coverage(const ConfidenceBand& band, const MatrixXd& x)
{
    const Index start = 2 * static_cast<Index>(band.window);
    if (start >= x.rows())
        return nan_value;
    Index inside = 0;
    for (Index i = start; i < x.rows(); ++i)
        inside += (x.row(i) - band.center.row(i)).norm() <= band.radius(i);
    return static_cast<double>(inside) / static_cast<double>(x.rows() - start);
}

void score_offline(ResultRow& row, const MatrixXd& x_hat, const EpisodeData& ep, double opt)
{
    row.nll = clean_nll(x_hat, ep);
    row.opt = opt;
    row.excess_risk = row.nll - opt;
    row.mean_pred_err = (x_hat - ep.x_star).squaredNorm() / static_cast<double>(ep.T());
}

}  // namespace

const std::vector<std::string>& scenario_names()
{
    static const std::vector<std::string> names{"B1_random_walk", "B1_parallel_path", "B2_cycle", "B3_hard_subspace",
                                                "B4_shift",       "B5_dimension",     "scalar_stable", "custom"};
    return names;
}

const std::vector<std::string>& method_names()
{
    static const std::vector<std::string> names{"oracle_smoother",    "naive_kalman", "oblivious_threshold",
                                                "oblivious_shrinkage", "truncated_wiener", "robust_smoother_v1",
                                                "sos_kalman",         "two_stage_online"};
    return names;
}

void ExperimentConfig::validate() const
{
    if (!contains(scenario_names(), scenario))
        throw std::invalid_argument("unknown scenario '" + scenario + "'");
    if (scenario == "custom" && !model)
        throw std::invalid_argument("custom scenario needs a model");
    if (etas.empty() || Ts.empty())
        throw std::invalid_argument("eta and T grids must be nonempty");
    if (methods.empty())
        throw std::invalid_argument("methods must be nonempty");
    if (seeds < 1)
        throw std::invalid_argument("seeds must be >= 1");
    for (const auto& m : methods)
        if (!contains(method_names(), m))
            throw std::invalid_argument("unknown method '" + m + "'");
    for (double e : etas)
        if (!(e >= 0.0 && e < 1.0))
            throw std::invalid_argument("eta must lie in [0, 1)");
    for (int T : Ts)
        if (T < 1)
            throw std::invalid_argument("T must be >= 1");
    if (d < 1)
        throw std::invalid_argument("d must be >= 1");
    if (!(delta > 0.0 && delta < 1.0))
        throw std::invalid_argument("delta must lie in (0, 1)");
    if (threshold && !(*threshold > 0.0))
        throw std::invalid_argument("threshold must be positive");
    backend_from_string(backend);
    static const std::vector<std::string> kinds{"none",       "spike",           "random_walk_attack",
                                                "heavy_tail", "gaussian_replace", "parallel_path_attack"};
    if (!contains(kinds, adversary.kind))
        throw std::invalid_argument("unknown adversary '" + adversary.kind + "'");
}

ExperimentConfig config_from_json(const json& j)
{
    static const std::set<std::string> keys{"scenario", "d",       "sigma2",    "tau2",      "R2",
                                            "a",        "model",   "adversary", "etas",      "Ts",
                                            "seeds",    "methods", "output",    "constants", "delta",
                                            "backend",  "threshold", "threshold_scale", "master_seed"};
    if (!j.is_object())
        throw std::invalid_argument("experiment config must be a JSON object");
    for (const auto& [k, v] : j.items())
        if (!keys.count(k))
            throw std::invalid_argument("unknown config key '" + k + "'");

    ExperimentConfig c;
    c.scenario = j.value("scenario", c.scenario);
    c.d = j.value("d", c.d);
    c.sigma2 = j.value("sigma2", c.sigma2);
    c.tau2 = j.value("tau2", c.tau2);
    c.R2 = j.value("R2", c.R2);
    c.a = j.value("a", c.a);
    if (j.contains("model"))
        c.model = j.at("model");
    if (j.contains("adversary")) {
        const json& a = j.at("adversary");
        static const std::set<std::string> akeys{"kind", "scale", "scale_sqrt_T", "df", "adversarial_locations"};
        for (const auto& [k, v] : a.items())
            if (!akeys.count(k))
                throw std::invalid_argument("unknown adversary key '" + k + "'");
        c.adversary.kind = a.value("kind", c.adversary.kind);
        c.adversary.scale = a.value("scale", c.adversary.scale);
        c.adversary.scale_sqrt_T = a.value("scale_sqrt_T", c.adversary.scale_sqrt_T);
        c.adversary.df = a.value("df", c.adversary.df);
        c.adversary.adversarial_locations = a.value("adversarial_locations", c.adversary.adversarial_locations);
    }
    if (j.contains("etas"))
        c.etas = j.at("etas").get<std::vector<double>>();
    if (j.contains("Ts"))
        c.Ts = j.at("Ts").get<std::vector<int>>();
    c.seeds = j.value("seeds", c.seeds);
    if (j.contains("methods"))
        c.methods = j.at("methods").get<std::vector<std::string>>();
    c.output = j.value("output", c.output);
    if (j.contains("constants"))
        c.constants = constants_from_json(j.at("constants"));
    c.delta = j.value("delta", c.delta);
    c.backend = j.value("backend", c.backend);
    if (j.contains("threshold"))
        c.threshold = j.at("threshold").get<double>();
    c.threshold_scale = j.value("threshold_scale", c.threshold_scale);
    c.master_seed = j.value("master_seed", c.master_seed);
    c.validate();
    return c;
}

json config_to_json(const ExperimentConfig& c)
{
    json j{{"scenario", c.scenario},
           {"d", c.d},
           {"sigma2", c.sigma2},
           {"tau2", c.tau2},
           {"R2", c.R2},
           {"a", c.a},
           {"adversary",
            {{"kind", c.adversary.kind},
             {"scale", c.adversary.scale},
             {"scale_sqrt_T", c.adversary.scale_sqrt_T},
             {"df", c.adversary.df},
             {"adversarial_locations", c.adversary.adversarial_locations}}},
           {"etas", c.etas},
           {"Ts", c.Ts},
           {"seeds", c.seeds},
           {"methods", c.methods},
           {"output", c.output},
           {"constants", constants_to_json(c.constants)},
           {"delta", c.delta},
           {"backend", c.backend},
           {"threshold_scale", c.threshold_scale},
           {"master_seed", c.master_seed}};
    if (c.model)
        j["model"] = *c.model;
    if (c.threshold)
        j["threshold"] = *c.threshold;
    return j;
}

std::uint64_t master_seed_from_env(std::uint64_t fallback)
{
    const char* env = std::getenv("RLQE_SEED");
    if (!env || !*env)
        return fallback;
    char* end = nullptr;
    const unsigned long long v = std::strtoull(env, &end, 10);
    if (*end != '\0')
        throw std::invalid_argument(std::string("RLQE_SEED is not an unsigned integer: ") + env);
    return v;
}

SystemModel scenario_model(const ExperimentConfig& c, int T)
{
    SystemModel m;
    if (c.scenario == "B1_random_walk" || c.scenario == "B1_parallel_path")
        m = random_walk_system(T);
    else if (c.scenario == "B2_cycle")
        m = coordinate_cycle_system(c.d, T);
    else if (c.scenario == "B3_hard_subspace")
        m = hard_subspace_system(T);
    else if (c.scenario == "B4_shift")
        m = shift_system(T, c.R2);
    else if (c.scenario == "B5_dimension")
        m = dimension_system(c.d, T);
    else if (c.scenario == "scalar_stable")
        m = stable_scalar_system(c.a, T);
    else if (c.scenario == "custom")
        m = model_from_json(*c.model);
    else
        throw std::invalid_argument("unknown scenario '" + c.scenario + "'");
    if (c.scenario != "custom") {
        m.sigma2 = c.sigma2;
        m.tau2 = c.tau2;
        m.R2 = c.R2;
    }
    m.T = T;
    m.validate();
    return m;
}

AdversaryStrategy scenario_adversary(const ExperimentConfig& c, int T)
{
    const AdversaryConfig& a = c.adversary;
    const double scale = a.scale * (a.scale_sqrt_T ? std::sqrt(static_cast<double>(T)) : 1.0);
    if (a.kind == "none")
        return AdversaryStrategy::none();
    if (a.kind == "spike")
        return AdversaryStrategy::spike(scale);
    if (a.kind == "random_walk_attack")
        return AdversaryStrategy::random_walk_attack(scale);
    if (a.kind == "heavy_tail")
        return AdversaryStrategy::heavy_tail(a.df, scale);
    if (a.kind == "parallel_path_attack")
        return AdversaryStrategy::parallel_path_attack(a.adversarial_locations);
    if (a.kind == "gaussian_replace") {
        // Corrupted observations replaced by N(0, scale I) draws.
        const double sd = std::sqrt(scale);
        return AdversaryStrategy::custom(
            [sd](const EpisodeData& ep, Index, Rng& rng) -> VectorXd { return rng.normal_vector(ep.model.m(), sd); });
    }
    throw std::invalid_argument("unknown adversary '" + a.kind + "'");
}

std::uint64_t trial_seed(std::uint64_t master, std::size_t eta_index, std::size_t T_index, int seed_index)
{
    return derive_seed(master, {static_cast<std::uint64_t>(Stream::trial), eta_index, T_index,
                                static_cast<std::uint64_t>(seed_index)});
}

EpisodeData make_episode(const ExperimentConfig& c, double eta, int T, std::uint64_t seed)
{
    const SystemModel model = scenario_model(c, T);
    std::optional<MatrixXd> init;
    if (c.scenario == "scalar_stable")
        init = stationary_covariance(model);
    const EpisodeData clean = simulate(model, seed, init);
    return apply_corruptions(clean, eta, scenario_adversary(c, T), seed);
}

double default_threshold(const SystemModel& model, double scale)
{
    MatrixXd Sigma = model.R2 * MatrixXd::Identity(model.d(), model.d());
    double worst = 0.0;
    for (int i = 0; i < model.T; ++i) {
        if (i > 0)
            Sigma = model.A * Sigma * model.A.transpose() + model.sigma2 * MatrixXd::Identity(model.d(), model.d());
        worst = std::max(worst, (model.B * Sigma * model.B.transpose()).trace());
    }
    return scale * std::sqrt(worst + static_cast<double>(model.m()) * model.tau2);
}

MatrixXd oblivious_threshold_baseline(const EpisodeData& ep, double threshold, bool* all_dropped)
{
    if (!(threshold > 0.0))
        throw std::invalid_argument("oblivious_threshold_baseline: threshold must be positive");
    Mask keep(static_cast<std::size_t>(ep.T()), 0);
    bool any = false;
    for (Index t = 0; t < ep.T(); ++t) {
        keep[static_cast<std::size_t>(t)] = ep.y.row(t).norm() < threshold;
        any = any || keep[static_cast<std::size_t>(t)];
    }
    if (all_dropped)
        *all_dropped = !any;
    if (!any)
        return MatrixXd::Zero(ep.T(), ep.model.d());
    return smoother(ep.model, ep.y, keep).x_hat;
}

MatrixXd oblivious_shrinkage(const EpisodeData& ep, double eta)
{
    if (!(eta >= 0.0 && eta < 1.0))
        throw std::invalid_argument("oblivious_shrinkage: eta must lie in [0, 1)");
    const double zeta = (1.0 - eta) / (2.0 - eta);
    const MatrixXd B_pinv = ep.model.B.completeOrthogonalDecomposition().pseudoInverse();
    return zeta * ep.y * B_pinv.transpose();
}

std::vector<ResultRow> run_trial(const ExperimentConfig& c, double eta, int T, int seed_index, std::uint64_t seed)
{
    std::vector<ResultRow> rows;
    std::optional<EpisodeData> ep;
    std::string episode_error;
    try {
        ep = make_episode(c, eta, T, seed);
    } catch (const std::exception& e) {
        episode_error = std::string("episode: ") + e.what();
    }
    std::optional<double> opt;
    auto get_opt = [&]() {
        if (!opt)
            opt = oracle_smoother(*ep).opt_value;
        return *opt;
    };

    for (const auto& method : c.methods) {
        ResultRow row;
        row.scenario = c.scenario;
        row.method = method;
        row.eta = eta;
        row.T = T;
        row.seed = seed_index;
        row.excess_risk = row.nll = row.opt = row.mean_pred_err = row.band_coverage = nan_value;
        const auto start = std::chrono::steady_clock::now();
        try {
            if (!ep)
                throw std::runtime_error(episode_error);
            const SystemModel& model = ep->model;
            if (method == "oracle_smoother") {
                const auto res = oracle_smoother(*ep);
                opt = res.opt_value;
                score_offline(row, res.x_hat, *ep, res.opt_value);
            } else if (method == "naive_kalman") {
                const Mask all(static_cast<std::size_t>(T), 1);
                score_offline(row, smoother(model, ep->y, all).x_hat, *ep, get_opt());
            } else if (method == "oblivious_threshold") {
                const double thr = c.threshold ? *c.threshold : default_threshold(model, c.threshold_scale);
                bool dropped = false;
                score_offline(row, oblivious_threshold_baseline(*ep, thr, &dropped), *ep, get_opt());
                if (dropped)
                    row.error = "flag: all observations dropped";
            } else if (method == "oblivious_shrinkage") {
                score_offline(row, oblivious_shrinkage(*ep, eta), *ep, get_opt());
            } else if (method == "truncated_wiener") {
                WienerModel wm = stationary_gain(model);
                const MatrixXd pred = eta > 0.0 ? truncated_predictions(with_schedule(wm, eta, c.constants.C_h,
                                                                                      c.constants.C_tau),
                                                                        ep->y)
                                                : wiener_predictions(wm, ep->y);
                score_offline(row, pred, *ep, get_opt());
            } else if (method == "robust_smoother_v1" || method == "sos_kalman") {
                PipelineConfig p = pipeline_config(c, eta);
                p.stage1_only = method == "robust_smoother_v1";
                const PipelineResult res = sos_kalman_pipeline(model, ep->y, c.delta, p);
                score_offline(row, res.solution.x_hat, *ep, get_opt());
                row.band_coverage = post_burn_in_coverage(res.band, ep->x_star);
                if (!res.flags.empty())
                    row.error = "flag: " + res.flags.front();
            } else if (method == "two_stage_online") {
                TwoStageConfig tc;
                tc.offline = pipeline_config(c, eta);
                tc.delta = c.delta;
                tc.r = radius_for_model(model, c.delta, tc.offline);
                const OnlineTrial trial = run_two_stage(*ep, tc);
                row.mean_pred_err = trial.mean_excess;
                row.opt = get_opt();
                if (!trial.flags.empty())
                    row.error = "flag: " + trial.flags.front();
            }
        } catch (const std::exception& e) {
            row.error = e.what();
        }
        row.wall_time = seconds_since(start);
        rows.push_back(std::move(row));
    }
    return rows;
}

std::vector<ResultRow> run_experiment(const ExperimentConfig& c, int workers)
{
    c.validate();
    struct Trial {
        std::size_t ie, iT;
        int s;
    };
    std::vector<Trial> trials;
    for (std::size_t ie = 0; ie < c.etas.size(); ++ie)
        for (std::size_t iT = 0; iT < c.Ts.size(); ++iT)
            for (int s = 0; s < c.seeds; ++s)
                trials.push_back({ie, iT, s});

    std::vector<std::vector<ResultRow>> out(trials.size());
    std::atomic<std::size_t> next{0};
    auto work = [&]() {
        for (std::size_t k = next++; k < trials.size(); k = next++) {
            const Trial& t = trials[k];
            out[k] = run_trial(c, c.etas[t.ie], c.Ts[t.iT], t.s, trial_seed(c.master_seed, t.ie, t.iT, t.s));
        }
    };
    const int n = std::clamp(workers, 1, static_cast<int>(std::max<std::size_t>(trials.size(), 1)));
    std::vector<std::thread> pool;
    for (int w = 1; w < n; ++w)
        pool.emplace_back(work);
    work();
    for (auto& th : pool)
        th.join();

    // Trials are already in (eta, T, seed) order; regroup by method.
    std::vector<ResultRow> rows;
    rows.reserve(trials.size() * c.methods.size());
    for (std::size_t m = 0; m < c.methods.size(); ++m)
        for (auto& trial_rows : out)
            rows.push_back(trial_rows[m]);
    return rows;
}

std::string rows_to_csv(const std::vector<ResultRow>& rows, bool include_wall_time)
{
    std::ostringstream os;
    os << "scenario,method,eta,T,seed,excess_risk,nll,opt,mean_pred_err,band_coverage";
    if (include_wall_time)
        os << ",wall_time";
    os << ",error\n";
    for (const auto& r : rows) {
        os << csv_field(r.scenario) << ',' << csv_field(r.method) << ',' << format_double(r.eta) << ',' << r.T << ','
           << r.seed << ',' << format_double(r.excess_risk) << ',' << format_double(r.nll) << ','
           << format_double(r.opt) << ',' << format_double(r.mean_pred_err) << ',' << format_double(r.band_coverage);
        if (include_wall_time)
            os << ',' << format_double(r.wall_time);
        os << ',' << csv_field(r.error) << '\n';
    }
    return os.str();
}

json summarize(const std::vector<ResultRow>& rows)
{
    struct Acc {
        std::string scenario;
        int count = 0, errors = 0;
        std::map<std::string, std::vector<double>> values;
    };
    std::map<std::tuple<std::string, double, int>, Acc> groups;
    std::vector<std::tuple<std::string, double, int>> order;
    for (const auto& r : rows) {
        const auto key = std::make_tuple(r.method, r.eta, r.T);
        auto [it, fresh] = groups.try_emplace(key);
        if (fresh)
            order.push_back(key);
        Acc& a = it->second;
        a.scenario = r.scenario;
        ++a.count;
        a.errors += !r.error.empty() && r.error.rfind("flag:", 0) != 0;
        const std::pair<const char*, double> fields[] = {{"excess_risk", r.excess_risk},
                                                         {"nll", r.nll},
                                                         {"mean_pred_err", r.mean_pred_err},
                                                         {"band_coverage", r.band_coverage}};
        for (const auto& [name, v] : fields)
            if (std::isfinite(v))
                a.values[name].push_back(v);
    }
    json out = json::array();
    for (const auto& key : order) {
        const Acc& a = groups.at(key);
        json g{{"scenario", a.scenario},
               {"method", std::get<0>(key)},
               {"eta", std::get<1>(key)},
               {"T", std::get<2>(key)},
               {"count", a.count},
               {"errors", a.errors}};
        for (const auto& [name, vs] : a.values) {
            const double n = static_cast<double>(vs.size());
            double mean = 0.0;
            for (double v : vs)
                mean += v / n;
            double var = 0.0;
            for (double v : vs)
                var += (v - mean) * (v - mean);
            const double stderr_ = vs.size() > 1 ? std::sqrt(var / (n - 1.0) / n) : 0.0;
            g[name] = {{"mean", mean}, {"stderr", stderr_}, {"n", vs.size()}};
        }
        out.push_back(std::move(g));
    }
    return out;
}

}  // namespace rlqe
