#include "rlqe/program.hpp"

#include "rlqe/kalman.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace rlqe {

std::string to_string(ConstraintKind kind)
{
    switch (kind) {
    case ConstraintKind::boolean: return "boolean";
    case ConstraintKind::linear_eq: return "linear-eq";
    case ConstraintKind::quadratic_bound: return "quadratic-bound";
    case ConstraintKind::cardinality: return "cardinality";
    case ConstraintKind::psd_window: return "psd-window";
    case ConstraintKind::band: return "band";
    case ConstraintKind::avg_noise: return "avg-noise";
    }
    return "unknown";
}

std::string to_string(Relation rel)
{
    switch (rel) {
    case Relation::eq: return "eq";
    case Relation::le: return "le";
    case Relation::ge: return "ge";
    case Relation::psd: return "psd";
    }
    return "unknown";
}

ConstantSet::ConstantSet()
{
    C.fill(4.0);
    C[0] = 0.0;
    C[4] = 1.01;
}

json constants_to_json(const ProgramConstants& c)
{
    auto set_json = [](const ConstantSet& s, int last) {
        json j = json::object();
        for (int id = 1; id <= last; ++id)
            j["C" + std::to_string(id)] = s[id];
        return j;
    };
    return {{"program1", set_json(c.program1, 8)},
            {"program2", set_json(c.program2, 14)},
            {"C_win", c.C_win},
            {"C_band", c.C_band},
            {"C_r", c.C_r},
            {"C_h", c.C_h},
            {"C_tau", c.C_tau},
            {"C_delta", c.C_delta}};
}

ProgramConstants constants_from_json(const json& j, ProgramConstants base)
{
    for (int id = 1; id <= 14; ++id) {
        const std::string key = "C" + std::to_string(id);
        if (j.contains(key)) {
            base.program1[id] = j.at(key).get<double>();
            base.program2[id] = j.at(key).get<double>();
        }
    }
    for (const char* which : {"program1", "program2"}) {
        if (!j.contains(which))
            continue;
        ConstantSet& s = std::string(which) == "program1" ? base.program1 : base.program2;
        for (int id = 1; id <= 14; ++id) {
            const std::string key = "C" + std::to_string(id);
            if (j.at(which).contains(key))
                s[id] = j.at(which).at(key).get<double>();
        }
    }
    for (auto [key, field] : {std::pair{"C_win", &base.C_win}, std::pair{"C_band", &base.C_band},
                              std::pair{"C_r", &base.C_r}, std::pair{"C_h", &base.C_h},
                              std::pair{"C_tau", &base.C_tau}, std::pair{"C_delta", &base.C_delta}})
        if (j.contains(key))
            *field = j.at(key).get<double>();
    return base;
}

long long ProgramSpec::window_len(long long l) const
{
    return std::min<long long>(t, static_cast<long long>(T()) - l * t);
}

const ConstraintFamily& ProgramSpec::family(int id) const
{
    for (const auto& f : constraints)
        if (f.id == id)
            return f;
    throw std::out_of_range("ProgramSpec: no constraint with id " + std::to_string(id));
}

long long ProgramSpec::drop_budget() const
{
    const double rhs = family(4).rhs.front();
    return static_cast<long long>(std::floor(static_cast<double>(T()) - rhs + 1e-9));
}

int default_holder_exponent(double eta)
{
    if (!(eta > 0.0))
        return 2;
    const int k = 2 * static_cast<int>(std::floor(std::log(1.0 / eta)));
    return std::max(k, 2);
}

namespace bounds {

namespace {
double safe_log(double x)
{
    return std::max(std::log(x), 0.0);
}
}  // namespace

double measurement_noise(double C, double tau2, double m, double T, double delta)
{
    return C * tau2 * (m + safe_log(T / delta));
}

double process_noise(double C, double sigma2, double d, double T, double delta)
{
    return C * sigma2 * (d + safe_log(T / delta));
}

double initial_state(double C, double R2, double d, double delta)
{
    return R2 * (d + C * safe_log(1.0 / delta));
}

double subsample_slack(double C, double rho, double B_norm, double t, double log_arg)
{
    return C * rho * rho * B_norm * B_norm * std::sqrt(t * safe_log(log_arg));
}

double band(double C, double eps_geo, double rho, double R2, double d, double delta, long long level)
{
    return eps_geo + C * rho * rho * R2 * (d + safe_log(1.0 / delta)) * std::ldexp(1.0, -static_cast<int>(level));
}

double noise_response(double C, double eta, int k, double t, double alpha, double sigma2, double rho, double m)
{
    const double factor = std::pow(eta, 1.0 - 2.0 / k);
    return C * factor * t * alpha * sigma2 * rho * rho * m * k;
}

double window_process_noise(double C, double sigma2, double rho, double d)
{
    return C * sigma2 * rho * rho * d;
}

double average_measurement_noise(double C, double tau2, double m, double T, double delta)
{
    return C * tau2 * (m + safe_log(2.0 / delta) / T);
}

double corrupted_measurement_noise(double C, double m, int k, double tau2, double eta)
{
    return C * m * k * tau2 * std::pow(eta, 1.0 - 2.0 / k);
}

double eps_geo(double C_band, const ObservabilityProfile& profile, const SystemModel& model, double T, double delta,
               double t_pre)
{
    const double rho = profile.rho;
    const double d = static_cast<double>(model.d()), m = static_cast<double>(model.m());
    const double noise = model.tau2 * (m + safe_log(T / delta)) +
                         model.sigma2 * (d + safe_log(T / delta)) * rho * rho * t_pre * profile.B_norm * profile.B_norm;
    return C_band * C_band * std::pow(rho, 8.0) * t_pre / profile.kappa * noise;
}

}  // namespace bounds

namespace {

ConstraintFamily make_family(int id, ConstraintKind kind, Relation rel, std::string name)
{
    ConstraintFamily f;
    f.id = id;
    f.kind = kind;
    f.relation = rel;
    f.name = std::move(name);
    return f;
}

void per_step(ConstraintFamily& f, long long first, long long T, double rhs)
{
    for (long long i = first; i < T; ++i) {
        f.index.push_back(i);
        f.rhs.push_back(rhs);
    }
}

void global(ConstraintFamily& f, double rhs)
{
    f.index.push_back(-1);
    f.rhs.push_back(rhs);
}

ConstraintFamily subsample_family(const ProgramSpec& spec, int id, double slack)
{
    auto f = make_family(id, ConstraintKind::psd_window, Relation::psd,
                         id == 7 ? "window subsampling" : "window subsampling with confidence");
    const Index d = spec.model.d();
    for (long long l = 0; l < spec.num_windows; ++l) {
        const double frac = static_cast<double>(spec.window_len(l)) / static_cast<double>(spec.t);
        f.index.push_back(l);
        f.rhs_psd.push_back(frac * (spec.eta * spec.gram_t + slack * MatrixXd::Identity(d, d)));
    }
    return f;
}

}  // namespace

ProgramSpec build_program(int version, const SystemModel& model, const MatrixXd& y, double eta, long long t,
                          const ProgramOptions& options)
{
    if (version != 1 && version != 2)
        throw std::invalid_argument("build_program: version must be 1 or 2");
    model.validate();
    if (y.rows() != model.T || y.cols() != model.m())
        throw std::invalid_argument("build_program: observations must be T x m");
    if (!(eta >= 0.0) || eta >= 0.5)
        throw std::invalid_argument("build_program: eta must lie in [0, 0.5)");
    if (t < 1)
        throw std::invalid_argument("build_program: window must be >= 1");
    if (!(options.delta > 0.0 && options.delta < 1.0))
        throw std::invalid_argument("build_program: delta must lie in (0, 1)");

    const long long T = model.T;
    ProgramSpec spec;
    spec.version = version;
    spec.model = model;
    spec.y = y;
    spec.eta = eta;
    spec.delta = options.delta;
    spec.delta1 = options.delta1;
    spec.t = t;
    spec.num_windows = (T + t - 1) / t;
    spec.k = options.k.value_or(default_holder_exponent(eta));
    if (spec.k < 2 || spec.k % 2 != 0)
        throw std::invalid_argument("build_program: Hoelder exponent must be even and >= 2");
    spec.band_window = options.band_window > 0 ? options.band_window : t;
    spec.measurement_uses_previous_state = options.measurement_uses_previous_state;
    spec.include_prior_term = options.include_prior_term;
    spec.normalize_window_mix = options.normalize_window_mix;
    spec.normalize_corrupted_noise = options.normalize_corrupted_noise;
    spec.profile = options.profile ? *options.profile
                                   : estimate_constants(model.A, model.B, static_cast<int>(model.d()), T);
    spec.constants = version == 1 ? options.constants.program1 : options.constants.program2;
    if (t > T)
        throw std::invalid_argument("build_program: window longer than the horizon");
    // A single window covering the whole horizon is accepted for horizons shorter than s.
    if (t % spec.profile.s != 0 && t != T)
        throw std::invalid_argument("build_program: window must be a multiple of the observability index");

    const Index d = model.d();
    const auto powers = matrix_powers(model.A, static_cast<Index>(t));
    const MatrixXd BtB = model.B.transpose() * model.B;
    spec.gram_terms.reserve(static_cast<std::size_t>(t));
    spec.gram_t = MatrixXd::Zero(d, d);
    for (long long j = 0; j < t; ++j) {
        const MatrixXd& P = powers[static_cast<std::size_t>(j)];
        spec.gram_terms.push_back(symmetrized(P.transpose() * BtB * P));
        spec.gram_t += spec.gram_terms.back();
    }

    const double Td = static_cast<double>(T);
    spec.fit_weight = 1.0 / (Td * model.tau2);
    spec.step_weight = 1.0 / (Td * model.sigma2);
    spec.prior_weight = options.include_prior_term ? 1.0 / (Td * model.R2) : 0.0;

    const auto& C = spec.constants;
    const auto& prof = spec.profile;
    const double dd = static_cast<double>(d), mm = static_cast<double>(model.m());
    const double delta = options.delta;

    auto& out = spec.constraints;
    {
        auto f = make_family(1, ConstraintKind::boolean, Relation::eq, "corruption indicators boolean");
        per_step(f, 0, T, 0.0);
        out.push_back(f);
    }
    {
        auto f = make_family(2, ConstraintKind::linear_eq, Relation::eq, "linear dynamics");
        per_step(f, 1, T, 0.0);
        out.push_back(f);
    }
    {
        auto f = make_family(3, ConstraintKind::linear_eq, Relation::eq, "fit on clean steps");
        per_step(f, 0, T, 0.0);
        out.push_back(f);
    }
    {
        auto f = make_family(4, ConstraintKind::cardinality, Relation::ge, "many clean steps");
        global(f, (1.0 - C[4] * eta) * Td);
        out.push_back(f);
    }

    if (version == 1) {
        auto f5 = make_family(5, ConstraintKind::quadratic_bound, Relation::le, "observation noise bounded");
        per_step(f5, 0, T, bounds::measurement_noise(C[5], model.tau2, mm, Td, delta));
        out.push_back(f5);
        auto f6 = make_family(6, ConstraintKind::quadratic_bound, Relation::le, "process noise bounded");
        per_step(f6, 1, T, bounds::process_noise(C[6], model.sigma2, dd, Td, delta));
        out.push_back(f6);
        const double slack = bounds::subsample_slack(C[7], prof.rho, prof.B_norm, static_cast<double>(t),
                                                     dd * Td / (static_cast<double>(t) * delta));
        out.push_back(subsample_family(spec, 7, slack));
        auto f8 = make_family(8, ConstraintKind::quadratic_bound, Relation::le, "initial state bounded");
        global(f8, bounds::initial_state(C[8], model.R2, dd, delta));
        out.push_back(f8);
        return spec;
    }

    if (!(options.delta1 > 0.0 && options.delta1 < 1.0))
        throw std::invalid_argument("build_program: delta1 must lie in (0, 1)");
    spec.x_prime = options.x_prime ? *options.x_prime : MatrixXd::Zero(T, d);
    if (spec.x_prime.rows() != T || spec.x_prime.cols() != d)
        throw std::invalid_argument("build_program: x_prime must be T x d");
    spec.eps_geo = options.eps_geo ? *options.eps_geo
                                   : bounds::eps_geo(options.constants.C_band, prof, model, Td, delta,
                                                     static_cast<double>(spec.band_window));
    const double delta1 = options.delta1;
    const double nW = static_cast<double>(spec.num_windows);

    {
        auto f = make_family(5, ConstraintKind::quadratic_bound, Relation::le, "initial state bounded");
        global(f, bounds::initial_state(C[5], model.R2, dd, delta));
        out.push_back(f);
    }
    {
        auto f = make_family(6, ConstraintKind::boolean, Relation::eq, "window indicators boolean");
        for (long long l = 0; l < spec.num_windows; ++l) {
            f.index.push_back(l);
            f.rhs.push_back(0.0);
        }
        out.push_back(f);
    }
    {
        auto f = make_family(7, ConstraintKind::cardinality, Relation::ge, "many good windows");
        global(f, (1.0 - delta1) * nW);
        out.push_back(f);
    }
    {
        auto f = make_family(8, ConstraintKind::cardinality, Relation::le, "few corruptions in bad windows");
        global(f, eta * delta1);
        out.push_back(f);
    }
    {
        auto f = make_family(9, ConstraintKind::band, Relation::le, "confidence band");
        for (long long i = 0; i < T; ++i) {
            f.index.push_back(i);
            f.rhs.push_back(bounds::band(C[9], spec.eps_geo, prof.rho, model.R2, dd, delta, i / spec.band_window));
        }
        out.push_back(f);
    }
    {
        auto f = make_family(10, ConstraintKind::avg_noise, Relation::le, "noise response on corrupted steps");
        global(f, bounds::noise_response(C[10], eta, spec.k, static_cast<double>(t), prof.alpha, model.sigma2,
                                         prof.rho, mm));
        out.push_back(f);
    }
    {
        auto f = make_family(11, ConstraintKind::avg_noise, Relation::le, "window process noise");
        global(f, bounds::window_process_noise(C[11], model.sigma2, prof.rho, dd));
        out.push_back(f);
    }
    {
        auto f = make_family(12, ConstraintKind::avg_noise, Relation::le, "average observation noise");
        global(f, bounds::average_measurement_noise(C[12], model.tau2, mm, Td, delta));
        out.push_back(f);
    }
    {
        auto f = make_family(13, ConstraintKind::avg_noise, Relation::le, "observation noise on corrupted steps");
        global(f, bounds::corrupted_measurement_noise(C[13], mm, spec.k, model.tau2, eta));
        out.push_back(f);
    }
    const double slack = bounds::subsample_slack(C[14], prof.rho, prof.B_norm, static_cast<double>(t), dd / delta1);
    out.push_back(subsample_family(spec, 14, slack));
    return spec;
}

json program_to_json(const ProgramSpec& spec)
{
    json j;
    j["version"] = spec.version;
    j["model"] = model_to_json(spec.model);
    j["y"] = matrix_to_json(spec.y);
    j["eta"] = spec.eta;
    j["delta"] = spec.delta;
    j["delta1"] = spec.delta1;
    j["t"] = spec.t;
    j["num_windows"] = spec.num_windows;
    j["k"] = spec.k;
    j["band_window"] = spec.band_window;
    j["eps_geo"] = spec.eps_geo;
    if (spec.version == 2)
        j["x_prime"] = matrix_to_json(spec.x_prime);
    j["options"] = {{"measurement_uses_previous_state", spec.measurement_uses_previous_state},
                    {"include_prior_term", spec.include_prior_term},
                    {"normalize_window_mix", spec.normalize_window_mix},
                    {"normalize_corrupted_noise", spec.normalize_corrupted_noise}};
    j["profile"] = {{"s", spec.profile.s},
                    {"kappa", spec.profile.kappa},
                    {"alpha", spec.profile.alpha},
                    {"rho", spec.profile.rho},
                    {"B_norm", spec.profile.B_norm}};
    json consts = json::object();
    for (int id = 1; id <= (spec.version == 1 ? 8 : 14); ++id)
        consts["C" + std::to_string(id)] = spec.constants[id];
    j["constants"] = consts;
    j["objective"] = {{"fit_weight", spec.fit_weight},
                      {"step_weight", spec.step_weight},
                      {"prior_weight", spec.prior_weight}};
    json grams = json::array();
    for (const auto& M : spec.gram_terms)
        grams.push_back(matrix_to_json(M));
    j["gram_terms"] = grams;
    json cons = json::array();
    for (const auto& f : spec.constraints) {
        json c;
        c["id"] = f.id;
        c["kind"] = to_string(f.kind);
        c["relation"] = to_string(f.relation);
        c["name"] = f.name;
        c["index"] = f.index;
        if (f.kind == ConstraintKind::psd_window) {
            json mats = json::array();
            for (const auto& M : f.rhs_psd)
                mats.push_back(matrix_to_json(M));
            c["rhs"] = mats;
        } else {
            c["rhs"] = f.rhs;
        }
        cons.push_back(c);
    }
    j["constraints"] = cons;
    return j;
}

const FamilyReport& FeasibilityReport::family(int id) const
{
    for (const auto& f : families)
        if (f.id == id)
            return f;
    throw std::out_of_range("FeasibilityReport: no constraint with id " + std::to_string(id));
}

double program_objective(const ProgramSpec& spec, const MatrixXd& x, const VectorXd& a)
{
    const auto& model = spec.model;
    double fit = 0.0, steps = 0.0;
    for (Index i = 0; i < x.rows(); ++i) {
        fit += a(i) * (model.B * row_vec(x, i) - row_vec(spec.y, i)).squaredNorm();
        if (i >= 1)
            steps += (row_vec(x, i) - model.A * row_vec(x, i - 1)).squaredNorm();
    }
    return spec.fit_weight * fit + spec.step_weight * steps +
           spec.prior_weight * x.row(0).squaredNorm();
}

namespace {

int subsample_id(const ProgramSpec& spec)
{
    return spec.version == 1 ? 7 : 14;
}

MatrixXd window_lhs(const ProgramSpec& spec, const VectorXd& a, long long l)
{
    const Index d = spec.model.d();
    MatrixXd lhs = MatrixXd::Zero(d, d);
    const long long start = spec.window_start(l);
    for (long long j = 0; j < spec.window_len(l); ++j)
        lhs += (1.0 - a(static_cast<Index>(start + j))) * spec.gram_terms[static_cast<std::size_t>(j)];
    return lhs;
}

double relative_scale(double v)
{
    return std::max(1.0, std::abs(v));
}

}  // namespace

std::vector<double> window_psd_slacks(const ProgramSpec& spec, const VectorXd& a)
{
    const auto& fam = spec.family(subsample_id(spec));
    std::vector<double> out;
    for (long long l = 0; l < spec.num_windows; ++l)
        out.push_back(min_eigenvalue(fam.rhs_psd[static_cast<std::size_t>(l)] - window_lhs(spec, a, l)));
    return out;
}

VectorXd window_indicators(const ProgramSpec& spec, const VectorXd& a)
{
    const auto slacks = window_psd_slacks(spec, a);
    VectorXd b(static_cast<Index>(slacks.size()));
    for (std::size_t l = 0; l < slacks.size(); ++l) {
        const double scale = relative_scale(spec.family(subsample_id(spec)).rhs_psd[l].norm());
        b(static_cast<Index>(l)) = slacks[l] >= -1e-9 * scale ? 1.0 : 0.0;
    }
    return b;
}

VectorXd mask_to_vector(const Mask& mask)
{
    VectorXd a(static_cast<Index>(mask.size()));
    for (std::size_t i = 0; i < mask.size(); ++i)
        a(static_cast<Index>(i)) = mask[i] ? 1.0 : 0.0;
    return a;
}

FeasibilityReport check_feasibility(const Candidate& c, const ProgramSpec& spec, double tol)
{
    const auto& model = spec.model;
    const Index T = spec.T(), d = model.d(), m = model.m();
    if (c.x.rows() != T || c.x.cols() != d || c.w.rows() != T || c.w.cols() != d || c.v.rows() != T ||
        c.v.cols() != m || c.a.size() != T)
        throw std::invalid_argument("check_feasibility: candidate dimensions do not match the program");
    if (spec.version == 2 && c.b.size() != spec.num_windows)
        throw std::invalid_argument("check_feasibility: Program 2 candidate needs one b per window");
    const double Td = static_cast<double>(T);

    FeasibilityReport report;
    report.tol = tol;

    for (const auto& fam : spec.constraints) {
        FamilyReport fr;
        fr.id = fam.id;
        fr.name = fam.name;
        fr.kind = fam.kind;
        // Each slack is divided by the natural scale of its constraint so that tol is relative.
        auto push = [&](double raw, double scale) { fr.slack.push_back(raw / relative_scale(scale)); };
        const std::size_t n = fam.kind == ConstraintKind::psd_window ? fam.rhs_psd.size() : fam.rhs.size();
        for (std::size_t q = 0; q < n; ++q) {
            const long long idx = fam.index[q];
            const Index i = static_cast<Index>(idx);
            switch (fam.id) {
            case 1:
                push(-std::abs(c.a(i) * c.a(i) - c.a(i)), 1.0);
                break;
            case 2: {
                const VectorXd r = row_vec(c.x, i) - model.A * row_vec(c.x, i - 1) - row_vec(c.w, i);
                push(-r.norm(), c.x.row(i).norm());
                break;
            }
            case 3: {
                const Index src = (spec.version == 2 && spec.measurement_uses_previous_state && i >= 1) ? i - 1 : i;
                const VectorXd r = c.a(i) * (row_vec(spec.y, i) - model.B * row_vec(c.x, src) - row_vec(c.v, i));
                push(-r.norm(), spec.y.row(i).norm());
                break;
            }
            case 4:
                push(c.a.sum() - fam.rhs[q], fam.rhs[q]);
                break;
            default:
                break;
            }
            if (fam.id <= 4)
                continue;

            if (fam.kind == ConstraintKind::psd_window) {
                const long long l = idx;
                const MatrixXd& rhs = fam.rhs_psd[q];
                double slack = min_eigenvalue(rhs - window_lhs(spec, c.a, l));
                if (fam.id == 14)
                    slack = min_eigenvalue(c.b(i) * (rhs - window_lhs(spec, c.a, l)));
                push(slack, rhs.norm());
                continue;
            }

            if (spec.version == 1) {
                switch (fam.id) {
                case 5: push(fam.rhs[q] - c.v.row(i).squaredNorm(), fam.rhs[q]); break;
                case 6: push(fam.rhs[q] - c.w.row(i).squaredNorm(), fam.rhs[q]); break;
                case 8: push(fam.rhs[q] - c.x.row(0).squaredNorm(), fam.rhs[q]); break;
                default: break;
                }
                continue;
            }

            switch (fam.id) {
            case 5:
                push(fam.rhs[q] - c.x.row(0).squaredNorm(), fam.rhs[q]);
                break;
            case 6:
                push(-std::abs(c.b(i) * c.b(i) - c.b(i)), 1.0);
                break;
            case 7:
                push(c.b.sum() - fam.rhs[q], fam.rhs[q]);
                break;
            case 8: {
                double lhs = 0.0;
                for (Index s = 0; s < T; ++s)
                    lhs += (1.0 - c.b(static_cast<Index>(spec.window_of(s)))) * (1.0 - c.a(s));
                if (spec.normalize_window_mix)
                    lhs /= Td;
                push(fam.rhs[q] - lhs, fam.rhs[q]);
                break;
            }
            case 9:
                push(fam.rhs[q] - (c.x.row(i) - spec.x_prime.row(i)).squaredNorm(), fam.rhs[q]);
                break;
            case 10: {
                double lhs = 0.0;
                for (long long l = 0; l < spec.num_windows; ++l) {
                    VectorXd u = VectorXd::Zero(d);
                    const long long start = spec.window_start(l);
                    for (long long j = 0; j < spec.window_len(l); ++j) {
                        if (j >= 1)
                            u = model.A * u + row_vec(c.w, static_cast<Index>(start + j));
                        lhs += (1.0 - c.a(static_cast<Index>(start + j))) * (model.B * u).squaredNorm();
                    }
                }
                lhs /= Td;
                push(fam.rhs[q] - lhs, fam.rhs[q]);
                break;
            }
            case 11: {
                double lhs = 0.0;
                for (long long l = 0; l < spec.num_windows; ++l) {
                    VectorXd u = VectorXd::Zero(d);
                    const long long start = spec.window_start(l);
                    for (long long j = 1; j <= spec.t && start + j < T; ++j)
                        u = model.A * u + row_vec(c.w, static_cast<Index>(start + j));
                    lhs += u.squaredNorm();
                }
                lhs /= Td;
                push(fam.rhs[q] - lhs, fam.rhs[q]);
                break;
            }
            case 12:
                push(fam.rhs[q] - c.v.squaredNorm() / Td, fam.rhs[q]);
                break;
            case 13: {
                double lhs = 0.0;
                for (Index s = 0; s < T; ++s)
                    lhs += (1.0 - c.a(s)) * c.v.row(s).squaredNorm();
                if (spec.normalize_corrupted_noise)
                    lhs /= Td;
                push(fam.rhs[q] - lhs, fam.rhs[q]);
                break;
            }
            default:
                break;
            }
        }

        fr.worst_slack = std::numeric_limits<double>::infinity();
        for (std::size_t q = 0; q < fr.slack.size(); ++q) {
            if (fr.slack[q] < fr.worst_slack) {
                fr.worst_slack = fr.slack[q];
                fr.worst_index = fam.index[q];
            }
            if (fr.slack[q] < -tol)
                ++fr.violations;
        }
        if (fr.slack.empty())
            fr.worst_slack = 0.0;
        fr.feasible = fr.violations == 0;
        report.feasible = report.feasible && fr.feasible;
        report.families.push_back(std::move(fr));
    }
    return report;
}

json feasibility_to_json(const FeasibilityReport& report)
{
    json j;
    j["feasible"] = report.feasible;
    j["tol"] = report.tol;
    json fams = json::array();
    for (const auto& f : report.families)
        fams.push_back({{"id", f.id},
                        {"name", f.name},
                        {"kind", to_string(f.kind)},
                        {"worst_slack", f.worst_slack},
                        {"worst_index", f.worst_index},
                        {"violations", f.violations},
                        {"feasible", f.feasible}});
    j["constraints"] = fams;
    return j;
}

namespace {

Candidate candidate_from_trajectory(const EpisodeData& ep, const ProgramSpec& spec, const MatrixXd& x,
                                    const MatrixXd& v)
{
    Candidate c;
    c.x = x;
    c.w = steps_of(spec.model, x);
    c.v = v;
    c.a = mask_to_vector(ep.a_star);
    if (spec.version == 2)
        c.b = window_indicators(spec, c.a);
    return c;
}

}  // namespace

Candidate ground_truth_candidate(const EpisodeData& episode, const ProgramSpec& spec)
{
    Candidate c = candidate_from_trajectory(episode, spec, episode.x_star, episode.v_star);
    c.w = episode.w_star;
    return c;
}

Candidate oracle_candidate(const EpisodeData& episode, const ProgramSpec& spec)
{
    const auto sm = oracle_smoother(episode);
    const Index T = episode.T();
    MatrixXd v = MatrixXd::Zero(T, spec.model.m());
    for (Index i = 0; i < T; ++i) {
        if (!episode.a_star[static_cast<std::size_t>(i)])
            continue;
        const Index src = (spec.version == 2 && spec.measurement_uses_previous_state && i >= 1) ? i - 1 : i;
        v.row(i) = (row_vec(episode.y, i) - spec.model.B * row_vec(sm.x_hat, src)).transpose();
    }
    return candidate_from_trajectory(episode, spec, sm.x_hat, v);
}

}  // namespace rlqe
