#pragma once

#include "rlqe/episode_io.hpp"
#include "rlqe/lds.hpp"
#include "rlqe/observability.hpp"

#include <array>
#include <optional>
#include <string>
#include <vector>

namespace rlqe {

enum class ConstraintKind { boolean, linear_eq, quadratic_bound, cardinality, psd_window, band, avg_noise };
enum class Relation { eq, le, ge, psd };

std::string to_string(ConstraintKind kind);
std::string to_string(Relation rel);

/// Constants multiplying every hidden O(.) term, indexed by constraint id (entry 0 unused).
/// Entry 4 is the cardinality multiplier on eta (default 1.01); every other entry defaults to 4.
struct ConstantSet {
    std::array<double, 15> C{};
    ConstantSet();
    double operator[](int id) const { return C[static_cast<std::size_t>(id)]; }
    double& operator[](int id) { return C[static_cast<std::size_t>(id)]; }
};

/// Constants for both programs plus the window, band, radius, Wiener and delta_1 schedule constants.
struct ProgramConstants {
    ConstantSet program1;
    ConstantSet program2;
    double C_win = 4.0;
    double C_band = 4.0;
    double C_r = 2.0;
    double C_h = 2.0;
    double C_tau = 1.0;
    double C_delta = 4.0;
};

json constants_to_json(const ProgramConstants& c);
/// Keys "C1".."C14" apply to both programs; "program1"/"program2" objects override per program.
ProgramConstants constants_from_json(const json& j, ProgramConstants base = {});

/// One numbered constraint with all of its instances (per step, per window, or a single global one).
struct ConstraintFamily {
    int id = 0;
    ConstraintKind kind = ConstraintKind::boolean;
    Relation relation = Relation::eq;
    std::string name;
    /// Time index or window index of each instance; -1 for a global constraint.
    std::vector<long long> index;
    /// Scalar right-hand sides (non-psd kinds), one per instance.
    std::vector<double> rhs;
    /// Matrix right-hand sides (psd-window kind), one per window, already scaled for partial windows.
    std::vector<MatrixXd> rhs_psd;
};

struct ProgramOptions {
    double delta = 0.05;
    /// Program 2 window confidence.
    double delta1 = 0.05;
    std::optional<MatrixXd> x_prime;
    std::optional<double> eps_geo;
    std::optional<int> k;
    /// Window used to index the decay of the band constraint; defaults to t.
    long long band_window = 0;
    /// Program 2 measurement constraint with x_{i-1} as printed instead of x_i.
    bool measurement_uses_previous_state = false;
    /// Include ||x_0||^2 / (R2 T) in the objective.
    bool include_prior_term = true;
    /// Program 2 constraints 8 and 13 carry a 1/T normalisation.
    bool normalize_window_mix = true;
    bool normalize_corrupted_noise = true;
    ProgramConstants constants;
    std::optional<ObservabilityProfile> profile;
};

struct ProgramSpec {
    int version = 1;
    SystemModel model;
    MatrixXd y;
    double eta = 0.0;
    double delta = 0.05;
    double delta1 = 0.05;
    long long t = 1;
    long long num_windows = 1;
    int k = 2;
    long long band_window = 1;
    MatrixXd x_prime;
    double eps_geo = 0.0;
    bool measurement_uses_previous_state = false;
    bool include_prior_term = true;
    bool normalize_window_mix = true;
    bool normalize_corrupted_noise = true;
    ObservabilityProfile profile;
    ConstantSet constants;
    /// (A^j)^T B^T B A^j for j < t.
    std::vector<MatrixXd> gram_terms;
    MatrixXd gram_t;
    std::vector<ConstraintFamily> constraints;
    double fit_weight = 0.0;
    double step_weight = 0.0;
    double prior_weight = 0.0;

    int T() const { return model.T; }
    long long window_of(long long i) const { return i / t; }
    long long window_start(long long l) const { return l * t; }
    long long window_len(long long l) const;
    const ConstraintFamily& family(int id) const;
    /// Largest number of zero entries of a allowed by the cardinality constraint.
    long long drop_budget() const;
};

/// Hoelder exponent default: 2 floor(log(1/eta)), at least 2.
int default_holder_exponent(double eta);

/// Right-hand sides of the scalar bounds, C being the constant of the constraint.
namespace bounds {
double measurement_noise(double C, double tau2, double m, double T, double delta);
double process_noise(double C, double sigma2, double d, double T, double delta);
double initial_state(double C, double R2, double d, double delta);
/// Scalar slack added to eta O_t in the subsampling psd constraint; log_arg is dT/(t delta) or d/delta_1.
double subsample_slack(double C, double rho, double B_norm, double t, double log_arg);
double band(double C, double eps_geo, double rho, double R2, double d, double delta, long long level);
double noise_response(double C, double eta, int k, double t, double alpha, double sigma2, double rho, double m);
double window_process_noise(double C, double sigma2, double rho, double d);
double average_measurement_noise(double C, double tau2, double m, double T, double delta);
double corrupted_measurement_noise(double C, double m, int k, double tau2, double eta);
/// C_band^2 rho^8 t_pre / kappa * (tau2 (m + log(T/delta)) + sigma2 (d + log(T/delta)) rho^2 t_pre ||B||^2).
double eps_geo(double C_band, const ObservabilityProfile& profile, const SystemModel& model, double T, double delta,
               double t_pre);
}  // namespace bounds

ProgramSpec build_program(int version, const SystemModel& model, const MatrixXd& y, double eta, long long t,
                          const ProgramOptions& options);

json program_to_json(const ProgramSpec& spec);

/// Assignment of every program variable; b is empty for Program 1.
struct Candidate {
    MatrixXd x;
    MatrixXd w;
    MatrixXd v;
    VectorXd a;
    VectorXd b;
};

struct FamilyReport {
    int id = 0;
    std::string name;
    ConstraintKind kind = ConstraintKind::boolean;
    std::vector<double> slack;
    double worst_slack = 0.0;
    long long worst_index = -1;
    long long violations = 0;
    bool feasible = true;
};

struct FeasibilityReport {
    std::vector<FamilyReport> families;
    bool feasible = true;
    double tol = 1e-7;

    const FamilyReport& family(int id) const;
};

/// Signed slack of each instance (>= 0 satisfied); psd families report lambda_min(rhs - lhs).
FeasibilityReport check_feasibility(const Candidate& candidate, const ProgramSpec& spec, double tol = 1e-7);

json feasibility_to_json(const FeasibilityReport& report);

/// Program objective: fit_weight sum a_i ||B x_i - y_i||^2 + step_weight sum ||w_i||^2 + prior_weight ||x_0||^2.
double program_objective(const ProgramSpec& spec, const MatrixXd& x, const VectorXd& a);

/// Per-window psd slack lambda_min(rhs_l - sum_j (1 - a_{lt+j}) M_j) for the subsampling family (7 or 14).
std::vector<double> window_psd_slacks(const ProgramSpec& spec, const VectorXd& a);

/// b_l = 1 exactly when the subsampling inequality holds in window l.
VectorXd window_indicators(const ProgramSpec& spec, const VectorXd& a);

VectorXd mask_to_vector(const Mask& mask);

/// (x*, w*, v*, a*, b*) from the episode.
Candidate ground_truth_candidate(const EpisodeData& episode, const ProgramSpec& spec);

/// Oracle smoother on the true mask with v_i = y_i - B x_i on clean steps and 0 elsewhere.
Candidate oracle_candidate(const EpisodeData& episode, const ProgramSpec& spec);

}  // namespace rlqe
