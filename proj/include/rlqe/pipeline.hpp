#pragma once

#include "rlqe/alternating.hpp"
#include "rlqe/moment.hpp"

#include <cstdint>
#include <functional>
#include <map>
#include <stdexcept>

namespace rlqe {

/// Radii C_band (rho 2^{-l(i)/2} R (sqrt d + sqrt log(1/delta)) + rho^4 sqrt(E_noise t_pre / kappa)) around
/// the stage-1 trajectory, with l(i) = floor(i / t_pre).
ConfidenceBand confidence_band(const SmootherSolution& solution, const ObservabilityProfile& profile,
                               const SystemModel& model, double delta, long long t_pre, double C_band = 4.0);

/// tau2 (m + log(T/delta)) + t rho^2 ||B||^2 sigma2 (d + log(T/delta)).
double noise_energy(const ObservabilityProfile& profile, const SystemModel& model, double delta, long long t);

enum class SolverBackend { alternating, moment };

SolverBackend backend_from_string(const std::string& name);
std::string to_string(SolverBackend backend);

struct PipelineConfig {
    /// Corruption rate assumed by the programs.
    double eta = 0.0;
    SolverBackend backend = SolverBackend::alternating;
    AlternatingConfig alternating;
    MomentConfig moment;
    ProgramConstants constants;
    /// Largest s tried when estimating the observability profile; 0 uses d.
    int s_max = 0;
    std::optional<int> k;
    bool include_prior_term = true;
    bool measurement_uses_previous_state = false;
    /// Skip stage 2 and return the stage-1 solution.
    bool stage1_only = false;
};

/// Windows and confidence levels derived from (model, T, eta, delta).
struct PipelinePlan {
    ObservabilityProfile profile;
    long long t_pre = 1;
    long long t = 1;
    double delta1 = 0.5;
    /// Stage-1 window exceeds T; stage 1 runs on one window and stage 2 is skipped.
    bool degraded = false;
};

/// delta_1 = C_delta log(1/delta) / log^3 T clamped to [t log(1/delta) / (eta T), 0.5], with t the
/// stage-2 window at the unclamped value.
PipelinePlan plan_pipeline(const SystemModel& model, double delta, const PipelineConfig& config);

ProgramOptions stage1_options(const PipelinePlan& plan, double delta, const PipelineConfig& config);
ProgramOptions stage2_options(const PipelinePlan& plan, const SystemModel& model, double delta,
                              const MatrixXd& x_prime, const PipelineConfig& config);

struct PipelineResult {
    /// Returned trajectory: stage 2 when it ran, otherwise stage 1. Carries the band.
    SmootherSolution solution;
    SmootherSolution stage1;
    std::optional<SmootherSolution> stage2;
    ConfidenceBand band;
    PipelinePlan plan;
    std::vector<std::string> flags;
};

/// Solver failure tagged with the stage that raised it.
class PipelineError : public std::runtime_error {
public:
    PipelineError(int stage, const std::string& what);
    int stage = 0;
};

SmootherSolution solve_program(const ProgramSpec& spec, const PipelineConfig& config);

PipelineResult sos_kalman_pipeline(const SystemModel& model, const MatrixXd& y, double delta,
                                   const PipelineConfig& config = {});

struct CalibrationConfig {
    int seeds = 40;
    std::uint64_t master_seed = 1;
    double delta = 0.05;
    int max_iterations = 60;
    double widen = 1.25;
    bool program2 = true;
};

struct CalibrationReport {
    ProgramConstants constants;
    int iterations = 0;
    bool converged = false;
    /// Worst violation rate over ground-truth and oracle candidates, per family id, at the final constants.
    std::map<int, double> violation_rate_v1;
    std::map<int, double> violation_rate_v2;
};

/// Produces an episode for a calibration seed.
using EpisodeSource = std::function<EpisodeData(std::uint64_t seed)>;

/// Multiplies the constant behind every family violated by the ground truth or the oracle candidate in more
/// than delta of the calibration episodes by `widen`, until no family exceeds delta. Program 2 families 7
/// and 8 are driven by the window psd constant C14.
CalibrationReport calibrate_constants(const EpisodeSource& source, const PipelineConfig& config,
                                      const CalibrationConfig& calibration);

}  // namespace rlqe
