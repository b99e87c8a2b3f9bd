#pragma once

#include "rlqe/online_filter.hpp"
#include "rlqe/pipeline.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace rlqe {

/// Scenarios: B1_random_walk, B1_parallel_path, B2_cycle, B3_hard_subspace, B4_shift, B5_dimension,
/// scalar_stable, custom.
const std::vector<std::string>& scenario_names();

/// Methods: oracle_smoother, naive_kalman, oblivious_threshold, oblivious_shrinkage, truncated_wiener,
/// robust_smoother_v1, sos_kalman, two_stage_online.
const std::vector<std::string>& method_names();

struct AdversaryConfig {
    /// none, spike, random_walk_attack, parallel_path_attack, heavy_tail, gaussian_replace.
    std::string kind = "spike";
    double scale = 10.0;
    /// Multiply scale by sqrt(T).
    bool scale_sqrt_T = false;
    double df = 3.0;
    /// parallel_path_attack with adversarially placed corruptions.
    bool adversarial_locations = false;
};

struct ExperimentConfig {
    std::string scenario = "B1_random_walk";
    /// State dimension for B2_cycle and B5_dimension.
    int d = 3;
    double sigma2 = 1.0;
    double tau2 = 1.0;
    double R2 = 1.0;
    /// Dynamics coefficient of scalar_stable.
    double a = 0.5;
    /// Full model for the custom scenario (model_to_json layout; T is taken from the grid).
    std::optional<json> model;
    AdversaryConfig adversary;
    std::vector<double> etas{0.1};
    std::vector<int> Ts{256};
    int seeds = 10;
    std::vector<std::string> methods{"oracle_smoother", "naive_kalman", "sos_kalman"};
    std::string output;
    ProgramConstants constants;
    double delta = 0.05;
    std::string backend = "alternating";
    /// Absolute threshold of oblivious_threshold; default threshold_scale times the clean observation scale.
    std::optional<double> threshold;
    double threshold_scale = 3.0;
    std::uint64_t master_seed = 1;

    /// Throws std::invalid_argument on empty grids, unknown names or seeds < 1.
    void validate() const;
};

/// Unknown keys are rejected. Constant overrides: "constants" object with C1..C14, C_win, C_band, C_r,
/// C_h, C_tau, C_delta and optional per-program "program1"/"program2" objects.
ExperimentConfig config_from_json(const json& j);
json config_to_json(const ExperimentConfig& config);

/// RLQE_SEED, when set to an unsigned integer, replaces `fallback`.
std::uint64_t master_seed_from_env(std::uint64_t fallback);

SystemModel scenario_model(const ExperimentConfig& config, int T);
AdversaryStrategy scenario_adversary(const ExperimentConfig& config, int T);

/// Seed of trial (eta index, T index, seed index); independent of the worker count and of the methods.
std::uint64_t trial_seed(std::uint64_t master, std::size_t eta_index, std::size_t T_index, int seed_index);

EpisodeData make_episode(const ExperimentConfig& config, double eta, int T, std::uint64_t seed);

/// 3 * sqrt(max_i trace(B Sigma_i B^T) + m tau2) with Sigma_i the prior state covariance at step i.
double default_threshold(const SystemModel& model, double scale = 3.0);

/// Drops observations with ||y_t|| >= threshold and smooths the rest. `all_dropped` is set when nothing
/// survives (the result is then the prior mean).
MatrixXd oblivious_threshold_baseline(const EpisodeData& episode, double threshold, bool* all_dropped = nullptr);

/// x_i = (1 - eta) / (2 - eta) B^+ y_i: the best mask-oblivious per-step shrinkage for A = 0, B = I.
MatrixXd oblivious_shrinkage(const EpisodeData& episode, double eta);

struct ResultRow {
    std::string scenario;
    std::string method;
    double eta = 0.0;
    int T = 0;
    int seed = 0;
    double excess_risk = 0.0;
    double nll = 0.0;
    double opt = 0.0;
    double mean_pred_err = 0.0;
    double band_coverage = 0.0;
    double wall_time = 0.0;
    std::string error;
};

/// Runs every method on one episode; rows follow the configured method order.
std::vector<ResultRow> run_trial(const ExperimentConfig& config, double eta, int T, int seed_index,
                                 std::uint64_t seed);

/// All trials in (method, eta, T, seed) row order; `workers` threads share the trial list.
std::vector<ResultRow> run_experiment(const ExperimentConfig& config, int workers = 1);

/// Long-format CSV; doubles printed with 17 significant digits.
std::string rows_to_csv(const std::vector<ResultRow>& rows, bool include_wall_time = true);

/// Grouped by (method, eta, T): count, errors, mean and stderr of excess_risk, nll, mean_pred_err and
/// band_coverage.
json summarize(const std::vector<ResultRow>& rows);

}  // namespace rlqe
