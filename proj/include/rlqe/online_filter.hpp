#pragma once

#include "rlqe/kalman.hpp"
#include "rlqe/pipeline.hpp"

#include <optional>
#include <string>
#include <vector>

namespace rlqe {

/// Row-wise: keep y_t when ||y_t - y_ref_t|| <= r, otherwise substitute y_ref_t. `fired` marks substitutions.
MatrixXd correct_observations(const MatrixXd& y, const MatrixXd& y_ref, double r, std::vector<bool>* fired = nullptr);

/// r = C_r ||B|| rho max_i radius_i over indices past `burn_in_windows` windows whose geometric term has
/// decayed below the floor (all post-burn-in indices if none has), clamped below at 1e-9.
double choose_radius(const ConfidenceBand& band, const MatrixXd& B, double rho, double C_r = 2.0,
                     int burn_in_windows = 2);

/// choose_radius for the band the pipeline would build on `model`; band radii do not depend on the data.
double radius_for_model(const SystemModel& model, double delta, const PipelineConfig& config);

struct TwoStageConfig {
    double r = 1.0;
    /// Steps between offline refreshes; 0 uses the stage-1 window of the full-horizon plan.
    long long refresh_every = 0;
    /// Offline stage; only Program 1 is run.
    PipelineConfig offline;
    double delta = 0.05;
    std::optional<StabilityConstants> stability;
};

/// Causal two-stage predictor: offline reference y' = B x', outlier correction within radius r, then the
/// Kalman filter on the corrected sequence. Between refreshes the reference is propagated by the dynamics.
class TwoStagePredictor {
public:
    /// model.T is the planned horizon (used for the default refresh period).
    TwoStagePredictor(SystemModel model, TwoStageConfig config);

    /// Ingests y_i and returns the prediction of x_{i+1} from y_0 .. y_i.
    VectorXd feed(const VectorXd& y);

    Index steps() const { return static_cast<Index>(history_.size()); }
    double radius() const { return config_.r; }
    long long refresh_every() const { return refresh_every_; }
    int refreshes() const { return refreshes_; }
    /// Corrected observations as seen by the filter after the latest step.
    MatrixXd corrected() const;
    /// Reference observations after the latest step.
    MatrixXd reference() const;
    const std::vector<std::string>& flags() const { return flags_; }

private:
    void refresh();
    void refilter();

    SystemModel model_;
    TwoStageConfig config_;
    long long refresh_every_ = 1;
    std::vector<VectorXd> history_;
    std::vector<VectorXd> reference_;
    std::vector<VectorXd> corrected_;
    /// Offline state estimate at the latest reference step, propagated forward between refreshes.
    std::optional<VectorXd> x_ref_;
    FilterState state_;
    int refreshes_ = 0;
    std::vector<std::string> flags_;
};

struct OnlineTrial {
    /// Row i: prediction of x_{i+1} from y_0 .. y_i (two-stage, and the filter run on the clean y*).
    MatrixXd prediction;
    MatrixXd oracle_prediction;
    /// Row i: right-hand side ||A|| lambda sum_{s<=i} delta^{i-s} ||K_s|| r (1 - a*_s).
    VectorXd pathwise_bound;
    VectorXd pathwise_gap;
    /// Largest ||pred_i - oracle_pred_i|| - bound_i (nonpositive when the bound holds everywhere).
    double worst_violation = 0.0;
    /// Steps at which the filter input had some clean observation replaced by the reference (band
    /// hypothesis failures).
    long long clean_corrections = 0;
    /// (1/T) sum_i (||pred_i - x*_{i+1}||^2 - ||oracle_i - x*_{i+1}||^2) over i < T - 1.
    double mean_excess = 0.0;
    double r = 0.0;
    StabilityConstants stability;
    std::vector<std::string> flags;
};

/// Replays an episode through a TwoStagePredictor and evaluates the pathwise bound step by step.
OnlineTrial run_two_stage(const EpisodeData& episode, const TwoStageConfig& config);

/// ||A|| lambda r K_bound (eta + 3 sqrt(eta / T)) / (1 - delta_stab).
double online_excess_bound(const StabilityConstants& stability, double A_norm, double r, double eta, long long T);

}  // namespace rlqe
