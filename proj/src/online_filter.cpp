#include "rlqe/online_filter.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace rlqe {

MatrixXd correct_observations(const MatrixXd& y, const MatrixXd& y_ref, double r, std::vector<bool>* fired)
{
    if (y.rows() != y_ref.rows() || y.cols() != y_ref.cols())
        throw std::invalid_argument("correct_observations: observation and reference shapes differ");
    MatrixXd out = y;
    if (fired)
        fired->assign(static_cast<std::size_t>(y.rows()), false);
    for (Index t = 0; t < y.rows(); ++t) {
        if ((y.row(t) - y_ref.row(t)).norm() <= r)
            continue;
        out.row(t) = y_ref.row(t);
        if (fired)
            (*fired)[static_cast<std::size_t>(t)] = true;
    }
    return out;
}

double choose_radius(const ConfidenceBand& band, const MatrixXd& B, double rho, double C_r, int burn_in_windows)
{
    const Index T = band.radius.size();
    const Index start = std::min<Index>(T, static_cast<Index>(burn_in_windows) * static_cast<Index>(band.window));
    double decayed = 0.0, any = 0.0;
    bool found = false;
    for (Index i = start; i < T; ++i) {
        any = std::max(any, band.radius(i));
        if (band.radius(i) - band.floor <= band.floor) {
            decayed = std::max(decayed, band.radius(i));
            found = true;
        }
    }
    if (start >= T && T > 0)
        any = band.radius(T - 1);
    const double base = found ? decayed : any;
    return std::max(C_r * spectral_norm(B) * rho * base, 1e-9);
}

double radius_for_model(const SystemModel& model, double delta, const PipelineConfig& config)
{
    const PipelinePlan plan = plan_pipeline(model, delta, config);
    SmootherSolution placeholder;
    placeholder.x_hat = MatrixXd::Zero(model.T, model.d());
    const ConfidenceBand band =
        confidence_band(placeholder, plan.profile, model, delta, plan.t_pre, config.constants.C_band);
    return choose_radius(band, model.B, plan.profile.rho, config.constants.C_r);
}

TwoStagePredictor::TwoStagePredictor(SystemModel model, TwoStageConfig config)
    : model_(std::move(model)), config_(std::move(config))
{
    model_.validate();
    if (!(config_.r > 0.0))
        throw std::invalid_argument("TwoStagePredictor: radius must be positive");
    if (config_.refresh_every < 0)
        throw std::invalid_argument("TwoStagePredictor: refresh period must be >= 1");
    config_.offline.stage1_only = true;
    refresh_every_ = config_.refresh_every > 0 ? config_.refresh_every
                                               : plan_pipeline(model_, config_.delta, config_.offline).t_pre;
}

void TwoStagePredictor::refresh()
{
    const Index n = steps();
    SystemModel prefix = model_;
    prefix.T = static_cast<int>(n);
    MatrixXd y(n, model_.m());
    for (Index i = 0; i < n; ++i)
        y.row(i) = history_[static_cast<std::size_t>(i)].transpose();
    try {
        const PipelineResult res = sos_kalman_pipeline(prefix, y, config_.delta, config_.offline);
        for (Index i = 0; i < n; ++i)
            reference_[static_cast<std::size_t>(i)] = model_.B * row_vec(res.solution.x_hat, i);
        x_ref_ = row_vec(res.solution.x_hat, n - 1);
    } catch (const std::exception& e) {
        flags_.push_back("offline stage failed at step " + std::to_string(n - 1) + ": " + e.what());
        // Uncorrected filtering until the next successful refresh.
        x_ref_.reset();
        for (Index i = 0; i < n; ++i)
            reference_[static_cast<std::size_t>(i)] = history_[static_cast<std::size_t>(i)];
    }
    ++refreshes_;
    refilter();
}

void TwoStagePredictor::refilter()
{
    for (std::size_t i = 0; i < history_.size(); ++i) {
        const VectorXd& yi = history_[i];
        corrected_[i] = (yi - reference_[i]).norm() <= config_.r ? yi : reference_[i];
        state_ = i == 0 ? measurement_update(filter_prior(model_), corrected_[i], model_)
                        : filter_step(state_, corrected_[i], model_);
    }
}

VectorXd TwoStagePredictor::feed(const VectorXd& y)
{
    if (y.size() != model_.m())
        throw std::invalid_argument("TwoStagePredictor::feed: observation has the wrong dimension");
    history_.push_back(y);
    const Index n = steps();
    if (n % refresh_every_ == 0) {
        reference_.resize(history_.size());
        corrected_.resize(history_.size());
        refresh();
    } else {
        // Propagate the reference by one step of the noiseless dynamics.
        VectorXd ref = y;
        if (x_ref_) {
            x_ref_ = model_.A * *x_ref_;
            ref = model_.B * *x_ref_;
        }
        reference_.push_back(ref);
        const VectorXd c = (y - ref).norm() <= config_.r ? y : ref;
        corrected_.push_back(c);
        state_ = n == 1 ? measurement_update(filter_prior(model_), c, model_) : filter_step(state_, c, model_);
    }
    return model_.A * state_.x_post;
}

MatrixXd TwoStagePredictor::corrected() const
{
    MatrixXd out(steps(), model_.m());
    for (Index i = 0; i < steps(); ++i)
        out.row(i) = corrected_[static_cast<std::size_t>(i)].transpose();
    return out;
}

MatrixXd TwoStagePredictor::reference() const
{
    MatrixXd out(steps(), model_.m());
    for (Index i = 0; i < steps(); ++i)
        out.row(i) = reference_[static_cast<std::size_t>(i)].transpose();
    return out;
}

double online_excess_bound(const StabilityConstants& stability, double A_norm, double r, double eta, long long T)
{
    const double Td = static_cast<double>(std::max<long long>(T, 1));
    return A_norm * stability.lambda * r * stability.K_bound * (eta + 3.0 * std::sqrt(eta / Td)) /
           (1.0 - stability.delta_stab);
}

OnlineTrial run_two_stage(const EpisodeData& episode, const TwoStageConfig& config)
{
    const SystemModel& model = episode.model;
    const Index T = episode.T(), d = model.d();
    OnlineTrial trial;
    trial.r = config.r;
    trial.stability = config.stability ? *config.stability : stability_constants(model);
    const auto& st = trial.stability;
    const double A_norm = spectral_norm(model.A);

    // Gains do not depend on the data, so the clean-input filter supplies K_s for the bound.
    const auto oracle = run_filter(model, episode.y_star);
    trial.prediction.resize(T, d);
    trial.oracle_prediction.resize(T, d);
    trial.pathwise_bound.resize(T);
    trial.pathwise_gap.resize(T);
    trial.worst_violation = -std::numeric_limits<double>::infinity();

    TwoStagePredictor predictor(model, config);
    double run = 0.0;
    for (Index i = 0; i < T; ++i) {
        const auto s_i = static_cast<std::size_t>(i);
        const int before = predictor.refreshes();
        trial.prediction.row(i) = predictor.feed(row_vec(episode.y, i)).transpose();
        // The filter input changes only at step i, or everywhere after a refresh.
        const MatrixXd y_now = predictor.corrected();
        bool clean_fired = false;
        for (Index j = predictor.refreshes() != before ? 0 : i; j <= i; ++j)
            clean_fired = clean_fired || (episode.a_star[static_cast<std::size_t>(j)] &&
                                          (y_now.row(j) - episode.y.row(j)).norm() > 0.0);
        trial.clean_corrections += clean_fired;
        trial.oracle_prediction.row(i) = (model.A * oracle[s_i].x_post).transpose();
        run = st.delta_stab * run + spectral_norm(oracle[s_i].K) * (episode.a_star[s_i] ? 0.0 : 1.0);
        trial.pathwise_bound(i) = A_norm * st.lambda * config.r * run;
        trial.pathwise_gap(i) = (trial.prediction.row(i) - trial.oracle_prediction.row(i)).norm();
        trial.worst_violation = std::max(trial.worst_violation, trial.pathwise_gap(i) - trial.pathwise_bound(i));
    }

    double excess = 0.0;
    for (Index i = 0; i + 1 < T; ++i) {
        const auto truth = episode.x_star.row(i + 1);
        excess += (trial.prediction.row(i) - truth).squaredNorm() - (trial.oracle_prediction.row(i) - truth).squaredNorm();
    }
    trial.mean_excess = excess / static_cast<double>(T);
    trial.flags = predictor.flags();
    return trial;
}

}  // namespace rlqe
