#include "rlqe/kalman.hpp"

#include <cmath>
#include <stdexcept>

namespace rlqe {

FilterState filter_prior(const SystemModel& model)
{
    const Index d = model.d();
    FilterState s;
    s.x_pred = VectorXd::Zero(d);
    s.P_pred = model.R2 * MatrixXd::Identity(d, d);
    s.x_post = s.x_pred;
    s.P_post = s.P_pred;
    s.K = MatrixXd::Zero(d, model.m());
    s.S = MatrixXd::Zero(model.m(), model.m());
    s.innovation = VectorXd::Zero(model.m());
    return s;
}

FilterState measurement_update(FilterState s, const std::optional<VectorXd>& y_t, const SystemModel& model)
{
    const Index d = model.d(), m = model.m();
    s.S = symmetrized(model.B * s.P_pred * model.B.transpose()) + model.tau2 * MatrixXd::Identity(m, m);
    if (!y_t) {
        s.K = MatrixXd::Zero(d, m);
        s.innovation = VectorXd::Zero(m);
        s.x_post = s.x_pred;
        s.P_post = s.P_pred;
        return s;
    }
    Eigen::LLT<MatrixXd> llt(s.S);
    if (llt.info() != Eigen::Success)
        throw std::logic_error("measurement_update: innovation covariance not positive definite");
    s.K = llt.solve(model.B * s.P_pred).transpose();
    s.innovation = *y_t - model.B * s.x_pred;
    s.x_post = s.x_pred + s.K * s.innovation;
    s.P_post = symmetrized((MatrixXd::Identity(d, d) - s.K * model.B) * s.P_pred);
    return s;
}

FilterState filter_step(const FilterState& state, const std::optional<VectorXd>& y_t, const SystemModel& model)
{
    FilterState next;
    next.x_pred = model.A * state.x_post;
    next.P_pred = symmetrized(model.A * state.P_post * model.A.transpose()) +
                  model.sigma2 * MatrixXd::Identity(model.d(), model.d());
    return measurement_update(std::move(next), y_t, model);
}

std::vector<FilterState> run_filter(const SystemModel& model, const MatrixXd& y, const Mask& mask)
{
    const Index T = y.rows();
    std::vector<FilterState> out;
    out.reserve(static_cast<std::size_t>(T));
    for (Index i = 0; i < T; ++i) {
        std::optional<VectorXd> obs;
        if (mask.empty() || mask[static_cast<std::size_t>(i)])
            obs = row_vec(y, i);
        if (i == 0)
            out.push_back(measurement_update(filter_prior(model), obs, model));
        else
            out.push_back(filter_step(out.back(), obs, model));
    }
    return out;
}

std::vector<FilterState> run_filter(const SystemModel& model, const MatrixXd& y)
{
    return run_filter(model, y, Mask{});
}

QuadraticWeights QuadraticWeights::from_mask(const Mask& mask)
{
    const auto T = static_cast<Index>(mask.size());
    QuadraticWeights w;
    w.obs.resize(T);
    for (Index i = 0; i < T; ++i)
        w.obs(i) = mask[static_cast<std::size_t>(i)] ? 1.0 : 0.0;
    w.step = VectorXd::Ones(T);
    w.prior = 1.0;
    return w;
}

MatrixXd solve_weighted_map(const SystemModel& model, const MatrixXd& y, const QuadraticWeights& wts)
{
    const Index T = y.rows(), d = model.d();
    if (wts.obs.size() != T || wts.step.size() != T)
        throw std::invalid_argument("solve_weighted_map: weight length mismatch");
    const bool anchored = wts.anchor.size() == T;
    const MatrixXd& A = model.A;
    const MatrixXd BtB = model.B.transpose() * model.B / model.tau2;
    const MatrixXd AtA = A.transpose() * A / model.sigma2;
    const MatrixXd I = MatrixXd::Identity(d, d);

    // Forward elimination keeps the Cholesky factor of each reduced diagonal block.
    std::vector<Eigen::LLT<MatrixXd>> factors(static_cast<std::size_t>(T));
    MatrixXd g(T, d);
    for (Index i = 0; i < T; ++i) {
        MatrixXd D = wts.obs(i) * BtB;
        VectorXd rhs = wts.obs(i) * model.B.transpose() * row_vec(y, i) / model.tau2;
        if (i >= 1)
            D += (wts.step(i) / model.sigma2) * I;
        if (i + 1 < T)
            D += wts.step(i + 1) * AtA;
        if (i == 0)
            D += (wts.prior / model.R2) * I;
        if (anchored && wts.anchor(i) > 0) {
            D += wts.anchor(i) * I;
            rhs += wts.anchor(i) * row_vec(wts.center, i);
        }
        if (i >= 1) {
            // Sub-diagonal block L_i = -step_i A / sigma2.
            const MatrixXd L = -(wts.step(i) / model.sigma2) * A;
            const auto& prev = factors[static_cast<std::size_t>(i - 1)];
            const MatrixXd C = prev.solve(L.transpose()).transpose();
            D -= C * L.transpose();
            rhs -= C * g.row(i - 1).transpose();
        }
        factors[static_cast<std::size_t>(i)].compute(symmetrized(D));
        if (factors[static_cast<std::size_t>(i)].info() != Eigen::Success)
            throw std::logic_error("solve_weighted_map: information matrix not positive definite");
        g.row(i) = rhs.transpose();
    }

    MatrixXd x(T, d);
    for (Index i = T - 1; i >= 0; --i) {
        VectorXd rhs = g.row(i).transpose();
        if (i + 1 < T) {
            const MatrixXd U = -(wts.step(i + 1) / model.sigma2) * A.transpose();
            rhs -= U * x.row(i + 1).transpose();
        }
        x.row(i) = factors[static_cast<std::size_t>(i)].solve(rhs).transpose();
    }
    return x;
}

MatrixXd steps_of(const SystemModel& model, const MatrixXd& x)
{
    MatrixXd w = MatrixXd::Zero(x.rows(), x.cols());
    for (Index i = 1; i < x.rows(); ++i)
        w.row(i) = x.row(i) - x.row(i - 1) * model.A.transpose();
    return w;
}

double masked_objective(const SystemModel& model, const MatrixXd& y, const Mask& mask, const MatrixXd& x)
{
    const Index T = x.rows();
    double fit = 0.0, steps = 0.0;
    for (Index i = 0; i < T; ++i) {
        if (mask[static_cast<std::size_t>(i)])
            fit += (model.B * row_vec(x, i) - row_vec(y, i)).squaredNorm();
        if (i >= 1)
            steps += (row_vec(x, i) - model.A * row_vec(x, i - 1)).squaredNorm();
    }
    const double Td = static_cast<double>(T);
    return (fit / model.tau2 + steps / model.sigma2) / Td + x.row(0).squaredNorm() / (model.R2 * Td);
}

SmootherResult smoother(const SystemModel& model, const MatrixXd& y, const Mask& mask)
{
    if (static_cast<Index>(mask.size()) != y.rows())
        throw std::invalid_argument("smoother: mask length must equal T");
    SmootherResult r;
    r.x_hat = solve_weighted_map(model, y, QuadraticWeights::from_mask(mask));
    r.w_hat = steps_of(model, r.x_hat);
    r.opt_value = masked_objective(model, y, mask, r.x_hat);
    return r;
}

double clean_nll(const MatrixXd& x_hat, const EpisodeData& episode, const SystemModel& model)
{
    if (x_hat.rows() != episode.T())
        throw std::invalid_argument("clean_nll: trajectory length must equal T");
    return masked_objective(model, episode.y, episode.a_star, x_hat);
}

double clean_nll(const MatrixXd& x_hat, const EpisodeData& episode)
{
    return clean_nll(x_hat, episode, episode.model);
}

SmootherResult oracle_smoother(const EpisodeData& episode)
{
    return smoother(episode.model, episode.y, episode.a_star);
}

RiskReport risk_report(const MatrixXd& x_hat, const EpisodeData& episode, double opt, int window)
{
    RiskReport r;
    r.nll = clean_nll(x_hat, episode);
    r.opt = opt;
    r.excess = r.nll - r.opt;
    if (window >= 1)
        for (int i = 0; i < episode.T(); i += window)
            r.per_window_state_err.push_back((x_hat.row(i) - episode.x_star.row(i)).squaredNorm());
    return r;
}

RiskReport risk_report(const MatrixXd& x_hat, const EpisodeData& episode, int window)
{
    return risk_report(x_hat, episode, oracle_smoother(episode).opt_value, window);
}

SteadyStateGain steady_state_gain(const SystemModel& model, const MatrixXd& P0, int max_iter)
{
    const Index d = model.d(), m = model.m();
    SteadyStateGain out;
    MatrixXd P_pred = P0;
    MatrixXd prev_post;
    for (int it = 0; it < max_iter; ++it) {
        const MatrixXd S = symmetrized(model.B * P_pred * model.B.transpose()) + model.tau2 * MatrixXd::Identity(m, m);
        const MatrixXd K = Eigen::LLT<MatrixXd>(S).solve(model.B * P_pred).transpose();
        const MatrixXd P_post = symmetrized((MatrixXd::Identity(d, d) - K * model.B) * P_pred);
        out.gains.push_back(K);
        out.K = K;
        out.P_pred = P_pred;
        out.P_post = P_post;
        out.iterations = it + 1;
        if (it > 0 && (P_post - prev_post).norm() <= 1e-12 * P_post.norm()) {
            out.converged = true;
            break;
        }
        prev_post = P_post;
        P_pred = symmetrized(model.A * P_post * model.A.transpose()) + model.sigma2 * MatrixXd::Identity(d, d);
    }
    return out;
}

StabilityConstants stability_constants(const SystemModel& model)
{
    const Index d = model.d();
    const auto ss = steady_state_gain(model, model.R2 * MatrixXd::Identity(d, d));
    const MatrixXd I = MatrixXd::Identity(d, d);

    StabilityConstants c;
    c.K_inf = ss.K;
    c.F_inf = (I - ss.K * model.B) * model.A;
    c.converged_steps = ss.iterations;
    for (const auto& K : ss.gains)
        c.K_bound = std::max(c.K_bound, spectral_norm(K));

    const double rho_inf = spectral_radius(c.F_inf);
    if (rho_inf >= 1.0)
        throw std::runtime_error("filter not exponentially stable: spectral radius of (I - K B) A is >= 1");

    // Closed-loop maps F_1 .. F_N for the transient; F_0 is never applied to an error.
    std::vector<MatrixXd> F;
    const std::size_t N = std::min<std::size_t>(ss.gains.size(), 2000);
    for (std::size_t t = 1; t < N; ++t)
        F.push_back((I - ss.gains[t] * model.B) * model.A);

    bool all_zero = c.F_inf.norm() < 1e-14;
    for (const auto& f : F)
        all_zero = all_zero && f.norm() < 1e-14;
    if (all_zero) {
        c.delta_stab = 0.0;
        c.lambda = 1.0;
        return c;
    }

    c.delta_stab = rho_inf + 1e-3 * (1.0 - rho_inf);
    const double delta = c.delta_stab;

    // Stationary tail: sup_k ||F_inf^k|| / delta^k.
    double tail_sup = 1.0;
    {
        MatrixXd P = I;
        double scale = 1.0;
        for (int k = 1; k < 1000000; ++k) {
            P = c.F_inf * P;
            scale *= delta;
            const double ratio = spectral_norm(P) / scale;
            tail_sup = std::max(tail_sup, ratio);
            if (ratio < 1e-3 * tail_sup && k > 50)
                break;
        }
    }

    // Windows starting inside the transient run through the remaining transient maps, then the tail.
    double lambda = tail_sup;
    for (std::size_t s = 0; s < F.size(); ++s) {
        MatrixXd P = I;
        double scale = 1.0;
        for (std::size_t t = s; t < F.size(); ++t) {
            P = F[t] * P;
            scale *= delta;
            lambda = std::max(lambda, spectral_norm(P) / scale);
        }
        // Continuing with F_inf multiplies the envelope by at most tail_sup.
        lambda = std::max(lambda, tail_sup * spectral_norm(P) / scale);
    }
    c.lambda = lambda;
    return c;
}

}  // namespace rlqe
