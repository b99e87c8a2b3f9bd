#include "rlqe/lds.hpp"

#include <cmath>
#include <numbers>

namespace rlqe {

void SystemModel::validate() const
{
    if (A.rows() < 1 || A.rows() != A.cols())
        throw std::invalid_argument("SystemModel: A must be square with d >= 1");
    if (B.rows() < 1 || B.cols() != A.rows())
        throw std::invalid_argument("SystemModel: B must be m x d with m >= 1");
    if (T < 1)
        throw std::invalid_argument("SystemModel: T must be >= 1");
    if (!A.allFinite() || !B.allFinite())
        throw std::invalid_argument("SystemModel: non-finite matrix entries");
    if (!std::isfinite(sigma2) || !std::isfinite(tau2) || !std::isfinite(R2))
        throw std::invalid_argument("SystemModel: non-finite noise scale");
    if (sigma2 <= 0 || tau2 <= 0 || R2 <= 0)
        throw std::invalid_argument("SystemModel: noise scales must be positive");
}

double EpisodeData::corrupted_fraction() const
{
    if (a_star.empty())
        return 0.0;
    std::size_t bad = 0;
    for (auto a : a_star)
        bad += (a == 0);
    return static_cast<double>(bad) / static_cast<double>(a_star.size());
}

EpisodeData simulate(const SystemModel& model, std::uint64_t seed, const std::optional<MatrixXd>& initial_cov)
{
    model.validate();
    const Index d = model.d(), m = model.m();
    const int T = model.T;
    Rng rng(seed, Stream::noise);

    EpisodeData ep;
    ep.model = model;
    ep.seed = seed;
    ep.x_star.resize(T, d);
    ep.y_star.resize(T, m);
    ep.w_star = MatrixXd::Zero(T, d);
    ep.v_star.resize(T, m);

    const double sigma = std::sqrt(model.sigma2);
    const double tau = std::sqrt(model.tau2);

    VectorXd x0;
    if (initial_cov) {
        Eigen::LLT<MatrixXd> llt(*initial_cov);
        if (llt.info() != Eigen::Success)
            throw std::invalid_argument("simulate: initial covariance not positive definite");
        x0 = llt.matrixL() * rng.normal_vector(d);
    } else {
        x0 = rng.normal_vector(d, std::sqrt(model.R2));
    }
    ep.x_star.row(0) = x0.transpose();
    for (int i = 1; i < T; ++i) {
        const VectorXd w = rng.normal_vector(d, sigma);
        ep.w_star.row(i) = w.transpose();
        ep.x_star.row(i) = (model.A * row_vec(ep.x_star, i - 1) + w).transpose();
    }
    for (int i = 0; i < T; ++i) {
        const VectorXd v = rng.normal_vector(m, tau);
        ep.v_star.row(i) = v.transpose();
        ep.y_star.row(i) = (model.B * row_vec(ep.x_star, i) + v).transpose();
    }
    ep.a_star.assign(static_cast<std::size_t>(T), 1);
    ep.y = ep.y_star;
    return ep;
}

AdversaryStrategy AdversaryStrategy::none()
{
    return {};
}

AdversaryStrategy AdversaryStrategy::spike(double scale)
{
    AdversaryStrategy s;
    s.kind = AdversaryKind::spike;
    s.scale = scale;
    return s;
}

AdversaryStrategy AdversaryStrategy::random_walk_attack(double scale)
{
    AdversaryStrategy s;
    s.kind = AdversaryKind::random_walk_attack;
    s.scale = scale;
    return s;
}

AdversaryStrategy AdversaryStrategy::parallel_path_attack(bool model_violating_locations)
{
    AdversaryStrategy s;
    s.kind = AdversaryKind::parallel_path_attack;
    s.model_violating_locations = model_violating_locations;
    return s;
}

AdversaryStrategy AdversaryStrategy::heavy_tail(double df, double scale)
{
    AdversaryStrategy s;
    s.kind = AdversaryKind::heavy_tail;
    s.df = df;
    s.scale = scale;
    return s;
}

AdversaryStrategy AdversaryStrategy::custom(Callback cb)
{
    AdversaryStrategy s;
    s.kind = AdversaryKind::custom;
    s.callback = std::move(cb);
    return s;
}

namespace {

// First index of the forged tail used by the parallel path attack.
int parallel_branch_index(int T, double eta)
{
    const int span = static_cast<int>(std::ceil(2.0 * eta * T));
    return std::max(0, T - std::max(span, 1));
}

}  // namespace

EpisodeData apply_corruptions(const EpisodeData& episode, double eta, const AdversaryStrategy& adversary,
                              std::uint64_t seed)
{
    if (!(eta >= 0.0) || eta >= 0.5)
        throw std::invalid_argument("apply_corruptions: eta must lie in [0, 0.5)");
    for (auto a : episode.a_star)
        if (a == 0)
            throw std::invalid_argument("apply_corruptions: episode is already corrupted");

    EpisodeData out = episode;
    const int T = episode.T();
    const Index m = episode.model.m();
    const auto& model = episode.model;

    Rng mask_rng(seed, Stream::mask);
    Rng adv_rng(seed, Stream::adversary);

    for (int i = 0; i < T; ++i)
        out.a_star[static_cast<std::size_t>(i)] = mask_rng.bernoulli(eta) ? 0 : 1;
    if (eta == 0.0)
        return out;

    if (adversary.kind == AdversaryKind::parallel_path_attack) {
        const int branch = parallel_branch_index(T, eta);
        if (adversary.model_violating_locations) {
            // Exactly floor(eta T) corruptions placed uniformly inside the forged tail.
            std::vector<int> tail;
            for (int i = branch + 1; i < T; ++i)
                tail.push_back(i);
            const auto budget = std::min<std::size_t>(tail.size(), static_cast<std::size_t>(std::floor(eta * T)));
            for (std::size_t k = 0; k < budget; ++k) {
                const auto j = k + static_cast<std::size_t>(mask_rng.below(tail.size() - k));
                std::swap(tail[k], tail[j]);
            }
            std::fill(out.a_star.begin(), out.a_star.end(), 1);
            for (std::size_t k = 0; k < budget; ++k)
                out.a_star[static_cast<std::size_t>(tail[k])] = 0;
        }
        const double sigma = std::sqrt(model.sigma2), tau = std::sqrt(model.tau2);
        VectorXd fake = row_vec(episode.x_star, branch);
        for (int i = branch + 1; i < T; ++i) {
            fake = model.A * fake + adv_rng.normal_vector(model.d(), sigma);
            const VectorXd obs = model.B * fake + adv_rng.normal_vector(m, tau);
            if (out.a_star[static_cast<std::size_t>(i)] == 0)
                out.y.row(i) = obs.transpose();
        }
        return out;
    }

    for (int i = 0; i < T; ++i) {
        if (out.a_star[static_cast<std::size_t>(i)] != 0)
            continue;
        VectorXd yi = row_vec(episode.y_star, i);
        switch (adversary.kind) {
        case AdversaryKind::none:
            break;
        case AdversaryKind::spike:
            yi += adversary.scale * adv_rng.sign_vector(m);
            break;
        case AdversaryKind::random_walk_attack: {
            const VectorXd clean = model.B * row_vec(episode.x_star, i);
            for (Index k = 0; k < m; ++k)
                yi(k) = clean(k) >= 0.0 ? -adversary.scale : adversary.scale;
            break;
        }
        case AdversaryKind::heavy_tail:
            for (Index k = 0; k < m; ++k)
                yi(k) += adversary.scale * adv_rng.student_t(adversary.df);
            break;
        case AdversaryKind::custom:
            if (!adversary.callback)
                throw std::invalid_argument("apply_corruptions: custom adversary without callback");
            yi = adversary.callback(episode, i, adv_rng);
            if (yi.size() != m)
                throw std::invalid_argument("apply_corruptions: custom adversary returned wrong dimension");
            break;
        case AdversaryKind::parallel_path_attack:
            break;
        }
        out.y.row(i) = yi.transpose();
    }
    return out;
}

SystemModel random_walk_system(int T)
{
    SystemModel s;
    s.A = MatrixXd::Ones(1, 1);
    s.B = MatrixXd::Ones(1, 1);
    s.T = T;
    return s;
}

SystemModel coordinate_cycle_system(int d, int T)
{
    SystemModel s;
    s.A = MatrixXd::Zero(d, d);
    for (int i = 0; i < d; ++i)
        s.A((i + 1) % d, i) = 1.0;
    s.B = MatrixXd::Zero(1, d);
    s.B(0, 0) = 1.0;
    s.T = T;
    return s;
}

SystemModel hard_subspace_system(int T)
{
    SystemModel s;
    s.A.resize(3, 3);
    s.A << 0, 1, 0,
           1, 0, 0,
           1, 1, 0.5;
    s.B = MatrixXd::Zero(2, 3);
    s.B(0, 0) = 1.0;
    s.B(1, 2) = 1.0;
    s.T = T;
    return s;
}

SystemModel shift_system(int T, double R2)
{
    SystemModel s;
    s.A = MatrixXd::Zero(2, 2);
    s.A(1, 0) = 1.0;
    s.B = MatrixXd::Identity(2, 2);
    s.R2 = R2;
    s.T = T;
    return s;
}

SystemModel dimension_system(int d, int T)
{
    SystemModel s;
    s.A = MatrixXd::Zero(d, d);
    s.B = MatrixXd::Identity(d, d);
    s.T = T;
    return s;
}

SystemModel stable_scalar_system(double a, int T)
{
    SystemModel s;
    s.A = MatrixXd::Constant(1, 1, a);
    s.B = MatrixXd::Ones(1, 1);
    s.T = T;
    return s;
}

SystemModel rotation_system(double angle, int T)
{
    SystemModel s;
    s.A.resize(2, 2);
    s.A << std::cos(angle), -std::sin(angle),
           std::sin(angle), std::cos(angle);
    s.B = MatrixXd::Zero(1, 2);
    s.B(0, 0) = 1.0;
    s.T = T;
    return s;
}

std::vector<NamedSystem> builtin_systems(int T)
{
    return {
        {"random_walk", random_walk_system(T)},
        {"coordinate_cycle_3", coordinate_cycle_system(3, T)},
        {"coordinate_cycle_5", coordinate_cycle_system(5, T)},
        {"hard_subspace", hard_subspace_system(T)},
        {"shift", shift_system(T)},
        {"dimension_2", dimension_system(2, T)},
        {"dimension_4", dimension_system(4, T)},
        {"dimension_8", dimension_system(8, T)},
        {"stable_scalar", stable_scalar_system(0.5, T)},
        {"rotation", rotation_system(std::numbers::pi / 5.0, T)},
    };
}

}  // namespace rlqe
