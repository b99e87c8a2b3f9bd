#include <catch_amalgamated.hpp>

#include "rlqe/lds.hpp"

#include <cmath>

using namespace rlqe;
using Catch::Matchers::WithinAbs;

namespace {

SystemModel scalar(double a, int T, double sigma2 = 1.0, double tau2 = 1.0)
{
    SystemModel m = stable_scalar_system(a, T);
    m.sigma2 = sigma2;
    m.tau2 = tau2;
    return m;
}

SystemModel random_model(std::uint64_t seed, Index d, Index m, int T)
{
    Rng rng(seed);
    SystemModel s;
    s.A = MatrixXd::NullaryExpr(d, d, [&] { return 0.4 * rng.normal(); });
    s.B = MatrixXd::NullaryExpr(m, d, [&] { return rng.normal(); });
    s.T = T;
    return s;
}

}  // namespace

TEST_CASE("model validation rejects bad inputs")
{
    SystemModel m = random_walk_system(5);
    REQUIRE_NOTHROW(m.validate());

    SystemModel bad = m;
    bad.sigma2 = 0.0;
    REQUIRE_THROWS_AS(bad.validate(), std::invalid_argument);

    bad = m;
    bad.A(0, 0) = std::nan("");
    REQUIRE_THROWS_AS(bad.validate(), std::invalid_argument);
    REQUIRE_THROWS_AS(simulate(bad, 1), std::invalid_argument);

    bad = m;
    bad.B = MatrixXd::Ones(1, 2);
    REQUIRE_THROWS_AS(bad.validate(), std::invalid_argument);

    bad = m;
    bad.T = 0;
    REQUIRE_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("noiseless constant system repeats the initial state")
{
    const SystemModel m = scalar(1.0, 50, 1e-30, 1e-30);
    const EpisodeData ep = simulate(m, 7);
    for (Index i = 0; i < ep.T(); ++i)
        CHECK_THAT(ep.y(i, 0), WithinAbs(ep.x_star(0, 0), 1e-10));
}

TEST_CASE("memoryless chain: state equals its process noise")
{
    const EpisodeData ep = simulate(scalar(0.0, 40), 3);
    for (Index i = 1; i < ep.T(); ++i)
        CHECK(ep.x_star(i, 0) == ep.w_star(i, 0));
}

TEST_CASE("episode recursion and measurement identities")
{
    const SystemModel m = random_model(11, 3, 2, 200);
    const EpisodeData ep = simulate(m, 5);
    REQUIRE(ep.T() == 200);
    for (Index i = 0; i < ep.T(); ++i) {
        if (i > 0)
            CHECK((ep.x_star.row(i).transpose() - m.A * row_vec(ep.x_star, i - 1) - row_vec(ep.w_star, i)).norm() <
                  1e-12);
        CHECK((row_vec(ep.y_star, i) - m.B * row_vec(ep.x_star, i) - row_vec(ep.v_star, i)).norm() < 1e-12);
        CHECK(ep.a_star[static_cast<std::size_t>(i)] == 1);
    }
    CHECK(ep.y == ep.y_star);
}

TEST_CASE("simulation is bit-for-bit reproducible")
{
    const SystemModel m = random_model(2, 2, 1, 64);
    const EpisodeData a = simulate(m, 99), b = simulate(m, 99), c = simulate(m, 100);
    CHECK(a.x_star == b.x_star);
    CHECK(a.y == b.y);
    CHECK(a.x_star != c.x_star);
}

TEST_CASE("random walk endpoint variance matches R2 + (T - 1) sigma2")
{
    const int T = 10000, seeds = 200;
    const SystemModel m = random_walk_system(T);
    double sum = 0.0, sum2 = 0.0;
    for (int s = 0; s < seeds; ++s) {
        const double x = simulate(m, static_cast<std::uint64_t>(s)).x_star(T - 1, 0);
        sum += x;
        sum2 += x * x;
    }
    const double mean = sum / seeds;
    const double var = (sum2 - seeds * mean * mean) / (seeds - 1);
    const double expected = m.R2 + (T - 1) * m.sigma2;
    CHECK(var >= 0.8 * expected);
    CHECK(var <= 1.2 * expected);
}

TEST_CASE("process noise has the declared moments")
{
    // 10^6 draws: 1000 steps of a 1000-dimensional memoryless chain.
    SystemModel m;
    m.A = MatrixXd::Zero(1000, 1000);
    m.B = MatrixXd::Identity(1, 1000);
    m.sigma2 = 2.5;
    m.T = 1001;
    const EpisodeData ep = simulate(m, 8);
    const MatrixXd w = ep.w_star.bottomRows(1000);
    const double n = static_cast<double>(w.size());
    const double mean = w.mean();
    const double var = (w.array() - mean).square().sum() / (n - 1.0);
    CHECK(std::abs(mean) <= 4.0 * std::sqrt(m.sigma2 / n));
    CHECK(std::abs(var - m.sigma2) <= 0.02 * m.sigma2);
}

TEST_CASE("corruption with eta = 0 is the identity")
{
    const EpisodeData ep = simulate(random_walk_system(100), 1);
    const EpisodeData out = apply_corruptions(ep, 0.0, AdversaryStrategy::spike(100.0), 2);
    CHECK(out.y == ep.y);
    CHECK(std::all_of(out.a_star.begin(), out.a_star.end(), [](auto a) { return a == 1; }));
}

TEST_CASE("corruption rate stays inside the binomial tail band")
{
    // Hoeffding: P(|p_hat - 0.1| > 0.006) <= 2 exp(-2 * 1e5 * 0.006^2) < 1e-3.
    const EpisodeData ep = simulate(random_walk_system(100000), 4);
    const EpisodeData out = apply_corruptions(ep, 0.1, AdversaryStrategy::spike(1.0), 5);
    const double frac = out.corrupted_fraction();
    CHECK(frac >= 0.094);
    CHECK(frac <= 0.106);
}

TEST_CASE("corruption rejects invalid rates and double masking")
{
    const EpisodeData ep = simulate(random_walk_system(20), 1);
    REQUIRE_THROWS_AS(apply_corruptions(ep, 0.5, AdversaryStrategy::none(), 1), std::invalid_argument);
    REQUIRE_THROWS_AS(apply_corruptions(ep, -0.1, AdversaryStrategy::none(), 1), std::invalid_argument);
    const EpisodeData once = apply_corruptions(ep, 0.4, AdversaryStrategy::spike(1.0), 3);
    REQUIRE(once.corrupted_fraction() > 0.0);
    REQUIRE_THROWS_AS(apply_corruptions(once, 0.1, AdversaryStrategy::none(), 1), std::invalid_argument);
}

TEST_CASE("adversaries only touch corrupted steps")
{
    const SystemModel m = random_model(21, 2, 2, 300);
    const EpisodeData ep = simulate(m, 6);
    const std::vector<AdversaryStrategy> adversaries{
        AdversaryStrategy::spike(50.0), AdversaryStrategy::random_walk_attack(20.0),
        AdversaryStrategy::heavy_tail(2.0, 5.0), AdversaryStrategy::parallel_path_attack(),
        AdversaryStrategy::custom([](const EpisodeData& e, Index i, Rng&) -> VectorXd {
            return -row_vec(e.y_star, i);
        })};
    for (const auto& adv : adversaries) {
        const EpisodeData out = apply_corruptions(ep, 0.3, adv, 9);
        for (Index i = 0; i < out.T(); ++i)
            if (out.a_star[static_cast<std::size_t>(i)])
                CHECK(out.y.row(i) == ep.y_star.row(i));
        CHECK(out.x_star == ep.x_star);
        CHECK(out.y_star == ep.y_star);
    }
}

TEST_CASE("corruption is reproducible from its seed")
{
    const EpisodeData ep = simulate(random_walk_system(500), 1);
    const auto adv = AdversaryStrategy::heavy_tail(3.0, 2.0);
    const EpisodeData a = apply_corruptions(ep, 0.2, adv, 42), b = apply_corruptions(ep, 0.2, adv, 42);
    CHECK(a.a_star == b.a_star);
    CHECK(a.y == b.y);
}

TEST_CASE("random walk attack corruptions reach the sqrt(T) scale")
{
    const int T = 10000;
    const EpisodeData ep = simulate(random_walk_system(T), 12);
    const EpisodeData out = apply_corruptions(ep, 0.1, AdversaryStrategy::random_walk_attack(std::sqrt(T)), 13);
    int corrupted = 0, large = 0;
    for (Index i = 0; i < T; ++i) {
        if (out.a_star[static_cast<std::size_t>(i)])
            continue;
        ++corrupted;
        large += std::abs(out.y(i, 0)) >= 0.5 * std::sqrt(T);
    }
    REQUIRE(corrupted > 0);
    CHECK(large >= 0.9 * corrupted);
}

TEST_CASE("model-violating parallel path attack corrupts only the forged tail")
{
    const int T = 200;
    const EpisodeData ep = simulate(random_walk_system(T), 2);
    const EpisodeData out = apply_corruptions(ep, 0.1, AdversaryStrategy::parallel_path_attack(true), 3);
    const int corrupted = static_cast<int>(std::count(out.a_star.begin(), out.a_star.end(), 0));
    CHECK(corrupted == static_cast<int>(std::floor(0.1 * T)));
    // Corruptions sit after the branch point 2 eta T steps before the end.
    for (Index i = 0; i < T - static_cast<Index>(2 * 0.1 * T) - 1; ++i)
        CHECK(out.a_star[static_cast<std::size_t>(i)] == 1);
}

TEST_CASE("unroll_state matches the one-step recursion")
{
    Rng rng(77);
    const MatrixXd A = MatrixXd::NullaryExpr(3, 3, [&] { return 0.5 * rng.normal(); });
    const VectorXd x0 = rng.normal_vector(3);
    const MatrixXd w = MatrixXd::NullaryExpr(6, 3, [&] { return rng.normal(); });

    VectorXd x = x0;
    for (Index j = 1; j <= 5; ++j)
        x = A * x + row_vec(w, j);
    CHECK((unroll_state(A, x0, w, 5) - x).norm() <= 1e-12 * std::max(1.0, x.norm()));
    CHECK((unroll_state(A, x0, w, 1) - (A * x0 + row_vec(w, 1))).norm() <= 1e-14);
    CHECK((unroll_state(A, x0, MatrixXd::Zero(6, 3), 4) - A * A * A * A * x0).norm() <= 1e-12);
    REQUIRE_THROWS_AS(unroll_state(A, x0, w, 7), std::invalid_argument);
}

TEST_CASE("stored trajectories are reproduced by unrolling")
{
    const SystemModel m = random_walk_system(10000);
    const EpisodeData ep = simulate(m, 31);
    // Prefix sums are the unrolled random walk.
    double x = ep.x_star(0, 0);
    double worst = 0.0;
    for (Index t = 1; t < ep.T(); ++t) {
        x += ep.w_star(t, 0);
        worst = std::max(worst, std::abs(x - ep.x_star(t, 0)) / std::max(1.0, std::abs(ep.x_star(t, 0))));
    }
    CHECK(worst <= 1e-10);

    const SystemModel r = random_model(4, 2, 1, 30);
    const EpisodeData e2 = simulate(r, 1);
    for (Index t : {Index{0}, Index{7}, Index{29}})
        CHECK((unroll_state(r.A, row_vec(e2.x_star, 0), e2.w_star, t) - row_vec(e2.x_star, t)).norm() <= 1e-10);
}

TEST_CASE("built-in systems are valid")
{
    for (const auto& s : builtin_systems(32)) {
        INFO(s.name);
        CHECK_NOTHROW(s.model.validate());
    }
}
