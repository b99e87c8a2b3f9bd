#include "rlqe/rng.hpp"

namespace rlqe {

std::uint64_t splitmix64(std::uint64_t x)
{
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t parent, std::initializer_list<std::uint64_t> path)
{
    std::uint64_t h = splitmix64(parent ^ 0x5851f42d4c957f2dULL);
    for (std::uint64_t p : path)
        h = splitmix64(h ^ splitmix64(p + 0x2545f4914f6cdd1dULL));
    return h;
}

double Rng::student_t(double df)
{
    std::student_t_distribution<double> dist(df);
    return dist(engine_);
}

std::uint64_t Rng::below(std::uint64_t n)
{
    std::uniform_int_distribution<std::uint64_t> dist(0, n - 1);
    return dist(engine_);
}

Eigen::VectorXd Rng::normal_vector(Eigen::Index n, double stddev)
{
    Eigen::VectorXd v(n);
    for (Eigen::Index i = 0; i < n; ++i)
        v(i) = stddev * normal();
    return v;
}

Eigen::VectorXd Rng::sign_vector(Eigen::Index n)
{
    Eigen::VectorXd v(n);
    for (Eigen::Index i = 0; i < n; ++i)
        v(i) = uniform() < 0.5 ? -1.0 : 1.0;
    return v;
}

}  // namespace rlqe
