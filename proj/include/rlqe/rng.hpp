#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <initializer_list>
#include <random>

namespace rlqe {

/// Stream tags for independent randomness sources drawn from one seed.
enum class Stream : std::uint64_t {
    noise = 1,
    mask = 2,
    adversary = 3,
    trial = 4,
    model = 5,
};

std::uint64_t splitmix64(std::uint64_t x);

/// Deterministically derives a child seed from a parent seed and a path of counters.
std::uint64_t derive_seed(std::uint64_t parent, std::initializer_list<std::uint64_t> path);

class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(splitmix64(seed)) {}
    Rng(std::uint64_t seed, Stream stream) : Rng(derive_seed(seed, {static_cast<std::uint64_t>(stream)})) {}

    double normal() { return normal_(engine_); }
    double uniform() { return uniform_(engine_); }
    bool bernoulli(double p) { return uniform() < p; }
    double student_t(double df);
    /// Uniform integer in [0, n).
    std::uint64_t below(std::uint64_t n);

    Eigen::VectorXd normal_vector(Eigen::Index n, double stddev = 1.0);
    Eigen::VectorXd sign_vector(Eigen::Index n);

    std::mt19937_64& engine() { return engine_; }

private:
    std::mt19937_64 engine_;
    std::normal_distribution<double> normal_{0.0, 1.0};
    std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

}  // namespace rlqe
