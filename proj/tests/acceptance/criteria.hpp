#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace acceptance {

struct Outcome {
    bool pass = false;
    std::string detail;
    /// Every measured number printed with 17 significant digits; reruns must reproduce it byte for byte.
    std::string record;
};

struct Criterion {
    int id = 0;
    std::string name;
    double budget_seconds = 0.0;
    std::function<Outcome(std::uint64_t master_seed)> run;
};

std::vector<Criterion> criteria();

/// 64-bit FNV-1a, printed as 16 hex digits.
std::string digest(const std::string& record);

}  // namespace acceptance
