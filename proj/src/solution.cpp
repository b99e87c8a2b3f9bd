#include "rlqe/solution.hpp"

namespace rlqe {

bool ConfidenceBand::contains(const MatrixXd& x, double slack) const
{
    for (Index i = 0; i < x.rows(); ++i)
        if ((x.row(i) - center.row(i)).norm() > radius(i) + slack)
            return false;
    return true;
}

double ConfidenceBand::coverage(const MatrixXd& x) const
{
    if (x.rows() == 0)
        return 1.0;
    Index inside = 0;
    for (Index i = 0; i < x.rows(); ++i)
        inside += (x.row(i) - center.row(i)).norm() <= radius(i);
    return static_cast<double>(inside) / static_cast<double>(x.rows());
}

Candidate SmootherSolution::candidate() const
{
    return {x_hat, w_hat, v_hat, a_hat, b_hat};
}

Mask SmootherSolution::rounded_mask() const
{
    Mask m(static_cast<std::size_t>(a_hat.size()));
    for (Index i = 0; i < a_hat.size(); ++i)
        m[static_cast<std::size_t>(i)] = a_hat(i) >= 0.5 ? 1 : 0;
    return m;
}

json band_to_json(const ConfidenceBand& band)
{
    std::vector<double> r(band.radius.data(), band.radius.data() + band.radius.size());
    return {{"center", matrix_to_json(band.center)}, {"radius", r}, {"floor", band.floor}, {"window", band.window},
            {"e_noise", band.e_noise}, {"eps_geo", band.eps_geo}};
}

json solution_to_json(const SmootherSolution& sol)
{
    auto vec = [](const VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); };
    json j;
    j["backend"] = sol.backend;
    j["objective"] = sol.objective;
    if (sol.lower_bound)
        j["lower_bound"] = *sol.lower_bound;
    j["rounds"] = sol.rounds;
    j["converged"] = sol.converged;
    j["flags"] = sol.flags;
    j["x_hat"] = matrix_to_json(sol.x_hat);
    j["w_hat"] = matrix_to_json(sol.w_hat);
    j["v_hat"] = matrix_to_json(sol.v_hat);
    j["a_hat"] = vec(sol.a_hat);
    if (sol.b_hat.size() > 0)
        j["b_hat"] = vec(sol.b_hat);
    j["feasibility"] = feasibility_to_json(sol.feasibility);
    if (sol.band)
        j["band"] = band_to_json(*sol.band);
    return j;
}

}  // namespace rlqe
