#include "rlqe/sdp.hpp"

#include <Eigen/SparseCholesky>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <deque>
#include <stdexcept>

namespace rlqe {

namespace {
constexpr double kSqrt2 = 1.4142135623730951;

Index svec_len(Index n)
{
    return n * (n + 1) / 2;
}
}  // namespace

Index ConeSpec::dim() const
{
    return nonneg_offset() + nonneg;
}

Index ConeSpec::block_offset(std::size_t block) const
{
    Index off = 0;
    for (std::size_t k = 0; k < block; ++k)
        off += svec_len(psd_sizes[k]);
    return off;
}

Index ConeSpec::nonneg_offset() const
{
    return block_offset(psd_sizes.size());
}

Index svec_index(Index n, Index i, Index j)
{
    if (i < j)
        std::swap(i, j);
    return j * n - j * (j - 1) / 2 + (i - j);
}

VectorXd svec(const MatrixXd& X)
{
    const Index n = X.rows();
    VectorXd v(svec_len(n));
    for (Index j = 0; j < n; ++j)
        for (Index i = j; i < n; ++i)
            v(svec_index(n, i, j)) = i == j ? X(i, j) : kSqrt2 * 0.5 * (X(i, j) + X(j, i));
    return v;
}

MatrixXd smat(const VectorXd& v, Index n)
{
    MatrixXd X(n, n);
    for (Index j = 0; j < n; ++j)
        for (Index i = j; i < n; ++i) {
            const double val = i == j ? v(svec_index(n, i, j)) : v(svec_index(n, i, j)) / kSqrt2;
            X(i, j) = val;
            X(j, i) = val;
        }
    return X;
}

VectorXd project_cone(const ConeSpec& cones, const VectorXd& v)
{
    VectorXd out(v.size());
    Index off = 0;
    for (Index n : cones.psd_sizes) {
        const Index len = svec_len(n);
        if (n == 1) {
            out(off) = std::max(v(off), 0.0);
        } else {
            const MatrixXd X = smat(v.segment(off, len), n);
            Eigen::SelfAdjointEigenSolver<MatrixXd> es(X);
            const VectorXd ev = es.eigenvalues().cwiseMax(0.0);
            const MatrixXd& U = es.eigenvectors();
            out.segment(off, len) = svec(U * ev.asDiagonal() * U.transpose());
        }
        off += len;
    }
    out.tail(cones.nonneg) = v.tail(cones.nonneg).cwiseMax(0.0);
    return out;
}

namespace {

VectorXd unit_row_scale(const Eigen::SparseMatrix<double>& A)
{
    VectorXd sq = VectorXd::Zero(A.rows());
    for (Index k = 0; k < A.outerSize(); ++k)
        for (Eigen::SparseMatrix<double>::InnerIterator it(A, k); it; ++it)
            sq(it.row()) += it.value() * it.value();
    VectorXd scale = VectorXd::Ones(A.rows());
    for (Index r = 0; r < A.rows(); ++r)
        if (sq(r) > 0)
            scale(r) = 1.0 / std::sqrt(sq(r));
    return scale;
}

}  // namespace

ConicResult solve_conic_admm(const ConicProblem& problem, const ConicSettings& settings,
                             const ConicResult* warm_start)
{
    const Index n = problem.cones.dim();
    const Index m = problem.A.rows();
    if (problem.A.cols() != n || problem.b.size() != m || problem.c.size() != n)
        throw std::invalid_argument("solve_conic: inconsistent problem dimensions");

    // Unit-norm rows improve the conditioning of A A^T.
    const VectorXd row_scale = unit_row_scale(problem.A);
    const Eigen::SparseMatrix<double> A = row_scale.asDiagonal() * problem.A;
    const Eigen::SparseMatrix<double> At = A.transpose();
    const VectorXd b = row_scale.cwiseProduct(problem.b);
    const VectorXd& c = problem.c;

    Eigen::SparseMatrix<double> AAt = A * At;
    for (Index r = 0; r < m; ++r)
        AAt.coeffRef(r, r) += 1e-12;
    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> chol(AAt);
    if (chol.info() != Eigen::Success)
        throw std::runtime_error("solve_conic: factorisation of A A^T failed");

    double mu = settings.mu;
    const double bnorm = 1.0 + b.norm(), cnorm = 1.0 + c.norm();

    // One sweep of the splitting as a map on V = s - mu x: s = proj(V), x = (s - V) / mu, then y and the next V.
    VectorXd x, s, y;
    auto sweep = [&](const VectorXd& V) {
        s = project_cone(problem.cones, V);
        x = (s - V) / mu;
        y = chol.solve(mu * (b - A * x) + A * (c - s));
        return VectorXd(c - At * y - mu * x);
    };

    // Type-II Anderson acceleration of the sweep with a residual safeguard.
    std::deque<VectorXd> dR, dF;
    VectorXd prev_r, prev_F, base_F;
    bool have_prev = false, accelerated = false;
    double base_rn = 0.0;
    auto reset_memory = [&] {
        dR.clear();
        dF.clear();
        have_prev = false;
        accelerated = false;
    };

    VectorXd V = VectorXd::Zero(n);
    if (warm_start && warm_start->x.size() == n && warm_start->s.size() == n)
        V = warm_start->s - mu * warm_start->x;
    ConicResult res;
    for (int it = 1; it <= settings.max_iter; ++it) {
        const VectorXd F = sweep(V);
        const VectorXd r = F - V;
        const double rn = r.norm();
        res.iterations = it;

        if (accelerated && rn > settings.safeguard * base_rn) {
            ++res.rejected;
            V = base_F;
            reset_memory();
            continue;
        }

        if (it % settings.check_every == 0 || it == settings.max_iter) {
            const double pres = (A * x - b).norm() / bnorm;
            const double dres = (At * y + s - c).norm() / cnorm;
            const double pobj = c.dot(x), dobj = b.dot(y);
            const double gap = std::abs(pobj - dobj) / (1.0 + std::abs(pobj) + std::abs(dobj));
            res.primal_residual = pres;
            res.dual_residual = dres;
            res.gap = gap;
            if (pres <= settings.eps && dres <= settings.eps && gap <= settings.gap_tol) {
                res.converged = true;
                break;
            }
            if (it % settings.adapt_every == 0) {
                // Balance the two residuals; the iterate is re-expressed for the new mu.
                double next = mu;
                if (pres > settings.adapt_ratio * dres)
                    next = std::min(mu * settings.adapt_factor, 1e6);
                else if (dres > settings.adapt_ratio * pres)
                    next = std::max(mu / settings.adapt_factor, 1e-6);
                if (next != mu) {
                    mu = next;
                    V = s - mu * x;
                    reset_memory();
                    continue;
                }
            }
        }

        if (settings.anderson_memory <= 0) {
            V = F;
            continue;
        }
        if (have_prev) {
            dR.push_back(r - prev_r);
            dF.push_back(F - prev_F);
            if (static_cast<int>(dR.size()) > settings.anderson_memory) {
                dR.pop_front();
                dF.pop_front();
            }
        }
        prev_r = r;
        prev_F = F;
        have_prev = true;
        if (dR.empty()) {
            V = F;
            accelerated = false;
            continue;
        }
        const Index k = static_cast<Index>(dR.size());
        MatrixXd R(n, k), G(n, k);
        for (Index j = 0; j < k; ++j) {
            R.col(j) = dR[static_cast<std::size_t>(j)];
            G.col(j) = dF[static_cast<std::size_t>(j)];
        }
        MatrixXd H = R.transpose() * R;
        H.diagonal().array() += 1e-10 * std::max(H.trace(), 1e-300);
        const VectorXd gamma = H.ldlt().solve(R.transpose() * r);
        base_F = F;
        base_rn = rn;
        V = F - G * gamma;
        accelerated = true;
    }
    res.x = x;
    res.s = s;
    res.y = row_scale.cwiseProduct(y);
    res.primal_objective = c.dot(x);
    res.dual_objective = problem.b.dot(res.y);
    return res;
}

namespace {

/// Cone element split into dense symmetric blocks and the orthant part.
struct ConePoint {
    std::vector<MatrixXd> blocks;
    VectorXd nn;
};

ConePoint unpack(const ConeSpec& cones, const VectorXd& v)
{
    ConePoint p;
    Index off = 0;
    for (Index n : cones.psd_sizes) {
        p.blocks.push_back(smat(v.segment(off, svec_len(n)), n));
        off += svec_len(n);
    }
    p.nn = v.tail(cones.nonneg);
    return p;
}

VectorXd pack(const ConeSpec& cones, const ConePoint& p)
{
    VectorXd v(cones.dim());
    Index off = 0;
    for (std::size_t k = 0; k < cones.psd_sizes.size(); ++k) {
        const Index len = svec_len(cones.psd_sizes[k]);
        v.segment(off, len) = svec(p.blocks[k]);
        off += len;
    }
    v.tail(cones.nonneg) = p.nn;
    return v;
}

/// Largest alpha with P + alpha D in the cone (infinity when unbounded).
double max_step(const ConePoint& P, const ConePoint& D)
{
    double alpha = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < P.blocks.size(); ++k) {
        Eigen::LLT<MatrixXd> llt(P.blocks[k]);
        const MatrixXd Linv_D = llt.matrixL().solve(D.blocks[k]);
        const MatrixXd W = llt.matrixL().solve(Linv_D.transpose());
        const double lam = min_eigenvalue(W);
        if (lam < 0)
            alpha = std::min(alpha, -1.0 / lam);
    }
    for (Index i = 0; i < P.nn.size(); ++i)
        if (D.nn(i) < 0)
            alpha = std::min(alpha, -P.nn(i) / D.nn(i));
    return alpha;
}

struct BlockEntry {
    Index p, q;
    double val;
};

}  // namespace

ConicResult solve_conic_ipm(const ConicProblem& problem, const ConicSettings& settings)
{
    const ConeSpec& K = problem.cones;
    const Index n = K.dim();
    const Index m = problem.A.rows();
    if (problem.A.cols() != n || problem.b.size() != m || problem.c.size() != n)
        throw std::invalid_argument("solve_conic_ipm: inconsistent problem dimensions");
    const std::size_t nb = K.psd_sizes.size();
    const Index nn_off = K.nonneg_offset();

    // Constraint matrices per block as symmetric entries (p >= q), plus the orthant part as a sparse matrix.
    std::vector<std::vector<std::vector<BlockEntry>>> rows_of(nb, std::vector<std::vector<BlockEntry>>(m));
    std::vector<std::vector<Index>> touching(nb);
    std::vector<Eigen::Triplet<double>> nn_trips;
    {
        std::vector<std::size_t> col_block(static_cast<std::size_t>(n));
        std::vector<std::pair<Index, Index>> col_pq(static_cast<std::size_t>(n));
        for (std::size_t k = 0; k < nb; ++k) {
            const Index sz = K.psd_sizes[k], off = K.block_offset(k);
            for (Index q = 0; q < sz; ++q)
                for (Index p = q; p < sz; ++p) {
                    col_block[static_cast<std::size_t>(off + svec_index(sz, p, q))] = k;
                    col_pq[static_cast<std::size_t>(off + svec_index(sz, p, q))] = {p, q};
                }
        }
        for (Index col = 0; col < problem.A.outerSize(); ++col)
            for (Eigen::SparseMatrix<double>::InnerIterator it(problem.A, col); it; ++it) {
                if (col >= nn_off) {
                    nn_trips.emplace_back(it.row(), col - nn_off, it.value());
                    continue;
                }
                const auto [p, q] = col_pq[static_cast<std::size_t>(col)];
                const double val = p == q ? it.value() : it.value() / kSqrt2;
                rows_of[col_block[static_cast<std::size_t>(col)]][static_cast<std::size_t>(it.row())].push_back(
                    {p, q, val});
            }
        for (std::size_t k = 0; k < nb; ++k)
            for (Index r = 0; r < m; ++r)
                if (!rows_of[k][static_cast<std::size_t>(r)].empty())
                    touching[k].push_back(r);
    }
    Eigen::SparseMatrix<double> Ann(m, K.nonneg);
    Ann.setFromTriplets(nn_trips.begin(), nn_trips.end());

    const VectorXd row_scale = unit_row_scale(problem.A);
    const Eigen::SparseMatrix<double> A = row_scale.asDiagonal() * problem.A;
    const VectorXd b = row_scale.cwiseProduct(problem.b);
    const VectorXd& c = problem.c;
    for (auto& block_rows : rows_of)
        for (Index r = 0; r < m; ++r)
            for (auto& e : block_rows[static_cast<std::size_t>(r)])
                e.val *= row_scale(r);
    Ann = row_scale.asDiagonal() * Ann;
    const double nu = static_cast<double>(std::accumulate(K.psd_sizes.begin(), K.psd_sizes.end(), Index{0}) + K.nonneg);
    const double bnorm = 1.0 + b.norm(), cnorm = 1.0 + c.norm();

    const double xi = 10.0 * std::max({1.0, b.cwiseAbs().maxCoeff(), c.cwiseAbs().maxCoeff()});
    ConePoint X, Z;
    for (Index sz : K.psd_sizes) {
        X.blocks.push_back(xi * MatrixXd::Identity(sz, sz));
        Z.blocks.push_back(xi * MatrixXd::Identity(sz, sz));
    }
    X.nn = VectorXd::Constant(K.nonneg, xi);
    Z.nn = VectorXd::Constant(K.nonneg, xi);
    VectorXd y = VectorXd::Zero(m);

    // Near the optimum of a degenerate problem the Schur system loses accuracy and the residuals
    // can grow again, so the best iterate seen is returned and a run of non-improving steps close to
    // the optimum stops.
    ConicResult best;
    double best_merit = std::numeric_limits<double>::infinity();
    int since_best = 0;
    constexpr int kStallLimit = 5;
    for (int it = 0; it <= settings.ipm_max_iter; ++it) {
        const VectorXd xv = pack(K, X), zv = pack(K, Z);
        const VectorXd rp = b - A * xv;
        const VectorXd rd_v = c - zv - A.transpose() * y;
        ConicResult res;
        res.primal_objective = c.dot(xv);
        res.dual_objective = b.dot(y);
        res.iterations = it;
        res.primal_residual = rp.norm() / bnorm;
        res.dual_residual = rd_v.norm() / cnorm;
        res.gap = std::abs(res.primal_objective - res.dual_objective) /
                  (1.0 + std::abs(res.primal_objective) + std::abs(res.dual_objective));
        res.converged =
            res.primal_residual <= settings.eps && res.dual_residual <= settings.eps && res.gap <= settings.gap_tol;
        const double merit = std::max({res.primal_residual / settings.eps, res.dual_residual / settings.eps,
                                       res.gap / settings.gap_tol});
        if (merit < best_merit) {
            best_merit = merit;
            since_best = 0;
            res.x = xv;
            res.s = zv;
            res.y = row_scale.cwiseProduct(y);
            best = std::move(res);
        } else {
            if (best.gap < 1e-3)
                ++since_best;
            best.iterations = it;
        }
        if (best.converged || since_best >= kStallLimit || it == settings.ipm_max_iter)
            break;

        const double mu = xv.dot(zv) / nu;
        const ConePoint Rd = unpack(K, rd_v);
        std::vector<MatrixXd> Zinv(nb);
        for (std::size_t k = 0; k < nb; ++k)
            Zinv[k] = Eigen::LLT<MatrixXd>(Z.blocks[k]).solve(MatrixXd::Identity(K.psd_sizes[k], K.psd_sizes[k]));
        const VectorXd x_over_z = X.nn.cwiseQuotient(Z.nn);

        // Schur complement M_ij = <A_i, X A_j Z^-1> summed over blocks, plus the orthant term.
        MatrixXd M = MatrixXd::Zero(m, m);
        for (std::size_t k = 0; k < nb; ++k) {
            const MatrixXd& Xk = X.blocks[k];
            const MatrixXd& Zi = Zinv[k];
            const Index sz = K.psd_sizes[k];
            for (Index j : touching[k]) {
                MatrixXd G = MatrixXd::Zero(sz, sz);
                for (const auto& e : rows_of[k][static_cast<std::size_t>(j)]) {
                    G.noalias() += e.val * Xk.col(e.p) * Zi.row(e.q);
                    if (e.p != e.q)
                        G.noalias() += e.val * Xk.col(e.q) * Zi.row(e.p);
                }
                for (Index i : touching[k]) {
                    double acc = 0.0;
                    for (const auto& e : rows_of[k][static_cast<std::size_t>(i)])
                        acc += e.p == e.q ? e.val * G(e.p, e.p) : e.val * (G(e.p, e.q) + G(e.q, e.p));
                    M(i, j) += acc;
                }
            }
        }
        if (K.nonneg > 0)
            M += MatrixXd(Ann * x_over_z.asDiagonal() * Ann.transpose());
        M = symmetrized(M);
        Eigen::LLT<MatrixXd> schur(M);
        if (schur.info() != Eigen::Success) {
            MatrixXd Mreg = M;
            Mreg.diagonal().array() += 1e-12 * std::max(1.0, M.diagonal().maxCoeff());
            schur.compute(Mreg);
            if (schur.info() != Eigen::Success)
                break;
        }
        auto schur_solve = [&](const VectorXd& rhs) {
            VectorXd sol = schur.solve(rhs);
            sol += schur.solve(rhs - M * sol);
            return sol;
        };

        // Direction for target mu_t with optional second-order correction term corr = dXa dZa Z^-1.
        auto direction = [&](double mu_t, const ConePoint* dXa, const ConePoint* dZa, ConePoint& dX, ConePoint& dZ,
                             VectorXd& dy) {
            ConePoint T;  // mu_t Z^-1 - X - X Rd Z^-1 - corr, before the A^T dy term.
            for (std::size_t k = 0; k < nb; ++k) {
                MatrixXd t = mu_t * Zinv[k] - X.blocks[k] - X.blocks[k] * Rd.blocks[k] * Zinv[k];
                if (dXa)
                    t -= dXa->blocks[k] * dZa->blocks[k] * Zinv[k];
                T.blocks.push_back(symmetrized(t));
            }
            T.nn = (mu_t * Z.nn.cwiseInverse() - X.nn - x_over_z.cwiseProduct(Rd.nn));
            if (dXa)
                T.nn -= dXa->nn.cwiseProduct(dZa->nn).cwiseQuotient(Z.nn);
            dy = schur_solve(rp - A * pack(K, T));
            dZ = unpack(K, rd_v - A.transpose() * dy);
            dX = T;
            for (std::size_t k = 0; k < nb; ++k)
                dX.blocks[k] -= symmetrized(X.blocks[k] * dZ.blocks[k] * Zinv[k]) -
                                symmetrized(X.blocks[k] * Rd.blocks[k] * Zinv[k]);
            dX.nn -= x_over_z.cwiseProduct(dZ.nn) - x_over_z.cwiseProduct(Rd.nn);
        };

        ConePoint dXa, dZa, dX, dZ;
        VectorXd dya, dy;
        direction(0.0, nullptr, nullptr, dXa, dZa, dya);
        const double ap_a = std::min(1.0, max_step(X, dXa)), ad_a = std::min(1.0, max_step(Z, dZa));
        const double mu_aff = (pack(K, X) + ap_a * pack(K, dXa)).dot(pack(K, Z) + ad_a * pack(K, dZa)) / nu;
        const double sigma = std::clamp(std::pow(mu_aff / mu, 3.0), 0.0, 1.0);
        direction(sigma * mu, &dXa, &dZa, dX, dZ, dy);

        const double ap = std::min(1.0, settings.step_fraction * max_step(X, dX));
        const double ad = std::min(1.0, settings.step_fraction * max_step(Z, dZ));
        for (std::size_t k = 0; k < nb; ++k) {
            X.blocks[k] = symmetrized(MatrixXd(X.blocks[k] + ap * dX.blocks[k]));
            Z.blocks[k] = symmetrized(MatrixXd(Z.blocks[k] + ad * dZ.blocks[k]));
        }
        X.nn += ap * dX.nn;
        Z.nn += ad * dZ.nn;
        y += ad * dy;
    }
    return best;
}

ConicResult solve_conic(const ConicProblem& problem, const ConicSettings& settings)
{
    return settings.method == ConicMethod::interior_point ? solve_conic_ipm(problem, settings)
                                                          : solve_conic_admm(problem, settings);
}

std::size_t ConicBuilder::add_psd_block(Index n)
{
    if (n < 1)
        throw std::invalid_argument("ConicBuilder: block size must be positive");
    cones_.psd_sizes.push_back(n);
    return cones_.psd_sizes.size() - 1;
}

Index ConicBuilder::add_nonneg(Index count)
{
    const Index first = cones_.nonneg;
    cones_.nonneg += count;
    return first;
}

Index ConicBuilder::add_row(double rhs)
{
    if (!std::isfinite(rhs))
        throw std::invalid_argument("ConicBuilder: non-finite right-hand side");
    rhs_.push_back(rhs);
    return static_cast<Index>(rhs_.size()) - 1;
}

Index ConicBuilder::add_le_row(double rhs)
{
    const Index r = add_row(rhs);
    add_nonneg_term(r, add_nonneg(1), 1.0);
    return r;
}

Index ConicBuilder::add_ge_row(double rhs)
{
    const Index r = add_row(rhs);
    add_nonneg_term(r, add_nonneg(1), -1.0);
    return r;
}

void ConicBuilder::add_entry(Index row, std::size_t block, Index i, Index j, double coef)
{
    const Index n = cones_.psd_sizes.at(block);
    psd_terms_.push_back({row, block, svec_index(n, i, j), i == j ? coef : coef / kSqrt2});
}

void ConicBuilder::add_nonneg_term(Index row, Index k, double coef)
{
    nonneg_terms_.push_back({row, 0, k, coef});
}

void ConicBuilder::add_cost_entry(std::size_t block, Index i, Index j, double coef)
{
    const Index n = cones_.psd_sizes.at(block);
    cost_terms_.push_back({0, block, svec_index(n, i, j), i == j ? coef : coef / kSqrt2});
}

ConicProblem ConicBuilder::build() const
{
    ConicProblem p;
    p.cones = cones_;
    const Index n = cones_.dim();
    std::vector<Index> offsets;
    for (std::size_t k = 0; k < cones_.psd_sizes.size(); ++k)
        offsets.push_back(cones_.block_offset(k));
    const Index nn_off = cones_.nonneg_offset();

    std::vector<Eigen::Triplet<double>> trips;
    trips.reserve(psd_terms_.size() + nonneg_terms_.size());
    for (const auto& t : psd_terms_)
        trips.emplace_back(t.row, offsets[t.block] + t.local, t.coef);
    for (const auto& t : nonneg_terms_)
        trips.emplace_back(t.row, nn_off + t.local, t.coef);
    p.A.resize(rows(), n);
    p.A.setFromTriplets(trips.begin(), trips.end());
    p.b = Eigen::Map<const VectorXd>(rhs_.data(), static_cast<Index>(rhs_.size()));
    p.c = VectorXd::Zero(n);
    for (const auto& t : cost_terms_)
        p.c(offsets[t.block] + t.local) += t.coef;
    return p;
}

}  // namespace rlqe
