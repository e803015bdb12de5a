// Cuculescu's construction for the dyadic filtration of matrix-valued step
// functions: the decreasing projections q_k, their per-cube blocks q_Q, the
// disjoint differences p_k = q_{k-1} - q_k, and the terminal projection q.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "ncdyadic/lattice.hpp"
#include "ncdyadic/operator_field.hpp"

namespace ncdyadic {

struct CuculescuResult {
    DyadicLattice lattice{1, 0};
    int n = 1;
    double lambda = 0.0;
    // blocks[k][i] is the projection q_Q for Q = (k, i); blocks[0][0] is the identity
    std::vector<std::vector<Matrix>> blocks;

    const Matrix& q_block(const Cube& q) const { return blocks[q.level][q.index]; }

    Matrix p_block(const Cube& q) const {
        return blocks[q.level - 1][q.index >> lattice.dimension()] - q_block(q);
    }

    // q_k as a field constant on level-k cubes.
    OperatorField q_field(int k) const {
        OperatorField out(lattice, n);
        for (std::uint64_t x = 0; x < lattice.n_leaves(); ++x)
            out[x] = blocks[k][lattice.ancestor_index_of_leaf(k, x)];
        return out;
    }

    OperatorField p_field(int k) const {
        OperatorField out(lattice, n);
        for (std::uint64_t x = 0; x < lattice.n_leaves(); ++x)
            out[x] = blocks[k - 1][lattice.ancestor_index_of_leaf(k - 1, x)] -
                     blocks[k][lattice.ancestor_index_of_leaf(k, x)];
        return out;
    }

    OperatorField terminal_q_field() const { return q_field(lattice.depth()); }

    // Cubes with a nonzero p_Q; at n = 1 these are the classical stopping cubes.
    std::vector<Cube> stopping_cubes(double threshold = 0.5) const {
        std::vector<Cube> out;
        for (int k = 1; k <= lattice.depth(); ++k)
            for (std::uint64_t i = 0; i < lattice.cubes_at_level(k); ++i)
                if (p_block({k, i}).norm() > threshold) out.push_back({k, i});
        return out;
    }
};

// Smallest lambda admissible for the construction: the operator norm of the
// root average.
inline double minimal_lambda(const OperatorField& f, const Measure& mu) {
    return operator_norm(average(f, mu, mu.lattice().root()));
}

// Recursive spectral projections q_Q = 1_{[0,lambda]}(q_parent <f>_Q q_parent)
// computed inside range(q_parent); null cubes inherit the parent block.
// Requires f >= 0 leafwise and <f>_root <= lambda in the PSD order.
inline CuculescuResult cuculescu(const OperatorField& f, const Measure& mu, double lambda,
                                 double psd_tol = 1e-10) {
    const auto& lattice = f.lattice();
    if (!(lattice == mu.lattice()))
        throw DataError("ShapeMismatch", "field and measure lattices differ");
    if (!(lambda > 0.0)) throw PreconditionError("BadParameter", "lambda must be positive");

    for (std::uint64_t x = 0; x < f.n_leaves(); ++x) {
        if (mu.leaf_mass(x) <= 0.0) continue;
        if (min_eigenvalue(f[x]) < -psd_tol)
            throw DataError("NotPositive", "leaf " + std::to_string(x) + " is not PSD");
    }

    CuculescuResult res;
    res.lattice = lattice;
    res.n = f.n();
    res.lambda = lambda;
    res.blocks.resize(static_cast<std::size_t>(lattice.depth()) + 1);

    CubeIntegrals integrals(f, mu);
    auto avg = [&](const Cube& q) -> Matrix {
        double m = mu.mass(q);
        if (m <= 0.0) return Matrix::Zero(f.n(), f.n());
        return integrals.integral(q) / m;
    };

    double root_norm = operator_norm(avg(lattice.root()));
    if (root_norm > lambda * (1.0 + 1e-12)) throw LambdaTooSmall(lambda, root_norm);

    res.blocks[0] = {Matrix::Identity(f.n(), f.n())};
    for (int k = 1; k <= lattice.depth(); ++k) {
        res.blocks[k].resize(lattice.cubes_at_level(k));
        for (std::uint64_t i = 0; i < res.blocks[k].size(); ++i) {
            Cube q{k, i};
            const Matrix& parent = res.blocks[k - 1][i >> lattice.dimension()];
            if (mu.mass(q) <= 0.0) {
                res.blocks[k][i] = parent;
                continue;
            }
            Matrix compressed = hermitize(parent * avg(q) * parent);
            res.blocks[k][i] = spectral_projection(compressed, lambda, parent);
        }
    }
    return res;
}

struct CuculescuReport {
    bool all_pass = true;
    double projection_residual = 0.0;     // ||q^2 - q|| and ||q - q*|| per block
    double monotonicity_residual = 0.0;   // most negative eigenvalue of q_parent - q_Q
    double commutation_residual = 0.0;    // ||[q_Q, q_parent <f>_Q q_parent]||
    double upper_bound_residual = 0.0;    // max eig of q_k f_k q_k - lambda q_k, over lambda
    double terminal_norm_residual = 0.0;  // (||q f_k q||_A - lambda)/lambda, clamped at 0
    double trace_ratio = 0.0;             // lambda tau(1-q) / ||f||_1
    double lower_bound_residual = 0.0;    // p_Q <f>_Q p_Q >= lambda p_Q on range(p_Q), over lambda
    double disjointness_residual = 0.0;   // ||p_i p_j|| for i != j
    double partition_residual = 0.0;      // || sum_k p_k - (1 - q) ||
    std::vector<std::string> failures;
};

inline CuculescuReport verify_cuculescu(const CuculescuResult& res, const OperatorField& f,
                                        const Measure& mu, double lambda, double tol = 1e-8) {
    CuculescuReport rep;
    const auto& lattice = res.lattice;
    const int K = lattice.depth();
    const int n = res.n;
    CubeIntegrals integrals(f, mu);
    auto avg = [&](const Cube& q) -> Matrix {
        double m = mu.mass(q);
        if (m <= 0.0) return Matrix::Zero(n, n);
        return integrals.integral(q) / m;
    };
    auto note = [&](double residual, double bound, const std::string& what) {
        if (residual > bound) {
            rep.all_pass = false;
            rep.failures.push_back(what);
        }
    };

    for (int k = 0; k <= K; ++k)
        for (std::uint64_t i = 0; i < lattice.cubes_at_level(k); ++i) {
            Cube q{k, i};
            const Matrix& qq = res.q_block(q);
            rep.projection_residual = std::max(rep.projection_residual,
                                               std::max((qq * qq - qq).norm(), (qq - qq.adjoint()).norm()));
            if (k == 0) continue;
            const Matrix& parent = res.blocks[k - 1][i >> lattice.dimension()];
            rep.monotonicity_residual =
                std::min(rep.monotonicity_residual, min_eigenvalue(parent - qq));
            Matrix compressed = hermitize(parent * avg(q) * parent);
            rep.commutation_residual = std::max(
                rep.commutation_residual,
                (qq * compressed - compressed * qq).norm() / std::max(1.0, compressed.norm()));
            // (c) localized: q_Q <f>_Q q_Q <= lambda q_Q
            rep.upper_bound_residual =
                std::max(rep.upper_bound_residual,
                         max_eigenvalue(hermitize(qq * avg(q) * qq) - lambda * qq) / lambda);
            // localized lower bound p_Q <f>_Q p_Q >= lambda p_Q on range(p_Q)
            Matrix pp = parent - qq;
            Eigen::SelfAdjointEigenSolver<Matrix> basis(hermitize(pp));
            std::vector<Eigen::Index> cols;
            for (Eigen::Index c = 0; c < n; ++c)
                if (basis.eigenvalues()(c) > 0.5) cols.push_back(c);
            if (!cols.empty()) {
                Matrix w(n, static_cast<Eigen::Index>(cols.size()));
                for (std::size_t c = 0; c < cols.size(); ++c)
                    w.col(c) = basis.eigenvectors().col(cols[c]);
                double floor = min_eigenvalue(hermitize(w.adjoint() * avg(q) * w));
                rep.lower_bound_residual =
                    std::min(rep.lower_bound_residual, (floor - lambda) / lambda);
            }
        }

    // (d) terminal projection: ||q f_k q||_A <= lambda for all k, and the trace bound
    OperatorField q_term = res.terminal_q_field();
    for (int k = 1; k <= K; ++k) {
        double worst = 0.0;
        for (std::uint64_t x = 0; x < lattice.n_leaves(); ++x) {
            if (mu.leaf_mass(x) <= 0.0) continue;
            Matrix fk = avg({k, static_cast<std::uint64_t>(lattice.ancestor_index_of_leaf(k, x))});
            worst = std::max(worst, operator_norm(q_term[x] * fk * q_term[x]));
        }
        rep.terminal_norm_residual =
            std::max(rep.terminal_norm_residual, (worst - lambda) / lambda);
    }
    double tau_excess = std::real(trace_tau(OperatorField::identity(lattice, n) - q_term, mu));
    double f_l1 = lp_norm(f, 1.0, mu);
    rep.trace_ratio = (f_l1 > 0.0) ? lambda * tau_excess / f_l1 : 0.0;

    // disjointness of the p_k and the partition identity
    std::vector<OperatorField> p_fields;
    for (int k = 1; k <= K; ++k) p_fields.push_back(res.p_field(k));
    for (std::uint64_t x = 0; x < lattice.n_leaves(); ++x) {
        if (mu.leaf_mass(x) <= 0.0) continue;
        Matrix sum = Matrix::Zero(n, n);
        for (int a = 0; a < K; ++a) {
            sum += p_fields[a][x];
            for (int b = a + 1; b < K; ++b)
                rep.disjointness_residual =
                    std::max(rep.disjointness_residual, (p_fields[a][x] * p_fields[b][x]).norm());
        }
        rep.partition_residual = std::max(
            rep.partition_residual, (sum - (Matrix::Identity(n, n) - q_term[x])).norm());
    }

    note(rep.projection_residual, tol, "projection_property");
    note(-rep.monotonicity_residual, tol, "monotonicity");
    note(rep.commutation_residual, tol, "commutation");
    note(rep.upper_bound_residual, tol, "upper_bound");
    note(rep.terminal_norm_residual, tol, "terminal_norm");
    note(rep.trace_ratio, 1.0 + tol, "trace_bound");
    note(-rep.lower_bound_residual, tol, "lower_bound");
    note(rep.disjointness_residual, tol, "disjointness");
    note(rep.partition_residual, tol, "partition");
    return rep;
}

}  // namespace ncdyadic
