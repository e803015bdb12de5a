// Generalized Haar systems adapted to (mu, lattice): one function per
// non-leaf cube, supported on the cube, constant on its children, unit
// L2(mu) norm, and mean zero when the system is cancellative.
#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ncdyadic/lattice.hpp"
#include "ncdyadic/operator_field.hpp"

namespace ncdyadic {

struct HaarFunction {
    Cube cube;
    std::vector<double> coeffs;  // value on each child, lexicographic order
    bool zero = false;

    double value_at_leaf(const DyadicLattice& lattice, std::uint64_t leaf) const {
        if (zero) return 0.0;
        if (!lattice.contains(cube, {lattice.depth(), leaf})) return 0.0;
        std::uint64_t child = lattice.ancestor_index_of_leaf(cube.level + 1, leaf);
        return coeffs[child - (cube.index << lattice.dimension())];
    }

    double mean(const Measure& mu) const {
        if (zero) return 0.0;
        double sum = 0.0;
        for (std::uint64_t c = 0; c < coeffs.size(); ++c)
            sum += coeffs[c] * mu.mass({cube.level + 1, (cube.index << mu.lattice().dimension()) + c});
        return sum;
    }

    double l2_norm_sq(const Measure& mu) const {
        if (zero) return 0.0;
        double sum = 0.0;
        for (std::uint64_t c = 0; c < coeffs.size(); ++c)
            sum += coeffs[c] * coeffs[c] *
                   mu.mass({cube.level + 1, (cube.index << mu.lattice().dimension()) + c});
        return sum;
    }

    double l1_norm(const Measure& mu) const {
        if (zero) return 0.0;
        double sum = 0.0;
        for (std::uint64_t c = 0; c < coeffs.size(); ++c)
            sum += std::abs(coeffs[c]) *
                   mu.mass({cube.level + 1, (cube.index << mu.lattice().dimension()) + c});
        return sum;
    }

    // mu-essential sup: coefficients on null children do not count.
    double linf_norm(const Measure& mu) const {
        if (zero) return 0.0;
        double worst = 0.0;
        for (std::uint64_t c = 0; c < coeffs.size(); ++c)
            if (mu.mass({cube.level + 1, (cube.index << mu.lattice().dimension()) + c}) > 0.0)
                worst = std::max(worst, std::abs(coeffs[c]));
        return worst;
    }
};

class HaarSystem {
  public:
    HaarSystem(const DyadicLattice& lattice, bool cancellative)
        : lattice_(lattice), cancellative_(cancellative), levels_(std::max(lattice.depth(), 0)) {
        for (int k = 0; k < lattice.depth(); ++k)
            levels_[k].resize(lattice.cubes_at_level(k),
                              HaarFunction{{k, 0}, {}, true});
    }

    const DyadicLattice& lattice() const { return lattice_; }
    bool cancellative() const { return cancellative_; }

    const HaarFunction& at(const Cube& q) const { return levels_[q.level][q.index]; }
    void set(const Cube& q, HaarFunction h) { levels_[q.level][q.index] = std::move(h); }

    nlohmann::json to_json() const {
        nlohmann::json cubes = nlohmann::json::array();
        for (int k = 0; k < lattice_.depth(); ++k)
            for (std::uint64_t i = 0; i < levels_[k].size(); ++i) {
                const auto& h = levels_[k][i];
                cubes.push_back({{"level", k},
                                 {"index", i},
                                 {"coeffs", h.coeffs},
                                 {"zero", h.zero}});
            }
        return {{"cancellative", cancellative_}, {"cubes", std::move(cubes)}};
    }

    static HaarSystem from_json(const DyadicLattice& lattice, const nlohmann::json& j) {
        HaarSystem sys(lattice, j.at("cancellative").get<bool>());
        for (const auto& c : j.at("cubes")) {
            Cube q{c.at("level").get<int>(), c.at("index").get<std::uint64_t>()};
            if (!lattice.valid(q) || lattice.is_leaf(q))
                throw DataError("BadHaarFile", "cube out of range or a leaf");
            HaarFunction h;
            h.cube = q;
            h.coeffs = c.at("coeffs").get<std::vector<double>>();
            h.zero = c.value("zero", false);
            if (!h.zero && h.coeffs.size() != lattice.children_per_cube())
                throw DataError("BadHaarFile", "coefficient count != number of children");
            sys.set(q, std::move(h));
        }
        return sys;
    }

  private:
    DyadicLattice lattice_;
    bool cancellative_;
    std::vector<std::vector<HaarFunction>> levels_;
};

// Deterministic weighted Haar function: the first positive-mass child (A)
// against the union of the remaining children (B).  Mean zero and unit
// L2(mu) norm whenever both sides carry mass; otherwise flagged zero (the
// martingale-difference space of the cube is trivial).
inline HaarFunction canonical_haar(const Measure& mu, const Cube& q) {
    const auto& lattice = mu.lattice();
    if (lattice.is_leaf(q)) throw LatticeError("BeyondLeafLevel", "leaf cubes carry no Haar function");
    const std::uint64_t b = lattice.children_per_cube();
    HaarFunction h;
    h.cube = q;
    h.coeffs.assign(b, 0.0);

    std::uint64_t first = b;
    double m_first = 0.0;
    double m_total = 0.0;
    for (std::uint64_t c = 0; c < b; ++c) {
        double m = mu.mass(lattice.child(q, c));
        m_total += m;
        if (first == b && m > 0.0) {
            first = c;
            m_first = m;
        }
    }
    double m_rest = m_total - m_first;
    if (first == b || m_rest <= 0.0) {
        h.zero = true;
        return h;
    }
    double plus = std::sqrt(m_rest / (m_first * m_total));
    double minus = -std::sqrt(m_first / (m_rest * m_total));
    for (std::uint64_t c = 0; c < b; ++c) h.coeffs[c] = (c == first) ? plus : minus;
    return h;
}

inline HaarSystem canonical_system(const Measure& mu) {
    HaarSystem sys(mu.lattice(), true);
    for (int k = 0; k < mu.lattice().depth(); ++k)
        for (std::uint64_t i = 0; i < mu.lattice().cubes_at_level(k); ++i)
            sys.set({k, i}, canonical_haar(mu, {k, i}));
    return sys;
}

// Non-cancellative companion: the normalized cube indicator 1_Q / sqrt(mu(Q)).
inline HaarSystem indicator_system(const Measure& mu) {
    HaarSystem sys(mu.lattice(), false);
    const std::uint64_t b = mu.lattice().children_per_cube();
    for (int k = 0; k < mu.lattice().depth(); ++k)
        for (std::uint64_t i = 0; i < mu.lattice().cubes_at_level(k); ++i) {
            Cube q{k, i};
            double m = mu.mass(q);
            HaarFunction h;
            h.cube = q;
            if (m > 0.0)
                h.coeffs.assign(b, 1.0 / std::sqrt(m));
            else {
                h.coeffs.assign(b, 0.0);
                h.zero = true;
            }
            sys.set(q, std::move(h));
        }
    return sys;
}

struct HaarValidation {
    bool all_pass = true;
    double worst_mean_residual = 0.0;   // |int phi dmu|, scaled
    double worst_norm_residual = 0.0;   // | ||phi||_2^2 - 1 |
    double worst_gram_residual = 0.0;   // cross-cube orthonormality (cancellative only)
    std::uint64_t zero_on_positive_cube = 0;  // zero-flagged members with mu(Q) > 0
    std::vector<std::string> failures;
};

// Properties: support and constancy hold by representation; mean zero (only
// cancellative) and unit norm are checked numerically; for cancellative
// systems the cross-cube L2(mu) Gram matrix is checked against the identity.
inline HaarValidation validate_system(const HaarSystem& sys, const Measure& mu,
                                      double tol = 1e-10, double gram_tol = 1e-9) {
    HaarValidation rep;
    const auto& lattice = sys.lattice();
    std::vector<const HaarFunction*> live;
    for (int k = 0; k < lattice.depth(); ++k)
        for (std::uint64_t i = 0; i < lattice.cubes_at_level(k); ++i) {
            const auto& h = sys.at({k, i});
            double m = mu.mass({k, i});
            if (h.zero) {
                if (m > 0.0) ++rep.zero_on_positive_cube;
                continue;
            }
            double coeff_scale = 0.0;
            for (double c : h.coeffs) coeff_scale = std::max(coeff_scale, std::abs(c));
            if (sys.cancellative()) {
                double mean = std::abs(h.mean(mu));
                double scaled = mean / std::max(1e-300, coeff_scale * std::max(m, 1e-300));
                rep.worst_mean_residual = std::max(rep.worst_mean_residual, scaled);
                if (scaled > tol) {
                    rep.all_pass = false;
                    rep.failures.push_back("mean_zero level=" + std::to_string(k) +
                                           " index=" + std::to_string(i));
                }
            }
            double nr = std::abs(h.l2_norm_sq(mu) - 1.0);
            rep.worst_norm_residual = std::max(rep.worst_norm_residual, nr);
            if (nr > tol) {
                rep.all_pass = false;
                rep.failures.push_back("unit_norm level=" + std::to_string(k) +
                                       " index=" + std::to_string(i));
            }
            if (m > 0.0) live.push_back(&h);
        }

    if (sys.cancellative()) {
        for (std::size_t a = 0; a < live.size(); ++a)
            for (std::size_t b = a; b < live.size(); ++b) {
                // constancy on children reduces the integral to the coarser function's
                // child values against the finer function's child masses
                double ip = 0.0;
                const HaarFunction* ha = live[a];
                const HaarFunction* hb = live[b];
                if (hb->cube.level < ha->cube.level) std::swap(ha, hb);
                if (ha->cube.level == hb->cube.level) {
                    if (ha->cube.index == hb->cube.index)
                        ip = ha->l2_norm_sq(mu);
                    // disjoint supports otherwise: ip = 0 exactly
                } else if (lattice.contains(ha->cube, hb->cube)) {
                    double va = ha->value_at_leaf(lattice, lattice.leaf_range(hb->cube).first);
                    ip = va * hb->mean(mu);
                }
                double expected = (a == b) ? 1.0 : 0.0;
                rep.worst_gram_residual = std::max(rep.worst_gram_residual, std::abs(ip - expected));
            }
        if (rep.worst_gram_residual > gram_tol) {
            rep.all_pass = false;
            rep.failures.push_back("cross_cube_orthonormality");
        }
    }
    return rep;
}

// Operator-valued pairing <f, phi> = int f phi dmu (an n x n matrix).
inline Matrix pair(const OperatorField& f, const HaarFunction& phi, const Measure& mu) {
    const auto& lattice = f.lattice();
    Matrix out = Matrix::Zero(f.n(), f.n());
    if (phi.zero) return out;
    for (std::uint64_t c = 0; c < phi.coeffs.size(); ++c) {
        if (phi.coeffs[c] == 0.0) continue;
        Cube child = lattice.child(phi.cube, c);
        auto [lo, hi] = lattice.leaf_range(child);
        Matrix sum = Matrix::Zero(f.n(), f.n());
        for (std::uint64_t x = lo; x < hi; ++x) sum += mu.leaf_mass(x) * f[x];
        out += phi.coeffs[c] * sum;
    }
    return out;
}

// Same pairing from precomputed cube integrals.
inline Matrix pair(const CubeIntegrals& integrals, const DyadicLattice& lattice,
                   const HaarFunction& phi, int n) {
    Matrix out = Matrix::Zero(n, n);
    if (phi.zero) return out;
    for (std::uint64_t c = 0; c < phi.coeffs.size(); ++c)
        if (phi.coeffs[c] != 0.0)
            out += phi.coeffs[c] * integrals.integral(lattice.child(phi.cube, c));
    return out;
}

// Orthonormal basis of the martingale-difference subspace of Q: Gram-Schmidt
// over child indicators minus their Q-average, in child order.  Size is
// (#positive-mass children - 1) when mu(Q) > 0, else empty.
inline std::vector<HaarFunction> difference_basis(const Measure& mu, const Cube& q) {
    const auto& lattice = mu.lattice();
    if (lattice.is_leaf(q)) throw LatticeError("BeyondLeafLevel", "leaf cubes have no difference space");
    const std::uint64_t b = lattice.children_per_cube();
    std::vector<HaarFunction> basis;
    double m_total = mu.mass(q);
    if (m_total <= 0.0) return basis;

    std::vector<double> child_mass(b);
    for (std::uint64_t c = 0; c < b; ++c) child_mass[c] = mu.mass(lattice.child(q, c));

    auto dot = [&](const std::vector<double>& u, const std::vector<double>& v) {
        double sum = 0.0;
        for (std::uint64_t c = 0; c < b; ++c) sum += u[c] * v[c] * child_mass[c];
        return sum;
    };

    for (std::uint64_t c0 = 0; c0 < b; ++c0) {
        std::vector<double> v(b, -child_mass[c0] / m_total);
        v[c0] += 1.0;
        for (const auto& e : basis) {
            double proj = dot(e.coeffs, v);
            for (std::uint64_t c = 0; c < b; ++c) v[c] -= proj * e.coeffs[c];
        }
        double norm = std::sqrt(std::max(0.0, dot(v, v)));
        if (norm < 1e-12) continue;
        for (auto& x : v) x /= norm;
        basis.push_back(HaarFunction{q, std::move(v), false});
    }
    return basis;
}

inline HaarSystem load_system(const DyadicLattice& lattice, const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open Haar system file " + path);
    nlohmann::json j;
    in >> j;
    return HaarSystem::from_json(lattice, j);
}

inline void save_system(const HaarSystem& sys, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write Haar system file " + path);
    out << sys.to_json().dump() << '\n';
}

}  // namespace ncdyadic
