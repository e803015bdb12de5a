// Finite dyadic lattice (one root cube, depth K, dimension d) and measures
// given by nonnegative leaf masses.
//
// Cubes are addressed by (level k, lexicographic index in [0, 2^{kd})).  The
// children of (k, i) are (k+1, i*2^d + c) in fixed lexicographic order; this
// order is the tie-breaking rule used everywhere downstream.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "ncdyadic/errors.hpp"

namespace ncdyadic {

struct Cube {
    int level = 0;
    std::uint64_t index = 0;

    friend bool operator==(const Cube&, const Cube&) = default;
    friend auto operator<=>(const Cube&, const Cube&) = default;
};

class DyadicLattice {
  public:
    // Address space is capped so that 2^{Kd} leaves stay comfortably in
    // memory; beyond that construction fails with LatticeTooLarge.
    static constexpr int kMaxAddressBits = 26;

    DyadicLattice(int d, int K) : d_(d), K_(K) {
        if (d < 1) throw LatticeError("LatticeTooLarge", "dimension d must be >= 1");
        if (K < 0) throw LatticeError("LatticeTooLarge", "depth K must be >= 0");
        if (static_cast<long long>(d) * K > kMaxAddressBits)
            throw LatticeError("LatticeTooLarge",
                               "d*K = " + std::to_string(static_cast<long long>(d) * K) +
                                   " exceeds the supported " + std::to_string(kMaxAddressBits) +
                                   " address bits");
    }

    int dimension() const { return d_; }
    int depth() const { return K_; }

    std::uint64_t children_per_cube() const { return std::uint64_t{1} << d_; }
    std::uint64_t cubes_at_level(int level) const { return std::uint64_t{1} << (level * d_); }
    std::uint64_t n_leaves() const { return cubes_at_level(K_); }

    std::uint64_t total_cubes() const {
        std::uint64_t total = 0;
        for (int k = 0; k <= K_; ++k) total += cubes_at_level(k);
        return total;
    }

    bool valid(const Cube& q) const {
        return q.level >= 0 && q.level <= K_ && q.index < cubes_at_level(q.level);
    }

    Cube root() const { return {0, 0}; }
    bool is_leaf(const Cube& q) const { return q.level == K_; }

    Cube parent(const Cube& q) const {
        require(q);
        if (q.level == 0) throw LatticeError("BeyondLeafLevel", "root cube has no parent");
        return {q.level - 1, q.index >> d_};
    }

    Cube child(const Cube& q, std::uint64_t c) const {
        require(q);
        if (is_leaf(q)) throw LatticeError("BeyondLeafLevel", "leaf cube has no children");
        return {q.level + 1, (q.index << d_) + c};
    }

    // r-th dyadic ancestor, level(q) - r.
    Cube ancestor(const Cube& q, int r) const {
        require(q);
        if (r < 0 || r > q.level) throw LatticeError("BeyondLeafLevel", "ancestor level out of range");
        return {q.level - r, q.index >> (r * d_)};
    }

    // The 2^{rd} descendants of q at depth exactly r below it, in index order.
    std::vector<Cube> descendants(const Cube& q, int r) const {
        require(q);
        if (r < 0 || q.level + r > K_)
            throw LatticeError("BeyondLeafLevel",
                               "descendants at depth " + std::to_string(r) + " of a level-" +
                                   std::to_string(q.level) + " cube exceed depth " +
                                   std::to_string(K_));
        std::uint64_t count = std::uint64_t{1} << (r * d_);
        std::vector<Cube> out;
        out.reserve(count);
        std::uint64_t base = q.index << (r * d_);
        for (std::uint64_t i = 0; i < count; ++i) out.push_back({q.level + r, base + i});
        return out;
    }

    // Leaves under q as the half-open index range [first, last).
    std::pair<std::uint64_t, std::uint64_t> leaf_range(const Cube& q) const {
        require(q);
        int shift = (K_ - q.level) * d_;
        return {q.index << shift, (q.index + 1) << shift};
    }

    // Level-k ancestor of the given leaf.
    std::uint64_t ancestor_index_of_leaf(int level, std::uint64_t leaf) const {
        return leaf >> ((K_ - level) * d_);
    }

    bool contains(const Cube& outer, const Cube& inner) const {
        if (inner.level < outer.level) return false;
        return (inner.index >> ((inner.level - outer.level) * d_)) == outer.index;
    }

    friend bool operator==(const DyadicLattice& a, const DyadicLattice& b) {
        return a.d_ == b.d_ && a.K_ == b.K_;
    }

  private:
    void require(const Cube& q) const {
        if (!valid(q))
            throw LatticeError("BeyondLeafLevel", "cube (" + std::to_string(q.level) + "," +
                                                      std::to_string(q.index) + ") is not in the lattice");
    }

    int d_;
    int K_;
};

inline DyadicLattice build_lattice(int d, int K) { return DyadicLattice(d, K); }

// Leaf masses plus the per-level aggregates mu(Q).  Aggregates are built
// bottom-up, so mu(Q) equals the sum of the children masses bit for bit.
class Measure {
  public:
    Measure(const DyadicLattice& lattice, std::vector<double> leaf_mass)
        : lattice_(lattice), level_mass_(static_cast<std::size_t>(lattice.depth()) + 1) {
        if (leaf_mass.size() != lattice.n_leaves())
            throw DataError("ShapeMismatch", "expected " + std::to_string(lattice.n_leaves()) +
                                                 " leaf masses, got " + std::to_string(leaf_mass.size()));
        const int K = lattice.depth();
        level_mass_[K] = std::move(leaf_mass);
        for (int k = K - 1; k >= 0; --k) {
            std::uint64_t n = lattice.cubes_at_level(k);
            std::uint64_t b = lattice.children_per_cube();
            level_mass_[k].assign(n, 0.0);
            for (std::uint64_t i = 0; i < n; ++i) {
                double sum = 0.0;
                for (std::uint64_t c = 0; c < b; ++c) sum += level_mass_[k + 1][i * b + c];
                level_mass_[k][i] = sum;
            }
        }
    }

    const DyadicLattice& lattice() const { return lattice_; }

    double mass(const Cube& q) const { return level_mass_[q.level][q.index]; }
    double leaf_mass(std::uint64_t leaf) const { return level_mass_[lattice_.depth()][leaf]; }
    const std::vector<double>& leaf_masses() const { return level_mass_[lattice_.depth()]; }
    double total() const { return level_mass_[0][0]; }

    nlohmann::json to_json() const {
        return {{"d", lattice_.dimension()}, {"K", lattice_.depth()}, {"leaf_mass", leaf_masses()}};
    }

    static Measure from_json(const nlohmann::json& j) {
        if (!j.contains("d") || !j.contains("K") || !j.contains("leaf_mass"))
            throw DataError("BadMeasureFile", "expected keys d, K, leaf_mass");
        DyadicLattice lattice(j.at("d").get<int>(), j.at("K").get<int>());
        return Measure(lattice, j.at("leaf_mass").get<std::vector<double>>());
    }

  private:
    DyadicLattice lattice_;
    std::vector<std::vector<double>> level_mass_;
};

inline double cube_mass(const Measure& mu, const Cube& q) { return mu.mass(q); }

struct MeasureValidation {
    bool valid = true;
    std::vector<std::string> failures;
    // max mu(parent)/mu(Q) over positive-mass cubes at levels >= 1
    double max_doubling_ratio = 0.0;
    std::uint64_t negative_leaves = 0;
    std::uint64_t nonfinite_leaves = 0;
    std::uint64_t zero_leaves = 0;
};

inline MeasureValidation validate_measure(const Measure& mu) {
    MeasureValidation report;
    const auto& lattice = mu.lattice();
    for (std::uint64_t i = 0; i < lattice.n_leaves(); ++i) {
        double m = mu.leaf_mass(i);
        if (!std::isfinite(m)) ++report.nonfinite_leaves;
        else if (m < 0.0) ++report.negative_leaves;
        else if (m == 0.0) ++report.zero_leaves;
    }
    if (report.negative_leaves > 0) {
        report.valid = false;
        report.failures.push_back("NegativeMass");
    }
    if (report.nonfinite_leaves > 0) {
        report.valid = false;
        report.failures.push_back("NonFiniteMass");
    }
    if (report.valid) {
        for (int k = 1; k <= lattice.depth(); ++k)
            for (std::uint64_t i = 0; i < lattice.cubes_at_level(k); ++i) {
                double m = mu.mass({k, i});
                if (m <= 0.0) continue;
                double ratio = mu.mass({k - 1, i >> lattice.dimension()}) / m;
                report.max_doubling_ratio = std::max(report.max_doubling_ratio, ratio);
            }
    }
    return report;
}

namespace detail {
inline std::uint64_t splitmix64(std::uint64_t& state) {
    state += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// Uniform in [0,1); a fixed bit recipe keeps presets reproducible across
// standard library implementations.
inline double uniform01(std::uint64_t& state) {
    return static_cast<double>(splitmix64(state) >> 11) * 0x1.0p-53;
}
}  // namespace detail

// Measure zoo for the experiments.  Parameters (all optional):
//   left_loaded:      delta in (0,1), share of each parent given to child 0
//   near_point_mass:  eps in (0,1), target leaf index
//   dyadic_doubling_random, random: seed
inline Measure preset_measure(const std::string& name, const DyadicLattice& lattice,
                              const nlohmann::json& params = nlohmann::json::object()) {
    const std::uint64_t leaves = lattice.n_leaves();
    const std::uint64_t b = lattice.children_per_cube();
    std::vector<double> mass(leaves, 0.0);

    auto split_down = [&](auto&& child_fractions) {
        // Walk levels top-down, multiplying per-split fractions along the way.
        std::vector<double> cur{1.0};
        for (int k = 0; k < lattice.depth(); ++k) {
            std::vector<double> next(lattice.cubes_at_level(k + 1));
            for (std::uint64_t i = 0; i < cur.size(); ++i) {
                std::vector<double> frac = child_fractions(k, i);
                for (std::uint64_t c = 0; c < b; ++c) next[i * b + c] = cur[i] * frac[c];
            }
            cur = std::move(next);
        }
        return cur;
    };

    if (name == "uniform") {
        std::fill(mass.begin(), mass.end(), 1.0 / static_cast<double>(leaves));
    } else if (name == "left_loaded") {
        double delta = params.value("delta", 0.25);
        if (!(delta > 0.0 && delta < 1.0))
            throw PreconditionError("BadParameter", "left_loaded requires delta in (0,1)");
        mass = split_down([&](int, std::uint64_t) {
            std::vector<double> frac(b, (1.0 - delta) / static_cast<double>(b - 1));
            frac[0] = delta;
            if (b == 1) frac[0] = 1.0;
            return frac;
        });
    } else if (name == "near_point_mass") {
        double eps = params.value("eps", 1e-3);
        if (!(eps > 0.0 && eps < 1.0))
            throw PreconditionError("BadParameter", "near_point_mass requires eps in (0,1)");
        std::uint64_t target = params.value("target_leaf", std::uint64_t{0});
        if (target >= leaves)
            throw PreconditionError("BadParameter", "target_leaf out of range");
        mass = split_down([&](int k, std::uint64_t i) {
            if (lattice.ancestor_index_of_leaf(k, target) != i || b == 1)
                return std::vector<double>(b, 1.0 / static_cast<double>(b));
            // child on the path to the target leaf keeps 1-eps of the parent
            std::vector<double> frac(b, eps / static_cast<double>(b - 1));
            frac[lattice.ancestor_index_of_leaf(k + 1, target) - i * b] = 1.0 - eps;
            return frac;
        });
    } else if (name == "dyadic_doubling_random") {
        std::uint64_t state = params.value("seed", std::uint64_t{1});
        mass = split_down([&](int, std::uint64_t) {
            std::vector<double> w(b);
            double total = 0.0;
            for (auto& x : w) {
                x = 1.0 + detail::uniform01(state);  // weights in [1,2): bounded split ratios
                total += x;
            }
            for (auto& x : w) x /= total;
            return w;
        });
    } else if (name == "random") {
        std::uint64_t state = params.value("seed", std::uint64_t{1});
        double total = 0.0;
        for (auto& m : mass) {
            m = 1.0 - detail::uniform01(state);  // i.i.d. in (0,1]
            total += m;
        }
        for (auto& m : mass) m /= total;
    } else {
        throw PreconditionError("UnknownPreset", "unknown measure preset '" + name + "'");
    }
    return Measure(lattice, std::move(mass));
}

inline Measure load_measure(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open measure file " + path);
    nlohmann::json j;
    in >> j;
    return Measure::from_json(j);
}

inline void save_measure(const Measure& mu, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write measure file " + path);
    out << mu.to_json().dump(2) << '\n';
}

}  // namespace ncdyadic
