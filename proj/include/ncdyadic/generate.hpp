// Reproducible generators for positive compactly supported test fields.
#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "ncdyadic/lattice.hpp"
#include "ncdyadic/operator_field.hpp"

namespace ncdyadic {

struct FieldSpec {
    std::uint64_t seed = 1;
    int n = 1;
    std::string recipe = "random_psd";  // random_psd | spike | constant
    std::optional<Cube> support;        // zero outside this cube (default: root)
    double scale = 1.0;
    std::uint64_t spike_leaf = 0;

    FieldSpec() = default;
    FieldSpec(std::uint64_t seed_, int n_, std::string recipe_ = "random_psd")
        : seed(seed_), n(n_), recipe(std::move(recipe_)) {}

    static FieldSpec from_json(const nlohmann::json& j) {
        FieldSpec spec;
        spec.seed = j.value("seed", std::uint64_t{1});
        spec.n = j.value("n", 1);
        spec.recipe = j.value("recipe", std::string("random_psd"));
        spec.scale = j.value("scale", 1.0);
        spec.spike_leaf = j.value("spike_leaf", std::uint64_t{0});
        if (j.contains("support"))
            spec.support = Cube{j.at("support").at(0).get<int>(),
                                j.at("support").at(1).get<std::uint64_t>()};
        return spec;
    }
};

// PSD at every leaf by the A* A construction; deterministic in the seed.
inline OperatorField generate_field(const DyadicLattice& lattice, const FieldSpec& spec) {
    if (spec.n < 1) throw DataError("ShapeMismatch", "field dimension n must be >= 1");
    OperatorField f(lattice, spec.n);
    Cube support = spec.support.value_or(lattice.root());
    if (!lattice.valid(support)) throw LatticeError("BeyondLeafLevel", "support cube not in lattice");
    auto [lo, hi] = lattice.leaf_range(support);
    std::uint64_t state = spec.seed;

    if (spec.recipe == "random_psd") {
        for (std::uint64_t x = lo; x < hi; ++x) {
            Matrix a(spec.n, spec.n);
            for (int i = 0; i < spec.n; ++i)
                for (int j = 0; j < spec.n; ++j)
                    a(i, j) = Complex(2.0 * detail::uniform01(state) - 1.0,
                                      2.0 * detail::uniform01(state) - 1.0);
            f[x] = spec.scale * (a.adjoint() * a);
        }
    } else if (spec.recipe == "spike") {
        // all the action on one leaf: a rank-one PSD block plus a small ridge
        if (spec.spike_leaf < lo || spec.spike_leaf >= hi)
            throw PreconditionError("BadParameter", "spike_leaf outside the support cube");
        Eigen::VectorXcd v(spec.n);
        for (int i = 0; i < spec.n; ++i)
            v(i) = Complex(2.0 * detail::uniform01(state) - 1.0,
                           2.0 * detail::uniform01(state) - 1.0);
        if (v.norm() == 0.0) v(0) = 1.0;
        v.normalize();
        f[spec.spike_leaf] =
            spec.scale * (v * v.adjoint() + 1e-3 * Matrix::Identity(spec.n, spec.n));
    } else if (spec.recipe == "constant") {
        for (std::uint64_t x = lo; x < hi; ++x)
            f[x] = spec.scale * Matrix::Identity(spec.n, spec.n);
    } else {
        throw PreconditionError("UnknownPreset", "unknown field recipe '" + spec.recipe + "'");
    }
    return f;
}

}  // namespace ncdyadic
