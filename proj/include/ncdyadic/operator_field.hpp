// Matrix-valued step functions at leaf resolution: one n x n complex matrix
// per leaf.  Together with a Measure this realizes the semicommutative
// algebra of essentially bounded matrix-valued functions, its trace
// tau(f) = sum_leaf mu(leaf) Tr f(leaf), the dyadic filtration of
// conditional expectations, Schatten-type L_p norms and the spectral
// distribution function.
#pragma once

#include <cmath>
#include <complex>
#include <cstdint>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "ncdyadic/errors.hpp"
#include "ncdyadic/lattice.hpp"

namespace ncdyadic {

using Matrix = Eigen::MatrixXcd;
using Complex = std::complex<double>;

class OperatorField {
  public:
    OperatorField(const DyadicLattice& lattice, int n)
        : lattice_(lattice), n_(n), leaves_(lattice.n_leaves(), Matrix::Zero(n, n)) {
        if (n < 1) throw DataError("ShapeMismatch", "matrix dimension n must be >= 1");
    }

    OperatorField(const DyadicLattice& lattice, int n, std::vector<Matrix> leaves)
        : lattice_(lattice), n_(n), leaves_(std::move(leaves)) {
        if (leaves_.size() != lattice.n_leaves())
            throw DataError("ShapeMismatch", "leaf count does not match the lattice");
        for (const auto& m : leaves_)
            if (m.rows() != n || m.cols() != n)
                throw DataError("ShapeMismatch", "leaf matrix is not n x n");
    }

    const DyadicLattice& lattice() const { return lattice_; }
    int n() const { return n_; }
    std::uint64_t n_leaves() const { return leaves_.size(); }

    Matrix& operator[](std::uint64_t leaf) { return leaves_[leaf]; }
    const Matrix& operator[](std::uint64_t leaf) const { return leaves_[leaf]; }

    static OperatorField identity(const DyadicLattice& lattice, int n) {
        OperatorField f(lattice, n);
        for (auto& m : f.leaves_) m = Matrix::Identity(n, n);
        return f;
    }

    // Indicator of a cube tensored with the identity matrix.
    static OperatorField indicator(const DyadicLattice& lattice, int n, const Cube& q) {
        OperatorField f(lattice, n);
        auto [lo, hi] = lattice.leaf_range(q);
        for (std::uint64_t x = lo; x < hi; ++x) f[x] = Matrix::Identity(n, n);
        return f;
    }

    OperatorField& operator+=(const OperatorField& g) {
        check_same_shape(g);
        for (std::uint64_t x = 0; x < leaves_.size(); ++x) leaves_[x] += g.leaves_[x];
        return *this;
    }
    OperatorField& operator-=(const OperatorField& g) {
        check_same_shape(g);
        for (std::uint64_t x = 0; x < leaves_.size(); ++x) leaves_[x] -= g.leaves_[x];
        return *this;
    }
    OperatorField& operator*=(Complex a) {
        for (auto& m : leaves_) m *= a;
        return *this;
    }

    friend OperatorField operator+(OperatorField f, const OperatorField& g) { return f += g; }
    friend OperatorField operator-(OperatorField f, const OperatorField& g) { return f -= g; }
    friend OperatorField operator*(Complex a, OperatorField f) { return f *= a; }

    OperatorField adjoint() const {
        OperatorField out(lattice_, n_);
        for (std::uint64_t x = 0; x < leaves_.size(); ++x)
            out.leaves_[x] = leaves_[x].adjoint();
        return out;
    }

    // Pointwise products; fields do not commute.
    friend OperatorField mul(const OperatorField& a, const OperatorField& b) {
        a.check_same_shape(b);
        OperatorField out(a.lattice_, a.n_);
        for (std::uint64_t x = 0; x < a.leaves_.size(); ++x)
            out.leaves_[x] = a.leaves_[x] * b.leaves_[x];
        return out;
    }
    friend OperatorField mul(const OperatorField& a, const OperatorField& b, const OperatorField& c) {
        a.check_same_shape(b);
        a.check_same_shape(c);
        OperatorField out(a.lattice_, a.n_);
        for (std::uint64_t x = 0; x < a.leaves_.size(); ++x)
            out.leaves_[x] = a.leaves_[x] * b.leaves_[x] * c.leaves_[x];
        return out;
    }

    double max_self_adjointness_residual() const {
        double worst = 0.0;
        for (const auto& m : leaves_) worst = std::max(worst, (m - m.adjoint()).norm());
        return worst;
    }

    void check_same_shape(const OperatorField& g) const {
        if (!(lattice_ == g.lattice_) || n_ != g.n_)
            throw DataError("ShapeMismatch", "operator fields live on different lattices or dimensions");
    }

    nlohmann::json to_json() const {
        nlohmann::json leaves = nlohmann::json::array();
        for (const auto& m : leaves_) {
            nlohmann::json entries = nlohmann::json::array();
            for (int i = 0; i < n_; ++i)
                for (int j = 0; j < n_; ++j)
                    entries.push_back({m(i, j).real(), m(i, j).imag()});
            leaves.push_back(std::move(entries));
        }
        return {{"n", n_}, {"leaves", std::move(leaves)}};
    }

    static OperatorField from_json(const DyadicLattice& lattice, const nlohmann::json& j) {
        int n = j.at("n").get<int>();
        const auto& leaves = j.at("leaves");
        if (leaves.size() != lattice.n_leaves())
            throw DataError("ShapeMismatch", "field file has the wrong number of leaves");
        OperatorField f(lattice, n);
        for (std::uint64_t x = 0; x < leaves.size(); ++x) {
            const auto& entries = leaves[x];
            if (entries.size() != static_cast<std::size_t>(n) * n)
                throw DataError("ShapeMismatch", "leaf entry count is not n*n");
            for (int i = 0; i < n; ++i)
                for (int j2 = 0; j2 < n; ++j2) {
                    const auto& e = entries[static_cast<std::size_t>(i) * n + j2];
                    f[x](i, j2) = Complex(e.at(0).get<double>(), e.at(1).get<double>());
                }
        }
        return f;
    }

  private:
    DyadicLattice lattice_;
    int n_;
    std::vector<Matrix> leaves_;
};

// ---------------------------------------------------------------------------
// Hermitian helpers

inline Matrix hermitize(const Matrix& m) { return 0.5 * (m + m.adjoint()); }

inline Eigen::VectorXd hermitian_eigenvalues(const Matrix& h) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(hermitize(h), Eigen::EigenvaluesOnly);
    if (es.info() != Eigen::Success) throw SpectralError("EigenFailure", "eigensolver did not converge");
    return es.eigenvalues();
}

inline double max_eigenvalue(const Matrix& h) {
    auto ev = hermitian_eigenvalues(h);
    return ev(ev.size() - 1);
}

inline double min_eigenvalue(const Matrix& h) { return hermitian_eigenvalues(h)(0); }

inline double operator_norm(const Matrix& m) {
    if (m.rows() == 1 && m.cols() == 1) return std::abs(m(0, 0));
    Eigen::JacobiSVD<Matrix> svd(m);
    return svd.singularValues()(0);
}

inline Eigen::VectorXd singular_values(const Matrix& m) {
    if (m.rows() == 1 && m.cols() == 1) {
        Eigen::VectorXd sv(1);
        sv(0) = std::abs(m(0, 0));
        return sv;
    }
    Eigen::JacobiSVD<Matrix> svd(m);
    return svd.singularValues();
}

// ---------------------------------------------------------------------------
// Averages and the dyadic filtration

// Integrals int_Q f dmu for every cube, aggregated bottom-up.
class CubeIntegrals {
  public:
    CubeIntegrals(const OperatorField& f, const Measure& mu)
        : lattice_(f.lattice()), data_(static_cast<std::size_t>(lattice_.depth()) + 1) {
        if (!(f.lattice() == mu.lattice()))
            throw DataError("ShapeMismatch", "field and measure lattices differ");
        const int K = lattice_.depth();
        const std::uint64_t b = lattice_.children_per_cube();
        data_[K].resize(lattice_.n_leaves());
        for (std::uint64_t x = 0; x < lattice_.n_leaves(); ++x)
            data_[K][x] = mu.leaf_mass(x) * f[x];
        for (int k = K - 1; k >= 0; --k) {
            data_[k].assign(lattice_.cubes_at_level(k), Matrix::Zero(f.n(), f.n()));
            for (std::uint64_t i = 0; i < data_[k].size(); ++i)
                for (std::uint64_t c = 0; c < b; ++c) data_[k][i] += data_[k + 1][i * b + c];
        }
    }

    const Matrix& integral(const Cube& q) const { return data_[q.level][q.index]; }

  private:
    DyadicLattice lattice_;
    std::vector<std::vector<Matrix>> data_;
};

// <f>_Q; zero on null cubes.
inline Matrix average(const OperatorField& f, const Measure& mu, const Cube& q) {
    double m = mu.mass(q);
    if (m <= 0.0) return Matrix::Zero(f.n(), f.n());
    auto [lo, hi] = f.lattice().leaf_range(q);
    Matrix sum = Matrix::Zero(f.n(), f.n());
    for (std::uint64_t x = lo; x < hi; ++x) sum += mu.leaf_mass(x) * f[x];
    return sum / m;
}

// All level-k averages at once, as a field constant on level-k cubes.
inline OperatorField cond_exp(const OperatorField& f, const Measure& mu, int k) {
    const auto& lattice = f.lattice();
    if (k < 0 || k > lattice.depth())
        throw PreconditionError("LevelOutOfRange", "conditional expectation level out of range");
    CubeIntegrals integrals(f, mu);
    OperatorField out(lattice, f.n());
    for (std::uint64_t i = 0; i < lattice.cubes_at_level(k); ++i) {
        Cube q{k, i};
        double m = mu.mass(q);
        if (m <= 0.0) continue;
        Matrix avg = integrals.integral(q) / m;
        auto [lo, hi] = lattice.leaf_range(q);
        for (std::uint64_t x = lo; x < hi; ++x) out[x] = avg;
    }
    return out;
}

inline OperatorField mart_diff(const OperatorField& f, const Measure& mu, int k) {
    if (k == 0) throw PreconditionError("NoParentLevel", "martingale difference needs k >= 1");
    if (k < 1 || k > f.lattice().depth())
        throw PreconditionError("LevelOutOfRange", "martingale difference level out of range");
    return cond_exp(f, mu, k) - cond_exp(f, mu, k - 1);
}

// ---------------------------------------------------------------------------
// Trace, norms, distribution

inline Complex trace_tau(const OperatorField& f, const Measure& mu) {
    if (!(f.lattice() == mu.lattice()))
        throw DataError("ShapeMismatch", "field and measure lattices differ");
    Complex sum = 0.0;
    for (std::uint64_t x = 0; x < f.n_leaves(); ++x) sum += mu.leaf_mass(x) * f[x].trace();
    return sum;
}

inline Complex inner_l2(const OperatorField& f, const OperatorField& g, const Measure& mu) {
    f.check_same_shape(g);
    Complex sum = 0.0;
    for (std::uint64_t x = 0; x < f.n_leaves(); ++x)
        sum += mu.leaf_mass(x) * (f[x].adjoint() * g[x]).trace();
    return sum;
}

inline double l2_norm(const OperatorField& f, const Measure& mu) {
    double sum = 0.0;
    for (std::uint64_t x = 0; x < f.n_leaves(); ++x) sum += mu.leaf_mass(x) * f[x].squaredNorm();
    return std::sqrt(sum);
}

// Schatten-p norm per fiber, integrated; p = infinity is the mu-essential
// supremum of the operator norm.
inline double lp_norm(const OperatorField& f, double p, const Measure& mu) {
    if (!(p >= 1.0)) throw PreconditionError("BadParameter", "lp_norm requires p >= 1");
    if (std::isinf(p)) {
        double worst = 0.0;
        for (std::uint64_t x = 0; x < f.n_leaves(); ++x)
            if (mu.leaf_mass(x) > 0.0) worst = std::max(worst, operator_norm(f[x]));
        return worst;
    }
    double sum = 0.0;
    for (std::uint64_t x = 0; x < f.n_leaves(); ++x) {
        double m = mu.leaf_mass(x);
        if (m <= 0.0) continue;
        auto sv = singular_values(f[x]);
        double fiber = 0.0;
        for (Eigen::Index i = 0; i < sv.size(); ++i) fiber += std::pow(sv(i), p);
        sum += m * fiber;
    }
    return std::pow(sum, 1.0 / p);
}

// tau of the spectral projection of |f| onto (lambda, infinity).
inline double distribution(const OperatorField& f, double lambda, const Measure& mu) {
    if (!(lambda > 0.0)) throw PreconditionError("BadParameter", "distribution requires lambda > 0");
    double sum = 0.0;
    for (std::uint64_t x = 0; x < f.n_leaves(); ++x) {
        double m = mu.leaf_mass(x);
        if (m <= 0.0) continue;
        auto sv = singular_values(f[x]);
        int count = 0;
        for (Eigen::Index i = 0; i < sv.size(); ++i)
            if (sv(i) > lambda) ++count;
        sum += m * count;
    }
    return sum;
}

// ---------------------------------------------------------------------------
// Spectral projection in a compressed block

// Projection onto the eigenvectors of H, restricted to range(within), with
// eigenvalue <= lambda*(1+tol).  The interval is closed at both ends: 0 and
// boundary ties belong to the projection.  Computed by compressing H to an
// orthonormal basis of range(within) and lifting the selected eigenvectors
// back, which keeps the result dominated by `within`.
inline Matrix spectral_projection(const Matrix& h, double lambda, const Matrix& within,
                                  double tol = 1e-12) {
    const Eigen::Index n = h.rows();
    double scale = std::max(1.0, h.norm());
    if ((h - h.adjoint()).norm() > 1e-10 * scale)
        throw SpectralError("NotHermitian", "spectral_projection input is not Hermitian");
    if ((within - within.adjoint()).norm() > 1e-10 * std::max(1.0, within.norm()))
        throw SpectralError("NotHermitian", "compression projection is not Hermitian");

    Eigen::SelfAdjointEigenSolver<Matrix> basis(hermitize(within));
    if (basis.info() != Eigen::Success)
        throw SpectralError("EigenFailure", "eigensolver failed on the compression projection");
    std::vector<Eigen::Index> cols;
    for (Eigen::Index i = 0; i < n; ++i)
        if (basis.eigenvalues()(i) > 0.5) cols.push_back(i);
    if (cols.empty()) return Matrix::Zero(n, n);

    Matrix v(n, static_cast<Eigen::Index>(cols.size()));
    for (std::size_t c = 0; c < cols.size(); ++c) v.col(c) = basis.eigenvectors().col(cols[c]);

    Matrix compressed = hermitize(v.adjoint() * h * v);
    Eigen::SelfAdjointEigenSolver<Matrix> es(compressed);
    if (es.info() != Eigen::Success)
        throw SpectralError("EigenFailure", "eigensolver failed on the compressed block");

    const double cutoff = lambda * (1.0 + tol);
    std::vector<Eigen::Index> kept;
    for (Eigen::Index i = 0; i < compressed.rows(); ++i)
        if (es.eigenvalues()(i) <= cutoff) kept.push_back(i);
    if (kept.empty()) return Matrix::Zero(n, n);
    // keeping the whole block reproduces the compression projection exactly
    if (static_cast<Eigen::Index>(kept.size()) == compressed.rows()) return within;

    Matrix w(n, static_cast<Eigen::Index>(kept.size()));
    for (std::size_t c = 0; c < kept.size(); ++c) w.col(c) = v * es.eigenvectors().col(kept[c]);
    return hermitize(w * w.adjoint());
}

// ---------------------------------------------------------------------------
// File I/O

inline OperatorField load_field(const DyadicLattice& lattice, const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open field file " + path);
    nlohmann::json j;
    in >> j;
    return OperatorField::from_json(lattice, j);
}

inline void save_field(const OperatorField& f, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write field file " + path);
    out << f.to_json().dump() << '\n';
}

}  // namespace ncdyadic
