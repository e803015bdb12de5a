// Six-term Calderon-Zygmund decomposition of a positive matrix-valued step
// function at height lambda: diagonal parts g_diag, b_diag, beta_diag and
// off-diagonal parts g_off, b_off, beta_off built from the Cuculescu
// projections, plus the verification of the L1/L2 estimates and the
// structural identities the construction relies on.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "ncdyadic/cuculescu.hpp"
#include "ncdyadic/lattice.hpp"
#include "ncdyadic/operator_field.hpp"

namespace ncdyadic {

struct CZParts {
    CZParts(double lambda_, OperatorField f_, CuculescuResult cucu_)
        : lambda(lambda_),
          f(std::move(f_)),
          cucu(std::move(cucu_)),
          g_diag(f.lattice(), f.n()),
          b_diag(f.lattice(), f.n()),
          beta_diag(f.lattice(), f.n()),
          g_off(f.lattice(), f.n()),
          b_off(f.lattice(), f.n()),
          beta_off(f.lattice(), f.n()),
          g_off_direct(f.lattice(), f.n()) {}

    double lambda = 0.0;
    OperatorField f;
    CuculescuResult cucu;

    OperatorField g_diag, b_diag, beta_diag;
    OperatorField g_off, b_off, beta_off;
    // direct three-term form of g_off, kept for cross-validation against the
    // resummed family below
    OperatorField g_off_direct;

    std::vector<OperatorField> b_k;     // index k-1 holds the level-k term
    std::vector<OperatorField> beta_k;  // likewise

    struct OffTerm {
        int k = 0, h = 0;
        OperatorField field;
    };
    std::vector<OffTerm> g_kh, b_kh, beta_kh;  // k >= 1, h >= 1, k + h <= K

    // cached filtration data reused by the verification passes
    std::vector<OperatorField> f_level;  // f_k for k = 0..K
    std::vector<OperatorField> q_level;  // q_k for k = 0..K
    std::vector<OperatorField> p_level;  // p_k for k = 1..K (index k-1)
};

inline CZParts cz_decompose(const OperatorField& f, const Measure& mu, double lambda) {
    const auto& lattice = f.lattice();
    const int K = lattice.depth();
    const int n = f.n();

    CZParts parts(lambda, f, cuculescu(f, mu, lambda));

    for (int k = 0; k <= K; ++k) {
        parts.f_level.push_back(cond_exp(f, mu, k));
        parts.q_level.push_back(parts.cucu.q_field(k));
        if (k >= 1) parts.p_level.push_back(parts.cucu.p_field(k));
    }
    const OperatorField& q = parts.q_level[K];
    const OperatorField one = OperatorField::identity(lattice, n);
    auto p = [&](int k) -> const OperatorField& { return parts.p_level[k - 1]; };

    // g_diag = q f q + sum_k E_{k-1}(p_k f_k p_k)
    parts.g_diag = mul(q, f, q);
    std::vector<OperatorField> pkfkpk;  // reused for beta_k
    for (int k = 1; k <= K; ++k) {
        pkfkpk.push_back(mul(p(k), parts.f_level[k], p(k)));
        parts.g_diag += cond_exp(pkfkpk.back(), mu, k - 1);
    }

    // b_k = p_k (f - f_k) p_k ;  beta_k = D_k(p_k f_k p_k)
    for (int k = 1; k <= K; ++k) {
        parts.b_k.push_back(mul(p(k), f - parts.f_level[k], p(k)));
        parts.b_diag += parts.b_k.back();
        // p_k f_k p_k is level-k measurable, so D_k is a one-sided difference
        parts.beta_k.push_back(pkfkpk[k - 1] - cond_exp(pkfkpk[k - 1], mu, k - 1));
        parts.beta_diag += parts.beta_k.back();
    }

    // doubly indexed families, truncated at k + h <= K
    for (int k = 1; k <= K; ++k)
        for (int h = 1; k + h <= K; ++h) {
            const int j = k + h;
            OperatorField cross = mul(p(k), parts.f_level[j], parts.q_level[j]) +
                                  mul(parts.q_level[j], parts.f_level[j], p(k));
            OperatorField g_term = cross - cond_exp(cross, mu, j - 1);
            parts.g_off += g_term;
            parts.g_kh.push_back({k, h, std::move(g_term)});

            OperatorField b_term = mul(p(k), f - parts.f_level[j], p(j)) +
                                   mul(p(j), f - parts.f_level[j], p(k));
            parts.b_off += b_term;
            parts.b_kh.push_back({k, h, std::move(b_term)});

            OperatorField pfp = mul(p(k), parts.f_level[j], p(j)) +
                                mul(p(j), parts.f_level[j], p(k));
            OperatorField beta_term = pfp - cond_exp(pfp, mu, j - 1);
            parts.beta_off += beta_term;
            parts.beta_kh.push_back({k, h, std::move(beta_term)});
        }

    // direct form: (1-q) f q + q f (1-q) + sum_{i != j} E_{max-1}(p_i f_max p_j)
    const OperatorField one_minus_q = one - q;
    parts.g_off_direct = mul(one_minus_q, f, q) + mul(q, f, one_minus_q);
    for (int k = 1; k <= K; ++k)
        for (int h = 1; k + h <= K; ++h) {
            const int j = k + h;
            OperatorField pfp = mul(p(k), parts.f_level[j], p(j)) +
                                mul(p(j), parts.f_level[j], p(k));
            parts.g_off_direct += cond_exp(pfp, mu, j - 1);
        }

    return parts;
}

struct Reconstruction {
    OperatorField sum;
    double residual = 0.0;  // L2(mu) distance to f, so null leaves do not count
};

inline Reconstruction cz_reconstruct(const CZParts& parts, const Measure& mu) {
    OperatorField sum = parts.g_diag + parts.g_off + parts.b_diag + parts.b_off +
                        parts.beta_diag + parts.beta_off;
    double residual = l2_norm(sum - parts.f, mu);
    return {std::move(sum), residual};
}

struct EstimateRow {
    std::string check_id;
    double lhs = 0.0;
    double rhs = 0.0;
    double ratio = 0.0;
    bool pass = true;
};

namespace detail {
inline EstimateRow bound_row(std::string id, double lhs, double rhs, double tol) {
    EstimateRow row{std::move(id), lhs, rhs, 0.0, true};
    row.ratio = (rhs > 0.0) ? lhs / rhs : (lhs > 0.0 ? std::numeric_limits<double>::infinity() : 0.0);
    row.pass = row.ratio <= 1.0 + tol;
    return row;
}
inline EstimateRow residual_row(std::string id, double residual, double tol) {
    EstimateRow row{std::move(id), residual, tol, 0.0, residual <= tol};
    row.ratio = (tol > 0.0) ? residual / tol : residual;
    return row;
}
}  // namespace detail

// The decomposition estimates with their fixed constants:
//   (a) ||g_diag||_1 = ||f||_1 and ||g_diag||_2^2 <= 39 lambda ||f||_1
//   (b) sum_k ||b_k||_1 <= 2 ||f||_1
//   (c) sum_k ||beta_k||_1 <= 2 ||f||_1
//   (d) sup_h sum_k ||g_{k,h}||_2^2 <= 16 lambda ||f||_1
//   (e) sum_k ||b_{k,h}||_1 <= 8 (h+1) ||f||_1 for every h
//   (f) sum_k ||beta_{k,h}||_1 <= 8 (h+1) ||f||_1 for every h
// plus the two martingale bounds behind (a):
//   I  = sum_k || x_k - E_{k-1} x_k ||_2^2 <= 8 lambda ||f||_1,  x_k = q_k f_k q_k
//   II = || x_K - x_0 ||_2^2 <= 4 lambda ||f||_1
// and the structural facts: mean zero of b_k / b_{k,h}, beta_k = D_k(beta_diag),
// g_{k,h} and beta_{k,h} are (k+h)-th martingale differences, self-adjointness.
inline std::vector<EstimateRow> cz_estimates(const CZParts& parts, const Measure& mu,
                                             double ratio_tol = 1e-8) {
    std::vector<EstimateRow> rows;
    const double lambda = parts.lambda;
    const int K = parts.f.lattice().depth();
    const double f_l1 = lp_norm(parts.f, 1.0, mu);
    const double f_scale = std::max(1e-300, f_l1);

    // (a)
    double g_l1 = lp_norm(parts.g_diag, 1.0, mu);
    EstimateRow eq{"a_l1_equality", g_l1, f_l1, (f_l1 > 0.0) ? g_l1 / f_l1 : 1.0, true};
    eq.pass = std::abs(eq.ratio - 1.0) <= 1e-9;
    rows.push_back(eq);
    double g_l2 = l2_norm(parts.g_diag, mu);
    rows.push_back(detail::bound_row("a_l2", g_l2 * g_l2, 39.0 * lambda * f_l1, ratio_tol));

    // (b), (c)
    double sum_b = 0.0, sum_beta = 0.0;
    for (int k = 1; k <= K; ++k) {
        sum_b += lp_norm(parts.b_k[k - 1], 1.0, mu);
        sum_beta += lp_norm(parts.beta_k[k - 1], 1.0, mu);
    }
    rows.push_back(detail::bound_row("b_l1", sum_b, 2.0 * f_l1, ratio_tol));
    rows.push_back(detail::bound_row("c_l1", sum_beta, 2.0 * f_l1, ratio_tol));

    // (d): sup over h of sum_k ||g_{k,h}||_2^2
    double sup_h = 0.0;
    for (int h = 1; h <= K - 1; ++h) {
        double sum = 0.0;
        for (const auto& term : parts.g_kh)
            if (term.h == h) {
                double l2 = l2_norm(term.field, mu);
                sum += l2 * l2;
            }
        sup_h = std::max(sup_h, sum);
    }
    rows.push_back(detail::bound_row("d_l2", sup_h, 16.0 * lambda * f_l1, ratio_tol));

    // (e), (f): worst h
    double worst_e = 0.0, worst_f = 0.0;
    for (int h = 1; h <= K - 1; ++h) {
        double sum_e = 0.0, sum_f = 0.0;
        for (const auto& term : parts.b_kh)
            if (term.h == h) sum_e += lp_norm(term.field, 1.0, mu);
        for (const auto& term : parts.beta_kh)
            if (term.h == h) sum_f += lp_norm(term.field, 1.0, mu);
        double rhs = 8.0 * (h + 1) * f_l1;
        if (rhs > 0.0) {
            worst_e = std::max(worst_e, sum_e / rhs);
            worst_f = std::max(worst_f, sum_f / rhs);
        }
    }
    rows.push_back(detail::bound_row("e_l1", worst_e, 1.0, ratio_tol));
    rows.push_back(detail::bound_row("f_l1", worst_f, 1.0, ratio_tol));

    // martingale bounds behind (a): x_k = q_k f_k q_k
    std::vector<OperatorField> x;
    for (int k = 0; k <= K; ++k)
        x.push_back(mul(parts.q_level[k], parts.f_level[k], parts.q_level[k]));
    double term_i = 0.0;
    for (int k = 1; k <= K; ++k) {
        double l2 = l2_norm(x[k] - cond_exp(x[k], mu, k - 1), mu);
        term_i += l2 * l2;
    }
    double diff = l2_norm(x[K] - x[0], mu);
    rows.push_back(detail::bound_row("gdiag_I", term_i, 8.0 * lambda * f_l1, ratio_tol));
    rows.push_back(detail::bound_row("gdiag_II", diff * diff, 4.0 * lambda * f_l1, ratio_tol));

    // mean-zero of the bad terms (matrix-valued integrals, entrywise)
    double worst_mean = 0.0;
    auto mean_norm = [&](const OperatorField& g) {
        Matrix sum = Matrix::Zero(g.n(), g.n());
        for (std::uint64_t l = 0; l < g.n_leaves(); ++l) sum += mu.leaf_mass(l) * g[l];
        return sum.cwiseAbs().maxCoeff();
    };
    for (const auto& b : parts.b_k) worst_mean = std::max(worst_mean, mean_norm(b));
    for (const auto& term : parts.b_kh) worst_mean = std::max(worst_mean, mean_norm(term.field));
    rows.push_back(detail::residual_row("bad_terms_mean_zero", worst_mean / f_scale, 1e-10));

    // martingale-difference identities
    double worst_md = 0.0;
    for (int k = 1; k <= K; ++k)
        worst_md = std::max(worst_md,
                            l2_norm(mart_diff(parts.beta_diag, mu, k) - parts.beta_k[k - 1], mu));
    for (const auto& term : parts.g_kh)
        worst_md = std::max(worst_md,
                            l2_norm(mart_diff(term.field, mu, term.k + term.h) - term.field, mu));
    for (const auto& term : parts.beta_kh)
        worst_md = std::max(worst_md,
                            l2_norm(mart_diff(term.field, mu, term.k + term.h) - term.field, mu));
    rows.push_back(detail::residual_row("martingale_difference_ids", worst_md / f_scale, 1e-9));

    // self-adjointness of the six parts when f is self-adjoint
    if (parts.f.max_self_adjointness_residual() <= 1e-10) {
        double worst_sa = 0.0;
        for (const OperatorField* part : {&parts.g_diag, &parts.g_off, &parts.b_diag,
                                          &parts.b_off, &parts.beta_diag, &parts.beta_off})
            worst_sa = std::max(worst_sa, part->max_self_adjointness_residual());
        rows.push_back(detail::residual_row("self_adjointness", worst_sa / f_scale, 1e-9));
    }

    return rows;
}

// Structural identities used by the off-diagonal analysis:
//   (i)   p_i f_{min(i,j)} p_j = 0 for i != j, including the terminal reading
//         p_i f_i q = 0
//   (ii)  D_j(g_off) = D_j((1-q_{j-1}) f_j q_j + q_j f_j (1-q_{j-1})) for j >= 1,
//         and D_j(g_off) = 0 for j <= 0 (trivial here: there are no such levels)
//   (iii) p_k f p_{k+h} + p_{k+h} f p_k equals its four-box expansion
//   (iv)  p_k df_{k+i} q_{k+i-1} + q_{k+i-1} df_{k+i} p_k
//             = D_{k+i}(p_k f q_{k+i-1} + q_{k+i-1} f p_k)
// plus the resummation g_off = sum_{k,h} g_{k,h} against the direct form.
// Residuals are L2(mu) norms scaled by max(1, ||f||_2).
inline std::vector<EstimateRow> structural_identities(const CZParts& parts, const Measure& mu,
                                                      double tol = 1e-9) {
    std::vector<EstimateRow> rows;
    const auto& lattice = parts.f.lattice();
    const int K = lattice.depth();
    const int n = parts.f.n();
    const double scale = std::max(1.0, l2_norm(parts.f, mu));
    const OperatorField one = OperatorField::identity(lattice, n);
    const OperatorField& q = parts.q_level[K];
    auto p = [&](int k) -> const OperatorField& { return parts.p_level[k - 1]; };

    double worst_nullav = 0.0;
    for (int i = 1; i <= K; ++i) {
        for (int j = 1; j <= K; ++j) {
            if (i == j) continue;
            int m = std::min(i, j);
            worst_nullav =
                std::max(worst_nullav, l2_norm(mul(p(i), parts.f_level[m], p(j)), mu));
        }
        worst_nullav = std::max(worst_nullav, l2_norm(mul(p(i), parts.f_level[i], q), mu));
        worst_nullav = std::max(worst_nullav, l2_norm(mul(q, parts.f_level[i], p(i)), mu));
    }
    rows.push_back(detail::residual_row("nullav", worst_nullav / scale, tol));

    double worst_closed = 0.0;
    for (int j = 1; j <= K; ++j) {
        OperatorField inner = mul(one - parts.q_level[j - 1], parts.f_level[j], parts.q_level[j]) +
                              mul(parts.q_level[j], parts.f_level[j], one - parts.q_level[j - 1]);
        OperatorField closed = inner - cond_exp(inner, mu, j - 1);
        worst_closed =
            std::max(worst_closed, l2_norm(mart_diff(parts.g_off, mu, j) - closed, mu));
    }
    rows.push_back(detail::residual_row("dkgoff_closed_form", worst_closed / scale, tol));
    // no levels below the root: the j <= 0 differences vanish identically
    rows.push_back(detail::residual_row("dkgoff_below_root", 0.0, tol));

    rows.push_back(detail::residual_row(
        "goff_resummation", l2_norm(parts.g_off - parts.g_off_direct, mu) / scale, tol));

    double worst_box = 0.0;
    for (int k = 1; k <= K; ++k)
        for (int h = 1; k + h <= K; ++h) {
            OperatorField lhs = mul(p(k), parts.f, p(k + h)) + mul(p(k + h), parts.f, p(k));
            auto box = [&](int lo, int hi) {
                OperatorField sum(lattice, n);
                for (int j = lo; j <= hi; ++j) sum += p(k + j);
                return mul(sum, parts.f, sum);
            };
            OperatorField rhs = box(0, h) - box(0, h - 1) - box(1, h) + box(1, h - 1);
            worst_box = std::max(worst_box, l2_norm(lhs - rhs, mu));
        }
    rows.push_back(detail::residual_row("four_box_diagonal", worst_box / scale, tol));

    double worst_dm = 0.0;
    for (int k = 1; k <= K; ++k)
        for (int i = 1; k + i <= K; ++i) {
            const OperatorField& qprev = parts.q_level[k + i - 1];
            OperatorField df = parts.f_level[k + i] - parts.f_level[k + i - 1];
            OperatorField lhs = mul(p(k), df, qprev) + mul(qprev, df, p(k));
            OperatorField inner = mul(p(k), parts.f, qprev) + mul(qprev, parts.f, p(k));
            worst_dm = std::max(worst_dm, l2_norm(lhs - mart_diff(inner, mu, k + i), mu));
        }
    rows.push_back(detail::residual_row("dmvanish", worst_dm / scale, tol));

    return rows;
}

}  // namespace ncdyadic
