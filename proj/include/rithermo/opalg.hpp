#pragma once

#include <cmath>
#include <complex>
#include <limits>
#include <string>
#include <type_traits>
#include <vector>

#include <Eigen/Dense>

#include "rithermo/error.hpp"
#include "rithermo/layout.hpp"

namespace rithermo {

using cplx = std::complex<double>;
using Matrix = Eigen::MatrixXcd;
using RealVector = Eigen::VectorXd;

namespace tol {
/// Eigenvalues at or below this are treated as exact zeros inside logarithms.
inline constexpr double clamp = 1e-14;
/// Eigenvalues below minus this are a genuine positivity violation.
inline constexpr double positivity_floor = 1e-10;
/// Hermiticity accepted by eigen-decompositions (relative to the matrix scale).
inline constexpr double hermitian = 1e-10;
} // namespace tol

/// Operator on a declared factor subset of a layout.
struct Operator {
    FactorSet factors;
    Matrix matrix;
    bool hermitian = false;
};

/// Positive operator on a declared factor subset; trace may be < 1 for
/// conditional (subnormalized) states.
struct DensityState {
    FactorSet factors;
    Matrix matrix;

    double norm() const { return matrix.trace().real(); }
};

inline double max_abs(const Matrix &m) { return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff(); }

/// max |A - A^dagger| entry.
inline double hermiticity_defect(const Matrix &m) { return max_abs(m - m.adjoint()); }

inline Matrix identity(std::size_t d) { return Matrix::Identity(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d)); }

inline Matrix zeros(std::size_t d) { return Matrix::Zero(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d)); }

inline Matrix kron(const Matrix &a, const Matrix &b) {
    Matrix out(a.rows() * b.rows(), a.cols() * b.cols());
    for (Eigen::Index i = 0; i < a.rows(); ++i)
        for (Eigen::Index j = 0; j < a.cols(); ++j)
            out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
    return out;
}

/// Re tr(rho * op), O(d^2).
inline double expect(const Matrix &rho, const Matrix &op) {
    return (rho.transpose().cwiseProduct(op)).sum().real();
}

inline void check_square(const CompositeLayout &layout, const Matrix &m, const FactorSet &factors, const char *what) {
    auto d = static_cast<Eigen::Index>(layout.dim_of(factors));
    if (m.rows() != d || m.cols() != d)
        throw LayoutError(std::string(what) + ": matrix is " + std::to_string(m.rows()) + "x" +
                          std::to_string(m.cols()) + " but its factors have dimension " + std::to_string(d));
}

/// Embeds `op` acting on `from` into the larger factor set `to` as op (x) 1,
/// with indices ordered as in the layout.
inline Matrix tensor_embed(const CompositeLayout &layout, const Matrix &op, const FactorSet &from, const FactorSet &to) {
    check_square(layout, op, from, "tensor_embed");
    auto split = split_index(layout, to, from);
    const auto d = static_cast<Eigen::Index>(layout.dim_of(to));
    Matrix out = Matrix::Zero(d, d);
    for (auto c : split.outer)
        for (std::size_t b = 0; b < split.inner.size(); ++b)
            for (std::size_t a = 0; a < split.inner.size(); ++a)
                out(static_cast<Eigen::Index>(split.inner[a] + c), static_cast<Eigen::Index>(split.inner[b] + c)) =
                    op(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b));
    return out;
}

inline Operator tensor_embed(const CompositeLayout &layout, const Operator &op) {
    return {layout.all(), tensor_embed(layout, op.matrix, op.factors, layout.all()), op.hermitian};
}

/// Traces out every factor of `from` that is not in `keep`.
inline Matrix partial_trace(const CompositeLayout &layout, const Matrix &rho, const FactorSet &from, const FactorSet &keep) {
    check_square(layout, rho, from, "partial_trace");
    auto split = split_index(layout, from, keep);
    const auto dk = static_cast<Eigen::Index>(split.inner.size());
    Matrix out = Matrix::Zero(dk, dk);
    for (Eigen::Index b = 0; b < dk; ++b)
        for (Eigen::Index a = 0; a < dk; ++a) {
            cplx acc = 0.0;
            const auto ia = split.inner[static_cast<std::size_t>(a)];
            const auto ib = split.inner[static_cast<std::size_t>(b)];
            for (auto c : split.outer)
                acc += rho(static_cast<Eigen::Index>(ia + c), static_cast<Eigen::Index>(ib + c));
            out(a, b) = acc;
        }
    return out;
}

inline DensityState partial_trace(const CompositeLayout &layout, const DensityState &state, const FactorSet &keep) {
    auto k = layout.normalize(keep);
    return {k, partial_trace(layout, state.matrix, state.factors, k)};
}

/// (u (x) 1) rho (u (x) 1)^dagger with u acting on `acting` inside `space`.
/// Costs O(dim(acting) * dim(space)^2) instead of a dense product.
inline Matrix apply_local(const CompositeLayout &layout, const Matrix &rho, const Matrix &u, const FactorSet &acting,
                          const FactorSet &space) {
    check_square(layout, rho, space, "apply_local");
    check_square(layout, u, acting, "apply_local");
    auto split = split_index(layout, space, acting);
    const auto da = static_cast<Eigen::Index>(split.inner.size());
    const auto dc = static_cast<Eigen::Index>(split.outer.size());
    const auto d = da * dc;

    // permuted basis with the acting index fastest: p[c*da + a]
    std::vector<Eigen::Index> perm(static_cast<std::size_t>(d));
    for (Eigen::Index c = 0; c < dc; ++c)
        for (Eigen::Index a = 0; a < da; ++a)
            perm[static_cast<std::size_t>(c * da + a)] =
                static_cast<Eigen::Index>(split.outer[static_cast<std::size_t>(c)] + split.inner[static_cast<std::size_t>(a)]);

    Matrix r = rho(perm, perm);
    {
        Eigen::Map<Matrix> rows(r.data(), da, dc * d);
        rows = (u * rows).eval();
    }
    const Matrix ud = u.adjoint();
    for (Eigen::Index c = 0; c < dc; ++c)
        r.middleCols(c * da, da) = (r.middleCols(c * da, da) * ud).eval();

    Matrix out(d, d);
    out(perm, perm) = r;
    return out;
}

/// Eigen-decomposition of a Hermitian matrix.
struct Spectrum {
    RealVector values;
    Matrix vectors;

    template <class F>
    Matrix apply(F &&f) const {
        using R = std::invoke_result_t<F, double>;
        Eigen::Matrix<cplx, Eigen::Dynamic, 1> fv(values.size());
        for (Eigen::Index i = 0; i < values.size(); ++i) {
            if constexpr (std::is_same_v<R, cplx>)
                fv(i) = f(values(i));
            else
                fv(i) = cplx(static_cast<double>(f(values(i))), 0.0);
        }
        return vectors * fv.asDiagonal() * vectors.adjoint();
    }
};

inline Spectrum eigh(const Matrix &h) {
    if (h.rows() != h.cols())
        throw LayoutError("eigh: matrix is not square");
    const double scale = std::max(1.0, max_abs(h));
    const double defect = hermiticity_defect(h);
    if (defect > tol::hermitian * scale)
        throw NumericError("matrix is not Hermitian: max |A - A^dagger| = " + std::to_string(defect));
    Eigen::SelfAdjointEigenSolver<Matrix> es(h);
    if (es.info() != Eigen::Success)
        throw NumericError("Hermitian eigensolver did not converge");
    return {es.eigenvalues(), es.eigenvectors()};
}

/// Applies a scalar function to the eigenvalues of a Hermitian operator.
/// Real-valued f gives a Hermitian result, phase-valued f a unitary one.
template <class F>
Matrix herm_fn(const Matrix &h, F &&f) {
    return eigh(h).apply(std::forward<F>(f));
}

inline Operator herm_fn(const Operator &op, const auto &f) { return {op.factors, herm_fn(op.matrix, f), true}; }

/// exp(-i h tau), hbar = 1.
inline Matrix unitary_exp(const Matrix &h, double tau) {
    return herm_fn(h, [tau](double e) { return std::exp(cplx(0.0, -e * tau)); });
}

inline double clamp_eigenvalue(double lambda) {
    if (lambda < -tol::positivity_floor)
        throw NumericError("negative eigenvalue " + std::to_string(lambda) + " below the positivity floor");
    return lambda <= tol::clamp ? 0.0 : lambda;
}

/// -sum p ln p over a spectrum, with the 0 ln 0 = 0 convention.
inline double entropy_of_spectrum(const RealVector &values) {
    double s = 0.0;
    for (Eigen::Index i = 0; i < values.size(); ++i) {
        double p = clamp_eigenvalue(values(i));
        if (p > 0.0)
            s -= p * std::log(p);
    }
    return s;
}

/// von Neumann entropy in nats.
inline double von_neumann_entropy(const Matrix &rho) { return entropy_of_spectrum(eigh(rho).values); }

inline double von_neumann_entropy(const DensityState &rho) { return von_neumann_entropy(rho.matrix); }

/// Quantum relative entropy D[rho || sigma] in nats.
///
/// Returns +infinity when the support of rho is not contained in the
/// support of sigma; genuine numerical failures throw NumericError.
inline double relative_entropy(const Matrix &rho, const Spectrum &sigma) {
    auto r = eigh(rho);
    Matrix overlap = r.vectors.adjoint() * sigma.vectors;
    double d = 0.0;
    for (Eigen::Index i = 0; i < r.values.size(); ++i) {
        double p = clamp_eigenvalue(r.values(i));
        if (p > 0.0)
            d += p * std::log(p);
    }
    for (Eigen::Index j = 0; j < sigma.values.size(); ++j) {
        double weight = 0.0;
        for (Eigen::Index i = 0; i < r.values.size(); ++i) {
            double p = clamp_eigenvalue(r.values(i));
            if (p > 0.0)
                weight += p * std::norm(overlap(i, j));
        }
        double q = clamp_eigenvalue(sigma.values(j));
        if (q == 0.0) {
            if (weight > tol::positivity_floor)
                return std::numeric_limits<double>::infinity();
            continue;
        }
        d -= weight * std::log(q);
    }
    return d;
}

inline double relative_entropy(const Matrix &rho, const Matrix &sigma) { return relative_entropy(rho, eigh(sigma)); }

inline double relative_entropy(const DensityState &rho, const DensityState &sigma) {
    if (rho.factors != sigma.factors)
        throw LayoutError("relative_entropy: states live on different factors");
    return relative_entropy(rho.matrix, sigma.matrix);
}

/// D[rho || sigma] given ln(sigma) directly: -S(rho) - tr(rho ln sigma).
/// Requires sigma full rank (ln sigma finite).
inline double relative_entropy_from_log(const Matrix &rho, const Matrix &log_sigma) {
    return -von_neumann_entropy(rho) - expect(rho, log_sigma);
}

/// Lowest eigenvalue of the Hermitian part.
inline double min_eigenvalue(const Matrix &m) {
    Matrix h = 0.5 * (m + m.adjoint());
    Eigen::SelfAdjointEigenSolver<Matrix> es(h, Eigen::EigenvaluesOnly);
    return es.eigenvalues().size() ? es.eigenvalues()(0) : 0.0;
}

} // namespace rithermo
