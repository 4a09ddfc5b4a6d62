#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>

#include "rithermo/opalg.hpp"

namespace rithermo {

struct GibbsState {
    Matrix state;
    double log_partition = 0.0;

    /// tr exp(-beta H); throws instead of returning infinity.
    double partition() const {
        double z = std::exp(log_partition);
        if (!std::isfinite(z) || z <= 0.0)
            throw NumericError("partition function not representable (ln Z = " + std::to_string(log_partition) + ")");
        return z;
    }
};

/// exp(-beta H) / Z computed with a spectral shift so that extreme
/// beta * spectrum never overflows.
inline GibbsState gibbs_state(const Spectrum &h, double beta) {
    if (!(beta > 0.0))
        throw PreconditionError("gibbs_state: beta must be positive");
    const double e0 = h.values.minCoeff();
    double z = 0.0;
    for (Eigen::Index i = 0; i < h.values.size(); ++i)
        z += std::exp(-beta * (h.values(i) - e0));
    Matrix rho = h.apply([&](double e) { return std::exp(-beta * (e - e0)) / z; });
    return {0.5 * (rho + rho.adjoint()), std::log(z) - beta * e0};
}

inline GibbsState gibbs_state(const Matrix &h, double beta) { return gibbs_state(eigh(h), beta); }

/// Hamiltonian of mean force of X = (factors of H_XB) \ bath.
///
/// The additive constant is fixed by Z*_X = Z_XB / Z_B, so that
/// exp(-beta hstar) / zstar equals tr_B of the joint Gibbs state.
struct MeanForceData {
    FactorSet factors;     // X
    double beta = 1.0;
    Matrix hstar;          // H*_X
    double log_zstar = 0;  // ln Z*_X
    Matrix dhstar_dbeta;   // d H*_X / d beta (empty unless requested)
    Matrix pistar;         // pi*_X
    Matrix log_pistar;     // ln pi*_X

    double zstar() const {
        double z = std::exp(log_zstar);
        if (!std::isfinite(z))
            throw NumericError("Z* not representable");
        return z;
    }
};

namespace detail {

struct MeanForceCore {
    Matrix hstar;
    double log_zstar;
    Matrix pistar;
    Matrix log_pistar;
};

inline MeanForceCore mean_force_core(const CompositeLayout &layout, const Spectrum &h_xb, const FactorSet &xb,
                                     const Spectrum *h_b, const FactorSet &x, double beta) {
    auto joint = gibbs_state(h_xb, beta);
    Matrix pistar = partial_trace(layout, joint.state, xb, x);
    pistar = 0.5 * (pistar + pistar.adjoint());
    double log_zb = h_b ? gibbs_state(*h_b, beta).log_partition : 0.0;
    const double log_zstar = joint.log_partition - log_zb;

    auto spec = eigh(pistar);
    const double smallest = spec.values.minCoeff();
    if (smallest <= tol::clamp)
        throw NumericError("reduced Gibbs state is rank deficient (smallest eigenvalue " + std::to_string(smallest) +
                           "); the Hamiltonian of mean force is undefined");
    Matrix log_pi = spec.apply([](double p) { return std::log(p); });
    Matrix hstar = (-1.0 / beta) * log_pi - (log_zstar / beta) * identity(static_cast<std::size_t>(pistar.rows()));
    return {0.5 * (hstar + hstar.adjoint()), log_zstar, pistar, log_pi};
}

} // namespace detail

/// Central finite difference of H*_X in beta; default step 1e-4 * beta.
inline Matrix mean_force_beta_derivative(const CompositeLayout &layout, const Matrix &h_xb, const FactorSet &xb,
                                         const Matrix &h_b, const FactorSet &bath, double beta, double step = 0.0) {
    if (step <= 0.0)
        step = 1e-4 * beta;
    if (!(beta - step > 0.0))
        throw PreconditionError("mean_force_beta_derivative: beta - h must stay positive");
    auto x = set_difference(xb, bath);
    auto sxb = eigh(h_xb);
    std::optional<Spectrum> sb;
    if (!bath.empty())
        sb = eigh(h_b);
    auto plus = detail::mean_force_core(layout, sxb, xb, sb ? &*sb : nullptr, x, beta + step);
    auto minus = detail::mean_force_core(layout, sxb, xb, sb ? &*sb : nullptr, x, beta - step);
    Matrix d = (plus.hstar - minus.hstar) / (2.0 * step);
    return 0.5 * (d + d.adjoint());
}

/// `h_xb` acts on `xb`; `h_b` is the bare bath Hamiltonian on `bath` (subset
/// of xb). An empty bath means X is isolated and H* = H_X.
inline MeanForceData mean_force(const CompositeLayout &layout, const Matrix &h_xb, const FactorSet &xb, const Matrix &h_b,
                                const FactorSet &bath, double beta, bool with_derivative = true, double step = 0.0) {
    check_square(layout, h_xb, xb, "mean_force");
    for (auto b : bath)
        if (!std::binary_search(xb.begin(), xb.end(), b))
            throw LayoutError("mean_force: bath factor is not part of H_XB");
    if (set_difference(xb, bath).empty())
        throw PreconditionError("mean_force: bath must be a strict subset");
    if (!bath.empty())
        check_square(layout, h_b, bath, "mean_force (bath)");

    auto x = set_difference(xb, bath);
    auto sxb = eigh(h_xb);
    std::optional<Spectrum> sb;
    if (!bath.empty())
        sb = eigh(h_b);
    auto core = detail::mean_force_core(layout, sxb, xb, sb ? &*sb : nullptr, x, beta);

    MeanForceData out;
    out.factors = x;
    out.beta = beta;
    out.hstar = std::move(core.hstar);
    out.log_zstar = core.log_zstar;
    out.pistar = std::move(core.pistar);
    out.log_pistar = std::move(core.log_pistar);
    if (with_derivative) {
        if (bath.empty()) {
            out.dhstar_dbeta = zeros(layout.dim_of(x));
        } else {
            if (step <= 0.0)
                step = 1e-4 * beta;
            auto plus = detail::mean_force_core(layout, sxb, xb, &*sb, x, beta + step);
            auto minus = detail::mean_force_core(layout, sxb, xb, &*sb, x, beta - step);
            Matrix d = (plus.hstar - minus.hstar) / (2.0 * step);
            out.dhstar_dbeta = 0.5 * (d + d.adjoint());
        }
    }
    return out;
}

} // namespace rithermo
