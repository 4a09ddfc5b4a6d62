#pragma once

#include <random>

#include "rithermo/model.hpp"
#include "rithermo/spin.hpp"

namespace rithermo::random {

using Rng = std::mt19937_64;

/// Uniform double in [0, 1) from the top 53 bits.
inline double uniform(Rng &rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

inline double uniform(Rng &rng, double a, double b) { return a + (b - a) * uniform(rng); }

inline std::size_t uniform_int(Rng &rng, std::size_t lo, std::size_t hi) {
    return lo + static_cast<std::size_t>(uniform(rng) * static_cast<double>(hi - lo + 1));
}

inline double normal(Rng &rng) {
    // Box-Muller; avoids distribution objects whose output differs across standard libraries
    const double u1 = 1.0 - uniform(rng);
    const double u2 = uniform(rng);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::acos(-1.0) * u2);
}

inline Matrix gaussian(Rng &rng, std::size_t d) {
    Matrix m(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d));
    for (Eigen::Index j = 0; j < m.cols(); ++j)
        for (Eigen::Index i = 0; i < m.rows(); ++i)
            m(i, j) = cplx(normal(rng), normal(rng));
    return m;
}

/// GUE-like Hermitian matrix with entries of size ~scale.
inline Matrix hermitian(Rng &rng, std::size_t d, double scale = 1.0) {
    Matrix g = gaussian(rng, d);
    return (0.5 * scale) * (g + g.adjoint());
}

inline Matrix unitary(Rng &rng, std::size_t d) {
    Eigen::HouseholderQR<Matrix> qr(gaussian(rng, d));
    Matrix q = qr.householderQ();
    Matrix r = qr.matrixQR().triangularView<Eigen::Upper>();
    for (Eigen::Index i = 0; i < q.cols(); ++i) {
        cplx ph = r(i, i) / std::abs(r(i, i));
        q.col(i) *= ph;
    }
    return q;
}

/// Full-rank mixed state from the Ginibre ensemble, mixed with a little of the
/// maximally mixed state to keep the smallest eigenvalue away from zero.
inline Matrix state(Rng &rng, std::size_t d, double floor = 0.02) {
    Matrix g = gaussian(rng, d);
    Matrix rho = g * g.adjoint();
    rho /= rho.trace().real();
    rho = (1.0 - floor) * rho + (floor / static_cast<double>(d)) * identity(d);
    return 0.5 * (rho + rho.adjoint());
}

inline Matrix pure_state(Rng &rng, std::size_t d) {
    Eigen::VectorXcd v(static_cast<Eigen::Index>(d));
    for (Eigen::Index i = 0; i < v.size(); ++i)
        v(i) = cplx(normal(rng), normal(rng));
    v.normalize();
    return v * v.adjoint();
}

/// Generalized measurement with `outcomes` Hermitian operators:
/// P_r = sqrt(S^{-1/2} A_r S^{-1/2}) for random positive A_r with sum S.
inline std::vector<Matrix> povm(Rng &rng, std::size_t d, std::size_t outcomes) {
    std::vector<Matrix> a;
    Matrix s = zeros(d);
    for (std::size_t r = 0; r < outcomes; ++r) {
        Matrix g = gaussian(rng, d);
        a.push_back(g * g.adjoint());
        s += a.back();
    }
    Matrix s_inv_half = herm_fn(0.5 * (s + s.adjoint()), [](double x) { return 1.0 / std::sqrt(x); });
    std::vector<Matrix> out;
    for (auto &ar : a) {
        Matrix e = s_inv_half * ar * s_inv_half;
        out.push_back(herm_fn(0.5 * (e + e.adjoint()), [](double x) { return std::sqrt(std::max(x, 0.0)); }));
    }
    return out;
}

/// Rank-one projectors onto a random orthonormal basis.
inline std::vector<Matrix> projective(Rng &rng, std::size_t d) {
    Matrix u = unitary(rng, d);
    std::vector<Matrix> out;
    for (Eigen::Index i = 0; i < u.cols(); ++i)
        out.push_back(u.col(i) * u.col(i).adjoint());
    return out;
}

/// Projectors onto the eigenspaces of h (degenerate eigenvalues grouped).
inline std::vector<Matrix> eigenprojectors(const Matrix &h, double tolerance = 1e-9) {
    auto sp = eigh(h);
    std::vector<Matrix> out;
    Eigen::Index i = 0;
    while (i < sp.values.size()) {
        Eigen::Index j = i;
        Matrix p = Matrix::Zero(h.rows(), h.cols());
        while (j < sp.values.size() && sp.values(j) - sp.values(i) < tolerance) {
            p += sp.vectors.col(j) * sp.vectors.col(j).adjoint();
            ++j;
        }
        out.push_back(p);
        i = j;
    }
    return out;
}

struct ScenarioOptions {
    std::size_t bath_spins_min = 2;
    std::size_t bath_spins_max = 4;
    std::size_t bath2_spins_min = 0; // > 0 selects two-bath mode
    std::size_t bath2_spins_max = 0;
    std::size_t units_min = 1;
    std::size_t units_max = 3;
    std::size_t unit_dim = 2;
    std::size_t steps_min = 1;
    std::size_t steps_max = 3;
    double system_bath_coupling = 1.0;
    double system_unit_coupling = 1.0;
    bool energetic_units = false;
    bool driven_coupling = false;
    bool kicks = true;
    bool measured = false;
    enum class Measurement { povm, projective, commuting, trivial } measurement = Measurement::povm;
    double beta_min = 0.3;
    double beta_max = 2.0;
};

/// Random strong-coupling scenario: qubit system, spin bath(s), qubit units,
/// random piecewise-constant protocol.
inline Scenario scenario(Rng &rng, const ScenarioOptions &o) {
    const std::size_t m1 = uniform_int(rng, o.bath_spins_min, o.bath_spins_max);
    const std::size_t m2 = o.bath2_spins_max > 0 ? uniform_int(rng, o.bath2_spins_min, o.bath2_spins_max) : 0;
    const std::size_t n = uniform_int(rng, o.units_min, o.units_max);
    const std::size_t db = std::size_t{1} << m1;
    const std::size_t db2 = m2 ? std::size_t{1} << m2 : 0;
    const std::size_t du = o.unit_dim;

    Scenario sc;
    sc.name = "random";
    sc.layout = CompositeLayout::make(2, db, db2, std::vector<std::size_t>(n, du));
    sc.beta = uniform(rng, o.beta_min, o.beta_max);
    sc.beta2 = m2 ? uniform(rng, o.beta_min, o.beta_max) : 1.0;
    if (m2)
        sc.modes |= mode_two_bath;
    sc.modes |= o.energetic_units ? mode_energetic_units : mode_degenerate_units;
    if (o.driven_coupling)
        sc.modes |= mode_driven_coupling;

    auto &s = sc.schedule;
    auto bath_h = [&](std::size_t m) {
        Matrix h = zeros(std::size_t{1} << m);
        for (std::size_t j = 0; j < m; ++j) {
            h += 0.5 * uniform(rng, 0.5, 1.5) * spin::site(spin::sz(), j, m);
            if (j + 1 < m)
                h += 0.3 * uniform(rng, -1, 1) * spin::site(spin::sx(), j, m) * spin::site(spin::sx(), j + 1, m);
        }
        return h;
    };
    auto coupling_h = [&](std::size_t m, double g) {
        Matrix v = zeros(2 * (std::size_t{1} << m));
        const Matrix paulis[3] = {spin::sx(), spin::sy(), spin::sz()};
        for (std::size_t j = 0; j < m; ++j)
            for (int a = 0; a < 3; ++a)
                for (int b = 0; b < 3; ++b)
                    v += (g * normal(rng) / 3.0) * kron(paulis[a], spin::site(paulis[b], j, m));
        return v;
    };
    s.bath = bath_h(m1);
    s.system_bath_initial = coupling_h(m1, o.system_bath_coupling);
    if (m2) {
        s.bath2 = bath_h(m2);
        s.system_bath2_initial = coupling_h(m2, o.system_bath_coupling);
    }
    s.system_initial = 0.5 * uniform(rng, 0.5, 1.5) * spin::sz();

    for (std::size_t k = 0; k < n; ++k) {
        if (o.energetic_units)
            s.units.push_back(hermitian(rng, du, 0.7));
        else
            s.units.push_back(uniform(rng, -0.5, 0.5) * identity(du));
    }

    double t = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        Interval iv;
        iv.start = t;
        const std::size_t steps = uniform_int(rng, o.steps_min, o.steps_max);
        for (std::size_t i = 0; i < steps; ++i) {
            DriveStep st;
            st.start = t;
            t += uniform(rng, 0.2, 0.8);
            st.end = t;
            st.system = s.system_initial + hermitian(rng, 2, 0.4);
            st.system_bath = o.driven_coupling ? Matrix(s.system_bath_initial * uniform(rng, 0.5, 1.5))
                                               : s.system_bath_initial;
            if (m2)
                st.system_bath2 = s.system_bath2_initial;
            st.coupling = hermitian(rng, 2 * du, o.system_unit_coupling);
            iv.steps.push_back(std::move(st));
        }
        iv.end = t;
        if (o.kicks && uniform(rng) < 0.5)
            iv.kick = hermitian(rng, 2 * du, 0.8);
        s.intervals.push_back(std::move(iv));
    }

    for (std::size_t k = 0; k < n; ++k)
        sc.unit_states.push_back(state(rng, du));

    if (o.measured) {
        for (std::size_t k = 0; k < n; ++k) {
            switch (o.measurement) {
            case ScenarioOptions::Measurement::povm:
                sc.measurements.push_back(povm(rng, du, uniform_int(rng, 2, 3)));
                break;
            case ScenarioOptions::Measurement::projective:
                sc.measurements.push_back(projective(rng, du));
                break;
            case ScenarioOptions::Measurement::commuting:
                sc.measurements.push_back(eigenprojectors(s.units[k]));
                break;
            case ScenarioOptions::Measurement::trivial:
                sc.measurements.push_back({identity(du)});
                break;
            }
        }
    }
    return sc;
}

} // namespace rithermo::random
