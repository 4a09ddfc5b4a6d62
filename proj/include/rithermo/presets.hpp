#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "rithermo/model.hpp"
#include "rithermo/spin.hpp"

namespace rithermo::presets {

/// Star-coupled spin bath: H_B = sum_j w_j sz_j / 2.
inline Matrix field_bath(const std::vector<double> &fields) {
    const auto m = fields.size();
    Matrix h = zeros(std::size_t{1} << m);
    for (std::size_t j = 0; j < m; ++j)
        h += 0.5 * fields[j] * spin::site(spin::sz(), j, m);
    return h;
}

/// sum_j g_j op_j on an m-spin bath.
inline Matrix collective(const Matrix &op, const std::vector<double> &g) {
    const auto m = g.size();
    Matrix h = zeros(std::size_t{1} << m);
    for (std::size_t j = 0; j < m; ++j)
        h += g[j] * spin::site(op, j, m);
    return h;
}

inline Matrix qubit_thermal(double omega, double beta) { return gibbs_state(0.5 * omega * spin::sz(), beta).state; }

inline Matrix plus_state() {
    Matrix m = Matrix::Constant(2, 2, 0.5);
    return m;
}

/// Undriven strong-coupling relaxation after a swap preparation through U(0).
/// The default coupling is pure dephasing, V = sz (x) sum_j g_j (sx_j + kappa sz_j),
/// for which pi*_S is an exact fixed point while coherences revive in the
/// finite bath.
struct PrepareRelax {
    std::vector<double> bath_fields{1.0, 1.37, 1.83};
    double g = 0.6;
    double kappa = 0.5;
    double omega = 1.0;
    double beta = 1.0;
    double prep_time = 0.25;
    double horizon = 12.0;
    std::size_t idle_units = 3;
    double drive = 0.0;    // sx amplitude a sin(t) on H_S after the preparation
    bool exchange = false; // V = sx (x) Bx + sy (x) By instead of dephasing
    std::size_t drive_substeps = 8;
    Matrix prepared = plus_state();
};

inline Scenario prepare_relax(const PrepareRelax &p, const std::string &name = "swap-prepare-relax") {
    const auto m = p.bath_fields.size();
    std::vector<double> g(m, p.g);
    for (std::size_t j = 0; j < m; ++j)
        g[j] = p.g * (1.0 + 0.15 * static_cast<double>(j));

    Scenario sc;
    sc.name = name;
    std::vector<std::size_t> dims{2};
    dims.insert(dims.end(), p.idle_units, 1);
    sc.layout = CompositeLayout::make(2, std::size_t{1} << m, 0, dims);
    sc.beta = p.beta;
    sc.modes = mode_degenerate_units;

    auto &s = sc.schedule;
    s.bath = field_bath(p.bath_fields);
    if (p.exchange)
        s.system_bath_initial =
            kron(spin::sx(), collective(spin::sx(), g)) + kron(spin::sy(), collective(spin::sy(), g));
    else
        s.system_bath_initial =
            kron(spin::sz(), collective(spin::sx(), g) + p.kappa * collective(spin::sz(), g));
    s.system_initial = 0.5 * p.omega * spin::sz();
    for (auto d : dims)
        s.units.push_back(zeros(d));

    auto step_at = [&](std::size_t k) {
        return [&, k](double t) {
            DriveStep st;
            st.system = s.system_initial;
            if (p.drive != 0.0)
                st.system += p.drive * std::sin(t) * spin::sx();
            st.system_bath = s.system_bath_initial;
            st.coupling = zeros(2 * dims[k]);
            return st;
        };
    };
    const std::size_t n = dims.size();
    const double rest = (p.horizon - p.prep_time) / static_cast<double>(n - 1 == 0 ? 1 : n - 1);
    double t = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        Interval iv;
        iv.start = t;
        iv.end = (k == 0 && n > 1) ? p.prep_time : (k + 1 == n ? p.horizon : t + rest);
        const std::size_t sub = p.drive != 0.0 ? p.drive_substeps : 1;
        iv.steps = discretize_ramp(iv.start, iv.end, sub, step_at(k));
        if (k == 0)
            iv.kick = spin::swap_generator(2);
        t = iv.end;
        s.intervals.push_back(std::move(iv));
    }
    sc.unit_states.push_back(p.prepared);
    for (std::size_t k = 1; k < n; ++k)
        sc.unit_states.push_back(identity(1));
    return sc;
}

/// Fresh thermal units partially swapped with a bath-free qubit; after the
/// swap preparation through U(0) the boundary-to-boundary maps are a product
/// of collision channels with fixed point pi_S.
struct PartialSwap {
    double omega = 1.0;
    double beta = 1.0;
    double g = 0.6;
    double collision_time = 1.0;
    double prep_time = 0.5;
    std::size_t units = 7;
    Matrix prepared = plus_state();
};

inline Scenario partial_swap(const PartialSwap &p) {
    Scenario sc;
    sc.name = "partial-swap-reset";
    sc.layout = CompositeLayout::make(2, 0, 0, std::vector<std::size_t>(p.units + 1, 2));
    sc.beta = p.beta;
    sc.modes = mode_degenerate_units;
    auto &s = sc.schedule;
    s.system_initial = 0.5 * p.omega * spin::sz();
    double t = 0.0;
    for (std::size_t k = 0; k <= p.units; ++k) {
        s.units.push_back(zeros(2));
        Interval iv;
        iv.start = t;
        iv.end = t + (k == 0 ? p.prep_time : p.collision_time);
        DriveStep st;
        st.start = iv.start;
        st.end = iv.end;
        st.system = s.system_initial;
        st.coupling = k == 0 ? zeros(4) : Matrix(p.g * spin::swap(2));
        iv.steps.push_back(std::move(st));
        if (k == 0)
            iv.kick = spin::swap_generator(2);
        t = iv.end;
        s.intervals.push_back(std::move(iv));
    }
    sc.unit_states.push_back(p.prepared);
    for (std::size_t k = 0; k < p.units; ++k)
        sc.unit_states.push_back(qubit_thermal(p.omega, p.beta));
    return sc;
}

/// Driven qubit strongly coupled to a 3-spin bath; energy-degenerate units
/// exchange excitations with the system and are read out in the sz basis.
inline Scenario driven_qubit_spinbath() {
    const std::vector<double> fields{0.9, 1.1, 1.4};
    const std::vector<double> g{0.5, 0.4, 0.3};
    const std::size_t n = 4;
    Scenario sc;
    sc.name = "driven-qubit-spinbath";
    sc.layout = CompositeLayout::make(2, 8, 0, std::vector<std::size_t>(n, 2));
    sc.beta = 1.0;
    sc.modes = mode_degenerate_units;
    auto &s = sc.schedule;
    s.bath = field_bath(fields);
    s.system_bath_initial = kron(spin::sx(), collective(spin::sx(), g)) + kron(spin::sz(), collective(spin::sz(), g));
    s.system_initial = 0.5 * spin::sz();
    const Matrix exchange = kron(spin::sp(), spin::sm()) + kron(spin::sm(), spin::sp());
    for (std::size_t k = 0; k < n; ++k) {
        s.units.push_back(zeros(2));
        Interval iv;
        iv.start = static_cast<double>(k);
        iv.end = static_cast<double>(k + 1);
        iv.steps = discretize_ramp(iv.start, iv.end, 4, [&](double t) {
            DriveStep st;
            st.system = 0.5 * (1.0 + 0.25 * t) * spin::sz() + 0.3 * std::sin(1.7 * t) * spin::sx();
            st.system_bath = s.system_bath_initial;
            st.coupling = 0.8 * exchange;
            return st;
        });
        if (k % 2 == 1)
            iv.kick = 0.4 * kron(spin::sx(), spin::sx());
        s.intervals.push_back(std::move(iv));
        sc.unit_states.push_back(qubit_thermal(1.0, 0.5));
        sc.measurements.push_back({spin::ket_projector(2, 0), spin::ket_projector(2, 1)});
    }
    return sc;
}

/// Qubit between a cold and a hot 2-spin bath, pumped by two units.
inline Scenario two_bath_qubit() {
    Scenario sc;
    sc.name = "two-bath-qubit";
    sc.layout = CompositeLayout::make(2, 4, 4, {2, 2});
    sc.beta = 2.0;
    sc.beta2 = 0.5;
    sc.modes = mode_degenerate_units | mode_two_bath;
    auto &s = sc.schedule;
    s.bath = field_bath({1.0, 1.2});
    s.bath2 = field_bath({0.8, 1.3});
    s.system_bath_initial = kron(spin::sx(), collective(spin::sx(), {0.4, 0.3}));
    s.system_bath2_initial = kron(spin::sx(), collective(spin::sx(), {0.3, 0.35})) +
                             kron(spin::sz(), collective(spin::sz(), {0.2, 0.1}));
    s.system_initial = 0.5 * spin::sz();
    const Matrix exchange = kron(spin::sp(), spin::sm()) + kron(spin::sm(), spin::sp());
    for (std::size_t k = 0; k < 2; ++k) {
        s.units.push_back(zeros(2));
        Interval iv;
        iv.start = 1.5 * static_cast<double>(k);
        iv.end = iv.start + 1.5;
        iv.steps = discretize_ramp(iv.start, iv.end, 3, [&](double t) {
            DriveStep st;
            st.system = 0.5 * (1.0 + 0.2 * t) * spin::sz();
            st.system_bath = s.system_bath_initial;
            st.system_bath2 = s.system_bath2_initial;
            st.coupling = 0.6 * exchange;
            return st;
        });
        s.intervals.push_back(std::move(iv));
        sc.unit_states.push_back(spin::ket_projector(2, 1));
        sc.measurements.push_back({spin::ket_projector(2, 0), spin::ket_projector(2, 1)});
    }
    return sc;
}

struct Entry {
    std::string name;
    std::string description;
    std::function<Scenario()> make;
};

inline const std::vector<Entry> &registry() {
    static const std::vector<Entry> r = {
        {"driven-qubit-spinbath", "driven qubit, 3-spin bath, 4 exchange units measured in sz", driven_qubit_spinbath},
        {"swap-prepare-relax", "undriven dephasing relaxation after a swap preparation (backflow)",
         [] { return prepare_relax(PrepareRelax{}); }},
        {"swap-prepare-relax-weak", "as swap-prepare-relax with weak system-bath coupling",
         [] {
             PrepareRelax p;
             p.g = 0.02;
             return prepare_relax(p, "swap-prepare-relax-weak");
         }},
        {"swap-prepare-relax-driven", "as swap-prepare-relax with an sx drive after the preparation",
         [] {
             PrepareRelax p;
             p.drive = 0.6;
             return prepare_relax(p, "swap-prepare-relax-driven");
         }},
        {"exchange-prepare-relax", "undriven relaxation with an exchange system-bath coupling",
         [] {
             PrepareRelax p;
             p.exchange = true;
             p.g = 0.3;
             return prepare_relax(p, "exchange-prepare-relax");
         }},
        {"partial-swap-reset", "bath-free qubit reset by fresh thermal units via partial swaps",
         [] { return partial_swap(PartialSwap{}); }},
        {"two-bath-qubit", "qubit between a cold and a hot spin bath, two exchange units", two_bath_qubit},
    };
    return r;
}

inline std::vector<std::string> names() {
    std::vector<std::string> out;
    for (const auto &e : registry())
        out.push_back(e.name);
    return out;
}

inline Scenario make(const std::string &name) {
    for (const auto &e : registry())
        if (e.name == name)
            return e.make();
    std::string known;
    for (const auto &e : registry())
        known += (known.empty() ? "" : ", ") + e.name;
    throw ConfigError("unknown preset '" + name + "' (known: " + known + ")");
}

} // namespace rithermo::presets
