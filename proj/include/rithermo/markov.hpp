#pragma once

#include <limits>
#include <random>
#include <string>
#include <vector>

#include "rithermo/channel.hpp"
#include "rithermo/thermo.hpp"

namespace rithermo {

struct DynamicalMap {
    Matrix choi; // input (x) output
    Instant from;
    Instant to;
    std::string preparation;
    double condition_number = 1.0;
};

/// d^2 pure preparation states |i><i|, (|i>+|j>)/sqrt2, (|i>+i|j>)/sqrt2.
inline std::vector<Matrix> preparation_basis(std::size_t d) {
    std::vector<Matrix> out;
    const auto n = static_cast<Eigen::Index>(d);
    for (Eigen::Index i = 0; i < n; ++i) {
        Eigen::VectorXcd v = Eigen::VectorXcd::Zero(n);
        v(i) = 1.0;
        out.push_back(v * v.adjoint());
    }
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = i + 1; j < n; ++j)
            for (cplx phase : {cplx(1, 0), cplx(0, 1)}) {
                Eigen::VectorXcd v = Eigen::VectorXcd::Zero(n);
                v(i) = 1.0 / std::sqrt(2.0);
                v(j) = phase / std::sqrt(2.0);
                out.push_back(v * v.adjoint());
            }
    return out;
}

/// Reduced system states at `times` (sorted, after t_0^+) when unit 0 starts in
/// `unit0`, plus the system state right after the preparation kick.
struct ReducedRun {
    Matrix prepared;
    std::vector<Matrix> states;
};

inline void require_preparation(const Scenario &sc) {
    const auto &l = sc.layout;
    const auto ds = l.factor(l.system()).dim;
    if (sc.joint_unit_state)
        throw PreconditionError("tomography needs product unit states");
    if (l.num_units() == 0 || l.factor(l.unit(0)).dim != ds || !sc.schedule.intervals[0].kick)
        throw PreconditionError("tomography needs unit 0 of the system dimension with a preparation kick at t_0");
}

inline ReducedRun simulate_reduced(const Propagator &prop, const Matrix &unit0, const std::vector<Instant> &times) {
    Scenario sc = prop.scenario();
    sc.unit_states[0] = unit0;
    const auto &l = sc.layout;
    const auto all = l.all();
    ReducedRun out;
    // same generators, different initial unit state: reuse the propagator
    Matrix rho = initial_state(sc).matrix;
    Instant cur = before(sc.schedule.start());
    rho = prop.evolve(std::move(rho), cur, after(cur.t));
    cur = after(cur.t);
    out.prepared = partial_trace(l, rho, all, {l.system()});
    for (const auto &t : times) {
        rho = prop.evolve(std::move(rho), cur, t);
        cur = t;
        out.states.push_back(partial_trace(l, rho, all, {l.system()}));
    }
    return out;
}

/// Lambda(t, t_0) for every t in `times` from d_S^2 swap-kick preparations.
inline std::vector<DynamicalMap> tomographic_maps(const Propagator &prop, const std::vector<Instant> &times) {
    const auto &sc = prop.scenario();
    require_preparation(sc);
    const auto d = sc.layout.factor(sc.layout.system()).dim;
    const auto preps = preparation_basis(d);
    std::vector<ReducedRun> runs(preps.size());
    parallel_for(preps.size(), [&](std::size_t j) { runs[j] = simulate_reduced(prop, preps[j], times); });

    const auto dd = static_cast<Eigen::Index>(d * d);
    Matrix in(dd, dd);
    for (std::size_t j = 0; j < preps.size(); ++j)
        in.col(static_cast<Eigen::Index>(j)) = vec(runs[j].prepared);
    Eigen::JacobiSVD<Matrix> svd(in);
    const auto &sv = svd.singularValues();
    const double cond = sv(0) / sv(sv.size() - 1);
    if (!std::isfinite(cond) || cond > 1e10)
        throw NumericError("tomography: prepared states are not linearly independent (condition number " +
                           std::to_string(cond) + ")");
    const Matrix in_inv = in.inverse();

    std::vector<DynamicalMap> out;
    for (std::size_t i = 0; i < times.size(); ++i) {
        Matrix o(dd, dd);
        for (std::size_t j = 0; j < preps.size(); ++j)
            o.col(static_cast<Eigen::Index>(j)) = vec(runs[j].states[i]);
        DynamicalMap m;
        m.choi = choi_from_superop(o * in_inv);
        m.from = after(sc.schedule.start());
        m.to = times[i];
        m.preparation = "swap-kick through U0: |i>, (|i>+|j>)/sqrt2, (|i>+i|j>)/sqrt2";
        m.condition_number = cond;
        out.push_back(std::move(m));
    }
    return out;
}

inline DynamicalMap tomographic_map(const Propagator &prop, const Instant &to) { return tomographic_maps(prop, {to}).front(); }

/// max error of Lambda on random held-out preparations.
inline double tomography_residual(const Propagator &prop, const DynamicalMap &map, std::size_t samples, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    const auto d = static_cast<Eigen::Index>(prop.layout().factor(0).dim);
    double worst = 0.0;
    for (std::size_t i = 0; i < samples; ++i) {
        Matrix g(d, d);
        for (Eigen::Index a = 0; a < d; ++a)
            for (Eigen::Index b = 0; b < d; ++b)
                g(a, b) = cplx(static_cast<double>(rng() >> 11) * 0x1.0p-53 - 0.5,
                               static_cast<double>(rng() >> 11) * 0x1.0p-53 - 0.5);
        Matrix rho = g * g.adjoint();
        rho /= rho.trace().real();
        auto run = simulate_reduced(prop, rho, {map.to});
        worst = std::max(worst, max_abs(apply_choi(map.choi, run.prepared) - run.states[0]));
    }
    return worst;
}

enum class Verdict { markovian, non_markovian, indeterminate };

inline const char *to_string(Verdict v) {
    switch (v) {
    case Verdict::markovian: return "markovian";
    case Verdict::non_markovian: return "non_markovian";
    case Verdict::indeterminate: return "indeterminate";
    }
    return "?";
}

struct DivisibilityResult {
    DynamicalMap intermediate;
    double min_choi_eigenvalue = 0.0;
    double tp_defect = 0.0;
    double condition_number = 0.0; // of Lambda(t1, t0)
    std::size_t truncated = 0;     // singular values dropped from the inverse
    Verdict verdict = Verdict::indeterminate;
};

/// Lambda(t2, t1) = Lambda(t2, t0) Lambda(t1, t0)^{-1} with a truncated
/// spectral inverse.
inline DivisibilityResult divisibility_check(const DynamicalMap &late, const DynamicalMap &early,
                                             double truncation = 1e-10, double threshold = -1e-8) {
    const Matrix l2 = superop_from_choi(late.choi), l1 = superop_from_choi(early.choi);
    Eigen::JacobiSVD<Matrix> svd(l1, Eigen::ComputeFullU | Eigen::ComputeFullV);
    const auto &sv = svd.singularValues();
    DivisibilityResult r;
    Eigen::VectorXd inv = Eigen::VectorXd::Zero(sv.size());
    for (Eigen::Index i = 0; i < sv.size(); ++i) {
        if (sv(i) > truncation * sv(0))
            inv(i) = 1.0 / sv(i);
        else
            ++r.truncated;
    }
    r.condition_number = sv(sv.size() - 1) > 0 ? sv(0) / sv(sv.size() - 1) : std::numeric_limits<double>::infinity();
    const Matrix pinv = svd.matrixV() * inv.cast<cplx>().asDiagonal() * svd.matrixU().adjoint();
    r.intermediate.choi = choi_from_superop(l2 * pinv);
    r.intermediate.from = early.to;
    r.intermediate.to = late.to;
    r.intermediate.preparation = late.preparation;
    r.intermediate.condition_number = r.condition_number;
    r.min_choi_eigenvalue = min_eigenvalue(r.intermediate.choi);
    r.tp_defect = trace_preservation_defect(r.intermediate.choi);
    if (r.truncated > 0)
        r.verdict = Verdict::indeterminate;
    else
        r.verdict = r.min_choi_eigenvalue >= threshold ? Verdict::markovian : Verdict::non_markovian;
    return r;
}

/// max |Lambda pi* - pi*|.
inline double fixed_point_check(const DynamicalMap &map, const Matrix &pistar) {
    return max_abs(apply_choi(map.choi, pistar) - pistar);
}

/// pi*_S and H*_S from H_SB at an instant.
inline MeanForceData system_mean_force(const Scenario &sc, const Instant &at) {
    const auto &l = sc.layout;
    auto p = hamiltonian_parts(sc, at);
    FactorSet bath;
    Matrix hb;
    if (auto b = l.bath()) {
        bath = {*b};
        hb = sc.schedule.bath;
    }
    return mean_force(l, system_bath_hamiltonian(sc, p), system_bath_factors(l), hb, bath, sc.beta, false);
}

/// Both routes use the single reference pi*_S of the initial H_SB, so they
/// agree identically; with driving this is not the instantaneous Sigma_S.
struct DissipationResult {
    double delta_sigma_s = 0.0; // -beta [F_S(t2) - F_S(t1)]
    double relent_route = 0.0;  // D1 - D2
    double d1 = 0.0, d2 = 0.0;
    bool sign_guaranteed_preconditions = false;
    std::string flags; // why no sign guarantee applies ("" when preconditions hold)
};

/// Reasons the contractivity argument does not apply on [t1, t2] ("" if none).
inline std::string dissipation_preconditions(const Scenario &sc, const Instant &t1, const Instant &t2) {
    std::string why;
    auto add = [&](const std::string &s) { why += (why.empty() ? "" : "; ") + s; };
    if (!units_degenerate(sc))
        add("units not energy-degenerate");
    if (sc.two_bath())
        add("two baths");
    const auto p1 = hamiltonian_parts(sc, t1), p2 = hamiltonian_parts(sc, t2);
    if (p1.coupling && max_abs(*p1.coupling) > 0.0)
        add("a unit is coupled at t1");
    if (p2.coupling && max_abs(*p2.coupling) > 0.0)
        add("a unit is coupled at t2");
    const Matrix &hs = *p1.system;
    bool driven = false;
    for (const auto &iv : sc.schedule.intervals)
        for (const auto &st : iv.steps) {
            if (st.end <= t1.t || st.start >= t2.t)
                continue;
            driven = driven || max_abs(st.system - hs) > 0.0;
            if (sc.layout.bath())
                driven = driven || max_abs(st.system_bath - *p1.system_bath) > 0.0;
        }
    if (driven)
        add("H_S or V_SB driven in [t1, t2]");
    return why;
}

inline DissipationResult dissipation_monotone(const Propagator &prop, const Instant &t1, const Instant &t2) {
    const auto &sc = prop.scenario();
    if (!(t1 < t2) || !(after(sc.schedule.start()) <= t1))
        throw PreconditionError("dissipation_monotone needs t0 < t1 < t2");
    const auto &l = sc.layout;
    Matrix rho = prop.evolve(initial_state(sc).matrix, before(sc.schedule.start()), t1);
    const Matrix r1 = partial_trace(l, rho, l.all(), {l.system()});
    rho = prop.evolve(std::move(rho), t1, t2);
    const Matrix r2 = partial_trace(l, rho, l.all(), {l.system()});
    const auto ref = system_mean_force(sc, before(sc.schedule.start()));

    DissipationResult r;
    r.delta_sigma_s = -sc.beta * (noneq_free_energy(r2, ref) - noneq_free_energy(r1, ref));
    r.d1 = relative_entropy(r1, ref.pistar);
    r.d2 = relative_entropy(r2, ref.pistar);
    r.relent_route = r.d1 - r.d2;
    r.flags = dissipation_preconditions(sc, t1, t2);
    r.sign_guaranteed_preconditions = r.flags.empty();
    return r;
}

/// `count` instants spread uniformly over (t_0, t_N]; boundaries use the minus side.
inline std::vector<Instant> markov_grid(const ProtocolSchedule &s, std::size_t count) {
    std::vector<Instant> g;
    const double t0 = s.start(), t1 = s.end();
    for (std::size_t i = 1; i <= count; ++i) {
        const double t = i == count ? t1 : t0 + (t1 - t0) * static_cast<double>(i) / static_cast<double>(count);
        bool is_boundary = false;
        for (std::size_t m = 0; m < s.boundary_count(); ++m)
            is_boundary = is_boundary || s.boundary(m) == t;
        g.push_back(is_boundary ? before(t) : after(t));
    }
    return g;
}

/// t_1^-, ..., t_N^-.
inline std::vector<Instant> boundary_grid(const ProtocolSchedule &s) {
    std::vector<Instant> g;
    for (std::size_t m = 1; m < s.boundary_count(); ++m)
        g.push_back(before(s.boundary(m)));
    return g;
}

struct MarkovSweepRow {
    Instant t1, t2;
    double min_choi_eigenvalue = 0.0;
    double tp_defect = 0.0;
    double fixed_point_defect = 0.0; // at t2
    double delta_sigma_s = 0.0;
    double relent_route = 0.0;
    double condition_number = 0.0;
    std::size_t truncated = 0;
    Verdict verdict = Verdict::indeterminate;
    std::string flags;
};

struct MarkovSweep {
    std::vector<DynamicalMap> maps;
    std::vector<double> fixed_point_defects; // per map, against pi*_S(t_0^-)
    std::vector<MarkovSweepRow> rows;        // all pairs t1 < t2 from the grid
};

inline MarkovSweep markov_sweep(const Propagator &prop, const std::vector<Instant> &times) {
    const auto &sc = prop.scenario();
    MarkovSweep out;
    out.maps = tomographic_maps(prop, times);
    const auto ref = system_mean_force(sc, before(sc.schedule.start()));
    for (const auto &m : out.maps)
        out.fixed_point_defects.push_back(fixed_point_check(m, ref.pistar));

    // reduced states of the configured run at every grid point
    const auto run = simulate_reduced(prop, sc.unit_states[0], times);
    std::vector<double> f, d;
    for (std::size_t i = 0; i < times.size(); ++i) {
        f.push_back(noneq_free_energy(run.states[i], ref));
        d.push_back(relative_entropy(run.states[i], ref.pistar));
    }
    for (std::size_t i = 0; i < times.size(); ++i)
        for (std::size_t j = i + 1; j < times.size(); ++j) {
            auto div = divisibility_check(out.maps[j], out.maps[i]);
            MarkovSweepRow r;
            r.t1 = times[i];
            r.t2 = times[j];
            r.min_choi_eigenvalue = div.min_choi_eigenvalue;
            r.tp_defect = div.tp_defect;
            r.fixed_point_defect = out.fixed_point_defects[j];
            r.delta_sigma_s = -sc.beta * (f[j] - f[i]);
            r.relent_route = d[i] - d[j];
            r.condition_number = div.condition_number;
            r.truncated = div.truncated;
            r.verdict = div.verdict;
            r.flags = dissipation_preconditions(sc, times[i], times[j]);
            out.rows.push_back(std::move(r));
        }
    return out;
}

} // namespace rithermo
