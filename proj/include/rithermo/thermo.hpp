#pragma once

#include <cmath>
#include <functional>
#include <optional>
#include <set>
#include <vector>

#include "rithermo/dynamics.hpp"

namespace rithermo {

/// Equilibrium reference data at one instant: the mean-force Hamiltonian of
/// the system together with the coupled unit (if any), relative to bath B at
/// beta (beta_1 with two baths), and the partition function of H_SB1U.
struct Reference {
    std::optional<std::size_t> unit;
    FactorSet x; // {S} or {S, U(k)}
    MeanForceData mf;
    double log_z_sbu = 0.0;
};

/// Expectation values of one (normalized) global state that enter the ledger.
struct SectorValues {
    double energy = 0.0;     // <H_tot>
    double hstar = 0.0;      // <H*_SU>
    double dhstar = 0.0;     // <d_beta H*_SU>
    double log_pistar = 0.0; // <ln pi*_SU>
    double s_su = 0.0;       // S(rho_SU)
    double e_units = 0.0;    // sum_k <H_U(k)>
    double v_sb2 = 0.0;      // <V_SB2>
    double h_b2 = 0.0;       // <H_B2>
    // boundary-only (everything decoupled)
    double hstar_s = 0.0; // <H*_S>
    double s_s = 0.0;
    std::vector<double> s_units;
};

/// F_X = tr{rho_X [H*_X + T ln rho_X]}.
inline double noneq_free_energy(const Matrix &rho_x, const MeanForceData &mf) {
    return expect(rho_x, mf.hstar) - von_neumann_entropy(rho_x) / mf.beta;
}

class ThermoContext {
public:
    explicit ThermoContext(const Propagator &prop) : prop_(prop) {
        const auto &sc = prop.scenario();
        const auto &l = sc.layout;
        beta_ = sc.beta;
        beta2_ = sc.two_bath() ? sc.beta2 : 0.0;
        for (const auto &h : sc.schedule.units) {
            auto g = gibbs_state(h, beta_);
            unit_log_z_.push_back(g.log_partition);
            unit_log_pi_.push_back(herm_fn(h, [&](double e) { return -beta_ * e; }) -
                                   g.log_partition * identity(static_cast<std::size_t>(h.rows())));
        }
        if (auto b = l.bath())
            log_z_b_ = gibbs_state(sc.schedule.bath, beta_).log_partition;
        if (auto b2 = l.bath2())
            log_z_b2_ = gibbs_state(sc.schedule.bath2, beta2_).log_partition;

        const auto &s = sc.schedule;
        for (std::size_t k = 0; k < s.intervals.size(); ++k) {
            std::vector<Reference> refs;
            for (const auto &st : s.intervals[k].steps)
                refs.push_back(make_reference(after(st.start)));
            steps_.push_back(std::move(refs));
        }
        for (std::size_t m = 0; m < s.boundary_count(); ++m)
            boundaries_.push_back(make_reference(before(s.boundary(m))));
        initial_ = values(initial_state(sc).matrix, before(s.start()), true);
    }

    const Propagator &propagator() const { return prop_; }
    const Scenario &scenario() const { return prop_.scenario(); }
    double beta() const { return beta_; }
    double beta2() const { return beta2_; }
    bool two_bath() const { return scenario().two_bath(); }
    const SectorValues &initial() const { return initial_; }

    /// Degenerate units, one bath: system-marginal quantities exist.
    bool marginal_defined() const { return !two_bath() && units_degenerate(scenario()); }

    std::optional<std::size_t> boundary_index(const Instant &at) const {
        if (at.side != Side::minus)
            return std::nullopt;
        for (std::size_t m = 0; m < scenario().schedule.boundary_count(); ++m)
            if (scenario().schedule.boundary(m) == at.t)
                return m;
        return std::nullopt;
    }

    const Reference &reference(const Instant &at) const {
        if (auto m = boundary_index(at))
            return boundaries_[*m];
        auto p = hamiltonian_parts(scenario(), at);
        return steps_[*p.interval][*p.step];
    }

    /// ln Z of the reference state pi_tot at an instant.
    double log_z_total(const Instant &at) const { return reference(at).log_z_sbu + log_z_b2_; }

    SectorValues values(const Matrix &rho, const Instant &at, bool with_marginals = false) const {
        const auto &l = scenario().layout;
        const auto &ref = reference(at);
        const auto all = l.all();
        const auto su = l.system_and_units();
        SectorValues v;
        v.energy = expect(rho, prop_.hamiltonian(at));
        const Matrix rho_su = partial_trace(l, rho, all, su);
        v.s_su = von_neumann_entropy(rho_su);
        const Matrix rho_x = partial_trace(l, rho_su, su, ref.x);
        v.hstar = expect(rho_x, ref.mf.hstar);
        v.dhstar = expect(rho_x, ref.mf.dhstar_dbeta);
        v.log_pistar = expect(rho_x, ref.mf.log_pistar);
        for (std::size_t j = 0; j < l.num_units(); ++j) {
            const Matrix rho_u = partial_trace(l, rho_su, su, {l.unit(j)});
            const double e = expect(rho_u, scenario().schedule.units[j]);
            v.e_units += e;
            if (!ref.unit || *ref.unit != j) {
                v.hstar += e;
                v.log_pistar += expect(rho_u, unit_log_pi_[j]);
            }
            if (with_marginals)
                v.s_units.push_back(von_neumann_entropy(rho_u));
        }
        if (auto b2 = l.bath2()) {
            const auto p = hamiltonian_parts(scenario(), at);
            const FactorSet sb2{l.system(), *b2};
            const Matrix rho_sb2 = partial_trace(l, rho, all, sb2);
            v.v_sb2 = expect(rho_sb2, *p.system_bath2);
            v.h_b2 = expect(partial_trace(l, rho_sb2, sb2, {*b2}), scenario().schedule.bath2);
        }
        if (with_marginals) {
            const Matrix rho_s = partial_trace(l, rho_su, su, {l.system()});
            v.s_s = von_neumann_entropy(rho_s);
            if (ref.unit) {
                const auto &sref = system_reference(at);
                v.hstar_s = expect(rho_s, sref.hstar);
            } else {
                v.hstar_s = expect(rho_s, ref.mf.hstar);
            }
        }
        return v;
    }

    /// H*_S from H_SB alone at an instant (same as the boundary reference when decoupled).
    MeanForceData system_reference(const Instant &at) const {
        const auto &sc = scenario();
        const auto &l = sc.layout;
        auto p = hamiltonian_parts(sc, at);
        auto sb = system_bath_factors(l);
        FactorSet bath;
        Matrix hb;
        if (auto b = l.bath()) {
            bath = {*b};
            hb = sc.schedule.bath;
        }
        return mean_force(l, system_bath_hamiltonian(sc, p), sb, hb, bath, beta_, false);
    }

private:
    Reference make_reference(const Instant &at) const {
        const auto &sc = scenario();
        const auto &l = sc.layout;
        auto p = hamiltonian_parts(sc, at);
        Reference r;
        r.unit = p.unit;
        r.x = {l.system()};
        if (p.unit)
            r.x.push_back(l.unit(*p.unit));
        FactorSet xb = r.x, bath;
        if (auto b = l.bath()) {
            bath = {*b};
            xb = set_union(r.x, bath);
        }
        Matrix h = tensor_embed(l, *p.system, {l.system()}, xb);
        if (auto b = l.bath()) {
            h += tensor_embed(l, *p.system_bath, system_bath_factors(l), xb);
            h += tensor_embed(l, sc.schedule.bath, {*b}, xb);
        }
        if (p.unit) {
            h += tensor_embed(l, *p.coupling, coupling_factors(l, *p.unit), xb);
            h += tensor_embed(l, sc.schedule.units[*p.unit], {l.unit(*p.unit)}, xb);
        }
        r.mf = mean_force(l, h, xb, sc.schedule.bath, bath, beta_, true);
        r.log_z_sbu = r.mf.log_zstar + log_z_b_;
        for (std::size_t j = 0; j < l.num_units(); ++j)
            if (!p.unit || *p.unit != j)
                r.log_z_sbu += unit_log_z_[j];
        return r;
    }

    const Propagator &prop_;
    double beta_ = 1.0, beta2_ = 0.0;
    double log_z_b_ = 0.0, log_z_b2_ = 0.0;
    std::vector<double> unit_log_z_;
    std::vector<Matrix> unit_log_pi_;
    std::vector<std::vector<Reference>> steps_;
    std::vector<Reference> boundaries_;
    SectorValues initial_;
};

// ---------------------------------------------------------------------------
// unmeasured ledger

struct LedgerSnapshot {
    Instant at;
    std::optional<std::size_t> boundary;
    double energy = 0.0;  // <H_tot>
    double W = 0.0;       // closed form
    double W_power = 0.0; // sum of quench and kick energy jumps
    double F_SU = 0.0;
    double Sigma = 0.0;        // beta(W - dF) or, with two baths, dS_thermo - b1 Q1 - b2 Q2
    double Sigma_relent = 0.0; // D[rho_tot||pi_tot] - D[rho_SU||pi*_SU]
    double E_star = 0.0;
    double Q = 0.0;  // Q (one bath) or Q1
    double Q2 = 0.0; // two baths only
    double S_thermo = 0.0;
    double Sigma_thermo = 0.0; // dS_thermo - beta Q (one bath)
    double Q1_micro = 0.0;     // heat from microscopic expectations with W_power
    double E_units = 0.0;
    double S_SU = 0.0;
    double S_tot = 0.0;
    // boundary quantities in degenerate-units one-bath mode
    std::optional<double> Sigma_S;
    std::optional<double> multi_information; // S_S + sum S_U - S_SU
    std::optional<double> interval_delta;    // Sigma_S(t_m^-) - Sigma_S(t_{m-1}^-)
    double F_S = std::numeric_limits<double>::quiet_NaN();
};

inline LedgerSnapshot ledger_snapshot(const ThermoContext &ctx, const Matrix &rho, const Instant &at, double w_power) {
    const auto &i0 = ctx.initial();
    const double b = ctx.beta(), b2 = ctx.beta2();
    auto bidx = ctx.boundary_index(at);
    const bool marginals = bidx && ctx.marginal_defined();
    SectorValues v = ctx.values(rho, at, marginals);

    LedgerSnapshot s;
    s.at = at;
    s.boundary = bidx;
    s.energy = v.energy;
    s.W = v.energy - i0.energy;
    s.W_power = w_power;
    s.S_SU = v.s_su;
    s.E_units = v.e_units;
    s.F_SU = v.hstar - v.s_su / b;
    const double f0 = i0.hstar - i0.s_su / b;

    s.E_star = v.hstar + b * v.dhstar + v.v_sb2;
    const double e0 = i0.hstar + b * i0.dhstar + i0.v_sb2;
    s.S_thermo = v.s_su + b * b * v.dhstar;
    const double st0 = i0.s_su + b * b * i0.dhstar;
    s.Q2 = ctx.two_bath() ? -(v.h_b2 - i0.h_b2) : 0.0;
    s.Q = (s.E_star - e0) - s.W - s.Q2;
    s.Sigma_thermo = (s.S_thermo - st0) - b * s.Q;
    const double h_sbu = v.energy - v.v_sb2 - v.h_b2, h_sbu0 = i0.energy - i0.v_sb2 - i0.h_b2;
    s.Q1_micro = (v.hstar - i0.hstar) + b * (v.dhstar - i0.dhstar) - (h_sbu - h_sbu0);

    if (ctx.two_bath())
        s.Sigma = (s.S_thermo - st0) - b * s.Q - b2 * s.Q2;
    else
        s.Sigma = b * (s.W - (s.F_SU - f0));

    // relative-entropy route, from the full spectrum of rho_tot
    s.S_tot = von_neumann_entropy(rho);
    double d_tot = -s.S_tot + b * h_sbu + ctx.log_z_total(at);
    if (ctx.two_bath())
        d_tot += b2 * v.h_b2;
    const double d_su = -v.s_su - v.log_pistar;
    s.Sigma_relent = d_tot - d_su;

    if (marginals) {
        const double fs = v.hstar_s - v.s_s / b;
        const double fs0 = i0.hstar_s - i0.s_s / b;
        double du = 0.0, mi = v.s_s - v.s_su, mi0 = i0.s_s - i0.s_su;
        for (std::size_t j = 0; j < v.s_units.size(); ++j) {
            du += v.s_units[j] - i0.s_units[j];
            mi += v.s_units[j];
            mi0 += i0.s_units[j];
        }
        s.F_S = fs;
        s.Sigma_S = b * (s.W - (fs - fs0)) + du;
        s.multi_information = mi - mi0;
    }
    return s;
}

/// Default grid: every boundary t_m^- plus `count` points spread uniformly over
/// the protocol (interior points on the plus side; coinciding boundaries use
/// the minus side). Sorted and deduplicated.
inline std::vector<Instant> make_grid(const ProtocolSchedule &s, std::size_t count) {
    std::set<Instant> g;
    for (std::size_t m = 0; m < s.boundary_count(); ++m)
        g.insert(before(s.boundary(m)));
    const double t0 = s.start(), t1 = s.end();
    for (std::size_t i = 1; i <= count; ++i) {
        const double t = i == count ? t1 : t0 + (t1 - t0) * static_cast<double>(i) / static_cast<double>(count);
        bool is_boundary = false;
        for (std::size_t m = 0; m < s.boundary_count(); ++m)
            is_boundary = is_boundary || s.boundary(m) == t;
        g.insert(is_boundary ? before(t) : after(t));
    }
    return {g.begin(), g.end()};
}

/// Walks the unmeasured run through `grid` (sorted), calling
/// visit(instant, rho, w_power) at each grid point. Energy jumps are
/// accumulated at every instant where the Hamiltonian changes.
inline void walk_unmeasured(const Propagator &prop, const std::vector<Instant> &grid,
                            const std::function<void(const Instant &, const Matrix &, double)> &visit) {
    const auto &s = prop.scenario().schedule;
    std::set<Instant> events(grid.begin(), grid.end());
    for (std::size_t m = 0; m < s.boundary_count(); ++m) {
        events.insert(before(s.boundary(m)));
        if (m + 1 < s.boundary_count())
            events.insert(after(s.boundary(m)));
    }
    for (const auto &iv : s.intervals)
        for (std::size_t i = 1; i < iv.steps.size(); ++i) {
            events.insert(before(iv.steps[i].start));
            events.insert(after(iv.steps[i].start));
        }
    std::set<Instant> wanted(grid.begin(), grid.end());

    Matrix rho = initial_state(prop.scenario()).matrix;
    Instant cur = *events.begin();
    double e_cur = expect(rho, prop.hamiltonian(cur));
    double w = 0.0;
    if (wanted.count(cur))
        visit(cur, rho, w);
    for (auto it = std::next(events.begin()); it != events.end(); ++it) {
        const Instant next = *it;
        rho = prop.evolve(std::move(rho), cur, next);
        const double e_next = expect(rho, prop.hamiltonian(next));
        if (next.t == cur.t) {
            w += e_next - e_cur;
        } else if (next.side == Side::minus && next.t > s.start()) {
            // t_{k+1}^- lies after the decoupling quench of the last step
            for (const auto &iv : s.intervals)
                if (iv.end == next.t)
                    w += e_next - expect(rho, prop.hamiltonian(after(iv.steps.back().start)));
        }
        e_cur = e_next;
        cur = next;
        if (wanted.count(cur))
            visit(cur, rho, w);
    }
}

/// Average ledger on a grid, with the per-interval marginal deltas filled in
/// at boundaries.
inline std::vector<LedgerSnapshot> average_ledger(const ThermoContext &ctx, const std::vector<Instant> &grid) {
    std::vector<LedgerSnapshot> out;
    walk_unmeasured(ctx.propagator(), grid, [&](const Instant &at, const Matrix &rho, double w) {
        out.push_back(ledger_snapshot(ctx, rho, at, w));
    });
    std::optional<double> prev;
    for (auto &s : out) {
        if (!s.boundary || !s.Sigma_S)
            continue;
        if (prev)
            s.interval_delta = *s.Sigma_S - *prev;
        prev = s.Sigma_S;
    }
    return out;
}

/// (Sigma, Sigma_relent) at one instant.
inline std::pair<double, double> entropy_production(const ThermoContext &ctx, const Instant &at) {
    std::pair<double, double> r;
    walk_unmeasured(ctx.propagator(), {at}, [&](const Instant &i, const Matrix &rho, double w) {
        auto s = ledger_snapshot(ctx, rho, i, w);
        r = {s.Sigma, s.Sigma_relent};
    });
    return r;
}

struct MarginalEntropyProduction {
    double sigma_s = 0.0;
    double sigma = 0.0;
    double multi_information = 0.0;     // Sigma_S - Sigma
    std::optional<double> interval_delta; // Sigma_S(t_m^-) - Sigma_S(t_{m-1}^-), m > 0
};

/// Sigma_S at boundary t_m^-; requires degenerate units and a single bath.
inline MarginalEntropyProduction marginal_entropy_production(const ThermoContext &ctx, std::size_t m) {
    const auto &s = ctx.scenario().schedule;
    if (m >= s.boundary_count())
        throw PreconditionError("marginal_entropy_production: boundary index out of range");
    if (!ctx.marginal_defined())
        throw PreconditionError("marginal_entropy_production needs energy-degenerate units and a single bath");
    std::vector<Instant> grid;
    if (m > 0)
        grid.push_back(before(s.boundary(m - 1)));
    grid.push_back(before(s.boundary(m)));
    auto rows = average_ledger(ctx, grid);
    MarginalEntropyProduction r;
    const auto &last = rows.back();
    r.sigma_s = *last.Sigma_S;
    r.sigma = last.Sigma;
    r.multi_information = *last.multi_information;
    if (m > 0)
        r.interval_delta = *last.Sigma_S - *rows.front().Sigma_S;
    return r;
}

struct HeatBookkeeping {
    double E_star = 0.0;
    double Q = 0.0; // Q1 with two baths
    double Q2 = 0.0;
    double S_thermo = 0.0;
    double second_law = 0.0; // dS_thermo - b1 Q1 [- b2 Q2]
};

inline HeatBookkeeping heat_bookkeeping(const LedgerSnapshot &s, const ThermoContext &ctx) {
    HeatBookkeeping a{s.E_star, s.Q, s.Q2, s.S_thermo, 0.0};
    const auto &i0 = ctx.initial();
    const double b = ctx.beta();
    const double st0 = i0.s_su + b * b * i0.dhstar;
    a.second_law = (s.S_thermo - st0) - b * s.Q - (ctx.two_bath() ? ctx.beta2() * s.Q2 : 0.0);
    return a;
}

// ---------------------------------------------------------------------------
// stochastic ledger

struct StochasticLedger {
    std::vector<int> outcomes;
    Instant at;
    double prob = 0.0;
    double w = 0.0;
    double f = 0.0;
    double sigma = 0.0;
    double sigma_alt = 0.0; // beta (w - df + q_meas), one bath
    double e_star = 0.0;
    double e_units = 0.0;
    double q = 0.0; // q (one bath) or q1
    double q2 = 0.0;
    double q_meas = 0.0;
    double q_backaction = 0.0;
    double s = 0.0; // s_SU
    double s_su = 0.0;
};

/// Ledger of a tree node at depth m, i.e. at t_m^- after the first m units were
/// measured. `unmeasured` is the average snapshot at the same instant.
inline StochasticLedger stochastic_ledger(const ThermoContext &ctx, const TrajectoryNode &node,
                                          const LedgerSnapshot &unmeasured) {
    const auto &sched = ctx.scenario().schedule;
    const Instant at = before(sched.boundary(node.depth));
    if (unmeasured.at != at)
        throw PreconditionError("stochastic_ledger: unmeasured snapshot at " + to_string(unmeasured.at) +
                                " does not match node time " + to_string(at));
    if (!(node.prob >= 1e-14))
        throw PreconditionError("stochastic_ledger: branch " + outcome_label(node.outcomes) + " has zero probability");
    const double b = ctx.beta(), b2 = ctx.beta2();
    const auto &i0 = ctx.initial();
    const Matrix rho = node.state.matrix / node.prob;
    SectorValues v = ctx.values(rho, at);
    const double lnp = std::log(node.prob);

    StochasticLedger r;
    r.outcomes = node.outcomes;
    r.at = at;
    r.prob = node.prob;
    r.w = node.work;
    r.s_su = v.s_su;
    r.f = v.hstar + (lnp - v.s_su) / b;
    r.e_star = v.hstar + b * v.dhstar + v.v_sb2;
    r.e_units = v.e_units;
    r.q_meas = v.e_units - unmeasured.E_units;
    r.q_backaction = node.backaction;
    r.q2 = ctx.two_bath() ? -(v.h_b2 - i0.h_b2) : 0.0;
    const double e0 = i0.hstar + b * i0.dhstar + i0.v_sb2;
    r.q = (r.e_star - e0) - r.w - r.q2 - r.q_meas;
    r.s = v.s_su + b * b * v.dhstar - lnp;
    const double s0 = i0.s_su + b * b * i0.dhstar;
    r.sigma = (r.s - s0) - b * r.q - (ctx.two_bath() ? b2 * r.q2 : 0.0);
    const double f0 = i0.hstar - i0.s_su / b;
    r.sigma_alt = b * (r.w - (r.f - f0) + r.q_meas);
    return r;
}

struct StochasticAverages {
    Instant at;
    std::size_t branches = 0;
    double measure = 0.0;    // sum of kept probabilities
    bool renormalized = false;
    double w = 0.0, q = 0.0, q2 = 0.0, q_meas = 0.0, q_backaction = 0.0, sigma = 0.0, f = 0.0;
    double gap = 0.0;          // sum p (S_r - ln p) - S(rho_SU)
    double max_abs_q_backaction = 0.0;
    double max_abs_sigma_alt = 0.0; // max |sigma - sigma_alt| (one bath)
};

/// Outcome-averaged stochastic quantities over one tree level.
inline StochasticAverages average_stochastic(const std::vector<StochasticLedger> &rows, const LedgerSnapshot &unmeasured) {
    StochasticAverages a;
    a.at = unmeasured.at;
    a.branches = rows.size();
    for (const auto &r : rows)
        a.measure += r.prob;
    const double norm = (1.0 - a.measure > 1e-10) ? a.measure : 1.0;
    a.renormalized = norm != 1.0;
    double ent = 0.0;
    for (const auto &r : rows) {
        const double p = r.prob / norm;
        a.w += p * r.w;
        a.q += p * r.q;
        a.q2 += p * r.q2;
        a.q_meas += p * r.q_meas;
        a.q_backaction += p * r.q_backaction;
        a.sigma += p * r.sigma;
        a.f += p * r.f;
        ent += p * (r.s_su - std::log(r.prob));
        a.max_abs_q_backaction = std::max(a.max_abs_q_backaction, std::abs(r.q_backaction));
        a.max_abs_sigma_alt = std::max(a.max_abs_sigma_alt, std::abs(r.sigma - r.sigma_alt));
    }
    a.gap = ent - unmeasured.S_SU;
    return a;
}

/// Measurement gap from the tree level alone: sum p {S[rho_SU(r)] - ln p} - S[rho_SU].
inline double average_sigma_gap(const ThermoContext &ctx, const std::vector<TrajectoryNode> &level,
                                 const Matrix &unmeasured_rho) {
    const auto &l = ctx.scenario().layout;
    const auto su = l.system_and_units();
    double g = 0.0;
    for (const auto &node : level) {
        Matrix r = partial_trace(l, node.state.matrix, l.all(), su) / node.prob;
        g += node.prob * (von_neumann_entropy(r) - std::log(node.prob));
    }
    return g - von_neumann_entropy(partial_trace(l, unmeasured_rho, l.all(), su));
}

/// Stochastic ledgers of every tree level together with the unmeasured
/// snapshots at the boundaries.
struct TreeLedger {
    std::vector<LedgerSnapshot> boundaries; // t_0^- ... t_{n+1}^-
    std::vector<std::vector<StochasticLedger>> levels;
    std::vector<StochasticAverages> averages;
};

inline TreeLedger tree_ledger(const ThermoContext &ctx, const TrajectoryTree &tree) {
    const auto &s = ctx.scenario().schedule;
    std::vector<Instant> grid;
    for (std::size_t m = 0; m < s.boundary_count(); ++m)
        grid.push_back(before(s.boundary(m)));
    TreeLedger out;
    out.boundaries = average_ledger(ctx, grid);
    for (std::size_t m = 0; m < tree.levels.size(); ++m) {
        const auto &nodes = tree.levels[m];
        std::vector<StochasticLedger> rows(nodes.size());
        parallel_for(nodes.size(), [&](std::size_t i) { rows[i] = stochastic_ledger(ctx, nodes[i], out.boundaries[m]); });
        out.averages.push_back(average_stochastic(rows, out.boundaries[m]));
        out.levels.push_back(std::move(rows));
    }
    return out;
}

} // namespace rithermo
