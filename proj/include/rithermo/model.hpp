#pragma once

#include <cmath>
#include <compare>
#include <cstdint>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "rithermo/opalg.hpp"
#include "rithermo/thermal.hpp"

namespace rithermo {

/// A time label. At an interval boundary t_k the two sides differ: t_k^- is
/// before the kick of unit k with every unit decoupled, t_k^+ is after the kick
/// with the first drive step of I_k switched on. At interior times both sides
/// carry the same state; they only differ in the Hamiltonian at a step edge.
enum class Side : std::uint8_t { minus = 0, plus = 1 };

struct Instant {
    double t = 0.0;
    Side side = Side::plus;

    auto operator<=>(const Instant &) const = default;
};

inline Instant before(double t) { return {t, Side::minus}; }
inline Instant after(double t) { return {t, Side::plus}; }

inline std::string to_string(const Instant &i) {
    std::ostringstream os;
    os.precision(17);
    os << i.t << (i.side == Side::minus ? "-" : "+");
    return os.str();
}

/// One piecewise-constant stretch of the protocol inside an interval.
/// Matrices act on: system {S}, system_bath {S,B}, system_bath2 {S,B2},
/// coupling {S,U(k)} where k is the owning interval.
struct DriveStep {
    double start = 0.0;
    double end = 0.0;
    Matrix system;
    Matrix system_bath;
    Matrix system_bath2;
    Matrix coupling;
};

/// I_k = [start, end) during which only unit k may couple to the system.
struct Interval {
    double start = 0.0;
    double end = 0.0;
    std::vector<DriveStep> steps;
    std::optional<Matrix> kick; // v_k on {S,U(k)}, applied as exp(-i v_k) at start
};

struct ProtocolSchedule {
    // values at t_0^- (before the protocol starts; no unit coupled)
    Matrix system_initial;
    Matrix system_bath_initial;
    Matrix system_bath2_initial;
    // static parts
    Matrix bath;
    Matrix bath2;
    std::vector<Matrix> units;
    std::vector<Interval> intervals;

    double start() const { return intervals.front().start; }
    double end() const { return intervals.back().end; }
    std::size_t boundary_count() const { return intervals.size() + 1; }
    double boundary(std::size_t k) const { return k < intervals.size() ? intervals[k].start : intervals.back().end; }
};

enum Mode : unsigned {
    mode_none = 0,
    mode_degenerate_units = 1u << 0,
    mode_energetic_units = 1u << 1,
    mode_two_bath = 1u << 2,
    mode_driven_coupling = 1u << 3,
};

struct Scenario {
    std::string name;
    CompositeLayout layout;
    ProtocolSchedule schedule;
    double beta = 1.0;  // beta_1 in two-bath mode
    double beta2 = 1.0; // only used in two-bath mode
    std::vector<Matrix> unit_states;        // product form rho_U(0) ... rho_U(n)
    std::optional<Matrix> joint_unit_state; // correlated alternative on all units
    std::vector<std::vector<Matrix>> measurements; // P_r per unit; empty means the trivial instrument {1}
    unsigned modes = mode_none;

    bool has(Mode m) const { return (modes & m) != 0; }
    bool two_bath() const { return layout.bath2().has_value(); }
    std::size_t num_units() const { return layout.num_units(); }
};

// ---------------------------------------------------------------------------
// factor sets of the generators

inline FactorSet system_bath_factors(const CompositeLayout &l) {
    FactorSet s{l.system()};
    if (auto b = l.bath())
        s.push_back(*b);
    return s;
}

inline FactorSet system_bath2_factors(const CompositeLayout &l) { return FactorSet{l.system(), *l.bath2()}; }

inline FactorSet coupling_factors(const CompositeLayout &l, std::size_t k) { return FactorSet{l.system(), l.unit(k)}; }

/// Factors that evolve non-trivially while unit k (if any) is coupled.
inline FactorSet active_factors(const CompositeLayout &l, std::optional<std::size_t> k) {
    FactorSet s{l.system()};
    if (auto b = l.bath())
        s.push_back(*b);
    if (auto b2 = l.bath2())
        s.push_back(*b2);
    if (k)
        s.push_back(l.unit(*k));
    return s;
}

inline bool is_scalar_multiple_of_identity(const Matrix &m, double tolerance = 1e-12) {
    if (m.rows() == 0)
        return true;
    cplx c = m.trace() / static_cast<double>(m.rows());
    return max_abs(m - c * Matrix::Identity(m.rows(), m.cols())) <= tolerance;
}

// ---------------------------------------------------------------------------
// Hamiltonian at an instant

/// The generator values in force at an instant.
struct HamiltonianParts {
    const Matrix *system = nullptr;
    const Matrix *system_bath = nullptr;
    const Matrix *system_bath2 = nullptr;
    const Matrix *coupling = nullptr;   // null when no unit is coupled
    std::optional<std::size_t> unit;    // owner of `coupling`
    std::optional<std::size_t> interval;
    std::optional<std::size_t> step;    // nullopt at a boundary minus side
};

inline HamiltonianParts hamiltonian_parts(const Scenario &sc, const Instant &at) {
    const auto &s = sc.schedule;
    const double t0 = s.start();
    const double tn = s.end();
    if (at.t < t0 || at.t > tn || (at.t == tn && at.side == Side::plus))
        throw PreconditionError("instant " + to_string(at) + " lies outside the schedule [" + std::to_string(t0) +
                                "-, " + std::to_string(tn) + "-]");
    HamiltonianParts p;
    // boundary minus sides: every unit decoupled
    for (std::size_t k = 0; k < s.boundary_count(); ++k) {
        if (at.t != s.boundary(k) || at.side != Side::minus)
            continue;
        if (k == 0) {
            p.system = &s.system_initial;
            p.system_bath = &s.system_bath_initial;
            p.system_bath2 = &s.system_bath2_initial;
        } else {
            const auto &last = s.intervals[k - 1].steps.back();
            p.system = &last.system;
            p.system_bath = &last.system_bath;
            p.system_bath2 = &last.system_bath2;
        }
        return p;
    }
    for (std::size_t k = 0; k < s.intervals.size(); ++k) {
        const auto &iv = s.intervals[k];
        if (!(at.t >= iv.start && at.t < iv.end))
            continue;
        std::size_t idx = 0;
        for (std::size_t i = 0; i < iv.steps.size(); ++i) {
            const auto &st = iv.steps[i];
            if (at.t >= st.start && at.t < st.end) {
                idx = i;
                if (i > 0 && at.t == st.start && at.side == Side::minus)
                    idx = i - 1;
                break;
            }
        }
        const auto &st = iv.steps[idx];
        p.system = &st.system;
        p.system_bath = &st.system_bath;
        p.system_bath2 = &st.system_bath2;
        p.coupling = &st.coupling;
        p.unit = k;
        p.interval = k;
        p.step = idx;
        return p;
    }
    throw PreconditionError("instant " + to_string(at) + " not covered by any interval");
}

/// H_S + V_SB (+ V_SB2) + H_B (+ H_B2) + sum_k [V_SU(k) + H_U(k)] on the full layout.
inline Matrix total_hamiltonian(const Scenario &sc, const Instant &at) {
    const auto &l = sc.layout;
    const auto all = l.all();
    auto p = hamiltonian_parts(sc, at);
    Matrix h = tensor_embed(l, *p.system, {l.system()}, all);
    if (auto b = l.bath()) {
        h += tensor_embed(l, *p.system_bath, system_bath_factors(l), all);
        h += tensor_embed(l, sc.schedule.bath, {*b}, all);
    }
    if (auto b2 = l.bath2()) {
        h += tensor_embed(l, *p.system_bath2, system_bath2_factors(l), all);
        h += tensor_embed(l, sc.schedule.bath2, {*b2}, all);
    }
    for (std::size_t k = 0; k < l.num_units(); ++k)
        h += tensor_embed(l, sc.schedule.units[k], {l.unit(k)}, all);
    if (p.coupling)
        h += tensor_embed(l, *p.coupling, coupling_factors(l, *p.unit), all);
    return h;
}

/// H_S + V_SB + H_B on {S,B}: the system-bath Hamiltonian at an instant.
inline Matrix system_bath_hamiltonian(const Scenario &sc, const HamiltonianParts &p) {
    const auto &l = sc.layout;
    auto sb = system_bath_factors(l);
    Matrix h = tensor_embed(l, *p.system, {l.system()}, sb);
    if (auto b = l.bath()) {
        h += *p.system_bath;
        h += tensor_embed(l, sc.schedule.bath, {*b}, sb);
    }
    return h;
}

/// Piecewise-constant approximation of a continuous ramp on [start, end):
/// `at(t)` returns the generators at time t (its start/end are ignored) and is
/// sampled at the midpoint of each of the `substeps` pieces.
template <class F>
std::vector<DriveStep> discretize_ramp(double start, double end, std::size_t substeps, F &&at) {
    if (substeps == 0 || !(end > start))
        throw PreconditionError("discretize_ramp: need end > start and at least one substep");
    std::vector<DriveStep> steps;
    const double h = (end - start) / static_cast<double>(substeps);
    for (std::size_t i = 0; i < substeps; ++i) {
        const double a = start + h * static_cast<double>(i);
        const double b = (i + 1 == substeps) ? end : start + h * static_cast<double>(i + 1);
        DriveStep st = at(0.5 * (a + b));
        st.start = a;
        st.end = b;
        steps.push_back(std::move(st));
    }
    return steps;
}

// ---------------------------------------------------------------------------
// validation

struct Issue {
    std::string field;
    std::string message;
};

inline std::string describe(const std::vector<Issue> &issues) {
    std::string out;
    for (const auto &i : issues)
        out += i.field + ": " + i.message + "\n";
    return out;
}

namespace detail {

inline void check_matrix(std::vector<Issue> &out, const std::string &field, const Matrix &m, std::size_t dim,
                         bool hermitian, bool allow_empty = false) {
    if (allow_empty && m.size() == 0)
        return;
    if (m.rows() != static_cast<Eigen::Index>(dim) || m.cols() != static_cast<Eigen::Index>(dim)) {
        out.push_back({field, "expected " + std::to_string(dim) + "x" + std::to_string(dim) + " matrix, got " +
                                  std::to_string(m.rows()) + "x" + std::to_string(m.cols())});
        return;
    }
    if (!m.allFinite()) {
        out.push_back({field, "matrix has non-finite entries"});
        return;
    }
    if (hermitian) {
        double d = hermiticity_defect(m);
        if (d > 1e-12 * std::max(1.0, max_abs(m))) {
            std::ostringstream os;
            os << "matrix is not Hermitian: max anti-Hermitian part " << d;
            out.push_back({field, os.str()});
        }
    }
}

inline void check_state(std::vector<Issue> &out, const std::string &field, const Matrix &m, std::size_t dim) {
    auto before = out.size();
    check_matrix(out, field, m, dim, true);
    if (out.size() != before)
        return;
    if (std::abs(m.trace().real() - 1.0) > 1e-10)
        out.push_back({field, "state trace is " + std::to_string(m.trace().real()) + ", expected 1"});
    double lo = min_eigenvalue(m);
    if (lo < -tol::positivity_floor)
        out.push_back({field, "state has negative eigenvalue " + std::to_string(lo)});
}

} // namespace detail

/// Checks every structural rule of a scenario; never throws.
inline std::vector<Issue> validate(const Scenario &sc) {
    std::vector<Issue> out;
    const auto &l = sc.layout;
    const auto &s = sc.schedule;
    const auto n = l.num_units();
    const auto ds = l.factor(l.system()).dim;
    const auto dsb = l.dim_of(system_bath_factors(l));
    const bool has_bath = l.bath().has_value();
    const bool has_bath2 = l.bath2().has_value();

    if (!(sc.beta > 0.0))
        out.push_back({"beta", "inverse temperature must be positive"});
    if (has_bath2 && !(sc.beta2 > 0.0))
        out.push_back({"beta2", "inverse temperature must be positive"});
    if (sc.has(mode_two_bath) && !has_bath2)
        out.push_back({"modes", "two-bath mode requires a bath2 factor"});
    if (sc.has(mode_degenerate_units) && sc.has(mode_energetic_units))
        out.push_back({"modes", "degenerate-units and energetic-units are exclusive"});

    detail::check_matrix(out, "hamiltonian.system0", s.system_initial, ds, true);
    if (has_bath) {
        detail::check_matrix(out, "hamiltonian.bath", s.bath, l.factor(*l.bath()).dim, true);
        detail::check_matrix(out, "hamiltonian.system_bath0", s.system_bath_initial, dsb, true);
    }
    if (has_bath2) {
        const auto d2 = ds * l.factor(*l.bath2()).dim;
        detail::check_matrix(out, "hamiltonian.bath2", s.bath2, l.factor(*l.bath2()).dim, true);
        detail::check_matrix(out, "hamiltonian.system_bath2_0", s.system_bath2_initial, d2, true);
    }
    if (s.units.size() != n)
        out.push_back({"hamiltonian.units", "expected " + std::to_string(n) + " unit Hamiltonians, got " +
                                                std::to_string(s.units.size())});
    else
        for (std::size_t k = 0; k < n; ++k) {
            auto field = "hamiltonian.units[" + std::to_string(k) + "]";
            detail::check_matrix(out, field, s.units[k], l.factor(l.unit(k)).dim, true);
            if (sc.has(mode_degenerate_units) && s.units[k].rows() > 0 && !is_scalar_multiple_of_identity(s.units[k]))
                out.push_back({field, "degenerate-units mode requires H_U(k) proportional to the identity"});
        }

    if (s.intervals.size() != n) {
        out.push_back({"intervals", "expected one interaction interval per unit (" + std::to_string(n) + "), got " +
                                        std::to_string(s.intervals.size())});
        return out;
    }
    if (n == 0) {
        out.push_back({"intervals", "at least one unit and interval is required"});
        return out;
    }

    for (std::size_t k = 0; k < n; ++k) {
        const auto &iv = s.intervals[k];
        const auto field = "intervals[" + std::to_string(k) + "]";
        if (!(iv.end > iv.start))
            out.push_back({field, "interval must have end > start"});
        if (k > 0) {
            const auto &prev = s.intervals[k - 1];
            if (iv.start < prev.end)
                out.push_back({field, "interval [" + std::to_string(iv.start) + ", " + std::to_string(iv.end) +
                                          ") overlaps interval " + std::to_string(k - 1) +
                                          ": at most one unit may interact with the system at a given time"});
            else if (iv.start > prev.end)
                out.push_back({field, "gap between interval " + std::to_string(k - 1) + " and " + std::to_string(k) +
                                          "; intervals must tile the protocol"});
        }
        if (iv.steps.empty()) {
            out.push_back({field + ".steps", "interval needs at least one drive step"});
            continue;
        }
        const auto dc = l.dim_of(coupling_factors(l, k));
        double cursor = iv.start;
        for (std::size_t i = 0; i < iv.steps.size(); ++i) {
            const auto &st = iv.steps[i];
            const auto sf = field + ".steps[" + std::to_string(i) + "]";
            if (st.start < iv.start || st.end > iv.end)
                out.push_back({sf, "drive step [" + std::to_string(st.start) + ", " + std::to_string(st.end) +
                                       ") leaves interval " + std::to_string(k) + " of unit " + std::to_string(k) +
                                       ": V_SU(k) must vanish outside I_k (one unit at a time)"});
            if (st.start != cursor)
                out.push_back({sf, "drive steps must tile the interval contiguously"});
            if (!(st.end > st.start))
                out.push_back({sf, "drive step must have end > start"});
            cursor = st.end;
            detail::check_matrix(out, sf + ".system", st.system, ds, true);
            detail::check_matrix(out, sf + ".coupling", st.coupling, dc, true);
            if (has_bath) {
                detail::check_matrix(out, sf + ".system_bath", st.system_bath, dsb, true);
                if (!sc.has(mode_driven_coupling) && st.system_bath.rows() == s.system_bath_initial.rows() &&
                    max_abs(st.system_bath - s.system_bath_initial) > 0.0)
                    out.push_back({sf + ".system_bath", "V_SB changes in time; enable the driven-coupling mode"});
            }
            if (has_bath2)
                detail::check_matrix(out, sf + ".system_bath2", st.system_bath2,
                                     ds * l.factor(*l.bath2()).dim, true);
        }
        if (cursor != iv.end)
            out.push_back({field + ".steps", "drive steps must cover the interval up to its end"});
        if (iv.kick)
            detail::check_matrix(out, field + ".kick", *iv.kick, dc, true);
    }

    if (sc.joint_unit_state) {
        if (!sc.unit_states.empty())
            out.push_back({"units", "give either product unit states or a joint unit state, not both"});
        detail::check_state(out, "units.joint_state", *sc.joint_unit_state, l.dim_of(l.units()));
    } else if (sc.unit_states.size() != n) {
        out.push_back({"units.states", "expected " + std::to_string(n) + " unit states, got " +
                                           std::to_string(sc.unit_states.size())});
    } else {
        for (std::size_t k = 0; k < n; ++k)
            detail::check_state(out, "units.states[" + std::to_string(k) + "]", sc.unit_states[k],
                                l.factor(l.unit(k)).dim);
    }

    if (!sc.measurements.empty() && sc.measurements.size() != n)
        out.push_back({"measurements", "expected one measurement set per unit (" + std::to_string(n) + ")"});
    else
        for (std::size_t k = 0; k < sc.measurements.size(); ++k) {
            const auto field = "measurements[" + std::to_string(k) + "]";
            const auto du = l.factor(l.unit(k)).dim;
            const auto &set = sc.measurements[k];
            if (set.empty())
                continue;
            Matrix sum = zeros(du);
            bool shapes_ok = true;
            for (std::size_t r = 0; r < set.size(); ++r) {
                auto before = out.size();
                detail::check_matrix(out, field + "[" + std::to_string(r) + "]", set[r], du, true);
                if (out.size() != before) {
                    shapes_ok = false;
                    continue;
                }
                if (min_eigenvalue(set[r]) < -tol::positivity_floor)
                    out.push_back({field + "[" + std::to_string(r) + "]",
                                   "measurement operator of unit " + std::to_string(k) + " is not positive"});
                sum += set[r] * set[r];
            }
            if (shapes_ok) {
                double defect = max_abs(sum - identity(du));
                if (defect > tol::positivity_floor) {
                    std::ostringstream os;
                    os << "measurement of unit " << k << " is not normalized: max |sum_r P_r^2 - 1| = " << defect;
                    out.push_back({field, os.str()});
                }
            }
        }
    return out;
}

inline void require_valid(const Scenario &sc) {
    auto issues = validate(sc);
    if (!issues.empty())
        throw ConfigError("invalid scenario '" + sc.name + "':\n" + describe(issues));
}

/// True when every unit Hamiltonian is proportional to the identity.
inline bool units_degenerate(const Scenario &sc) {
    for (const auto &h : sc.schedule.units)
        if (!is_scalar_multiple_of_identity(h))
            return false;
    return true;
}

// ---------------------------------------------------------------------------
// initial state

/// Joint unit state rho_U(0..n) as a matrix on the unit factors.
inline Matrix unit_sector_state(const Scenario &sc) {
    if (sc.joint_unit_state)
        return *sc.joint_unit_state;
    Matrix u = Matrix::Identity(1, 1);
    for (const auto &r : sc.unit_states)
        u = kron(u, r);
    return u;
}

/// pi_SB(lambda_0) (x) [pi_B2(beta2)] (x) rho_U, in canonical factor order.
inline DensityState initial_state(const Scenario &sc) {
    const auto &l = sc.layout;
    HamiltonianParts p = hamiltonian_parts(sc, before(sc.schedule.start()));
    Matrix rho = gibbs_state(system_bath_hamiltonian(sc, p), sc.beta).state;
    if (l.bath2())
        rho = kron(rho, gibbs_state(sc.schedule.bath2, sc.beta2).state);
    rho = kron(rho, unit_sector_state(sc));
    return {l.all(), rho};
}

} // namespace rithermo
