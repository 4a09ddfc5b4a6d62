#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "rithermo/channel.hpp"
#include "rithermo/model.hpp"

namespace rithermo {

/// Runs body(i) for i in [0, n) on up to hardware_concurrency threads.
/// Results must be written to pre-sized slots so the outcome is independent
/// of scheduling.
template <class Body>
void parallel_for(std::size_t n, Body &&body) {
    std::size_t workers = std::min<std::size_t>(n, std::max(1u, std::thread::hardware_concurrency()));
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i)
            body(i);
        return;
    }
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(workers);
    for (std::size_t w = 0; w < workers; ++w)
        pool.emplace_back([&, w] {
            try {
                for (std::size_t i = w; i < n; i += workers)
                    body(i);
            } catch (...) {
                errors[w] = std::current_exception();
            }
        });
    for (auto &t : pool)
        t.join();
    for (auto &e : errors)
        if (e)
            std::rethrow_exception(e);
}

/// Exact piecewise-constant propagation of the global state.
///
/// Each drive step is diagonalized once on its active factors (S, baths and
/// the coupled unit); the remaining units are spectators evolving under their
/// own static Hamiltonians.
class Propagator {
public:
    explicit Propagator(Scenario sc) : sc_(std::move(sc)) {
        require_valid(sc_);
        const auto &l = sc_.layout;
        const auto &s = sc_.schedule;
        all_ = l.all();
        for (std::size_t k = 0; k < s.intervals.size(); ++k) {
            const auto &iv = s.intervals[k];
            std::vector<StepCache> cache;
            auto active = active_factors(l, k);
            for (std::size_t i = 0; i < iv.steps.size(); ++i) {
                HamiltonianParts p = hamiltonian_parts(sc_, after(iv.steps[i].start));
                Matrix h = tensor_embed(l, *p.system, {l.system()}, active);
                if (auto b = l.bath()) {
                    h += tensor_embed(l, *p.system_bath, system_bath_factors(l), active);
                    h += tensor_embed(l, s.bath, {*b}, active);
                }
                if (auto b2 = l.bath2()) {
                    h += tensor_embed(l, *p.system_bath2, system_bath2_factors(l), active);
                    h += tensor_embed(l, s.bath2, {*b2}, active);
                }
                h += tensor_embed(l, *p.coupling, coupling_factors(l, k), active);
                h += tensor_embed(l, s.units[k], {l.unit(k)}, active);
                cache.push_back({active, eigh(h), total_hamiltonian(sc_, after(iv.steps[i].start))});
            }
            steps_.push_back(std::move(cache));
            if (iv.kick)
                kicks_.push_back(unitary_exp(*iv.kick, 1.0));
            else
                kicks_.emplace_back();
        }
        for (const auto &h : s.units)
            if (is_scalar_multiple_of_identity(h))
                unit_free_.emplace_back();
            else
                unit_free_.push_back(eigh(h));
        for (std::size_t k = 0; k < s.boundary_count(); ++k)
            boundary_h_.push_back(total_hamiltonian(sc_, before(s.boundary(k))));
    }

    const Scenario &scenario() const { return sc_; }
    const CompositeLayout &layout() const { return sc_.layout; }
    std::size_t num_intervals() const { return sc_.schedule.intervals.size(); }
    double boundary(std::size_t k) const { return sc_.schedule.boundary(k); }

    /// Full-layout H_tot at an instant (cached for step and boundary values).
    const Matrix &hamiltonian(const Instant &at) const {
        auto p = hamiltonian_parts(sc_, at);
        if (!p.step) {
            for (std::size_t k = 0; k < sc_.schedule.boundary_count(); ++k)
                if (sc_.schedule.boundary(k) == at.t)
                    return boundary_h_[k];
        }
        return steps_[*p.interval][*p.step].h_full;
    }

    const std::optional<Matrix> &kick_unitary(std::size_t k) const { return kicks_.at(k); }

    /// Unmeasured unitary evolution from `from` to `to` (from <= to).
    Matrix evolve(Matrix rho, Instant from, Instant to) const {
        if (to < from)
            throw PreconditionError("evolve: target instant " + to_string(to) + " precedes " + to_string(from));
        hamiltonian_parts(sc_, from);
        hamiltonian_parts(sc_, to);
        const auto &s = sc_.schedule;
        const auto n = s.intervals.size();
        Instant cur = from;
        while (cur < to) {
            std::optional<std::size_t> kb;
            for (std::size_t k = 0; k < n; ++k)
                if (cur.t == s.boundary(k) && cur.side == Side::minus)
                    kb = k;
            if (kb) {
                if (kicks_[*kb])
                    rho = apply_local(sc_.layout, rho, *kicks_[*kb], coupling_factors(sc_.layout, *kb), all_);
                cur = after(cur.t);
                continue;
            }
            std::size_t k = 0;
            while (k + 1 < n && cur.t >= s.intervals[k].end)
                ++k;
            const auto &iv = s.intervals[k];
            const double target = std::min(to.t, iv.end);
            for (std::size_t i = 0; i < iv.steps.size(); ++i) {
                const auto &st = iv.steps[i];
                const double a = std::max(st.start, cur.t);
                const double b = std::min(st.end, target);
                if (b > a)
                    rho = advance(rho, k, i, b - a);
            }
            cur = (target == iv.end) ? before(iv.end) : Instant{target, to.side};
            if (target == to.t && to.t != iv.end)
                cur = to;
        }
        return rho;
    }

    /// Evolves within one step of interval k for a duration dt.
    Matrix advance(const Matrix &rho, std::size_t k, std::size_t step, double dt) const {
        const auto &c = steps_[k][step];
        Matrix u = c.spectrum.apply([dt](double e) { return std::exp(cplx(0.0, -e * dt)); });
        Matrix out = apply_local(sc_.layout, rho, u, c.active, all_);
        for (std::size_t j = 0; j < unit_free_.size(); ++j) {
            if (j == k || !unit_free_[j])
                continue;
            Matrix uj = unit_free_[j]->apply([dt](double e) { return std::exp(cplx(0.0, -e * dt)); });
            out = apply_local(sc_.layout, out, uj, {sc_.layout.unit(j)}, all_);
        }
        return out;
    }

private:
    struct StepCache {
        FactorSet active;
        Spectrum spectrum;
        Matrix h_full;
    };

    Scenario sc_;
    FactorSet all_;
    std::vector<std::vector<StepCache>> steps_;
    std::vector<std::optional<Matrix>> kicks_;
    std::vector<std::optional<Spectrum>> unit_free_;
    std::vector<Matrix> boundary_h_;
};

/// Global state from t_k^- to t_{k+1}^- (kick, drive steps, decoupling).
/// `substeps` > 1 splits every drive step into equal pieces; for
/// piecewise-constant steps the result is unchanged up to rounding.
inline Matrix propagate_interval(const Propagator &prop, const Matrix &rho, std::size_t k, std::size_t substeps = 1) {
    if (substeps <= 1)
        return prop.evolve(rho, before(prop.boundary(k)), before(prop.boundary(k + 1)));
    const auto &iv = prop.scenario().schedule.intervals.at(k);
    const auto &l = prop.layout();
    Matrix out = rho;
    if (const auto &kick = prop.kick_unitary(k))
        out = apply_local(l, out, *kick, coupling_factors(l, k), l.all());
    for (std::size_t i = 0; i < iv.steps.size(); ++i) {
        const double dt = (iv.steps[i].end - iv.steps[i].start) / static_cast<double>(substeps);
        for (std::size_t j = 0; j < substeps; ++j)
            out = prop.advance(out, k, i, dt);
    }
    return out;
}

// ---------------------------------------------------------------------------
// measurement and trajectories

/// Node of the outcome tree: the subnormalized global state after the first
/// `depth` units have been measured, held at t_depth^-.
struct TrajectoryNode {
    std::vector<int> outcomes;
    DensityState state;
    double prob = 1.0;
    std::size_t depth = 0;
    std::ptrdiff_t parent = -1;
    double work = 0.0;       // stochastic work w accumulated up to t_depth^-
    double backaction = 0.0; // unit energy change caused by the measurements themselves
};

inline std::string outcome_label(const std::vector<int> &outcomes) {
    if (outcomes.empty())
        return "-";
    std::string s;
    for (std::size_t i = 0; i < outcomes.size(); ++i) {
        if (i)
            s += '.';
        s += std::to_string(outcomes[i]);
    }
    return s;
}

inline const std::vector<Matrix> &measurement_of(const Scenario &sc, std::size_t k,
                                                 std::vector<Matrix> &trivial_storage) {
    if (k < sc.measurements.size() && !sc.measurements[k].empty())
        return sc.measurements[k];
    trivial_storage = {identity(sc.layout.factor(sc.layout.unit(k)).dim)};
    return trivial_storage;
}

inline double measurement_defect(const std::vector<Matrix> &ops) {
    if (ops.empty())
        return std::numeric_limits<double>::infinity();
    Matrix sum = Matrix::Zero(ops.front().rows(), ops.front().cols());
    for (const auto &p : ops)
        sum += p * p;
    return max_abs(sum - Matrix::Identity(sum.rows(), sum.cols()));
}

struct MeasureOptions {
    double prune_below = 1e-14;
};

/// Children P_r rho P_r of a node for the measurement of unit k. Children whose
/// probability falls below the prune threshold are dropped; their measure is
/// returned through `pruned`.
/// With `unit_hamiltonian` set, each child also records the backaction energy
/// tr(P H P rho) - Re tr(H P^2 rho) per unit probability, which vanishes when
/// [P_r, H_U] = 0.
inline std::vector<TrajectoryNode> measure_unit(const CompositeLayout &layout, const TrajectoryNode &node, std::size_t k,
                                                const std::vector<Matrix> &ops, double *pruned = nullptr,
                                                std::size_t *pruned_count = nullptr, MeasureOptions opt = {},
                                                const Matrix *unit_hamiltonian = nullptr) {
    if (measurement_defect(ops) > tol::positivity_floor)
        throw PreconditionError("measurement on unit " + std::to_string(k) + " violates sum_r P_r^2 = 1");
    std::vector<TrajectoryNode> children;
    const auto all = layout.all();
    Matrix rho_u;
    if (unit_hamiltonian)
        rho_u = partial_trace(layout, node.state.matrix, all, {layout.unit(k)});
    for (std::size_t r = 0; r < ops.size(); ++r) {
        TrajectoryNode child;
        child.outcomes = node.outcomes;
        child.outcomes.push_back(static_cast<int>(r));
        child.state = {all, apply_local(layout, node.state.matrix, ops[r], {layout.unit(k)}, all)};
        child.prob = child.state.norm();
        child.depth = node.depth + 1;
        child.work = node.work;
        child.backaction = node.backaction;
        if (unit_hamiltonian && child.prob >= opt.prune_below) {
            const auto &p = ops[r];
            const auto &h = *unit_hamiltonian;
            child.backaction += (expect(rho_u, p * h * p) - expect(rho_u, 0.5 * (h * p * p + p * p * h))) / child.prob;
        }
        if (child.prob < opt.prune_below) {
            if (pruned)
                *pruned += std::max(0.0, child.prob);
            if (pruned_count)
                ++*pruned_count;
            continue;
        }
        children.push_back(std::move(child));
    }
    return children;
}

/// Conditional-state energy change over the unitary stretch I_k:
/// [<H(t_{k+1}^-)> after - <H(t_k^-)> before] / p.
inline double stretch_work(const Propagator &prop, const Matrix &before_state, const Matrix &after_state, std::size_t k,
                           double prob) {
    const double e0 = expect(before_state, prop.hamiltonian(before(prop.boundary(k))));
    const double e1 = expect(after_state, prop.hamiltonian(before(prop.boundary(k + 1))));
    return (e1 - e0) / prob;
}

/// Propagates a node through I_depth and measures unit `depth`.
inline std::vector<TrajectoryNode> expand_node(const Propagator &prop, const TrajectoryNode &node, double *pruned,
                                               std::size_t *pruned_count, MeasureOptions opt = {}) {
    const auto k = node.depth;
    TrajectoryNode evolved = node;
    evolved.state.matrix = propagate_interval(prop, node.state.matrix, k);
    evolved.work = node.work + stretch_work(prop, node.state.matrix, evolved.state.matrix, k, node.prob);
    std::vector<Matrix> trivial;
    const auto &ops = measurement_of(prop.scenario(), k, trivial);
    return measure_unit(prop.layout(), evolved, k, ops, pruned, pruned_count, opt, &prop.scenario().schedule.units[k]);
}

struct BranchOptions {
    std::size_t cap = 4096;
    double prune_below = 1e-14;
    bool verify = true;
};

struct TrajectoryTree {
    /// levels[m] holds the nodes at t_m^- after measuring units 0..m-1.
    std::vector<std::vector<TrajectoryNode>> levels;
    std::size_t pruned_count = 0;
    double pruned_measure = 0.0;
    /// max-norm gap between interleaved measurement and measuring the
    /// unmeasured final state at the end (NaN when not verified).
    double deferred_measurement_defect = std::numeric_limits<double>::quiet_NaN();
    /// max-norm gap between sum_r tr_U rho~(r) and the unmeasured system-bath state.
    double average_state_defect = std::numeric_limits<double>::quiet_NaN();

    const std::vector<TrajectoryNode> &leaves() const { return levels.back(); }
};

inline std::size_t branch_count(const Scenario &sc) {
    std::size_t total = 1;
    for (std::size_t k = 0; k < sc.num_units(); ++k) {
        std::size_t r = (k < sc.measurements.size() && !sc.measurements[k].empty()) ? sc.measurements[k].size() : 1;
        if (total > std::numeric_limits<std::size_t>::max() / std::max<std::size_t>(r, 1))
            return std::numeric_limits<std::size_t>::max();
        total *= r;
    }
    return total;
}

/// Exhaustive outcome tree through t_{n+1}^-.
inline TrajectoryTree branch_all(const Propagator &prop, BranchOptions opt = {}) {
    const auto &sc = prop.scenario();
    const auto &l = prop.layout();
    const auto n = prop.num_intervals();
    if (branch_count(sc) > opt.cap)
        throw BranchCapExceeded("outcome tree has " + std::to_string(branch_count(sc)) + " branches, above the cap of " +
                                std::to_string(opt.cap) + "; use the sampling pipeline instead");

    TrajectoryTree tree;
    TrajectoryNode root;
    root.state = initial_state(sc);
    root.prob = root.state.norm();
    tree.levels.push_back({root});

    for (std::size_t k = 0; k < n; ++k) {
        const auto &parents = tree.levels.back();
        std::vector<std::vector<TrajectoryNode>> kids(parents.size());
        std::vector<double> pruned(parents.size(), 0.0);
        std::vector<std::size_t> pruned_n(parents.size(), 0);
        parallel_for(parents.size(), [&](std::size_t i) {
            kids[i] = expand_node(prop, parents[i], &pruned[i], &pruned_n[i], {opt.prune_below});
        });
        std::vector<TrajectoryNode> level;
        for (std::size_t i = 0; i < parents.size(); ++i) {
            for (auto &c : kids[i]) {
                c.parent = static_cast<std::ptrdiff_t>(i);
                level.push_back(std::move(c));
            }
            tree.pruned_measure += pruned[i];
            tree.pruned_count += pruned_n[i];
        }
        tree.levels.push_back(std::move(level));
    }

    if (opt.verify) {
        const auto all = l.all();
        const auto sbb = set_difference(all, l.units());
        double deferred = 0.0, average = 0.0;
        Matrix unmeasured = root.state.matrix;
        for (std::size_t m = 1; m <= n; ++m) {
            unmeasured = propagate_interval(prop, unmeasured, m - 1);
            Matrix sum = zeros(l.dim_of(sbb));
            for (const auto &node : tree.levels[m])
                sum += partial_trace(l, node.state.matrix, all, sbb);
            average = std::max(average, max_abs(sum - partial_trace(l, unmeasured, all, sbb)));
        }
        // a measured unit still evolves under its own H_U, so the end-applied
        // operator is P_r carried forward by that free evolution
        std::vector<std::vector<Matrix>> moved(n);
        std::vector<Matrix> trivial;
        for (std::size_t k = 0; k < n; ++k) {
            const Matrix u = unitary_exp(sc.schedule.units[k], prop.boundary(n) - prop.boundary(k + 1));
            for (const auto &p : measurement_of(sc, k, trivial))
                moved[k].push_back(u * p * u.adjoint());
        }
        for (const auto &leaf : tree.leaves()) {
            Matrix m = unmeasured;
            for (std::size_t k = 0; k < n; ++k)
                m = apply_local(l, m, moved[k][static_cast<std::size_t>(leaf.outcomes[k])], {l.unit(k)}, all);
            deferred = std::max(deferred, max_abs(m - leaf.state.matrix));
        }
        tree.deferred_measurement_defect = deferred;
        tree.average_state_defect = average;
    }
    return tree;
}

inline TrajectoryTree branch_all(const Scenario &sc, BranchOptions opt = {}) { return branch_all(Propagator(sc), opt); }

struct SampledLeaf {
    TrajectoryNode node;
    std::size_t count = 0;
    double weight = 0.0; // count / total
};

struct SampleResult {
    std::uint64_t seed = 0;
    std::size_t total = 0;
    std::vector<SampledLeaf> leaves; // ordered by outcome string
};

/// Monte Carlo sampling of outcome records. Each sample draws from its own
/// stream seeded with (seed, sample index), so the result does not depend on
/// evaluation order. Visited prefixes are memoized, so the cost is bounded by
/// the number of distinct records seen.
inline SampleResult sample_trajectories(const Propagator &prop, std::uint64_t seed, std::size_t count) {
    const auto n = prop.num_intervals();
    struct Entry {
        TrajectoryNode node;
        bool expanded = false;
        std::vector<TrajectoryNode> children;
    };
    std::map<std::vector<int>, Entry> memo;
    TrajectoryNode root;
    root.state = initial_state(prop.scenario());
    root.prob = root.state.norm();
    memo[{}] = {root, false, {}};

    std::map<std::vector<int>, std::size_t> counts;
    for (std::size_t s = 0; s < count; ++s) {
        std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                          static_cast<std::uint32_t>(s), static_cast<std::uint32_t>(std::uint64_t(s) >> 32)};
        std::mt19937_64 rng(seq);
        std::vector<int> prefix;
        for (std::size_t depth = 0; depth < n; ++depth) {
            auto &e = memo.at(prefix);
            if (!e.expanded) {
                double pruned = 0.0;
                std::size_t pruned_n = 0;
                e.children = expand_node(prop, e.node, &pruned, &pruned_n);
                e.expanded = true;
                for (const auto &c : e.children)
                    memo.emplace(c.outcomes, Entry{c, false, {}});
            }
            const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
            double total = 0.0;
            for (const auto &c : e.children)
                total += c.prob;
            double acc = 0.0;
            const TrajectoryNode *pick = &e.children.back();
            for (const auto &c : e.children) {
                acc += c.prob / total;
                if (u < acc) {
                    pick = &c;
                    break;
                }
            }
            prefix = pick->outcomes;
        }
        ++counts[prefix];
    }

    SampleResult out;
    out.seed = seed;
    out.total = count;
    for (const auto &[key, c] : counts)
        out.leaves.push_back({memo.at(key).node, c, static_cast<double>(c) / static_cast<double>(count)});
    return out;
}

// ---------------------------------------------------------------------------
// instantaneous-kick instruments

struct InstrumentMap {
    int outcome = 0;
    Matrix choi; // input (x) output, dim_S^2 square
};

/// Instruments rho_S -> tr_U{P_r e^{-i v} (rho_S (x) rho_U) e^{i v} P_r}.
/// `v` acts on S (x) U with the system factor first.
inline std::vector<InstrumentMap> kick_instruments(const Matrix &v, const Matrix &rho_u, const std::vector<Matrix> &ops) {
    const auto du = rho_u.rows();
    if (du == 0 || v.rows() % du != 0)
        throw LayoutError("kick_instruments: kick dimension is not a multiple of the unit dimension");
    const auto ds = v.rows() / du;
    if (measurement_defect(ops) > tol::positivity_floor)
        throw PreconditionError("kick_instruments: measurement violates sum_r P_r^2 = 1");
    auto layout = CompositeLayout::make(static_cast<std::size_t>(ds), 0, 0, {static_cast<std::size_t>(du)});
    const FactorSet su{0, 1};
    const Matrix k = unitary_exp(v, 1.0);
    std::vector<InstrumentMap> out;
    for (std::size_t r = 0; r < ops.size(); ++r) {
        const Matrix pk = kron(identity(static_cast<std::size_t>(ds)), ops[r]) * k;
        auto map = [&](const Matrix &x) {
            Matrix joint = pk * kron(x, rho_u) * pk.adjoint();
            return partial_trace(layout, joint, su, {0});
        };
        out.push_back({static_cast<int>(r), choi_from_superop(superop_of(map, ds))});
    }
    return out;
}

} // namespace rithermo
