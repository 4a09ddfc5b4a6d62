// Acceptance criteria 1-10: one PASS/FAIL line each; nonzero exit if any fails.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>

#include "rithermo/markov.hpp"
#include "rithermo/pipeline.hpp"
#include "rithermo/presets.hpp"
#include "rithermo/random.hpp"
#include "rithermo/thermo.hpp"

using namespace rithermo;

namespace {

struct Outcome {
    bool pass = true;
    std::string detail;
};

std::string num(double x) {
    char b[32];
    std::snprintf(b, sizeof b, "%.3g", x);
    return b;
}

std::vector<Instant> boundaries(const ProtocolSchedule &s) {
    std::vector<Instant> g;
    for (std::size_t m = 0; m < s.boundary_count(); ++m)
        g.push_back(before(s.boundary(m)));
    return g;
}

std::vector<Matrix> unmeasured_at(const Propagator &prop, const std::vector<Instant> &grid) {
    std::vector<Matrix> out;
    walk_unmeasured(prop, grid, [&](const Instant &, const Matrix &rho, double) { out.push_back(rho); });
    return out;
}

// ---- 1 ----
Outcome dual_route() {
    random::Rng rng(1001);
    double route = 0.0, lo = 0.0;
    std::size_t points = 0;
    for (int i = 0; i < 100; ++i) {
        random::ScenarioOptions o;
        o.energetic_units = i % 2 == 1;
        o.driven_coupling = i % 3 == 0;
        auto sc = random::scenario(rng, o);
        Propagator prop(sc);
        ThermoContext ctx(prop);
        for (const auto &r : average_ledger(ctx, make_grid(sc.schedule, 8))) {
            route = std::max(route, std::abs(r.Sigma - r.Sigma_relent));
            lo = std::min(lo, r.Sigma);
            ++points;
        }
    }
    return {route <= 1e-9 && lo >= -1e-9, "100 scenarios, " + std::to_string(points) + " grid points: max |route gap| " +
                                              num(route) + " (tol 1e-9), min Sigma " + num(lo) + " (tol -1e-9)"};
}

// ---- 2, 3 ----
struct MeasuredStats {
    double state = 0.0, w = 0.0, q = 0.0, q2 = 0.0;
    double chain_lo = 0.0, sigma_lo = 0.0, gap = 0.0;
    std::size_t branches = 0;
};

const MeasuredStats &measured_stats() {
    static const MeasuredStats s = [] {
        MeasuredStats s;
        random::Rng rng(2002);
        using M = random::ScenarioOptions::Measurement;
        const M kinds[] = {M::povm, M::projective, M::commuting, M::povm, M::projective};
        for (int i = 0; i < 50; ++i) {
            random::ScenarioOptions o;
            o.measured = true;
            o.measurement = kinds[i % 5];
            o.energetic_units = i % 2 == 0;
            o.bath_spins_max = 3;
            if (i % 5 == 4) {
                o.bath_spins_min = o.bath_spins_max = 1;
                o.bath2_spins_min = o.bath2_spins_max = 1;
            }
            auto sc = random::scenario(rng, o);
            Propagator prop(sc);
            ThermoContext ctx(prop);
            auto tree = branch_all(prop, BranchOptions{});
            auto tl = tree_ledger(ctx, tree);
            const auto rhos = unmeasured_at(prop, boundaries(sc.schedule));
            s.state = std::max(s.state, tree.average_state_defect);
            for (std::size_t m = 0; m < tl.levels.size(); ++m) {
                const auto &a = tl.averages[m];
                const auto &b = tl.boundaries[m];
                s.w = std::max(s.w, std::abs(a.w - b.W));
                s.q = std::max(s.q, std::abs(a.q - b.Q));
                s.q2 = std::max(s.q2, std::abs(a.q2 - b.Q2));
                s.chain_lo = std::min(s.chain_lo, a.sigma - b.Sigma);
                s.sigma_lo = std::min(s.sigma_lo, b.Sigma);
                // right-hand side straight from the tree states
                const double rhs = average_sigma_gap(ctx, tree.levels[m], rhos[m]);
                s.gap = std::max(s.gap, std::abs((a.sigma - b.Sigma) - rhs));
                s.branches += tl.levels[m].size();
            }
        }
        return s;
    }();
    return s;
}

Outcome averaging() {
    const auto &s = measured_stats();
    const bool ok = s.state <= 1e-10 && s.w <= 1e-10 && s.q <= 1e-10 && s.q2 <= 1e-10;
    return {ok, "50 measured scenarios, " + std::to_string(s.branches) + " branch nodes: state " + num(s.state) +
                    ", |sum p w - W| " + num(s.w) + ", |sum p q1 - Q1| " + num(s.q) + ", |sum p q2 - Q2| " + num(s.q2) +
                    " (tol 1e-10)"};
}

Outcome chain() {
    const auto &s = measured_stats();
    const bool ok = s.chain_lo >= -1e-9 && s.sigma_lo >= -1e-9 && s.gap <= 1e-10;
    return {ok, "min(sum p sigma - Sigma) " + num(s.chain_lo) + ", min Sigma " + num(s.sigma_lo) +
                    " (tol -1e-9); max |gap - rhs| " + num(s.gap) + " (tol 1e-10)"};
}

// ---- 4 ----
Outcome trivial_measurement() {
    random::Rng rng(4004);
    double worst = 0.0;
    for (int i = 0; i < 30; ++i) {
        random::ScenarioOptions o;
        o.measured = true;
        o.measurement = random::ScenarioOptions::Measurement::trivial;
        o.energetic_units = i % 2 == 0;
        if (i % 3 == 0) {
            o.bath_spins_min = o.bath_spins_max = 1;
            o.bath2_spins_min = o.bath2_spins_max = 1;
        }
        auto sc = random::scenario(rng, o);
        Propagator prop(sc);
        ThermoContext ctx(prop);
        auto tl = tree_ledger(ctx, branch_all(prop, BranchOptions{}));
        for (std::size_t m = 0; m < tl.levels.size(); ++m)
            for (const auto &r : tl.levels[m])
                worst = std::max(worst, std::abs(r.sigma - tl.boundaries[m].Sigma));
    }
    return {worst <= 1e-11, "30 scenarios with P_r = 1: max |sigma - Sigma| " + num(worst) + " (tol 1e-11)"};
}

// ---- 5 ----
Matrix oracle_reduced_gibbs(const Matrix &h, std::size_t dx, std::size_t db, double beta) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(h);
    const double e0 = es.eigenvalues().minCoeff();
    Eigen::VectorXd w = (-beta * (es.eigenvalues().array() - e0)).exp();
    Matrix g = es.eigenvectors() * w.cast<cplx>().asDiagonal() * es.eigenvectors().adjoint();
    g /= g.trace();
    Matrix r = Matrix::Zero(static_cast<Eigen::Index>(dx), static_cast<Eigen::Index>(dx));
    for (std::size_t a = 0; a < dx; ++a)
        for (std::size_t b = 0; b < dx; ++b)
            for (std::size_t k = 0; k < db; ++k)
                r(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) +=
                    g(static_cast<Eigen::Index>(a * db + k), static_cast<Eigen::Index>(b * db + k));
    return r;
}

Outcome mean_force_check() {
    random::Rng rng(5005);
    double worst = 0.0;
    bool monotone = true;
    for (int i = 0; i < 100; ++i) {
        const std::size_t db = std::size_t{2} << random::uniform_int(rng, 0, 3); // 2..16
        auto l = CompositeLayout::make(2, db, 0, {});
        const Matrix hx = random::hermitian(rng, 2), hb = random::hermitian(rng, db);
        const Matrix v = random::hermitian(rng, 2 * db);
        const double beta = random::uniform(rng, 0.3, 2.0);
        auto full = [&](double eps) { return Matrix(kron(hx, identity(db)) + kron(identity(2), hb) + eps * v); };
        auto mf = mean_force(l, full(1.0), {0, 1}, hb, {1}, beta, false);
        const Matrix pistar = herm_fn(mf.hstar, [&](double e) { return std::exp(-beta * e - mf.log_zstar); });
        worst = std::max(worst, max_abs(pistar - oracle_reduced_gibbs(full(1.0), 2, db, beta)));
        // weak-coupling limit
        const Matrix pi_x = oracle_reduced_gibbs(kron(hx, identity(db)), 2, db, beta);
        double prev = std::numeric_limits<double>::infinity();
        for (double eps : {1.0, 0.1, 0.01}) {
            auto m = mean_force(l, full(eps), {0, 1}, hb, {1}, beta, false);
            const double d = max_abs(m.pistar - pi_x);
            monotone = monotone && d <= prev;
            prev = d;
        }
    }
    return {worst <= 1e-10 && monotone, "100 models (bath dim 2-16): max |exp(-beta H*)/Z* - tr_B gibbs| " + num(worst) +
                                              " (tol 1e-10); weak-coupling distance monotone: " +
                                              (monotone ? "yes" : "no")};
}

// ---- 6 ----
Outcome fixed_point() {
    double worst = 0.0;
    std::string per;
    for (const char *name : {"swap-prepare-relax", "swap-prepare-relax-weak"}) {
        auto sc = presets::make(name);
        Propagator prop(sc);
        const Matrix pistar = system_mean_force(sc, before(sc.schedule.start())).pistar;
        double w = 0.0;
        for (const auto &m : tomographic_maps(prop, markov_grid(sc.schedule, 20)))
            w = std::max(w, fixed_point_check(m, pistar));
        worst = std::max(worst, w);
        per += std::string(per.empty() ? "" : ", ") + name + " " + num(w);
    }
    return {worst <= 1e-9, "20-point grids, max |Lambda pi* - pi*|: " + per + " (tol 1e-9)"};
}

// ---- 7 ----
Outcome monotonicity() {
    auto ps = presets::make("partial-swap-reset");
    Propagator pp(ps);
    auto grid = markov_grid(ps.schedule, 20);
    for (const auto &b : boundary_grid(ps.schedule))
        grid.push_back(b);
    std::sort(grid.begin(), grid.end());
    grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
    auto sw = markov_sweep(pp, grid);
    double lo = std::numeric_limits<double>::infinity();
    for (const auto &r : sw.rows)
        lo = std::min(lo, r.delta_sigma_s);

    presets::PrepareRelax p; // documented parameter point
    auto sc = presets::prepare_relax(p);
    Propagator prop(sc);
    auto back = markov_sweep(prop, markov_grid(sc.schedule, 20));
    const MarkovSweepRow *found = nullptr;
    for (const auto &r : back.rows)
        if (r.delta_sigma_s < -1e-4 && r.min_choi_eigenvalue < -1e-4 &&
            (!found || r.delta_sigma_s < found->delta_sigma_s))
            found = &r;
    std::string d = "partial swap: " + std::to_string(sw.rows.size()) + " pairs, min dSigma_S " + num(lo) +
                    " (tol -1e-9); backflow preset (g=" + num(p.g) + ", kappa=" + num(p.kappa) + ", 3 spins): ";
    if (found)
        d += "pair (" + num(found->t1.t) + ", " + num(found->t2.t) + ") dSigma_S " + num(found->delta_sigma_s) +
             ", min Choi eigenvalue " + num(found->min_choi_eigenvalue);
    else
        d += "no joint pair found";
    return {lo >= -1e-9 && found != nullptr, d};
}

// ---- 8 ----
Outcome two_bath() {
    random::Rng rng(8008);
    double lo = 0.0, route = 0.0, balance = 0.0, bookkeeping = 0.0;
    for (int i = 0; i < 50; ++i) {
        random::ScenarioOptions o;
        o.bath_spins_min = 1;
        o.bath_spins_max = 2;
        o.bath2_spins_min = 1;
        o.bath2_spins_max = 2;
        o.units_min = 1;
        o.units_max = 2;
        o.energetic_units = i % 2 == 1;
        auto sc = random::scenario(rng, o);
        Propagator prop(sc);
        ThermoContext ctx(prop);
        auto rows = average_ledger(ctx, make_grid(sc.schedule, 8));
        const double e0 = rows.front().E_star;
        for (const auto &r : rows) {
            auto hb = heat_bookkeeping(r, ctx);
            lo = std::min(lo, hb.second_law);
            route = std::max(route, std::abs(hb.second_law - r.Sigma_relent));
            balance = std::max(balance, std::abs(r.W_power + r.Q1_micro + r.Q2 - (r.E_star - e0)));
            bookkeeping = std::max(bookkeeping, std::abs(r.W - r.W_power));
        }
    }
    const bool ok = lo >= -1e-9 && route <= 1e-9 && balance <= 1e-10 && bookkeeping <= 1e-10;
    return {ok, "50 scenarios: min second law " + num(lo) + " (tol -1e-9), |closed form gap| " + num(route) +
                    " (tol 1e-9), energy balance " + num(balance) + ", |W - W_power| " + num(bookkeeping) +
                    " (tol 1e-10)"};
}

// ---- 9 ----
Outcome energetic_units() {
    random::Rng rng(9009);
    double commuting_avg = 0.0, commuting_traj = 0.0, general = 0.0;
    for (int i = 0; i < 40; ++i) {
        random::ScenarioOptions o;
        o.measured = true;
        o.energetic_units = true;
        o.bath_spins_max = 3;
        const bool commuting = i % 2 == 0;
        o.measurement = commuting ? random::ScenarioOptions::Measurement::commuting
                                  : (i % 4 == 1 ? random::ScenarioOptions::Measurement::povm
                                                : random::ScenarioOptions::Measurement::projective);
        auto sc = random::scenario(rng, o);
        Propagator prop(sc);
        ThermoContext ctx(prop);
        auto tl = tree_ledger(ctx, branch_all(prop, BranchOptions{}));
        for (std::size_t m = 0; m < tl.levels.size(); ++m) {
            const auto &a = tl.averages[m];
            if (commuting) {
                commuting_avg = std::max(commuting_avg, std::abs(a.q_meas));
                commuting_traj = std::max(commuting_traj, a.max_abs_q_backaction);
            }
            general = std::max(general, std::abs(a.q - tl.boundaries[m].Q));
        }
    }
    const bool ok = commuting_avg <= 1e-11 && commuting_traj <= 1e-11 && general <= 1e-10;
    return {ok, "[P_r, H_U] = 0: |sum p q_meas| " + num(commuting_avg) + ", max per-trajectory back-action energy " +
                    num(commuting_traj) + " (tol 1e-11); general |sum p q - Q| " + num(general) + " (tol 1e-10)"};
}

// ---- 10 ----
Outcome determinism() {
    namespace fs = std::filesystem;
    const auto root = fs::temp_directory_path() / "ritherm_acceptance";
    fs::remove_all(root);
    const std::pair<const char *, pipeline::Kind> runs[] = {
        {"driven-qubit-spinbath", pipeline::Kind::average},    {"driven-qubit-spinbath", pipeline::Kind::branches},
        {"driven-qubit-spinbath", pipeline::Kind::sample},     {"swap-prepare-relax", pipeline::Kind::markov_sweep},
        {"two-bath-qubit", pipeline::Kind::twobath},
    };
    std::size_t files = 0;
    bool same = true;
    std::string bad;
    for (const auto &[name, kind] : runs) {
        std::vector<std::string> digests[2];
        for (int rep = 0; rep < 2; ++rep) {
            pipeline::RunManifest m;
            m.scenario = name;
            m.pipeline = kind;
            m.grid = 10;
            m.seed = 99;
            m.samples = 5000;
            m.out = (root / (std::string(name) + "_" + pipeline::to_string(kind) + "_" + std::to_string(rep))).string();
            std::ostringstream log, err;
            auto r = pipeline::run(m, log, err);
            for (const auto &a : r.artifacts) {
                std::ifstream in(a, std::ios::binary);
                std::ostringstream os;
                os << in.rdbuf();
                digests[rep].push_back(fs::path(a).filename().string() + ":" + pipeline::hex(pipeline::fnv1a(os.str())));
            }
        }
        files += digests[0].size();
        if (digests[0].empty() || digests[0] != digests[1]) {
            same = false;
            bad += std::string(" ") + name + "/" + pipeline::to_string(kind);
        }
    }
    fs::remove_all(root);
    return {same, std::to_string(files) + " artifacts over 5 pipelines compared across two runs" +
                      (same ? ": byte-identical" : ": differences in" + bad)};
}

} // namespace

int main() {
    const std::pair<const char *, std::function<Outcome()>> criteria[] = {
        {"dual-route entropy production", dual_route},
        {"averaging identities after measurement", averaging},
        {"inequality chain and gap", chain},
        {"trivial-measurement reduction", trivial_measurement},
        {"mean-force correctness", mean_force_check},
        {"fixed point of the reduced dynamics", fixed_point},
        {"dissipation monotonicity under Markovianity", monotonicity},
        {"two-bath second law", two_bath},
        {"energetic-units measurement energy", energetic_units},
        {"determinism", determinism},
    };
    int failures = 0;
    int i = 0;
    for (const auto &[name, fn] : criteria) {
        ++i;
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = fn();
        } catch (const std::exception &e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        if (secs >= 60.0) {
            o.pass = false;
            o.detail += " [over the 60 s budget]";
        }
        std::printf("%s criterion %d (%s): %s [%.1f s]\n", o.pass ? "PASS" : "FAIL", i, name, o.detail.c_str(), secs);
        std::fflush(stdout);
        failures += o.pass ? 0 : 1;
    }
    return failures == 0 ? 0 : 1;
}
