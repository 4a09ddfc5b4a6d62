#pragma once

#include <cinttypes>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "rithermo/config_io.hpp"
#include "rithermo/markov.hpp"
#include "rithermo/thermo.hpp"

namespace rithermo::pipeline {

enum class Kind { average, branches, sample, markov_sweep, twobath };

inline const std::pair<const char *, Kind> kind_names[] = {
    {"average", Kind::average},
    {"branches", Kind::branches},
    {"sample", Kind::sample},
    {"markov-sweep", Kind::markov_sweep},
    {"twobath", Kind::twobath},
};

inline Kind parse_kind(const std::string &s) {
    for (const auto &[n, k] : kind_names)
        if (s == n)
            return k;
    throw ConfigError("unknown pipeline '" + s + "' (known: average, branches, sample, markov-sweep, twobath)");
}

inline const char *to_string(Kind k) {
    for (const auto &[n, kk] : kind_names)
        if (k == kk)
            return n;
    return "?";
}

struct RunManifest {
    std::string scenario; // preset name or config path
    Kind pipeline = Kind::average;
    std::size_t grid = 20;
    std::uint64_t seed = 1;
    std::size_t samples = 10000;
    std::string out = "out";
    double tol_scale = 1.0;
};

/// Tolerances of every emitted check, before scaling.
inline const std::map<std::string, double> &base_tolerances() {
    static const std::map<std::string, double> t = {
        {"dual_route", 1e-9},       {"nonnegativity", 1e-9},   {"work_routes", 1e-10},   {"energy_balance", 1e-10},
        {"marginal_identity", 1e-9}, {"average_state", 1e-10}, {"average_flux", 1e-10},  {"chain", 1e-9},
        {"gap", 1e-10},             {"trivial_reduction", 1e-11}, {"tomography", 1e-9}, {"fixed_point", 1e-9},
        {"monotonicity", 1e-9},     {"sampling_sigmas", 5.0},
    };
    return t;
}

struct Check {
    std::string name;
    std::string relation; // "<=" (value <= tolerance) or ">=" (value >= -tolerance)
    double value = 0.0;
    double tolerance = 0.0;
    bool hard = true;
    bool pass = true;
};

struct RunResult {
    int exit_code = 0;
    std::vector<Check> checks;
    std::vector<std::string> artifacts;
    std::string hash;
};

inline std::string fmt(double x) {
    if (std::isnan(x))
        return "nan";
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

inline std::uint64_t fnv1a(const std::string &s) {
    std::uint64_t h = 14695981039346656037ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

inline std::string hex(std::uint64_t h) {
    char buf[24];
    std::snprintf(buf, sizeof buf, "%016" PRIx64, h);
    return buf;
}

/// Hash of everything that determines the numeric output (not the output path).
inline std::string manifest_hash(const RunManifest &m, const Scenario &sc) {
    std::string s = std::string("pipeline=") + to_string(m.pipeline) + "\ngrid=" + std::to_string(m.grid) +
                    "\nseed=" + std::to_string(m.seed) + "\nsamples=" + std::to_string(m.samples) +
                    "\ntol_scale=" + fmt(m.tol_scale) + "\nscenario=" + config::to_json(sc).dump();
    return hex(fnv1a(s));
}

class Runner {
public:
    Runner(const RunManifest &m, Scenario sc, std::ostream &log)
        : m_(m), sc_(std::move(sc)), log_(log), prop_(sc_), ctx_(prop_) {
        hash_ = manifest_hash(m_, sc_);
        for (const auto &[k, v] : base_tolerances())
            tol_[k] = k == "sampling_sigmas" ? v : v * m_.tol_scale;
    }

    RunResult run() {
        std::filesystem::create_directories(m_.out);
        switch (m_.pipeline) {
        case Kind::average: average(); break;
        case Kind::branches: branches(); break;
        case Kind::sample: sample(); break;
        case Kind::markov_sweep: markov(); break;
        case Kind::twobath: twobath(); break;
        }
        write_report();
        RunResult r;
        r.checks = checks_;
        r.artifacts = artifacts_;
        r.hash = hash_;
        for (const auto &c : checks_)
            if (c.hard && !c.pass)
                r.exit_code = 1;
        return r;
    }

private:
    // ---- output helpers ----
    std::ofstream open(const std::string &file) {
        const auto path = (std::filesystem::path(m_.out) / file).string();
        std::ofstream o(path, std::ios::binary);
        if (!o)
            throw ConfigError("cannot write '" + path + "'");
        o << "# tool: ritherm\n";
        o << "# scenario: " << sc_.name << "\n";
        o << "# pipeline: " << to_string(m_.pipeline) << "\n";
        o << "# grid: " << m_.grid << "\n";
        o << "# seed: " << m_.seed << "\n";
        if (m_.pipeline == Kind::sample)
            o << "# samples: " << m_.samples << "\n";
        o << "# tol_scale: " << fmt(m_.tol_scale) << "\n";
        o << "# manifest_hash: " << hash_ << "\n";
        o << "# tolerances:";
        for (const auto &[k, v] : tol_)
            o << " " << k << "=" << fmt(v);
        o << "\n";
        artifacts_.push_back(path);
        return o;
    }

    static void row(std::ostream &o, const std::vector<std::string> &cells) {
        for (std::size_t i = 0; i < cells.size(); ++i)
            o << (i ? "," : "") << cells[i];
        o << "\n";
    }

    void upper(const std::string &name, double value, const std::string &tol_key, bool hard = true) {
        const double t = tol_.at(tol_key);
        checks_.push_back({name, "<=", value, t, hard, value <= t});
    }
    void lower(const std::string &name, double value, const std::string &tol_key, bool hard = true) {
        const double t = tol_.at(tol_key);
        checks_.push_back({name, ">=", value, t, hard, value >= -t});
    }

    void write_report() {
        auto o = open("report.csv");
        row(o, {"check", "value", "relation", "tolerance", "hard", "verdict"});
        for (const auto &c : checks_) {
            row(o, {c.name, fmt(c.value), c.relation, fmt(c.tolerance), c.hard ? "1" : "0", c.pass ? "PASS" : "FAIL"});
            char buf[256];
            std::snprintf(buf, sizeof buf, "%-4s %-40s %12.4g %-5s %s%.1e\n", !c.hard ? "INFO" : c.pass ? "PASS" : "FAIL", c.name.c_str(),
                          c.value, c.relation.c_str(), (c.relation == ">=" ? "-" : ""), c.tolerance);
            log_ << buf;
        }
    }

    // ---- pipelines ----
    void ledger_file(const std::vector<LedgerSnapshot> &rows) {
        auto o = open("ledger.csv");
        row(o, {"t", "side", "boundary", "energy", "W", "W_power", "F_SU", "Sigma", "Sigma_relent", "E_star", "Q",
                "Q2", "S_thermo", "Sigma_thermo", "Q1_micro", "E_units", "S_SU", "S_tot", "Sigma_S",
                "multi_information", "F_S"});
        const double nan = std::numeric_limits<double>::quiet_NaN();
        for (const auto &r : rows)
            row(o, {fmt(r.at.t), r.at.side == Side::minus ? "-" : "+", r.boundary ? std::to_string(*r.boundary) : "",
                    fmt(r.energy), fmt(r.W), fmt(r.W_power), fmt(r.F_SU), fmt(r.Sigma), fmt(r.Sigma_relent),
                    fmt(r.E_star), fmt(r.Q), fmt(r.Q2), fmt(r.S_thermo), fmt(r.Sigma_thermo), fmt(r.Q1_micro),
                    fmt(r.E_units), fmt(r.S_SU), fmt(r.S_tot), fmt(r.Sigma_S.value_or(nan)),
                    fmt(r.multi_information.value_or(nan)), fmt(r.F_S)});
    }

    void ledger_checks(const std::vector<LedgerSnapshot> &rows) {
        double min_sigma = 0.0, route = 0.0, work = 0.0, balance = 0.0, marginal = 0.0;
        bool have_marginal = false;
        const double e0 = rows.front().E_star;
        for (const auto &r : rows) {
            min_sigma = std::min(min_sigma, r.Sigma);
            route = std::max(route, std::abs(r.Sigma - r.Sigma_relent));
            work = std::max(work, std::abs(r.W - r.W_power));
            balance = std::max(balance, std::abs(r.W_power + r.Q1_micro + r.Q2 - (r.E_star - e0)));
            if (r.Sigma_S) {
                have_marginal = true;
                marginal = std::max(marginal, std::abs(*r.Sigma_S - r.Sigma - *r.multi_information));
            }
        }
        lower("entropy_production_nonnegative", min_sigma, "nonnegativity");
        upper("entropy_production_dual_route", route, "dual_route");
        upper("work_closed_form_vs_power", work, "work_routes");
        upper("energy_balance", balance, "energy_balance");
        if (have_marginal)
            upper("system_marginal_vs_multi_information", marginal, "marginal_identity");
    }

    void average() {
        auto rows = average_ledger(ctx_, make_grid(sc_.schedule, m_.grid));
        ledger_file(rows);
        ledger_checks(rows);
        if (!sc_.two_bath()) {
            double min_th = 0.0;
            for (const auto &r : rows)
                min_th = std::min(min_th, r.Sigma_thermo);
            lower("thermodynamic_entropy_second_law", min_th, "nonnegativity");
        }
    }

    void twobath() {
        if (!sc_.two_bath())
            throw ConfigError("pipeline twobath needs a scenario with a second bath (layout.bath2)");
        auto rows = average_ledger(ctx_, make_grid(sc_.schedule, m_.grid));
        auto o = open("twobath.csv");
        row(o, {"t", "side", "W", "Q1", "Q2", "E_star", "S_thermo", "second_law", "relent_form", "Q1_micro"});
        double min_sl = 0.0, route = 0.0;
        for (const auto &r : rows) {
            auto hb = heat_bookkeeping(r, ctx_);
            row(o, {fmt(r.at.t), r.at.side == Side::minus ? "-" : "+", fmt(r.W), fmt(hb.Q), fmt(hb.Q2),
                    fmt(hb.E_star), fmt(hb.S_thermo), fmt(hb.second_law), fmt(r.Sigma_relent), fmt(r.Q1_micro)});
            min_sl = std::min(min_sl, hb.second_law);
            route = std::max(route, std::abs(hb.second_law - r.Sigma_relent));
        }
        lower("two_bath_second_law", min_sl, "nonnegativity");
        upper("two_bath_relative_entropy_form", route, "dual_route");
        ledger_checks(rows);
    }

    void branches() {
        TrajectoryTree tree;
        tree = branch_all(prop_, BranchOptions{});
        auto tl = tree_ledger(ctx_, tree);
        ledger_file(tl.boundaries);

        auto o = open("branches.csv");
        row(o, {"depth", "t", "outcomes", "prob", "w", "f", "q", "q2", "q_meas", "q_backaction", "s", "sigma",
                "sigma_alt", "e_star"});
        bool trivial = true;
        for (std::size_t k = 0; k < sc_.num_units(); ++k) {
            std::vector<Matrix> scratch;
            trivial = trivial && measurement_of(sc_, k, scratch).size() == 1;
        }
        double trivial_gap = 0.0;
        for (std::size_t m = 0; m < tl.levels.size(); ++m)
            for (const auto &r : tl.levels[m]) {
                row(o, {std::to_string(m), fmt(r.at.t), outcome_label(r.outcomes), fmt(r.prob), fmt(r.w), fmt(r.f),
                        fmt(r.q), fmt(r.q2), fmt(r.q_meas), fmt(r.q_backaction), fmt(r.s), fmt(r.sigma),
                        fmt(r.sigma_alt), fmt(r.e_star)});
                trivial_gap = std::max(trivial_gap, std::abs(r.sigma - tl.boundaries[m].Sigma));
            }

        auto a = open("branch_averages.csv");
        row(a, {"depth", "t", "branches", "measure", "W", "avg_w", "Q", "avg_q", "Q2", "avg_q2", "avg_q_meas",
                "avg_q_backaction", "Sigma", "avg_sigma", "gap", "F_SU", "avg_f"});
        double flux = 0.0, meas = 0.0, chain_lo = 0.0, sigma_lo = 0.0, gap = 0.0, free = 0.0;
        for (std::size_t m = 0; m < tl.averages.size(); ++m) {
            const auto &v = tl.averages[m];
            const auto &b = tl.boundaries[m];
            row(a, {std::to_string(m), fmt(b.at.t), std::to_string(v.branches), fmt(v.measure), fmt(b.W), fmt(v.w),
                    fmt(b.Q), fmt(v.q), fmt(b.Q2), fmt(v.q2), fmt(v.q_meas), fmt(v.q_backaction), fmt(b.Sigma),
                    fmt(v.sigma), fmt(v.gap), fmt(b.F_SU), fmt(v.f)});
            flux = std::max({flux, std::abs(v.w - b.W), std::abs(v.q - b.Q), std::abs(v.q2 - b.Q2)});
            meas = std::max({meas, std::abs(v.q_meas), std::abs(v.q_backaction - v.q_meas)});
            chain_lo = std::min(chain_lo, v.sigma - b.Sigma);
            sigma_lo = std::min(sigma_lo, b.Sigma);
            gap = std::max(gap, std::abs(v.sigma - b.Sigma - v.gap));
            if (!sc_.two_bath())
                free = std::max(free, std::abs(v.f - b.F_SU + v.gap / ctx_.beta()));
        }
        upper("average_state_identity", tree.average_state_defect, "average_state");
        upper("deferred_measurement", tree.deferred_measurement_defect, "average_state");
        upper("average_work_and_heat", flux, "average_flux");
        upper("average_measurement_energy", meas, "average_flux");
        lower("chain_stochastic_minus_average", chain_lo, "chain");
        lower("chain_average_nonnegative", sigma_lo, "chain");
        upper("chain_gap_identity", gap, "gap");
        if (!sc_.two_bath())
            upper("average_free_energy_gap", free, "gap");
        if (trivial)
            upper("trivial_measurement_reduction", trivial_gap, "trivial_reduction");
        log_ << "branches: " << tree.leaves().size() << " leaves, pruned " << tree.pruned_count << " (measure "
             << fmt(tree.pruned_measure) << ")\n";
    }

    void sample() {
        auto res = sample_trajectories(prop_, m_.seed, m_.samples);
        const Instant end = before(sc_.schedule.end());
        const auto snap = average_ledger(ctx_, {end}).front();
        auto o = open("samples.csv");
        row(o, {"outcomes", "count", "weight", "prob", "w", "q", "q_meas", "sigma"});
        double mw = 0.0, mw2 = 0.0, ms = 0.0, ms2 = 0.0;
        for (const auto &leaf : res.leaves) {
            auto r = stochastic_ledger(ctx_, leaf.node, snap);
            row(o, {outcome_label(r.outcomes), std::to_string(leaf.count), fmt(leaf.weight), fmt(r.prob), fmt(r.w),
                    fmt(r.q), fmt(r.q_meas), fmt(r.sigma)});
            mw += leaf.weight * r.w;
            mw2 += leaf.weight * r.w * r.w;
            ms += leaf.weight * r.sigma;
            ms2 += leaf.weight * r.sigma * r.sigma;
        }
        const double n = static_cast<double>(res.total);
        const double ew = std::sqrt(std::max(0.0, mw2 - mw * mw) / n);
        log_ << "sampled " << res.total << " records, " << res.leaves.size() << " distinct; mean w " << fmt(mw)
             << " +- " << fmt(ew) << ", mean sigma " << fmt(ms) << "\n";
        // |mean - W| in units of the standard error
        const double z = ew > 0.0 ? std::abs(mw - snap.W) / ew : (std::abs(mw - snap.W) <= 1e-12 ? 0.0 : 1e300);
        upper("sampled_work_vs_average_sigmas", z, "sampling_sigmas", false);
        lower("average_entropy_production_nonnegative", snap.Sigma, "nonnegativity");
    }

    void markov() {
        const auto times = markov_grid(sc_.schedule, m_.grid);
        auto sw = markov_sweep(prop_, times);
        auto o = open("markov.csv");
        row(o, {"t1", "side1", "t2", "side2", "min_choi_eigenvalue", "fixed_point_defect", "delta_sigma_s",
                "relent_route", "tp_defect", "condition_number", "truncated", "verdict", "flags"});
        double route = 0.0, mono = 0.0;
        std::size_t backflow = 0;
        for (const auto &r : sw.rows) {
            row(o, {fmt(r.t1.t), r.t1.side == Side::minus ? "-" : "+", fmt(r.t2.t), r.t2.side == Side::minus ? "-" : "+",
                    fmt(r.min_choi_eigenvalue), fmt(r.fixed_point_defect), fmt(r.delta_sigma_s), fmt(r.relent_route),
                    fmt(r.tp_defect), fmt(r.condition_number), std::to_string(r.truncated), rithermo::to_string(r.verdict),
                    "\"" + r.flags + "\""});
            route = std::max(route, std::abs(r.delta_sigma_s - r.relent_route));
            if (r.delta_sigma_s < -1e-4 && r.min_choi_eigenvalue < -1e-4)
                ++backflow;
        }
        const std::string whole = dissipation_preconditions(sc_, after(sc_.schedule.start()), times.back());
        double fp = 0.0;
        for (double d : sw.fixed_point_defects)
            fp = std::max(fp, d);
        // contractivity applies on pairs with a CP intermediate map and pi* fixed at both ends
        std::size_t idx = 0;
        for (std::size_t i = 0; i < times.size(); ++i)
            for (std::size_t j = i + 1; j < times.size(); ++j, ++idx) {
                const auto &r = sw.rows[idx];
                if (r.verdict == Verdict::markovian && r.flags.empty() && sw.fixed_point_defects[i] <= tol_.at("fixed_point") &&
                    sw.fixed_point_defects[j] <= tol_.at("fixed_point"))
                    mono = std::min(mono, r.delta_sigma_s);
            }
        upper("tomography_linearity", tomography_residual(prop_, sw.maps.back(), 20, m_.seed), "tomography");
        upper("dissipation_dual_route", route, "dual_route");
        upper("fixed_point", fp, "fixed_point", whole.empty());
        lower("dissipation_monotone_where_markovian", mono, "monotonicity");
        checks_.push_back({"backflow_pairs", "count", static_cast<double>(backflow), 0.0, false, true});
        if (!whole.empty())
            log_ << "no sign guarantee: " << whole << "\n";
    }

    RunManifest m_;
    Scenario sc_;
    std::ostream &log_;
    Propagator prop_;
    ThermoContext ctx_;
    std::string hash_;
    std::map<std::string, double> tol_;
    std::vector<Check> checks_;
    std::vector<std::string> artifacts_;
};

/// Runs one manifest. Exit codes: 0 success, 1 hard invariant failure, 2
/// configuration error.
inline RunResult run(const RunManifest &m, std::ostream &log, std::ostream &err) {
    RunResult r;
    try {
        if (!(m.tol_scale > 0.0))
            throw ConfigError("--tol-scale must be positive");
        auto sc = config::resolve(m.scenario);
        auto issues = validate(sc);
        if (!issues.empty())
            throw ConfigError("invalid scenario '" + sc.name + "':\n" + describe(issues));
        Runner runner(m, std::move(sc), log);
        r = runner.run();
    } catch (const BranchCapExceeded &e) {
        err << "error: " << e.what() << "\n";
        r.exit_code = 2;
    } catch (const ConfigError &e) {
        err << "error: " << e.what() << "\n";
        r.exit_code = 2;
    } catch (const PreconditionError &e) {
        err << "error: " << e.what() << "\n";
        r.exit_code = 2;
    }
    return r;
}

/// Validates a preset or config without running dynamics; returns the issues.
inline std::vector<Issue> validate_config(const std::string &name_or_path) {
    try {
        return validate(config::resolve(name_or_path));
    } catch (const ConfigError &e) {
        return {{"config", e.what()}};
    }
}

} // namespace rithermo::pipeline
