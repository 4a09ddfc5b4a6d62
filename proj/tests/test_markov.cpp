#include "support.hpp"

#include "rithermo/markov.hpp"
#include "rithermo/presets.hpp"

using namespace test;

namespace {

// d |Omega><Omega| with the input factor first, built entry by entry.
Matrix maximally_entangled_choi(Eigen::Index d) {
    Matrix j = Matrix::Zero(d * d, d * d);
    for (Eigen::Index a = 0; a < d; ++a)
        for (Eigen::Index b = 0; b < d; ++b)
            j(a * d + a, b * d + b) = 1.0;
    return j;
}

Matrix unitary_choi(const Matrix &u) {
    const auto d = u.rows();
    Eigen::VectorXcd omega = Eigen::VectorXcd::Zero(d * d);
    for (Eigen::Index a = 0; a < d; ++a)
        omega(a * d + a) = 1.0;
    Eigen::VectorXcd psi = kron(identity(static_cast<std::size_t>(d)), u) * omega;
    return psi * psi.adjoint();
}

Scenario random_prepared(Rng &rng) {
    random::ScenarioOptions o;
    o.bath_spins_min = 1;
    o.bath_spins_max = 3;
    o.units_min = 2;
    o.units_max = 3;
    auto sc = random::scenario(rng, o);
    sc.schedule.intervals[0].kick = spin::swap_generator(2);
    return sc;
}

} // namespace

TEST_CASE("preparation basis spans the operator space", "[markov]") {
    for (std::size_t d : {2u, 3u}) {
        auto basis = preparation_basis(d);
        REQUIRE(basis.size() == d * d);
        Matrix m(static_cast<Eigen::Index>(d * d), static_cast<Eigen::Index>(d * d));
        for (std::size_t j = 0; j < basis.size(); ++j) {
            CHECK(basis[j].trace().real() == Catch::Approx(1.0));
            CHECK(min_eigenvalue(basis[j]) > -1e-14);
            m.col(static_cast<Eigen::Index>(j)) = vec(basis[j]);
        }
        CHECK(std::abs(m.determinant()) > 1e-3);
    }
}

TEST_CASE("map right after the preparation is the identity", "[markov]") {
    auto sc = presets::make("swap-prepare-relax");
    Propagator prop(sc);
    auto m = tomographic_map(prop, after(sc.schedule.start()));
    CHECK(max_abs(m.choi - maximally_entangled_choi(2)) < 1e-12);
    CHECK(m.condition_number < 10.0);
}

TEST_CASE("bath-free uncoupled evolution gives a unitary channel", "[markov]") {
    presets::PartialSwap p;
    p.g = 0.0;
    p.omega = 1.3;
    auto sc = presets::partial_swap(p);
    Propagator prop(sc);
    auto times = boundary_grid(sc.schedule);
    auto maps = tomographic_maps(prop, times);
    for (std::size_t i = 0; i < maps.size(); ++i) {
        const double t = times[i].t - sc.schedule.start();
        Matrix u = unitary_exp(0.5 * p.omega * spin::sz(), t);
        CHECK(max_abs(maps[i].choi - unitary_choi(u)) < 1e-12);
        auto ev = eigh(maps[i].choi).values;
        CHECK(ev(ev.size() - 1) == Catch::Approx(2.0).margin(1e-12));
        CHECK(std::abs(ev(ev.size() - 2)) < 1e-12);
    }
    auto div = divisibility_check(maps[4], maps[1]);
    CHECK(div.min_choi_eigenvalue >= -1e-12);
    CHECK(div.truncated == 0);
    CHECK(div.verdict == Verdict::markovian);
    const double dt = times[4].t - times[1].t;
    CHECK(max_abs(div.intermediate.choi - unitary_choi(unitary_exp(0.5 * p.omega * spin::sz(), dt))) < 1e-11);
}

TEST_CASE("tomography reproduces held-out preparations in random strong-coupling scenarios", "[markov]") {
    Rng rng(4242);
    for (int rep = 0; rep < 5; ++rep) {
        auto sc = random_prepared(rng);
        Propagator prop(sc);
        auto times = markov_grid(sc.schedule, 3);
        auto maps = tomographic_maps(prop, times);
        for (const auto &m : maps) {
            CHECK(trace_preservation_defect(m.choi) < 1e-10);
            CHECK(tomography_residual(prop, m, 20, 17 + static_cast<std::uint64_t>(rep)) < 1e-9);
        }
        // actually-prepared state of the configured run
        auto run = simulate_reduced(prop, sc.unit_states[0], times);
        for (std::size_t i = 0; i < times.size(); ++i)
            CHECK(max_abs(apply_choi(maps[i].choi, run.prepared) - run.states[i]) < 1e-9);
        // swap preparation hands the system the unit state
        CHECK(max_abs(run.prepared - sc.unit_states[0]) < 1e-12);
    }
}

TEST_CASE("tomography preconditions", "[markov]") {
    auto sc = presets::make("swap-prepare-relax");
    auto no_kick = sc;
    no_kick.schedule.intervals[0].kick.reset();
    CHECK_THROWS_AS(tomographic_map(Propagator(no_kick), after(1.0)), PreconditionError);

    auto weak_kick = sc;
    weak_kick.schedule.intervals[0].kick = zeros(4);
    CHECK_THROWS_AS(tomographic_map(Propagator(weak_kick), after(1.0)), NumericError);

    auto joint = presets::make("partial-swap-reset");
    Matrix all = sc.unit_states[0];
    for (std::size_t k = 1; k < joint.num_units(); ++k)
        all = kron(all, joint.unit_states[k]);
    joint.joint_unit_state = all;
    joint.unit_states.clear();
    CHECK_THROWS_AS(tomographic_map(Propagator(joint), after(1.0)), PreconditionError);
}

TEST_CASE("divisibility against the identity returns the map itself", "[markov]") {
    auto sc = presets::make("swap-prepare-relax");
    Propagator prop(sc);
    auto m = tomographic_map(prop, after(3.0));
    DynamicalMap id;
    id.choi = identity_choi(2);
    auto div = divisibility_check(m, id);
    CHECK(max_abs(div.intermediate.choi - m.choi) < 1e-12);
    CHECK(div.truncated == 0);
    CHECK(div.condition_number == Catch::Approx(1.0));
}

TEST_CASE("singular early map gives an indeterminate verdict", "[markov]") {
    // full depolarization: rho -> tr(rho) 1/2
    DynamicalMap dep;
    dep.choi = choi_from_superop(superop_of([](const Matrix &x) { return Matrix(x.trace() * identity(2) / 2.0); }, 2));
    DynamicalMap id;
    id.choi = identity_choi(2);
    auto div = divisibility_check(id, dep);
    CHECK(div.truncated == 3);
    CHECK(div.verdict == Verdict::indeterminate);
    CHECK(std::string(to_string(div.verdict)) == "indeterminate");
}

TEST_CASE("partial-swap reset is CP-divisible and obeys Chapman-Kolmogorov", "[markov]") {
    auto sc = presets::make("partial-swap-reset");
    Propagator prop(sc);
    auto times = boundary_grid(sc.schedule);
    auto maps = tomographic_maps(prop, times);
    for (std::size_t i = 0; i < maps.size(); ++i)
        for (std::size_t j = i + 1; j < maps.size(); ++j) {
            auto div = divisibility_check(maps[j], maps[i]);
            REQUIRE(div.verdict == Verdict::markovian);
            CHECK(div.tp_defect < 1e-10);
            for (std::size_t k = j + 1; k < maps.size(); ++k) {
                auto late = divisibility_check(maps[k], maps[j]);
                const Matrix composed =
                    superop_from_choi(late.intermediate.choi) * superop_from_choi(maps[j].choi);
                CHECK(max_abs(composed - superop_from_choi(maps[k].choi)) < 1e-8);
            }
        }
    // each collision is the same channel: intermediate maps over one interval coincide
    auto a = divisibility_check(maps[2], maps[1]).intermediate.choi;
    auto b = divisibility_check(maps[5], maps[4]).intermediate.choi;
    CHECK(max_abs(a - b) < 1e-10);
}

TEST_CASE("fixed point of the reduced dynamics", "[markov]") {
    SECTION("bath-free partial swap keeps pi_S") {
        auto sc = presets::make("partial-swap-reset");
        Propagator prop(sc);
        const Matrix pi = presets::qubit_thermal(1.0, sc.beta);
        CHECK(max_abs(system_mean_force(sc, before(0.0)).pistar - pi) < 1e-14);
        for (const auto &m : tomographic_maps(prop, markov_grid(sc.schedule, 20)))
            CHECK(fixed_point_check(m, pi) <= 1e-12);
    }
    SECTION("strong and weak dephasing keep pi*_S") {
        for (const char *name : {"swap-prepare-relax", "swap-prepare-relax-weak"}) {
            auto sc = presets::make(name);
            Propagator prop(sc);
            const Matrix pistar = system_mean_force(sc, before(0.0)).pistar;
            for (const auto &m : tomographic_maps(prop, markov_grid(sc.schedule, 20)))
                CHECK(fixed_point_check(m, pistar) <= 1e-9);
        }
    }
    SECTION("strong coupling moves pi*_S away from pi_S") {
        auto sc = presets::make("swap-prepare-relax");
        const Matrix pi = gibbs_state(sc.schedule.system_initial, sc.beta).state;
        CHECK(max_abs(system_mean_force(sc, before(0.0)).pistar - pi) > 1e-2);
    }
    SECTION("driving breaks the fixed point") {
        auto sc = presets::make("swap-prepare-relax-driven");
        Propagator prop(sc);
        const Matrix pistar = system_mean_force(sc, before(0.0)).pistar;
        double worst = 0.0;
        for (const auto &m : tomographic_maps(prop, markov_grid(sc.schedule, 20)))
            worst = std::max(worst, fixed_point_check(m, pistar));
        CHECK(worst > 1e-3);
    }
}

TEST_CASE("dissipation routes agree and follow Markovianity", "[markov]") {
    SECTION("stationary pi*_S gives zero") {
        presets::PrepareRelax p;
        auto probe = presets::prepare_relax(p);
        p.prepared = system_mean_force(probe, before(0.0)).pistar;
        auto sc = presets::prepare_relax(p);
        Propagator prop(sc);
        auto r = dissipation_monotone(prop, after(1.0), after(7.0));
        CHECK(std::abs(r.delta_sigma_s) < 1e-12);
        CHECK(std::abs(r.d1) < 1e-12);
        CHECK(r.sign_guaranteed_preconditions);
    }
    SECTION("partial swap is monotone on every boundary pair") {
        auto sc = presets::make("partial-swap-reset");
        Propagator prop(sc);
        auto sweep = markov_sweep(prop, boundary_grid(sc.schedule));
        REQUIRE(sweep.rows.size() == 28);
        for (const auto &r : sweep.rows) {
            CHECK(r.delta_sigma_s >= -1e-9);
            CHECK(std::abs(r.delta_sigma_s - r.relent_route) <= 1e-9);
            CHECK(r.flags.empty());
        }
    }
    SECTION("strong dephasing shows joint backflow") {
        auto sc = presets::make("swap-prepare-relax");
        Propagator prop(sc);
        auto sweep = markov_sweep(prop, markov_grid(sc.schedule, 20));
        bool joint = false;
        for (const auto &r : sweep.rows) {
            CHECK(std::abs(r.delta_sigma_s - r.relent_route) <= 1e-9);
            joint = joint || (r.delta_sigma_s < -1e-4 && r.min_choi_eigenvalue < -1e-4);
        }
        CHECK(joint);
        // single-pair entry point matches the sweep
        const auto &row = sweep.rows[3];
        auto r = dissipation_monotone(prop, row.t1, row.t2);
        CHECK(r.delta_sigma_s == Catch::Approx(row.delta_sigma_s).margin(1e-12));
        CHECK(std::abs(r.delta_sigma_s - r.relent_route) <= 1e-9);
    }
    SECTION("violated preconditions are flagged but computed") {
        auto sc = presets::make("swap-prepare-relax-driven");
        Propagator prop(sc);
        auto r = dissipation_monotone(prop, after(1.0), after(5.0));
        CHECK_FALSE(r.sign_guaranteed_preconditions);
        CHECK(r.flags.find("driven") != std::string::npos);
        CHECK(std::isfinite(r.delta_sigma_s));

        Rng rng(5);
        auto en = random_prepared(rng);
        en.modes = mode_energetic_units;
        en.schedule.units[1] = spin::sz();
        CHECK(dissipation_preconditions(en, after(en.schedule.boundary(1)), before(en.schedule.end()))
                  .find("degenerate") != std::string::npos);
        CHECK_THROWS_AS(dissipation_monotone(prop, after(5.0), after(1.0)), PreconditionError);
    }
}
