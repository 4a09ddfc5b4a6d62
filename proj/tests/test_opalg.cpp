#include "support.hpp"

using namespace test;

TEST_CASE("layout keeps canonical order and rejects malformed factor lists") {
    CompositeLayout l({{"U1", 2, Role::unit, 1}, {"B", 4, Role::bath, 0}, {"S", 2, Role::system, 0},
                       {"U0", 3, Role::unit, 0}});
    CHECK(l.factor(0).id == "S");
    CHECK(l.factor(1).id == "B");
    CHECK(l.factor(2).id == "U0");
    CHECK(l.factor(3).id == "U1");
    CHECK(l.total_dim() == 48);

    CHECK_THROWS_AS(CompositeLayout({{"S", 2, Role::system, 0}, {"S", 2, Role::unit, 0}}), LayoutError);
    CHECK_THROWS_AS(CompositeLayout({{"S", 2, Role::system, 0}, {"U1", 2, Role::unit, 1}}), LayoutError);
    CHECK_THROWS_AS(CompositeLayout({{"S", 0, Role::system, 0}}), LayoutError);
    CHECK_THROWS_AS(CompositeLayout({{"B", 2, Role::bath, 0}}), LayoutError);
    CHECK_THROWS_AS(l.index_of("X"), LayoutError);
}

TEST_CASE("tensor_embed") {
    auto l = CompositeLayout::make(2, 2, 0, {});
    SECTION("Pauli-Z on S in (S,B)") {
        Matrix z = tensor_embed(l, spin::sz(), {0}, l.all());
        CHECK(max_abs(z - diag({1, 1, -1, -1})) == 0.0);
        // on B it alternates
        Matrix zb = tensor_embed(l, spin::sz(), {1}, l.all());
        CHECK(max_abs(zb - diag({1, -1, 1, -1})) == 0.0);
    }
    SECTION("identity embeds to identity") {
        CHECK(max_abs(tensor_embed(l, identity(2), {1}, l.all()) - identity(4)) == 0.0);
    }
    SECTION("embed on U0 then trace back") {
        auto l3 = CompositeLayout::make(2, 0, 0, {2, 2});
        Rng rng(7);
        Matrix h = random::hermitian(rng, 2);
        Matrix full = tensor_embed(l3, h, {1}, l3.all());
        CHECK(max_abs(full - kron(kron(identity(2), h), identity(2))) < 1e-15);
        CHECK(max_abs(partial_trace(l3, full, l3.all(), {1}) - 4.0 * h) < 1e-13);
    }
    SECTION("dimension mismatch") {
        CHECK_THROWS_AS(tensor_embed(l, identity(3), {0}, l.all()), LayoutError);
    }
}

TEST_CASE("partial_trace") {
    Rng rng(11);
    SECTION("product state") {
        auto l = CompositeLayout::make(2, 3, 0, {});
        Matrix rs = random::state(rng, 2), rb = random::state(rng, 3);
        CHECK(max_abs(partial_trace(l, kron(rs, rb), l.all(), {0}) - rs) < 1e-15);
        CHECK(max_abs(partial_trace(l, kron(rs, rb), l.all(), {1}) - rb) < 1e-15);
    }
    SECTION("Bell state gives the maximally mixed marginal") {
        auto l = CompositeLayout::make(2, 2, 0, {});
        Eigen::VectorXcd psi = Eigen::VectorXcd::Zero(4);
        psi(0) = psi(3) = 1.0 / std::sqrt(2.0);
        Matrix rho = psi * psi.adjoint();
        CHECK(max_abs(partial_trace(l, rho, l.all(), {0}) - 0.5 * identity(2)) < 1e-15);
    }
    SECTION("three factors against the index-loop oracle") {
        auto l = CompositeLayout::make(2, 3, 0, {2});
        Matrix rho = random::state(rng, 12);
        Matrix got = partial_trace(l, rho, l.all(), {0, 2});
        Matrix want = naive_partial_trace({2, 3, 2}, rho, {true, false, true});
        CHECK(max_abs(got - want) <= 1e-13);
        CHECK(std::abs(got.trace().real() - 1.0) < 1e-12);
        CHECK(min_eigenvalue(got) > -1e-12);
        Matrix mid = partial_trace(l, rho, l.all(), {1});
        CHECK(max_abs(mid - naive_partial_trace({2, 3, 2}, rho, {false, true, false})) <= 1e-13);
    }
    SECTION("subset of a subset") {
        auto l = CompositeLayout::make(2, 2, 0, {3, 2});
        Matrix rho = random::state(rng, 24);
        Matrix sub = partial_trace(l, rho, l.all(), {0, 2, 3});
        CHECK(max_abs(partial_trace(l, sub, {0, 2, 3}, {2}) - partial_trace(l, rho, l.all(), {2})) < 1e-14);
        CHECK_THROWS_AS(partial_trace(l, sub, {0, 2, 3}, {1}), LayoutError);
    }
}

TEST_CASE("embed then trace is a scalar multiple") {
    Rng rng(3);
    auto l = CompositeLayout::make(2, 4, 0, {2, 3});
    for (int trial = 0; trial < 5; ++trial) {
        Matrix r = random::state(rng, 12); // on {B, U1}
        Matrix full = tensor_embed(l, r, {1, 3}, l.all());
        CHECK(max_abs(partial_trace(l, full, l.all(), {1, 3}) - 4.0 * r) <= 1e-12);
    }
}

TEST_CASE("apply_local agrees with the dense product") {
    Rng rng(5);
    auto l = CompositeLayout::make(2, 3, 0, {2, 2});
    Matrix rho = random::state(rng, 24);
    for (const FactorSet &acting : {FactorSet{0}, FactorSet{1}, FactorSet{0, 2}, FactorSet{1, 3}, FactorSet{0, 1, 2, 3}}) {
        Matrix u = random::unitary(rng, l.dim_of(acting));
        Matrix big = tensor_embed(l, u, acting, l.all());
        CHECK(max_abs(apply_local(l, rho, u, acting, l.all()) - big * rho * big.adjoint()) < 1e-13);
    }
}

TEST_CASE("herm_fn") {
    Matrix d = diag({0.0, std::log(2.0)});
    CHECK(max_abs(herm_fn(d, [](double x) { return std::exp(x); }) - diag({1, 2})) < 1e-15);
    Rng rng(9);
    Matrix h = random::hermitian(rng, 6);
    CHECK(max_abs(herm_fn(h, [](double x) { return x; }) - h) <= 1e-13);
    Matrix u = unitary_exp(h, 0.37);
    CHECK(max_abs(u.adjoint() * u - identity(6)) <= 1e-12);
    Matrix nh = h;
    nh(0, 1) += 0.1;
    CHECK_THROWS_AS(herm_fn(nh, [](double x) { return x; }), NumericError);
    Operator op{{0}, h, true};
    CHECK(herm_fn(op, [](double x) { return 2 * x; }).hermitian);
}

TEST_CASE("Gibbs states from herm_fn are normalized and positive") {
    Rng rng(13);
    for (int i = 0; i < 10; ++i) {
        Matrix h = random::hermitian(rng, 5, 3.0);
        double beta = random::uniform(rng, 0.1, 5.0);
        Matrix e = herm_fn(h, [beta](double x) { return std::exp(-beta * x); });
        Matrix rho = e / e.trace().real();
        CHECK(std::abs(rho.trace().real() - 1.0) < 1e-13);
        CHECK(min_eigenvalue(rho) > -1e-15);
    }
}

TEST_CASE("von_neumann_entropy") {
    Rng rng(17);
    CHECK(von_neumann_entropy(random::pure_state(rng, 4)) == Catch::Approx(0.0).margin(1e-12));
    CHECK(von_neumann_entropy(identity(5) / 5.0) == Catch::Approx(std::log(5.0)).epsilon(1e-14));
    const double want = -0.25 * std::log(0.25) - 0.75 * std::log(0.75);
    CHECK(std::abs(von_neumann_entropy(diag({0.25, 0.75})) - want) < 1e-15);
    CHECK_THROWS_AS(von_neumann_entropy(diag({1.1, -0.1})), NumericError);
    // unitary invariance
    for (int i = 0; i < 10; ++i) {
        Matrix rho = random::state(rng, 6);
        Matrix u = random::unitary(rng, 6);
        CHECK(std::abs(von_neumann_entropy(u * rho * u.adjoint()) - von_neumann_entropy(rho)) <= 1e-11);
    }
}

TEST_CASE("relative_entropy") {
    Rng rng(19);
    Matrix rho = random::state(rng, 3);
    CHECK(std::abs(relative_entropy(rho, rho)) <= 1e-12);
    CHECK(relative_entropy(random::pure_state(rng, 4), Matrix(identity(4) / 4.0)) ==
          Catch::Approx(std::log(4.0)).epsilon(1e-12));

    SECTION("spectral double-sum oracle for qubits") {
        for (int i = 0; i < 10; ++i) {
            Matrix a = random::state(rng, 2), b = random::state(rng, 2);
            Eigen::SelfAdjointEigenSolver<Matrix> ea(a), eb(b);
            double d = 0.0;
            for (int j = 0; j < 2; ++j) {
                const double p = ea.eigenvalues()(j);
                d += p * std::log(p);
                for (int k = 0; k < 2; ++k)
                    d -= p * std::norm(ea.eigenvectors().col(j).dot(eb.eigenvectors().col(k))) *
                         std::log(eb.eigenvalues()(k));
            }
            CHECK(std::abs(relative_entropy(a, b) - d) <= 1e-12);
            CHECK(relative_entropy(a, b) >= -1e-10);
        }
    }
    SECTION("support violation is +inf, not an error") {
        CHECK(std::isinf(relative_entropy(diag({0.5, 0.5}), diag({1.0, 0.0}))));
        CHECK(relative_entropy(diag({1.0, 0.0}), diag({1.0, 0.0})) == Catch::Approx(0.0).margin(1e-14));
    }
    SECTION("monotone under partial trace") {
        auto l = CompositeLayout::make(2, 3, 0, {});
        for (int i = 0; i < 10; ++i) {
            Matrix a = random::state(rng, 6), b = random::state(rng, 6);
            double full = relative_entropy(a, b);
            double red = relative_entropy(partial_trace(l, a, l.all(), {0}), partial_trace(l, b, l.all(), {0}));
            CHECK(red <= full + 1e-10);
        }
    }
    SECTION("log form") {
        Matrix a = random::state(rng, 4), b = random::state(rng, 4);
        Matrix lb = herm_fn(b, [](double x) { return std::log(x); });
        CHECK(std::abs(relative_entropy_from_log(a, lb) - relative_entropy(a, b)) < 1e-12);
    }
}

TEST_CASE("Choi conventions") {
    Rng rng(23);
    Matrix u = random::unitary(rng, 3);
    Matrix l = superop_of([&](const Matrix &x) { return Matrix(u * x * u.adjoint()); }, 3);
    Matrix j = choi_from_superop(l);
    CHECK(max_abs(superop_from_choi(j) - l) == 0.0);
    CHECK(trace_preservation_defect(j) < 1e-14);
    Matrix x = random::state(rng, 3);
    CHECK(max_abs(apply_choi(j, x) - u * x * u.adjoint()) < 1e-14);
    Matrix id = identity_choi(2);
    Eigen::VectorXcd omega = Eigen::VectorXcd::Zero(4);
    omega(0) = omega(3) = 1.0;
    CHECK(max_abs(id - omega * omega.adjoint()) == 0.0);
}
