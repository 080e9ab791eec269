#include <doctest.h>

#include <cmath>

#include "rgflow/assumptions.hpp"
#include "rgflow/perturbation.hpp"
#include "rgflow/rng.hpp"
#include "rgflow/verify.hpp"
#include "rgflow/weights.hpp"

using namespace rgflow;

namespace {

struct Fixture {
    ParamSeq p = instances::finite_cutoff();
    QuadraticSolution sol;
    Fixture() { sol = solve_quadratic_bvp(0.02, p, 120); }
};

} // namespace

TEST_CASE("in_domain: center, violation, and closed boundary") {
    Fixture f;
    DomainSpec dom(f.sol, 1.0, 4.0);

    FlowSequence::Entry x;
    x.K.assign(1, 0.0);
    x.V = f.sol.vbar[10];
    CHECK(in_domain(x, 10, dom));

    // |g - gbar| at twice the radius fails
    FlowSequence::Entry bad = x;
    bad.V.g += 2.0 * dom.radius(Coord::G, 10);
    CHECK_FALSE(in_domain(bad, 10, dom));

    // equality in one clause is inside (closed domain); the K clause tests
    // exact equality since the deviation needs no subtraction
    FlowSequence::Entry edge = x;
    edge.K[0] = dom.radius(Coord::K, 10);
    CHECK(in_domain(edge, 10, dom));
    edge.V.z += 0.999 * dom.radius(Coord::Z, 10);
    CHECK(in_domain(edge, 10, dom));
}

TEST_CASE("kbar_iterate: zero model keeps K at zero") {
    Fixture f;
    ModelConfig mc;
    mc.kind = "zero";
    auto model = make_model(mc, f.sol);
    auto K = kbar_iterate({0.0}, f.sol, *model, 0.6);
    for (const auto& k : K) CHECK(k[0] == 0.0);
}

TEST_CASE("kbar_iterate: pure linear contraction decays geometrically, contained") {
    Fixture f;
    // cubic model with the V-part switched off is exactly psi = kappa0 K
    ModelConfig mc;
    mc.kind = "cubic";
    mc.c_psi = 0.0;
    mc.c_rho = 0.0;
    mc.kappa0 = 0.2;
    auto model = make_model(mc, f.sol);
    const double a_star = 0.6;
    const double g0 = f.sol.g0;
    std::vector<double> K0{a_star * g0 * g0 * g0};
    auto K = kbar_iterate(K0, f.sol, *model, a_star);
    for (std::size_t j = 0; j <= f.sol.horizon; ++j) {
        CHECK(K[j][0] == doctest::Approx(std::pow(0.2, double(j)) * K0[0]).epsilon(1e-12));
        CHECK(sup_norm(K[j]) <=
              a_star * f.sol.cutoff.chi(j) * std::pow(f.sol.gbar_ext[j], 3) * (1 + 1e-9));
    }
}

TEST_CASE("kbar_iterate: containment certificate passes for the cubic model at g0=0.02") {
    Fixture f;
    ModelConfig mc;
    mc.kind = "cubic";
    auto model = make_model(mc, f.sol);
    CHECK_NOTHROW(kbar_iterate({0.0}, f.sol, *model, 0.6));
}

TEST_CASE("kbar_iterate: violation carries the offending index") {
    Fixture f;
    ModelConfig mc;
    mc.kind = "cubic";
    mc.kappa0 = 0.2;
    auto model = make_model(mc, f.sol);
    std::vector<double> K0{10.0 * f.sol.g0};
    try {
        kbar_iterate(K0, f.sol, *model, 0.6);
        FAIL("expected ModelViolatesA3");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::ModelViolatesA3);
        CHECK(e.index == 0);
    }
}

TEST_CASE("xbar_assemble: zero perturbation gives (0, Vbar)") {
    Fixture f;
    ModelConfig mc;
    mc.kind = "zero";
    auto model = make_model(mc, f.sol);
    FlowSequence x = xbar_assemble({0.0}, f.sol, *model, 0.6);
    for (std::size_t j = 0; j <= f.sol.horizon; ++j) {
        CHECK(x[j].K[0] == 0.0);
        CHECK(x[j].V.g == f.sol.vbar[j].g);
        CHECK(x[j].V.z == f.sol.vbar[j].z);
        CHECK(x[j].V.mu == f.sol.vbar[j].mu);
    }
}

TEST_CASE("xbar_assemble: K0 = 0 gives Kbar_1 = psi_0(0, Vbar_0)") {
    Fixture f;
    ModelConfig mc;
    mc.kind = "cubic";
    auto model = make_model(mc, f.sol);
    FlowSequence x = xbar_assemble({0.0}, f.sol, *model, 0.6);
    std::vector<double> zeroK{0.0};
    std::vector<double> psi0 = model->psi(0, zeroK, f.sol.vbar[0]);
    CHECK(x[1].K[0] == psi0[0]);
    CHECK(x[1].K[0] != 0.0);
}

TEST_CASE("xbar g0-sensitivity has the predicted weighted size") {
    // || D_{g0} xbar ||_w = O(g0^{-2} |log g0|^{-1}); the fitted constant is
    // stable across two g0 values
    ParamSeq p = instances::finite_cutoff();
    double fitted[2];
    int idx = 0;
    for (double g0 : {0.02, 0.04}) {
        QuadraticSolution sol = solve_quadratic_bvp(g0, p, 120);
        ModelConfig mc;
        mc.kind = "cubic";
        auto model = make_model(mc, sol);

        const double eps = 1e-6 * g0;
        QuadraticSolution shi = solve_quadratic_bvp(g0 + eps, p, 120);
        QuadraticSolution slo = solve_quadratic_bvp(g0 - eps, p, 120);
        auto mhi = make_model(mc, shi);
        auto mlo = make_model(mc, slo);
        FlowSequence xhi = xbar_assemble({0.0}, shi, *mhi, 0.6);
        FlowSequence xlo = xbar_assemble({0.0}, slo, *mlo, 0.6);
        FlowSequence diff = xhi;
        diff.axpy(-1.0, xlo);
        diff.scale(1.0 / (2.0 * eps));

        std::vector<double> gring(sol.gbar_ext.begin(), sol.gbar_ext.begin() + 121);
        WeightScheme scheme(gring, sol.cutoff, 1.0, 0.6, 4.0);
        double norm = weighted_norm(diff, scheme, WhichNorm::W);
        fitted[idx++] = norm * g0 * g0 * std::abs(std::log(g0));
    }
    CHECK(fitted[0] > 0.0);
    CHECK(fitted[1] > 0.0);
    CHECK(fitted[1] <= 3.0 * fitted[0]);
    CHECK(fitted[0] <= 3.0 * fitted[1]);
}

TEST_CASE("phi_step: t = 0 equals (psi, quadratic_step)") {
    Fixture f;
    ModelConfig mc;
    mc.kind = "cubic";
    auto model = make_model(mc, f.sol);
    FlowSequence::Entry x;
    x.K.assign(1, 0.5 * f.sol.g0 * f.sol.g0 * f.sol.g0);
    x.V = f.sol.vbar[4];
    FlowSequence::Entry out = phi_step(0.0, x, 4, f.p, *model);
    CHECK(out.K == model->psi(4, x.K, x.V));
    VTriple q = quadratic_step(x.V, f.p, 4);
    CHECK(out.V.g == q.g);
    CHECK(out.V.z == q.z);
    CHECK(out.V.mu == q.mu);
}

TEST_CASE("phi_step: rho == 0 makes the map t-independent") {
    Fixture f;
    ModelConfig mc;
    mc.kind = "cubic";
    mc.c_rho = 0.0;
    auto model = make_model(mc, f.sol);
    FlowSequence::Entry x;
    x.K.assign(1, 1e-7);
    x.V = f.sol.vbar[3];
    FlowSequence::Entry a = phi_step(0.0, x, 3, f.p, *model);
    FlowSequence::Entry b = phi_step(1.0, x, 3, f.p, *model);
    CHECK(a.K == b.K);
    CHECK(a.V.g == b.V.g);
    CHECK(a.V.z == b.V.z);
    CHECK(a.V.mu == b.V.mu);
}

TEST_CASE("phi_step: t = 0.5 V-part equals quadratic_step plus half of rho") {
    Fixture f;
    ModelConfig mc;
    mc.kind = "cubic";
    auto model = make_model(mc, f.sol);
    FlowSequence::Entry x;
    x.K.assign(1, 1e-7);
    x.V = f.sol.vbar[6];
    x.V.g += 0.3 * DomainSpec(f.sol, 1.0, 4.0).radius(Coord::G, 6);
    FlowSequence::Entry out = phi_step(0.5, x, 6, f.p, *model);
    VTriple q = quadratic_step(x.V, f.p, 6);
    VTriple r = model->rho(6, x.K, x.V);
    CHECK(out.V.g == doctest::Approx(q.g + 0.5 * r.g).epsilon(1e-15));
    CHECK(out.V.z == doctest::Approx(q.z + 0.5 * r.z).epsilon(1e-15));
    CHECK(out.V.mu == doctest::Approx(q.mu + 0.5 * r.mu).epsilon(1e-15));
}

TEST_CASE("analytic directional derivatives agree with finite differences (cubic)") {
    Fixture f;
    ModelConfig mc;
    mc.kind = "cubic";
    auto model = make_model(mc, f.sol);
    DomainSpec dom(f.sol, 1.0, 4.0);
    Rng rng(42);
    for (int rep = 0; rep < 40; ++rep) {
        std::size_t j = std::size_t(rng.uniform01() * 80);
        FlowSequence::Entry x;
        x.K.assign(1, 0.5 * dom.radius(Coord::K, j) * rng.symmetric());
        x.V.g = f.sol.gbar_ext[j] + 0.5 * dom.radius(Coord::G, j) * rng.symmetric();
        x.V.z = f.sol.zbar_ext[j] + 0.5 * dom.radius(Coord::Z, j) * rng.symmetric();
        x.V.mu = f.sol.mubar_ext[j] + 0.5 * dom.radius(Coord::Mu, j) * rng.symmetric();
        FlowSequence::Entry dir;
        dir.K.assign(1, dom.radius(Coord::K, j) * rng.symmetric());
        dir.V = VTriple(dom.radius(Coord::G, j) * rng.symmetric(),
                        dom.radius(Coord::Z, j) * rng.symmetric(),
                        dom.radius(Coord::Mu, j) * rng.symmetric());

        PhiDerivative an = model_directional_derivative(*model, dom, j, x, dir);

        const double eps = 1e-6;
        FlowSequence::Entry hi = x, lo = x;
        hi.K[0] += eps * dir.K[0];
        lo.K[0] -= eps * dir.K[0];
        hi.V += eps * dir.V;
        lo.V -= eps * dir.V;
        double fd_psi = (model->psi(j, hi.K, hi.V)[0] - model->psi(j, lo.K, lo.V)[0]) /
                        (2 * eps);
        VTriple rh = model->rho(j, hi.K, hi.V), rl = model->rho(j, lo.K, lo.V);
        double fd_rho = (rh.g - rl.g) / (2 * eps);

        double scale_psi = std::abs(an.dpsi[0]) + 1e-14;
        double scale_rho = std::abs(an.drho.g) + 1e-14;
        CHECK(std::abs(an.dpsi[0] - fd_psi) / scale_psi < 1e-5);
        CHECK(std::abs(an.drho.g - fd_rho) / scale_rho < 1e-5);
    }
}

TEST_CASE("check_A3: zero perturbation gives zero estimates and passes") {
    Fixture f;
    ModelConfig mc;
    mc.kind = "zero";
    auto model = make_model(mc, f.sol);
    DomainSpec dom(f.sol, 1.0, 4.0);
    std::vector<double> gring(f.sol.gbar_ext.begin(), f.sol.gbar_ext.begin() + 121);
    WeightScheme scheme(gring, f.sol.cutoff, 1.0, 0.6, 4.0);
    A3Report r = check_A3(*model, dom, scheme, 20, 99);
    CHECK(r.kappa_hat == 0.0);
    CHECK(r.R_hat == 0.0);
    CHECK(r.M_hat == 0.0);
    CHECK(r.pass);
}

TEST_CASE("check_A3: linear K map reports kappa_hat = kappa0") {
    Fixture f;
    ModelConfig mc;
    mc.kind = "cubic";
    mc.c_psi = 0.0;
    mc.c_rho = 0.0;
    mc.kappa0 = 0.2;
    auto model = make_model(mc, f.sol);
    DomainSpec dom(f.sol, 1.0, 4.0);
    std::vector<double> gring(f.sol.gbar_ext.begin(), f.sol.gbar_ext.begin() + 121);
    WeightScheme scheme(gring, f.sol.cutoff, 1.0, 0.6, 4.0);
    A3Report r = check_A3(*model, dom, scheme, 20, 7);
    CHECK(r.kappa_hat == doctest::Approx(0.2).epsilon(1e-9));
    CHECK(r.pass);
}

TEST_CASE("check_A3: cubic monomial passes with M_hat between c_rho/2 and M") {
    Fixture f;
    ModelConfig mc;
    mc.kind = "cubic";
    auto model = make_model(mc, f.sol);
    DomainSpec dom(f.sol, 1.0, 4.0);
    std::vector<double> gring(f.sol.gbar_ext.begin(), f.sol.gbar_ext.begin() + 121);
    WeightScheme scheme(gring, f.sol.cutoff, 1.0, 0.6, 4.0);
    A3Report r = check_A3(*model, dom, scheme, 30, 17);
    CHECK(r.pass);
    CHECK(r.M_hat >= 0.5 * mc.c_rho);
    CHECK(r.M_hat <= model->declared_M * (1 + 1e-9));
    CHECK(r.samples_used > 0);

    // reproducibility under the same seed
    A3Report r2 = check_A3(*model, dom, scheme, 30, 17);
    CHECK(r.kappa_hat == r2.kappa_hat);
    CHECK(r.M_hat == r2.M_hat);
    CHECK(r.R_hat == r2.R_hat);
}

TEST_CASE("check_A3: random-poly (finite-difference path) passes its envelope") {
    Fixture f;
    ModelConfig mc;
    mc.kind = "random-poly";
    mc.seed = 5;
    auto model = make_model(mc, f.sol);
    DomainSpec dom(f.sol, 1.0, 4.0);
    std::vector<double> gring(f.sol.gbar_ext.begin(), f.sol.gbar_ext.begin() + 121);
    WeightScheme scheme(gring, f.sol.cutoff, 1.0, 0.6, 4.0);
    A3Report r = check_A3(*model, dom, scheme, 20, 23);
    CHECK(r.kappa_pass);
    CHECK(r.R_pass);
    CHECK(r.M_pass);
    CHECK(r.constraint_pass);
}

TEST_CASE("multi-dimensional K blocks: containment and A3 hold at d = 3") {
    Fixture f;
    for (const char* kind : {"cubic", "random-poly"}) {
        ModelConfig mc;
        mc.kind = kind;
        mc.d = 3;
        auto model = make_model(mc, f.sol);
        CHECK(model->d_K(0) == 3);
        CHECK_NOTHROW(kbar_iterate({0.0, 0.0, 0.0}, f.sol, *model, 0.6));

        DomainSpec dom(f.sol, 1.0, 4.0);
        std::vector<double> gring(f.sol.gbar_ext.begin(), f.sol.gbar_ext.begin() + 121);
        WeightScheme scheme(gring, f.sol.cutoff, 1.0, 0.6, 4.0);
        A3Report r = check_A3(*model, dom, scheme, 16, 3);
        INFO(kind);
        CHECK(r.pass);
    }
}

TEST_CASE("rho envelope: observed ratio within declared M over domain samples") {
    Fixture f;
    for (const char* kind : {"cubic", "random-poly"}) {
        ModelConfig mc;
        mc.kind = kind;
        auto model = make_model(mc, f.sol);
        DomainSpec dom(f.sol, 1.0, 4.0);
        Rng rng(1234);
        double worst = 0.0;
        for (std::size_t j : {std::size_t{0}, std::size_t{20}, std::size_t{70}}) {
            for (int rep = 0; rep < 1000; ++rep) {
                FlowSequence::Entry x;
                x.K.assign(1, dom.radius(Coord::K, j) * rng.symmetric());
                x.V.g = f.sol.gbar_ext[j] + dom.radius(Coord::G, j) * rng.symmetric();
                x.V.z = f.sol.zbar_ext[j] + dom.radius(Coord::Z, j) * rng.symmetric();
                x.V.mu = f.sol.mubar_ext[j] + dom.radius(Coord::Mu, j) * rng.symmetric();
                VTriple r = model->rho(j, x.K, x.V);
                double env = f.sol.cutoff.chi(j + 1) * std::pow(f.sol.gbar_ext[j + 1], 3);
                worst = std::max(worst,
                                 std::max({std::abs(r.g), std::abs(r.z), std::abs(r.mu)}) /
                                     env);
            }
        }
        CHECK(worst <= model->declared_M * (1 + 1e-9));
    }
}
