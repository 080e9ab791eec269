#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <memory>

#include "rgflow/linear.hpp"
#include "rgflow/rng.hpp"
#include "rgflow/verify.hpp"

using namespace rgflow;

namespace {

// One solved setting shared across cases.
struct Fixture {
    ParamSeq p;
    QuadraticSolution sol;
    std::unique_ptr<PerturbationModel> model;
    std::unique_ptr<DomainSpec> dom;
    std::unique_ptr<WeightScheme> scheme;
    FlowSequence xbar;
    BlockMatrices blocks;

    explicit Fixture(const ParamSeq& params, double g0, std::size_t J,
                     const char* kind = "cubic") {
        p = params;
        sol = solve_quadratic_bvp(g0, p, J);
        ModelConfig mc;
        mc.kind = kind;
        model = make_model(mc, sol);
        dom = std::make_unique<DomainSpec>(sol, 1.0, 4.0);
        std::vector<double> gring(sol.gbar_ext.begin(),
                                  sol.gbar_ext.begin() + static_cast<long>(J + 1));
        scheme = std::make_unique<WeightScheme>(gring, sol.cutoff, 1.0, 0.6, 4.0);
        xbar = xbar_assemble({0.0}, sol, *model, 0.6);
        blocks = build_L(xbar, p);
    }

    FlowSequence random_residual(std::uint64_t seed) const {
        Rng rng(seed);
        FlowSequence r(sol.horizon);
        for (std::size_t j = 0; j <= sol.horizon; ++j) {
            r[j].K.assign(1, scheme->v(Coord::K, j) * rng.symmetric());
            r[j].V.g = scheme->v(Coord::G, j) * rng.symmetric();
            r[j].V.z = scheme->v(Coord::Z, j) * rng.symmetric();
            r[j].V.mu = scheme->v(Coord::Mu, j) * rng.symmetric();
        }
        return r;
    }
};

// Dense oracle: assemble the full (J+2)-block linear boundary-value system
//   y_{j+1} - L_j y_j - W_j y_j = r_j  (j = 0..J),  pi_u y_0 = 0, pi_v y_{J+1} = 0,
// with block dimension 4 (d_K = 1), and solve it by LU. The per-j W action is
// extracted column by column; pass nullptr for the pure-S0 system.
FlowSequence dense_oracle(const Fixture& f, const FlowSequence& r, const WOperator* W) {
    const std::size_t J = f.sol.horizon;
    const int D = 4;
    const int N = static_cast<int>(J + 2) * D;
    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(N, N);
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(N);

    auto Lmat = [&](std::size_t j) {
        Eigen::Matrix4d L = Eigen::Matrix4d::Zero();
        // coordinate order (K, g, z, mu)
        L(1, 1) = f.blocks.a_gg[j];
        L(2, 1) = f.blocks.b_zg[j];
        L(3, 1) = f.blocks.b_mug[j];
        L(2, 2) = f.blocks.c_zz[j];
        L(3, 2) = f.blocks.c_muz[j];
        L(3, 3) = f.blocks.c_mumu[j];
        return L;
    };
    auto Wmat = [&](std::size_t j) {
        Eigen::Matrix4d M = Eigen::Matrix4d::Zero();
        if (!W) return M;
        for (int c = 0; c < 4; ++c) {
            FlowSequence::Entry e;
            e.K.assign(1, c == 0 ? 1.0 : 0.0);
            e.V = VTriple(c == 1 ? 1.0 : 0.0, c == 2 ? 1.0 : 0.0, c == 3 ? 1.0 : 0.0);
            FlowSequence::Entry w = W->apply_at(j, e);
            M(0, c) = w.K[0];
            M(1, c) = w.V.g;
            M(2, c) = w.V.z;
            M(3, c) = w.V.mu;
        }
        return M;
    };

    int row = 0;
    for (std::size_t j = 0; j <= J; ++j) {
        Eigen::Matrix4d L = Lmat(j) + Wmat(j);
        for (int rr = 0; rr < D; ++rr) {
            A(row + rr, static_cast<int>(j + 1) * D + rr) = 1.0;
            for (int cc = 0; cc < D; ++cc)
                A(row + rr, static_cast<int>(j) * D + cc) -= L(rr, cc);
        }
        rhs[row + 0] = r[j].K[0];
        rhs[row + 1] = r[j].V.g;
        rhs[row + 2] = r[j].V.z;
        rhs[row + 3] = r[j].V.mu;
        row += D;
    }
    // pi_u y_0 = 0 (K and g), pi_v y_{J+1} = 0 (z and mu)
    A(row, 0) = 1.0;
    A(row + 1, 1) = 1.0;
    A(row + 2, static_cast<int>(J + 1) * D + 2) = 1.0;
    A(row + 3, static_cast<int>(J + 1) * D + 3) = 1.0;

    Eigen::VectorXd y = A.partialPivLu().solve(rhs);
    FlowSequence out(J);
    for (std::size_t j = 0; j <= J; ++j) {
        out[j].K.assign(1, y[static_cast<int>(j) * D + 0]);
        out[j].V = VTriple(y[static_cast<int>(j) * D + 1], y[static_cast<int>(j) * D + 2],
                           y[static_cast<int>(j) * D + 3]);
    }
    return out;
}

} // namespace

TEST_CASE("build_L: zero greeks give B = 0 and C = diag(1, lambda)") {
    ParamSeq p;
    p.beta = CoeffSeq::constant(1.0);
    p.lambda = CoeffSeq::constant(2.0);
    Fixture f(p, 0.03, 40, "zero");
    for (std::size_t j = 0; j <= 40; ++j) {
        CHECK(f.blocks.b_zg[j] == 0.0);
        CHECK(f.blocks.b_mug[j] == 0.0);
        CHECK(f.blocks.c_zz[j] == 1.0);
        CHECK(f.blocks.c_muz[j] == 0.0);
        CHECK(f.blocks.c_mumu[j] == 2.0);
        CHECK(f.blocks.a_gg[j] == 1.0 - 2.0 * f.sol.gbar_ext[j]);
    }
    CHECK(f.blocks.alpha == 0.5);
}

TEST_CASE("build_L matches a finite-difference Jacobian of quadratic_step") {
    ParamSeq p = instances::random_admissible(3);
    Fixture f(p, 0.02, 50, "zero");
    for (std::size_t j : {std::size_t{0}, std::size_t{13}, std::size_t{37}}) {
        const VTriple v0 = f.xbar[j].V;
        const double eps = 1e-7;
        auto col = [&](int c) {
            VTriple hi = v0, lo = v0;
            double* fh[3] = {&hi.g, &hi.z, &hi.mu};
            double* fl[3] = {&lo.g, &lo.z, &lo.mu};
            *fh[c] += eps;
            *fl[c] -= eps;
            VTriple sh = quadratic_step(hi, p, j), sl = quadratic_step(lo, p, j);
            return VTriple((sh.g - sl.g) / (2 * eps), (sh.z - sl.z) / (2 * eps),
                           (sh.mu - sl.mu) / (2 * eps));
        };
        VTriple dg = col(0), dz = col(1), dmu = col(2);
        CHECK(dg.g == doctest::Approx(f.blocks.a_gg[j]).epsilon(1e-7));
        CHECK(dg.z == doctest::Approx(f.blocks.b_zg[j]).epsilon(1e-7).scale(1.0));
        CHECK(dg.mu == doctest::Approx(f.blocks.b_mug[j]).epsilon(1e-7).scale(1.0));
        CHECK(dz.z == doctest::Approx(f.blocks.c_zz[j]).epsilon(1e-7));
        CHECK(dz.mu == doctest::Approx(f.blocks.c_muz[j]).epsilon(1e-7).scale(1.0));
        CHECK(dmu.mu == doctest::Approx(f.blocks.c_mumu[j]).epsilon(1e-7));
        CHECK(dmu.g == 0.0);
        CHECK(dmu.z == 0.0);
        CHECK(dz.g == 0.0);
    }
}

TEST_CASE("build_L: expansivity loss raises") {
    ParamSeq p;
    p.beta = CoeffSeq::constant(1.0);
    p.lambda = CoeffSeq::constant(1.0); // lambdaring == 1 is not expanding
    FlowSequence x(20);
    for (std::size_t j = 0; j <= 20; ++j) {
        x[j].K.assign(1, 0.0);
        x[j].V = VTriple(0.02, 0.0, 0.0);
    }
    try {
        build_L(x, p);
        FAIL("expected ExpansivityViolated");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::ExpansivityViolated);
    }
}

TEST_CASE("apply_S0: zero residual gives zero; K-only residual shifts into K") {
    Fixture f(instances::finite_cutoff(), 0.02, 40);
    FlowSequence r(40);
    for (std::size_t j = 0; j <= 40; ++j) r[j].K.assign(1, 0.0);
    FlowSequence y = apply_S0(r, f.blocks, f.p, f.sol.cutoff, f.sol.gbar_ext);
    CHECK(y.sup_abs() == 0.0);

    // r_0 K-only: y_1 K-block equals it, everything else zero
    r[0].K[0] = 1.0;
    y = apply_S0(r, f.blocks, f.p, f.sol.cutoff, f.sol.gbar_ext);
    CHECK(y[1].K[0] == 1.0);
    for (std::size_t j = 0; j <= 40; ++j) {
        if (j != 1) CHECK(y[j].K[0] == 0.0);
        CHECK(y[j].V.g == 0.0);
        CHECK(y[j].V.z == 0.0);
        CHECK(y[j].V.mu == 0.0);
    }
}

TEST_CASE("apply_S0 matches the dense banded oracle on J = 50 (5 seeds)") {
    Fixture f(instances::finite_cutoff(), 0.02, 50);
    for (std::uint64_t seed : {1u, 2u, 3u, 4u, 5u}) {
        FlowSequence r = f.random_residual(seed);
        FlowSequence y = apply_S0(r, f.blocks, f.p, f.sol.cutoff, f.sol.gbar_ext);
        FlowSequence o = dense_oracle(f, r, nullptr);
        FlowSequence diff = y;
        diff.axpy(-1.0, o);
        CHECK(weighted_norm(diff, *f.scheme, WhichNorm::W) <= 1e-9);
    }
}

TEST_CASE("apply_S0: equation residual at 1e-12 relative, both cutoff regimes") {
    for (const ParamSeq& p : {instances::finite_cutoff(), instances::infinite_cutoff()}) {
        Fixture f(p, 0.02, 60);
        FlowSequence r = f.random_residual(77);
        FlowSequence y = apply_S0(r, f.blocks, f.p, f.sol.cutoff, f.sol.gbar_ext);
        for (std::size_t j = 0; j < 60; ++j) {
            double scale = std::max({std::abs(y[j].V.g), std::abs(y[j].V.z),
                                     std::abs(y[j].V.mu), std::abs(r[j].V.g),
                                     std::abs(r[j].V.z), std::abs(r[j].V.mu), 1e-30});
            double rg = y[j + 1].V.g - (f.blocks.a_gg[j] * y[j].V.g + r[j].V.g);
            double rz = y[j + 1].V.z -
                        (f.blocks.b_zg[j] * y[j].V.g + f.blocks.c_zz[j] * y[j].V.z +
                         r[j].V.z);
            double rmu = y[j + 1].V.mu -
                         (f.blocks.b_mug[j] * y[j].V.g + f.blocks.c_muz[j] * y[j].V.z +
                          f.blocks.c_mumu[j] * y[j].V.mu + r[j].V.mu);
            CHECK(std::abs(rg) / scale <= 1e-12);
            CHECK(std::abs(rz) / scale <= 1e-12);
            CHECK(std::abs(rmu) / scale <= 1e-12);
        }
        // boundary condition pi_u y_0 = 0
        CHECK(y[0].K[0] == 0.0);
        CHECK(y[0].V.g == 0.0);
    }
}

TEST_CASE("apply_S0 tail certificate: attained on a long finite-cutoff horizon, "
          "extend-horizon on a short one") {
    // long horizon: chi has decayed, the certificate closes easily
    Fixture good(instances::finite_cutoff(), 0.02, 120);
    FlowSequence r = good.random_residual(5);
    SolveReport rep;
    CHECK_NOTHROW(apply_S0(r, good.blocks, good.p, good.sol.cutoff, good.sol.gbar_ext, &rep,
                           1e-10));
    CHECK(rep.tail_certified);
    CHECK(rep.tail_bound_z <= 1e-10);

    // short horizon: the same bound cannot close at 1e-10
    Fixture bad(instances::finite_cutoff(), 0.02, 30);
    FlowSequence rb = bad.random_residual(5);
    try {
        apply_S0(rb, bad.blocks, bad.p, bad.sol.cutoff, bad.sol.gbar_ext, nullptr, 1e-10);
        FAIL("expected ExtendHorizon");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::ExtendHorizon);
    }
}

TEST_CASE("W operator: x = xring with zero perturbation gives W = 0") {
    Fixture f(instances::finite_cutoff(), 0.02, 40, "zero");
    WOperator W = build_W(1.0, f.xbar, *f.model, f.p, f.xbar, *f.dom, *f.scheme);
    FlowSequence y = f.random_residual(9);
    FlowSequence wy = W.apply(y);
    CHECK(wy.sup_abs() == 0.0);
}

TEST_CASE("W operator: linear psi at xring acts as kappa0 into the K slot only") {
    ParamSeq p = instances::finite_cutoff();
    QuadraticSolution sol = solve_quadratic_bvp(0.02, p, 40);
    ModelConfig mc;
    mc.kind = "cubic";
    mc.c_psi = 0.0;
    mc.c_rho = 0.0;
    mc.kappa0 = 0.25;
    auto model = make_model(mc, sol);
    DomainSpec dom(sol, 1.0, 4.0);
    std::vector<double> gring(sol.gbar_ext.begin(), sol.gbar_ext.begin() + 41);
    WeightScheme scheme(gring, sol.cutoff, 1.0, 0.6, 4.0);
    FlowSequence xbar = xbar_assemble({0.0}, sol, *model, 0.6);
    WOperator W = build_W(1.0, xbar, *model, p, xbar, dom, scheme);

    FlowSequence::Entry y;
    y.K.assign(1, 0.7);
    y.V = VTriple(0.1, -0.2, 0.3);
    FlowSequence::Entry wy = W.apply_at(7, y);
    CHECK(wy.K[0] == doctest::Approx(0.25 * 0.7).epsilon(1e-12));
    CHECK(wy.V.g == 0.0);
    CHECK(wy.V.z == 0.0);
    CHECK(wy.V.mu == 0.0);
}

TEST_CASE("W matches a finite-difference directional derivative of Phi at x_j") {
    Fixture f(instances::finite_cutoff(), 0.02, 60);
    // move x a little inside the ball
    FlowSequence x = f.xbar;
    Rng rng(31);
    for (std::size_t j = 0; j <= 60; ++j) {
        x[j].K[0] += 0.2 * f.scheme->w(Coord::K, j) * rng.symmetric();
        x[j].V.g += 0.2 * f.scheme->w(Coord::G, j) * rng.symmetric();
        x[j].V.z += 0.2 * f.scheme->w(Coord::Z, j) * rng.symmetric();
        x[j].V.mu += 0.2 * f.scheme->w(Coord::Mu, j) * rng.symmetric();
    }
    const double t = 1.0;
    WOperator W = build_W(t, x, *f.model, f.p, f.xbar, *f.dom, *f.scheme);

    for (std::size_t j : {std::size_t{0}, std::size_t{12}, std::size_t{44}}) {
        FlowSequence::Entry dir;
        dir.K.assign(1, f.dom->radius(Coord::K, j) * rng.symmetric());
        dir.V = VTriple(f.dom->radius(Coord::G, j) * rng.symmetric(),
                        f.dom->radius(Coord::Z, j) * rng.symmetric(),
                        f.dom->radius(Coord::Mu, j) * rng.symmetric());
        // FD of Phi^t along dir minus the frozen L action = W action
        const double eps = 1e-6;
        FlowSequence::Entry hi = x[j], lo = x[j];
        hi.K[0] += eps * dir.K[0];
        lo.K[0] -= eps * dir.K[0];
        hi.V += eps * dir.V;
        lo.V -= eps * dir.V;
        FlowSequence::Entry ph = phi_step(t, hi, j, f.p, *f.model);
        FlowSequence::Entry pl = phi_step(t, lo, j, f.p, *f.model);
        double dphi_K = (ph.K[0] - pl.K[0]) / (2 * eps);
        VTriple dphi_V((ph.V.g - pl.V.g) / (2 * eps), (ph.V.z - pl.V.z) / (2 * eps),
                       (ph.V.mu - pl.V.mu) / (2 * eps));
        // L action on dir
        double Lg = f.blocks.a_gg[j] * dir.V.g;
        double Lz = f.blocks.b_zg[j] * dir.V.g + f.blocks.c_zz[j] * dir.V.z;
        double Lmu = f.blocks.b_mug[j] * dir.V.g + f.blocks.c_muz[j] * dir.V.z +
                     f.blocks.c_mumu[j] * dir.V.mu;

        FlowSequence::Entry wy = W.apply_at(j, dir);
        double scale = std::abs(dphi_K) + 1e-12;
        CHECK(std::abs(wy.K[0] - dphi_K) / scale < 1e-6);
        CHECK(std::abs(wy.V.g - (dphi_V.g - Lg)) <= 1e-6 * (std::abs(dphi_V.g) + 1e-9));
        CHECK(std::abs(wy.V.z - (dphi_V.z - Lz)) <= 1e-6 * (std::abs(dphi_V.z) + 1e-9));
        CHECK(std::abs(wy.V.mu - (dphi_V.mu - Lmu)) <= 1e-6 * (std::abs(dphi_V.mu) + 1e-9));
    }
}

TEST_CASE("build_W: leaving the half ball raises") {
    Fixture f(instances::finite_cutoff(), 0.02, 40);
    FlowSequence x = f.xbar;
    x[5].V.g += 0.8 * f.scheme->w(Coord::G, 5); // ratio 0.8 > 1/2
    CHECK_THROWS_AS(build_W(1.0, x, *f.model, f.p, f.xbar, *f.dom, *f.scheme), Error);
}

TEST_CASE("apply_S: W = 0 converges in one iteration to S0 r; r = 0 gives 0") {
    Fixture f(instances::finite_cutoff(), 0.02, 40, "zero");
    WOperator W = build_W(1.0, f.xbar, *f.model, f.p, f.xbar, *f.dom, *f.scheme);
    FlowSequence r = f.random_residual(21);
    SolveReport rep;
    FlowSequence y = apply_S(W, r, f.blocks, f.p, f.sol.cutoff, f.sol.gbar_ext, *f.scheme,
                             1e-12, 50, &rep);
    CHECK(rep.iterations == 1);
    FlowSequence s0r = apply_S0(r, f.blocks, f.p, f.sol.cutoff, f.sol.gbar_ext);
    FlowSequence diff = y;
    diff.axpy(-1.0, s0r);
    CHECK(weighted_norm(diff, *f.scheme, WhichNorm::W) == 0.0);

    FlowSequence zero(40);
    for (std::size_t j = 0; j <= 40; ++j) zero[j].K.assign(1, 0.0);
    FlowSequence y0 = apply_S(W, zero, f.blocks, f.p, f.sol.cutoff, f.sol.gbar_ext,
                              *f.scheme, 1e-12, 50);
    CHECK(y0.sup_abs() == 0.0);
}

TEST_CASE("apply_S matches the dense oracle including W (J = 40, both models)") {
    for (const char* kind : {"cubic", "random-poly"}) {
        Fixture f(instances::finite_cutoff(), 0.02, 40, kind);
        WOperator W = build_W(1.0, f.xbar, *f.model, f.p, f.xbar, *f.dom, *f.scheme);
        for (std::uint64_t seed : {11u, 12u, 13u}) {
            FlowSequence r = f.random_residual(seed);
            SolveReport rep;
            FlowSequence y = apply_S(W, r, f.blocks, f.p, f.sol.cutoff, f.sol.gbar_ext,
                                     *f.scheme, 1e-13, 80, &rep);
            CHECK(rep.contraction < 1.0);
            CHECK(rep.residual_v <= 10 * 1e-13 + 1e-13);
            FlowSequence o = dense_oracle(f, r, &W);
            FlowSequence diff = y;
            diff.axpy(-1.0, o);
            CHECK(weighted_norm(diff, *f.scheme, WhichNorm::W) <= 1e-9);
        }
    }
}

TEST_CASE("apply_S: a non-contracting K channel raises NonContraction") {
    // kappa0 close to 1 makes the Neumann iteration crawl; with a modest
    // iteration budget the solver must refuse rather than return early
    ParamSeq p = instances::finite_cutoff();
    QuadraticSolution sol = solve_quadratic_bvp(0.02, p, 40);
    ModelConfig mc;
    mc.kind = "cubic";
    mc.kappa0 = 0.95;
    mc.c_psi = 0.0;
    mc.c_rho = 0.0;
    auto model = make_model(mc, sol);
    DomainSpec dom(sol, 1.0, 4.0);
    std::vector<double> gring(sol.gbar_ext.begin(), sol.gbar_ext.begin() + 41);
    WeightScheme scheme(gring, sol.cutoff, 1.0, 0.6, 4.0);
    FlowSequence xbar = xbar_assemble({0.0}, sol, *model, 0.6);
    BlockMatrices blocks = build_L(xbar, p);
    WOperator W = build_W(1.0, xbar, *model, p, xbar, dom, scheme);

    Rng rng(5);
    FlowSequence r(40);
    for (std::size_t j = 0; j <= 40; ++j)
        r[j].K.assign(1, scheme.v(Coord::K, j) * rng.symmetric());
    try {
        apply_S(W, r, blocks, p, sol.cutoff, sol.gbar_ext, scheme, 1e-12, 30);
        FAIL("expected NonContraction");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::NonContraction);
    }
}

TEST_CASE("the continuation right side S(t, x) rho(x) matches the dense oracle at J = 40") {
    Fixture f(instances::finite_cutoff(), 0.02, 40);
    // rho over the reference trajectory as the inhomogeneity
    FlowSequence r(40);
    for (std::size_t j = 0; j <= 40; ++j) {
        r[j].K.assign(1, 0.0);
        r[j].V = f.model->rho(j, f.xbar[j].K, f.xbar[j].V);
    }
    for (double t : {0.0, 1.0}) {
        WOperator W = build_W(t, f.xbar, *f.model, f.p, f.xbar, *f.dom, *f.scheme);
        FlowSequence y = apply_S(W, r, f.blocks, f.p, f.sol.cutoff, f.sol.gbar_ext,
                                 *f.scheme, 1e-13, 80);
        FlowSequence o = dense_oracle(f, r, &W);
        FlowSequence diff = y;
        diff.axpy(-1.0, o);
        CHECK(weighted_norm(diff, *f.scheme, WhichNorm::W) <= 1e-9);
    }
}

TEST_CASE("operator_norm_estimate: zero, identity, and probe-count stability") {
    Fixture f(instances::finite_cutoff(), 0.02, 50);
    auto zero_op = [&](const FlowSequence& r) { return r.zeros_like(); };
    CHECK(operator_norm_estimate(zero_op, f.xbar, *f.scheme, WhichNorm::W, 50, 3) == 0.0);

    auto id = [&](const FlowSequence& r) { return r; };
    double est = operator_norm_estimate(id, f.xbar, *f.scheme, WhichNorm::W, 200, 3);
    CHECK(est <= 1.0 + 1e-12);
    CHECK(est >= 0.9);

    auto s0 = [&](const FlowSequence& r) {
        return apply_S0(r, f.blocks, f.p, f.sol.cutoff, f.sol.gbar_ext);
    };
    double e200 = operator_norm_estimate(s0, f.xbar, *f.scheme, WhichNorm::W, 200, 3);
    double e400 = operator_norm_estimate(s0, f.xbar, *f.scheme, WhichNorm::W, 400, 3);
    CHECK(e400 >= e200); // more probes only raise a max
    CHECK(e400 <= 1.15 * e200);
}
