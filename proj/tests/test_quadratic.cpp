#include <doctest.h>

#include <array>
#include <cmath>
#include <vector>

#include "rgflow/quadratic.hpp"
#include "rgflow/rng.hpp"
#include "rgflow/verify.hpp"

using namespace rgflow;

namespace {

// Independent oracle: the matrix-plus-quadratic-form map evaluated from the
// explicit 3x3 matrices, V' = M V - (V^T q^g V, V^T q^z V, V^T q^mu V).
VTriple step_oracle(const VTriple& v, const ParamSeq& p, std::size_t j) {
    std::array<double, 3> V{v.g, v.z, v.mu};
    std::array<std::array<double, 3>, 3> M{{{1, 0, 0},
                                            {0, 1, 0},
                                            {p.eta.at(j), p.gamma.at(j), p.lambda.at(j)}}};
    std::array<std::array<double, 3>, 3> qg{}, qz{}, qmu{};
    qg[0][0] = p.beta.at(j);
    qz[0][0] = p.theta.at(j);
    qz[0][1] = qz[1][0] = 0.5 * p.zeta.at(j);
    qmu[0][0] = p.ups_gg.at(j);
    qmu[0][1] = qmu[1][0] = 0.5 * p.ups_gz.at(j);
    qmu[0][2] = qmu[2][0] = 0.5 * p.ups_gmu.at(j);
    qmu[1][1] = p.ups_zz.at(j);
    qmu[1][2] = qmu[2][1] = 0.5 * p.ups_zmu.at(j);
    auto quad = [&](const std::array<std::array<double, 3>, 3>& q) {
        double s = 0.0;
        for (int r = 0; r < 3; ++r)
            for (int c = 0; c < 3; ++c) s += V[r] * q[r][c] * V[c];
        return s;
    };
    std::array<double, 3> lin{};
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) lin[r] += M[r][c] * V[c];
    return VTriple(lin[0] - quad(qg), lin[1] - quad(qz), lin[2] - quad(qmu));
}

ParamSeq random_full(std::uint64_t seed) {
    Rng rng(seed);
    ParamSeq p;
    auto c = [&](double amp) { return CoeffSeq::constant(amp * rng.symmetric()); };
    p.beta = c(1.0);
    p.eta = c(1.0);
    p.gamma = c(1.0);
    p.theta = c(1.0);
    p.zeta = c(1.0);
    p.ups_gg = c(1.0);
    p.ups_gz = c(1.0);
    p.ups_gmu = c(1.0);
    p.ups_zz = c(1.0);
    p.ups_zmu = c(1.0);
    p.lambda = CoeffSeq::constant(1.5 + rng.uniform01());
    return p;
}

// brute-force zbar: partial sums of prod_{k=j}^{l}(1-zeta_k g_k)^{-1} theta_l g_l^2
// extended until increments fall below the floor
std::vector<double> zbar_bruteforce(const ParamSeq& p, const std::vector<double>& g,
                                    std::size_t J, double increment_floor) {
    std::vector<double> z(J + 1, 0.0);
    for (std::size_t j = 0; j <= J; ++j) {
        double prod = 1.0;
        double sum = 0.0;
        for (std::size_t l = j; l < g.size(); ++l) {
            prod /= (1.0 - p.zeta.at(l) * g[l]);
            double term = prod * p.theta.at(l) * g[l] * g[l];
            sum += term;
            if (std::abs(term) < increment_floor && l > J) break;
        }
        z[j] = sum;
    }
    return z;
}

} // namespace

TEST_CASE("quadratic_step: linear part only") {
    ParamSeq p;
    p.lambda = CoeffSeq::constant(2.0);
    VTriple v(0.3, -0.2, 0.7);
    VTriple out = quadratic_step(v, p, 0);
    CHECK(out.g == 0.3);
    CHECK(out.z == -0.2);
    CHECK(out.mu == 1.4);
}

TEST_CASE("quadratic_step: one-step gbar arithmetic") {
    ParamSeq p;
    p.beta = CoeffSeq::constant(1.0);
    p.lambda = CoeffSeq::constant(2.0);
    VTriple out = quadratic_step(VTriple(0.1, 0.0, 0.0), p, 0);
    CHECK(out.g == doctest::Approx(0.09).epsilon(1e-15));
    CHECK(out.z == 0.0);
    CHECK(out.mu == 0.0);
}

TEST_CASE("quadratic_step matches the explicit quadratic-form oracle") {
    for (std::uint64_t seed = 1; seed <= 50; ++seed) {
        ParamSeq p = random_full(seed);
        Rng rng(seed + 900);
        VTriple v(rng.symmetric(), rng.symmetric(), rng.symmetric());
        VTriple a = quadratic_step(v, p, 3);
        VTriple b = step_oracle(v, p, 3);
        CHECK(a.g == doctest::Approx(b.g).epsilon(1e-14));
        CHECK(a.z == doctest::Approx(b.z).epsilon(1e-14));
        CHECK(a.mu == doctest::Approx(b.mu).epsilon(1e-14));
    }
}

TEST_CASE("iterate_gbar: constant and two-step values") {
    ParamSeq p;
    std::vector<double> g = iterate_gbar(0.1, p, 5);
    for (double v : g) CHECK(v == 0.1);

    p.beta = CoeffSeq::constant(1.0);
    g = iterate_gbar(0.1, p, 2);
    CHECK(g[1] == doctest::Approx(0.09).epsilon(1e-15));
    CHECK(g[2] == doctest::Approx(0.0819).epsilon(1e-15));
}

TEST_CASE("iterate_gbar: asymptotic 1/gbar ~ 1/g0 + j") {
    ParamSeq p;
    p.beta = CoeffSeq::constant(1.0);
    std::vector<double> g = iterate_gbar(0.01, p, 100000);
    double ratio = g[100000] * (1.0 / 0.01 + 100000.0);
    CHECK(ratio >= 0.8);
    CHECK(ratio <= 1.2);
}

TEST_CASE("iterate_gbar: positivity loss raises with the offending index") {
    ParamSeq p;
    p.beta = CoeffSeq::constant(1.0);
    try {
        iterate_gbar(1.5, p, 10);
        FAIL("expected GZeroTooLarge");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::GZeroTooLarge);
        CHECK(e.index == 1);
    }
}

TEST_CASE("solve_zbar: trivial cases") {
    ParamSeq p;
    p.beta = CoeffSeq::constant(1.0);
    std::vector<double> g = iterate_gbar(0.05, p, 40);

    // theta == 0 -> zbar == 0
    BackwardSolve z = solve_zbar(g, p, 1e-12);
    for (double v : z.values) CHECK(v == 0.0);

    // theta_0 = 1 only, zeta = 0 -> zbar_0 = g0^2, rest 0
    ParamSeq q = p;
    q.theta = CoeffSeq({1.0}, TailRule{});
    BackwardSolve z2 = solve_zbar(g, q, 1e-14);
    CHECK(z2.values[0] == doctest::Approx(0.05 * 0.05).epsilon(1e-13));
    for (std::size_t j = 1; j <= 40; ++j) CHECK(z2.values[j] == 0.0);
}

TEST_CASE("solve_zbar matches brute-force partial sums (infinite cutoff)") {
    ParamSeq p;
    p.beta = CoeffSeq::constant(1.0);
    p.theta = CoeffSeq::constant(1.0);
    std::vector<double> g = iterate_gbar(0.05, p, 200);
    BackwardSolve z = solve_zbar(g, p, 1e-10);
    // with j_Omega infinite the tail decays only harmonically: an absolute
    // 1e-10 certificate is unreachable and the solver must say so honestly
    CHECK_FALSE(z.tail.certified);
    CHECK(z.tail.bound <= 1e-5);
    CHECK(z.tail.trunc_index > 200);

    // independent summation at a much higher horizon
    std::vector<double> gext = g;
    extend_gbar(gext, p, 3000000);
    std::vector<double> oracle = zbar_bruteforce(p, gext, 20, 1e-18);
    // the oracle's own truncation: remaining terms ~ sum gbar^2 ~ gbar_end
    double oracle_tail = gext.back() * 1.1;
    for (std::size_t j = 0; j <= 20; ++j) {
        CHECK(std::abs(z.values[j] - oracle[j]) <= z.tail.bound + oracle_tail);
    }
    // backward recursion residual: zbar_{j+1} - (zbar_j - zeta g z - theta g^2)
    for (std::size_t j = 0; j < 40; ++j) {
        double pred = z.values[j] - p.zeta.at(j) * g[j] * z.values[j] -
                      p.theta.at(j) * g[j] * g[j];
        CHECK(z.values[j + 1] ==
              doctest::Approx(pred).epsilon(1e-13).scale(std::abs(z.values[j]) + 1e-8));
    }
}

TEST_CASE("solve_zbar matches brute force with nonzero zeta (finite cutoff)") {
    ParamSeq p = instances::finite_cutoff();
    std::vector<double> g = iterate_gbar(0.03, p, 150);
    BackwardSolve z = solve_zbar(g, p, 1e-13);
    CHECK(z.tail.certified);
    std::vector<double> gext = g;
    extend_gbar(gext, p, 4000);
    std::vector<double> oracle = zbar_bruteforce(p, gext, 150, 0.0);
    for (std::size_t j = 0; j <= 150; ++j)
        CHECK(z.values[j] == doctest::Approx(oracle[j]).epsilon(1e-11).scale(1e-8));
}

TEST_CASE("solve_zbar: divergent tail raises") {
    ParamSeq p; // beta == 0, theta == 1: sum of g0^2 diverges
    p.theta = CoeffSeq::constant(1.0);
    std::vector<double> g = iterate_gbar(0.05, p, 40);
    CHECK_THROWS_AS(solve_zbar(g, p, 1e-12), Error);
}

TEST_CASE("solve_mubar: trivial cases") {
    ParamSeq p;
    p.beta = CoeffSeq::constant(1.0);
    p.lambda = CoeffSeq::constant(2.0);
    std::vector<double> g = iterate_gbar(0.05, p, 40);
    std::vector<double> z(41, 0.0);

    BackwardSolve mu = solve_mubar(g, z, p, 1e-12);
    for (double v : mu.values) CHECK(v == 0.0);

    // sigma_0 != 0 only via eta_0: mubar_0 = -sigma_0 / 2
    ParamSeq q = p;
    q.eta = CoeffSeq({1.0}, TailRule{});
    BackwardSolve mu2 = solve_mubar(g, z, q, 1e-14);
    CHECK(mu2.values[0] == doctest::Approx(-1.0 * 0.05 / 2.0).epsilon(1e-13));
    for (std::size_t j = 1; j <= 40; ++j) CHECK(mu2.values[j] == 0.0);
}

TEST_CASE("solve_mubar matches brute-force backward iteration from J+200") {
    ParamSeq p = instances::infinite_cutoff();
    const std::size_t J = 60;
    std::vector<double> g = iterate_gbar(0.04, p, J);
    BackwardSolve z = solve_zbar(g, p, 1e-13);
    BackwardSolve mu = solve_mubar(g, z.values, p, 1e-13);
    CHECK(mu.tail.certified);

    // oracle: extend everything to J + 200 and iterate the mu recursion
    // backward from zero
    std::vector<double> gext = g;
    extend_gbar(gext, p, J + 200);
    BackwardSolve zext = solve_zbar(gext, p, 1e-15);
    std::vector<double> mo(J + 201, 0.0);
    for (std::size_t j = J + 200; j-- > 0;) {
        double lt = p.lambda.at(j) - tau_at(p, j, gext[j], zext.values[j]);
        mo[j] = (mo[j + 1] - sigma_at(p, j, gext[j], zext.values[j])) / lt;
    }
    // the two solves share the harmonic z-tail only approximately; their z
    // inputs differ at the 1e-9 level and mu inherits that through gamma
    for (std::size_t j = 0; j <= J; ++j)
        CHECK(std::abs(mu.values[j] - mo[j]) <= 1e-9);

    // backward residual of the mu recursion
    for (std::size_t j = 0; j < J; ++j) {
        double lt = p.lambda.at(j) - tau_at(p, j, g[j], z.values[j]);
        double pred = (mu.values[j + 1] - sigma_at(p, j, g[j], z.values[j])) / lt;
        CHECK(mu.values[j] ==
              doctest::Approx(pred).epsilon(1e-13).scale(std::abs(mu.values[j]) + 1e-10));
    }
}

TEST_CASE("solve_mubar: expansivity violation raises") {
    ParamSeq p;
    p.beta = CoeffSeq::constant(1.0);
    p.lambda = CoeffSeq::constant(0.9);
    std::vector<double> g = iterate_gbar(0.05, p, 20);
    std::vector<double> z(21, 0.0);
    CHECK_THROWS_AS(solve_mubar(g, z, p, 1e-12), Error);
}

TEST_CASE("solve_quadratic_bvp: zero non-beta params give zero zbar, mubar") {
    ParamSeq p;
    p.beta = CoeffSeq::constant(1.0);
    p.lambda = CoeffSeq::constant(2.0);
    QuadraticSolution sol = solve_quadratic_bvp(0.05, p, 100);
    for (const VTriple& v : sol.vbar) {
        CHECK(v.z == 0.0);
        CHECK(v.mu == 0.0);
    }
}

TEST_CASE("solve_quadratic_bvp: abrupt cutoff gives exactly constant gbar past the cut") {
    ParamSeq p;
    p.beta = CoeffSeq(std::vector<double>(101, 1.0), TailRule{});
    p.lambda = CoeffSeq::constant(2.0);
    QuadraticSolution sol = solve_quadratic_bvp(0.1, p, 400);
    double plateau = sol.vbar[101].g;
    for (std::size_t j = 101; j <= 400; ++j) CHECK(sol.vbar[j].g == plateau);
    CHECK(std::abs(plateau - 0.01) <= 0.2 * 0.01);
    CHECK(sol.z_tail.certified);
    CHECK(sol.mu_tail.certified);
}

TEST_CASE("solve_quadratic_bvp: counterexample succeeds, envelope constant grows") {
    ParamSeq p = instances::counterexample();
    QuadraticSolution a = solve_quadratic_bvp(0.05, p, 1000);
    QuadraticSolution b = solve_quadratic_bvp(0.05, p, 10000);
    CHECK_FALSE(a.z_tail.certified);
    CHECK(b.env_z > a.env_z * 1.2); // grows without bound, roughly ~ log J
    double slope = (b.env_z - a.env_z) / std::log(10.0);
    CHECK(slope > 0.2);
    CHECK(slope < 2.0);
}

TEST_CASE("solve_quadratic_bvp: g0 gate refuses loud inputs") {
    ParamSeq p;
    p.beta = CoeffSeq::constant(2.0);
    p.lambda = CoeffSeq::constant(2.0);
    CHECK_THROWS_AS(solve_quadratic_bvp(0.09, p, 50), Error); // 0.18 > 0.1
    QuadraticOptions opts;
    opts.enforce_gates = false;
    CHECK_NOTHROW(solve_quadratic_bvp(0.04, p, 50, opts));
}

TEST_CASE("gbar_derivatives: empty products give dg == 1, d2g == 0") {
    ParamSeq z;
    z.lambda = CoeffSeq::constant(2.0);
    QuadraticSolution solz = solve_quadratic_bvp(0.05, z, 50);
    DerivativeBundle dz = gbar_derivatives(solz, z);
    for (std::size_t j = 0; j <= 50; ++j) {
        CHECK(dz.dg[j] == 1.0);
        CHECK(dz.d2g[j] == 0.0);
    }
}

TEST_CASE("gbar_derivatives agree with central finite differences") {
    ParamSeq p = instances::infinite_cutoff();
    const double g0 = 0.05;
    const std::size_t J = 120;
    QuadraticSolution sol = solve_quadratic_bvp(g0, p, J);
    DerivativeBundle d = gbar_derivatives(sol, p);

    const double eps = 1e-7 * g0;
    QuadraticSolution hi = solve_quadratic_bvp(g0 + eps, p, J);
    QuadraticSolution lo = solve_quadratic_bvp(g0 - eps, p, J);
    for (std::size_t j : {std::size_t{0}, std::size_t{5}, std::size_t{30}, std::size_t{120}}) {
        double fd_g = (hi.vbar[j].g - lo.vbar[j].g) / (2 * eps);
        double fd_z = (hi.vbar[j].z - lo.vbar[j].z) / (2 * eps);
        double fd_mu = (hi.vbar[j].mu - lo.vbar[j].mu) / (2 * eps);
        CHECK(d.dg[j] == doctest::Approx(fd_g).epsilon(1e-5));
        CHECK(d.dz[j] == doctest::Approx(fd_z).epsilon(1e-5).scale(1e-6));
        CHECK(d.dmu[j] == doctest::Approx(fd_mu).epsilon(1e-5).scale(1e-6));
    }
    // second derivatives against second differences
    for (std::size_t j : {std::size_t{0}, std::size_t{10}}) {
        const double e2 = 3e-5 * g0;
        QuadraticSolution h2 = solve_quadratic_bvp(g0 + e2, p, J);
        QuadraticSolution l2 = solve_quadratic_bvp(g0 - e2, p, J);
        double fd2 = (h2.vbar[j].g - 2 * sol.vbar[j].g + l2.vbar[j].g) / (e2 * e2);
        CHECK(d.d2g[j] == doctest::Approx(fd2).epsilon(1e-4).scale(1.0));
    }
}

TEST_CASE("gbar prime normalized by (gbar_j/gbar_0)^2 stays within 1 + O(g0)") {
    ParamSeq p;
    p.beta = CoeffSeq::constant(1.0);
    p.lambda = CoeffSeq::constant(2.0);
    const double g0 = 0.03;
    QuadraticSolution sol = solve_quadratic_bvp(g0, p, 3000);
    DerivativeBundle d = gbar_derivatives(sol, p);
    double cfit = 0.0;
    for (std::size_t j = 1; j <= 3000; ++j) {
        double ratio = d.dg[j] * std::pow(g0 / sol.vbar[j].g, 2);
        cfit = std::max(cfit, std::abs(ratio - 1.0) / g0);
    }
    CHECK(cfit < 3.0); // fitted constant stays modest
}

TEST_CASE("product_asymptotic: trivial and quantitative cases") {
    ParamSeq p;
    p.beta = CoeffSeq::constant(1.0);
    p.lambda = CoeffSeq::constant(2.0);
    QuadraticSolution sol = solve_quadratic_bvp(0.05, p, 2000);

    ProductAsymptotic g0case = product_asymptotic(0.0, 0, sol, p);
    CHECK(g0case.c_j == 1.0);
    CHECK(g0case.residual_bound == 0.0);

    ParamSeq z;
    z.lambda = CoeffSeq::constant(2.0);
    QuadraticSolution solz = solve_quadratic_bvp(0.05, z, 100);
    ProductAsymptotic zero = product_asymptotic(2.0, 0, solz, z);
    CHECK(zero.c_j == 1.0);

    // gamma = 2: the running product over 0..l matches (g_0/g_{l+1})^2 c_0
    ProductAsymptotic pa = product_asymptotic(2.0, 0, sol, p);
    double prod = 1.0;
    for (std::size_t k = 0; k <= 1000; ++k) {
        prod /= (1.0 - 2.0 * p.beta.at(k) * sol.gbar_ext[k]);
        if (k == 1000) {
            double env = std::pow(sol.gbar_ext[0] / sol.gbar_ext[k + 1], 2.0);
            double ratio = prod / (env * pa.c_j);
            CHECK(std::abs(ratio - 1.0) <= 5.0 * sol.cutoff.chi(k) * sol.gbar_ext[k]);
        }
    }
    CHECK(pa.residual_bound < 1e-2);
    CHECK(pa.c_j == doctest::Approx(1.0).epsilon(0.2)); // 1 + O(chi_0 g_0)
}

TEST_CASE("product_asymptotic: nonpositive factor raises") {
    ParamSeq p;
    p.beta = CoeffSeq::constant(1.0);
    p.lambda = CoeffSeq::constant(2.0);
    QuadraticSolution sol = solve_quadratic_bvp(0.05, p, 100, {});
    CHECK_THROWS_AS(product_asymptotic(25.0, 0, sol, p), Error);
}

TEST_CASE("sum_certificate: single-term and stability cases") {
    ParamSeq p;
    p.beta = CoeffSeq::constant(1.0);
    p.lambda = CoeffSeq::constant(2.0);
    QuadraticSolution sol = solve_quadratic_bvp(0.05, p, 25000);
    CutoffData cut = cutoff_time(p);

    // k = j, n = 2, m = 0: single term, ratio = gbar_j
    SumCertificate single = sum_certificate(2.0, 0.0, 7, 7, sol, cut);
    CHECK(single.ratio == doctest::Approx(sol.gbar_ext[7]).epsilon(1e-12));

    // n = 1: fitted constant within 10% when k doubles
    SumCertificate c1 = sum_certificate(1.0, 0.0, 0, 10000, sol, cut);
    CHECK(c1.stable);

    // beyond a finite cutoff the ratio closes geometrically
    ParamSeq pf = instances::finite_cutoff();
    QuadraticSolution solf = solve_quadratic_bvp(0.03, pf, 400);
    SumCertificate cf = sum_certificate(2.0, 0.0, 60, 120, solf, cutoff_time(pf));
    CHECK(cf.ratio <= 1.0);
    CHECK(cf.stable);
}

TEST_CASE("beta-monotonicity of gbar under random single raises") {
    Rng rng(555);
    ParamSeq p = instances::finite_cutoff();
    std::vector<double> base = iterate_gbar(0.03, p, 200);
    for (int rep = 0; rep < 50; ++rep) {
        std::vector<double> beta = p.beta.prefix();
        std::size_t k = std::size_t(rng.uniform01() * double(beta.size()));
        beta[k] += rng.uniform01();
        ParamSeq q = p;
        q.beta = CoeffSeq(beta, TailRule{});
        std::vector<double> up = iterate_gbar(0.03, q, 200);
        for (std::size_t j = 0; j <= 200; ++j) CHECK(up[j] <= base[j] * (1 + 1e-15));
    }
}

TEST_CASE("z/mu envelopes stable under horizon doubling (admissible instances)") {
    for (std::uint64_t seed : {11u, 12u, 13u}) {
        ParamSeq p = instances::random_admissible(seed);
        QuadraticSolution a = solve_quadratic_bvp(0.02, p, 300);
        QuadraticSolution b = solve_quadratic_bvp(0.02, p, 600);
        CHECK(std::abs(b.env_z - a.env_z) <= 0.05 * std::max(a.env_z, 1e-12));
        CHECK(std::abs(b.env_mu - a.env_mu) <= 0.05 * std::max(a.env_mu, 1e-12));
    }
}
