#include "rgflow/verify.hpp"

#include <algorithm>
#include <cmath>

#include "rgflow/assumptions.hpp"
#include "rgflow/homotopy.hpp"
#include "rgflow/linear.hpp"
#include "rgflow/rng.hpp"

namespace rgflow {

namespace instances {

ParamSeq finite_cutoff() {
    ParamSeq p;
    p.omega = 2.0;
    auto cut = [](double v, std::size_t n) {
        return CoeffSeq(std::vector<double>(n, v), TailRule{});
    };
    p.beta = cut(1.0, 40);
    p.eta = cut(0.15, 40);
    p.gamma = cut(0.10, 40);
    p.theta = cut(0.20, 40);
    p.zeta = cut(-0.10, 40);
    p.ups_gg = cut(0.04, 40);
    p.ups_gz = cut(0.04, 40);
    p.ups_gmu = cut(0.04, 40);
    p.ups_zz = cut(0.04, 40);
    p.ups_zmu = cut(0.04, 40);
    p.lambda = CoeffSeq::constant(2.0);
    return p;
}

ParamSeq infinite_cutoff() {
    ParamSeq p;
    p.omega = 2.0;
    p.beta = CoeffSeq::constant(1.0);
    p.eta = CoeffSeq::constant(0.10);
    p.gamma = CoeffSeq::constant(0.10);
    p.theta = CoeffSeq::constant(0.20);
    p.zeta = CoeffSeq::constant(-0.10);
    p.ups_gg = CoeffSeq::constant(0.04);
    p.ups_gz = CoeffSeq::constant(0.04);
    p.ups_gmu = CoeffSeq::constant(0.04);
    p.ups_zz = CoeffSeq::constant(0.04);
    p.ups_zmu = CoeffSeq::constant(0.04);
    p.lambda = CoeffSeq::constant(2.5);
    return p;
}

ParamSeq counterexample() {
    ParamSeq p;
    p.omega = 2.0;
    p.beta = CoeffSeq::constant(1.0);
    p.theta = CoeffSeq::constant(1.0);
    p.zeta = CoeffSeq::constant(1.0);
    p.lambda = CoeffSeq::constant(2.0);
    return p;
}

ParamSeq counterexample_negative() {
    ParamSeq p = counterexample();
    p.zeta = CoeffSeq::constant(-1.0);
    return p;
}

ParamSeq random_admissible(std::uint64_t seed) {
    Rng rng(seed);
    ParamSeq p;
    p.omega = 2.0;
    // beta: positive bulk with a finite cut, so j_Omega is finite
    std::size_t n = 24 + static_cast<std::size_t>(rng.uniform01() * 24);
    std::vector<double> beta(n);
    for (double& b : beta) b = 0.5 + rng.uniform01();
    p.beta = CoeffSeq(std::move(beta), TailRule{});
    auto small = [&](double amp) {
        std::vector<double> v(n);
        for (double& x : v) x = amp * rng.symmetric();
        return CoeffSeq(std::move(v), TailRule{});
    };
    p.eta = small(0.2);
    p.gamma = small(0.2);
    p.theta = small(0.3);
    // zeta nonpositive so the product bound closes
    std::vector<double> ze(n);
    for (double& x : ze) x = -0.3 * rng.uniform01();
    p.zeta = CoeffSeq(std::move(ze), TailRule{});
    p.ups_gg = small(0.05);
    p.ups_gz = small(0.05);
    p.ups_gmu = small(0.05);
    p.ups_zz = small(0.05);
    p.ups_zmu = small(0.05);
    p.lambda = CoeffSeq::constant(1.8 + rng.uniform01());
    return p;
}

} // namespace instances

namespace {

using Check = CheckResult;

Check make_check(const std::string& name, const std::string& statement) {
    Check c;
    c.name = name;
    c.statement = statement;
    return c;
}

// shared solved instances for the suite
struct Suite {
    std::uint64_t seed;
    std::vector<Check> results;

    void add(Check c) { results.push_back(std::move(c)); }
};

FlowSequence random_flow(std::size_t J, std::size_t d, double scale, Rng& rng) {
    FlowSequence x(J);
    for (std::size_t j = 0; j <= J; ++j) {
        x[j].K.resize(d);
        for (double& k : x[j].K) k = scale * rng.symmetric();
        x[j].V = VTriple(scale * rng.symmetric(), scale * rng.symmetric(),
                         scale * rng.symmetric());
    }
    return x;
}

void check_params_suite(Suite& s) {
    // chi multiplicative along steps
    {
        Check c = make_check("params.chi-multiplicative", "chi_j / chi_{j+1} in {1, Omega}");
        c.tolerance = 1e-12;
        bool ok = true;
        for (const ParamSeq& p : {instances::finite_cutoff(), instances::infinite_cutoff()}) {
            CutoffData cut = cutoff_time(p);
            for (std::size_t j = 0; j < 200; ++j) {
                double r = cut.chi(j) / cut.chi(j + 1);
                ok = ok && (std::abs(r - 1.0) < 1e-12 || std::abs(r - p.omega) < 1e-12);
            }
        }
        c.pass = ok;
        s.add(c);
    }
    // weighted norm axioms on random probes
    {
        Check c = make_check("params.norm-axioms",
                             "weighted norm: homogeneity and triangle inequality");
        c.tolerance = 1e-12;
        ParamSeq p = instances::finite_cutoff();
        CutoffData cut = cutoff_time(p);
        std::vector<double> g = iterate_gbar(0.03, p, 60);
        WeightScheme scheme(g, cut, 1.0, 0.5, 2.0);
        Rng rng(s.seed);
        bool ok = true;
        double worst = 0.0;
        for (int rep = 0; rep < 20; ++rep) {
            FlowSequence x = random_flow(60, 1, 1e-3, rng);
            FlowSequence y = random_flow(60, 1, 1e-3, rng);
            double alpha = rng.uniform(-3.0, 3.0);
            FlowSequence cx = x;
            cx.scale(alpha);
            double lhs = weighted_norm(cx, scheme, WhichNorm::W);
            double rhs = std::abs(alpha) * weighted_norm(x, scheme, WhichNorm::W);
            double rel = std::abs(lhs - rhs) / std::max(1e-300, rhs);
            worst = std::max(worst, rel);
            ok = ok && rel < 1e-12;
            FlowSequence xy = x;
            xy.axpy(1.0, y);
            double nx = weighted_norm(x, scheme, WhichNorm::W);
            double ny = weighted_norm(y, scheme, WhichNorm::W);
            double tri = weighted_norm(xy, scheme, WhichNorm::W) - (nx + ny);
            ok = ok && tri <= 1e-12 * (nx + ny);
        }
        c.observed["max_homogeneity_rel_err"] = worst;
        c.pass = ok;
        s.add(c);
    }
    // cutoff monotone in Omega
    {
        Check c = make_check("params.cutoff-monotone-omega",
                             "j_Omega <= j_Omega' when Omega <= Omega'");
        Rng rng(s.seed + 1);
        bool ok = true;
        for (int rep = 0; rep < 30; ++rep) {
            std::size_t n = 5 + static_cast<std::size_t>(rng.uniform01() * 20);
            std::vector<double> beta(n);
            for (double& b : beta) b = rng.symmetric();
            ParamSeq p;
            p.beta = CoeffSeq(beta, TailRule{});
            p.omega = 1.2 + 2.0 * rng.uniform01();
            ParamSeq q = p;
            q.omega = p.omega + rng.uniform01();
            std::size_t j1 = cutoff_time(p).j_omega;
            std::size_t j2 = cutoff_time(q).j_omega;
            ok = ok && j1 <= j2;
        }
        c.pass = ok;
        s.add(c);
    }
    // report reproducibility under reruns with the same seed
    {
        Check c = make_check("params.report-reproducible",
                             "A1/A2 envelope constants bit-identical across reruns");
        ParamSeq p = instances::infinite_cutoff();
        CutoffData cut = cutoff_time(p);
        A1Report a1a = check_A1(p, 500), a1b = check_A1(p, 500);
        A2Report a2a = check_A2(p, cut, 500), a2b = check_A2(p, cut, 500);
        c.pass = a1a.beta_sup == a1b.beta_sup && a1a.c_best == a1b.c_best &&
                 a2a.c_env == a2b.c_env && a2a.lambda_min == a2b.lambda_min;
        s.add(c);
    }
}

void check_quadratic_suite(Suite& s) {
    for (bool finite : {true, false}) {
        ParamSeq p = finite ? instances::finite_cutoff() : instances::infinite_cutoff();
        std::string tag = finite ? "finite" : "infinite";
        QuadraticSolution sol = solve_quadratic_bvp(0.03, p, 300);

        Check c = make_check("quadratic.forward-residual[" + tag + "]",
                             "Vbar_{j+1} - phibar_j(Vbar_j) = 0 to 1e-13 relative");
        c.tolerance = 1e-13;
        double worst = 0.0;
        for (std::size_t j = 0; j < sol.horizon; ++j) {
            VTriple next = quadratic_step(sol.vbar[j], p, j);
            double scale = std::max({std::abs(sol.vbar[j + 1].g), std::abs(sol.vbar[j + 1].z),
                                     std::abs(sol.vbar[j + 1].mu), sol.g0 * sol.g0});
            worst = std::max({worst, std::abs(next.g - sol.vbar[j + 1].g) / scale,
                              std::abs(next.z - sol.vbar[j + 1].z) / scale,
                              std::abs(next.mu - sol.vbar[j + 1].mu) / scale});
        }
        c.observed["max_rel_residual"] = worst;
        c.pass = worst <= c.tolerance;
        s.add(c);

        // envelope stability under horizon doubling
        Check e = make_check("quadratic.envelope-stability[" + tag + "]",
                             "sup |zbar|/(chi gbar) stable under horizon doubling");
        e.tolerance = 0.05;
        QuadraticSolution sol2 = solve_quadratic_bvp(0.03, p, 600);
        double dz = std::abs(sol2.env_z - sol.env_z) / std::max(sol.env_z, 1e-300);
        double dmu = std::abs(sol2.env_mu - sol.env_mu) / std::max(sol.env_mu, 1e-300);
        e.observed["env_z"] = sol.env_z;
        e.observed["env_mu"] = sol.env_mu;
        e.observed["rel_change_z"] = dz;
        e.observed["rel_change_mu"] = dmu;
        e.pass = dz < 0.05 && dmu < 0.05;
        s.add(e);
    }

    // beta-monotonicity of gbar
    {
        Check c = make_check("quadratic.beta-monotone",
                             "raising any beta_k never increases any gbar_j");
        Rng rng(s.seed + 2);
        bool ok = true;
        ParamSeq p = instances::finite_cutoff();
        std::vector<double> base = iterate_gbar(0.03, p, 120);
        for (int rep = 0; rep < 20; ++rep) {
            std::size_t k = static_cast<std::size_t>(rng.uniform01() * 40);
            ParamSeq q = p;
            std::vector<double> beta = p.beta.prefix();
            beta[k] += rng.uniform01();
            q.beta = CoeffSeq(beta, TailRule{});
            std::vector<double> up = iterate_gbar(0.03, q, 120);
            for (std::size_t j = 0; j <= 120; ++j) ok = ok && up[j] <= base[j] * (1 + 1e-15);
        }
        c.pass = ok;
        s.add(c);
    }

    // stability in the initial condition
    {
        Check c = make_check("quadratic.initial-stability",
                             "|gring_j - gbar_j| <= delta gring_j (1 + O(g0))");
        ParamSeq p = instances::infinite_cutoff();
        double g0 = 0.03;
        std::vector<double> base = iterate_gbar(g0, p, 2000);
        double cfit = 0.0;
        bool ok = true;
        for (double delta : {0.01, 0.1}) {
            std::vector<double> hi = iterate_gbar(g0 * (1 + delta), p, 2000);
            for (std::size_t j = 0; j <= 2000; ++j) {
                double rel = std::abs(hi[j] - base[j]) / (delta * hi[j]);
                cfit = std::max(cfit, (rel - 1.0) / g0);
                ok = ok && rel <= 1.0 + 1.5 * g0;
            }
        }
        c.observed["fitted_C"] = cfit;
        c.pass = ok;
        s.add(c);
    }

    // Riemann-sum comparison
    {
        Check c = make_check("quadratic.riemann-sum",
                             "sum beta psi(gbar) gbar^2 matches the integral with a "
                             "second-order correction");
        ParamSeq p = instances::infinite_cutoff();
        std::vector<double> g = iterate_gbar(0.03, p, 4000);
        bool ok = true;
        for (int n = 1; n <= 3; ++n) {
            double sum = 0.0;
            std::size_t j = 0, k = 4000 - 1;
            for (std::size_t l = j; l <= k; ++l)
                sum += p.beta.at(l) * std::pow(g[l], n - 2) * g[l] * g[l];
            double a = g[k + 1], b = g[j];
            double integral = n == 1   ? std::log(b / a)
                              : n == 2 ? b - a
                                       : 0.5 * (b * b - a * a);
            double correction = n == 1   ? (b - a)
                                : n == 2 ? 1e-300
                                         : 0.5 * (b * b - a * a);
            double err = std::abs(sum - integral);
            c.observed["err_n" + std::to_string(n)] = err;
            ok = ok && err <= std::max(2.0 * correction, 1e-14);
        }
        c.pass = ok;
        s.add(c);
    }

    // zeta products stay bounded when zeta <= 0 beyond finitely many indices
    {
        Check c = make_check("quadratic.zeta-product",
                             "prod (1 - zeta gbar)^{-1} bounded uniformly in the range");
        ParamSeq p = instances::infinite_cutoff();
        std::vector<double> g = iterate_gbar(0.03, p, 5000);
        double sup = 0.0;
        Rng rng(s.seed + 3);
        for (int rep = 0; rep < 50; ++rep) {
            std::size_t j = static_cast<std::size_t>(rng.uniform01() * 2000);
            std::size_t l = j + static_cast<std::size_t>(rng.uniform01() * 2999);
            double prod = 1.0;
            for (std::size_t q = j; q <= l; ++q) prod /= (1.0 - p.zeta.at(q) * g[q]);
            sup = std::max(sup, prod);
        }
        c.observed["sup_product"] = sup;
        c.pass = sup <= 2.0;
        s.add(c);
    }

    // counterexample: the z-envelope must NOT be stable
    {
        Check c = make_check("quadratic.envelope-counterexample",
                             "zeta = theta = beta = 1 breaks zbar = O(chi gbar)");
        c.expected_fail = true;
        ParamSeq p = instances::counterexample();
        QuadraticSolution a = solve_quadratic_bvp(0.05, p, 2000);
        QuadraticSolution b = solve_quadratic_bvp(0.05, p, 4000);
        double change = std::abs(b.env_z - a.env_z) / std::max(a.env_z, 1e-300);
        c.observed["env_z_J"] = a.env_z;
        c.observed["env_z_2J"] = b.env_z;
        c.observed["rel_change"] = change;
        c.tolerance = 0.05;
        c.pass = change < 0.05; // expected to fail
        s.add(c);
    }

    // derivative envelopes
    {
        Check c = make_check("quadratic.derivative-envelopes",
                             "|zbar'_j| gbar_0^2/(chi_j gbar_j^2) bounded, stable in horizon");
        ParamSeq p = instances::finite_cutoff();
        double fit[2];
        int idx = 0;
        for (std::size_t J : {std::size_t{200}, std::size_t{400}}) {
            QuadraticSolution sol = solve_quadratic_bvp(0.03, p, J);
            DerivativeBundle der = gbar_derivatives(sol, p);
            double worst = 0.0;
            for (std::size_t j = 0; j <= J; ++j) {
                double envj = sol.cutoff.chi(j) * sol.gbar_ext[j] * sol.gbar_ext[j];
                worst = std::max(worst, std::abs(der.dz[j]) * sol.g0 * sol.g0 / envj);
            }
            fit[idx++] = worst;
        }
        c.observed["fit_J"] = fit[0];
        c.observed["fit_2J"] = fit[1];
        c.tolerance = 0.10;
        c.pass = std::abs(fit[1] - fit[0]) <= 0.10 * std::max(fit[0], 1e-300);
        s.add(c);
    }
}

void check_model_suite(Suite& s) {
    ParamSeq p = instances::finite_cutoff();
    QuadraticSolution sol = solve_quadratic_bvp(0.02, p, 200);
    DomainSpec dom(sol, 1.0, 4.0);
    std::vector<double> gring(sol.gbar_ext.begin(), sol.gbar_ext.begin() + 201);
    WeightScheme scheme(gring, sol.cutoff, 1.0, 0.6, 4.0);

    for (const char* kind : {"zero", "cubic", "random-poly"}) {
        ModelConfig mc;
        mc.kind = kind;
        auto model = make_model(mc, sol);

        Check c = make_check(std::string("model.kbar-containment[") + kind + "]",
                             "||Kbar_j|| <= a* chi_j gbar_j^3 for all j");
        std::vector<double> K0(model->d_K(0),
                               0.5 * 0.6 * sol.g0 * sol.g0 * sol.g0);
        auto K = kbar_iterate(K0, sol, *model, 0.6);
        double worst = 0.0;
        for (std::size_t j = 0; j <= sol.horizon; ++j) {
            double cap = 0.6 * sol.cutoff.chi(j) * std::pow(sol.gbar_ext[j], 3);
            worst = std::max(worst, sup_norm(K[j]) / cap);
        }
        c.observed["max_ratio"] = worst;
        c.pass = worst <= 1.0 + 1e-9;
        s.add(c);

        // rho envelope over random domain points
        Check r = make_check(std::string("model.rho-envelope[") + kind + "]",
                             "||rho_j(x)|| <= M chi_{j+1} gbar_{j+1}^3 on D_j");
        Rng rng(s.seed + 5);
        double ratio = 0.0;
        for (std::size_t j : {std::size_t{0}, std::size_t{5}, std::size_t{40},
                              std::size_t{120}}) {
            for (int rep = 0; rep < 1000; ++rep) {
                FlowSequence::Entry x;
                x.K.resize(model->d_K(j));
                for (double& kk : x.K) kk = dom.radius(Coord::K, j) * rng.symmetric();
                x.V.g = sol.gbar_ext[j] + dom.radius(Coord::G, j) * rng.symmetric();
                x.V.z = sol.zbar_ext[j] + dom.radius(Coord::Z, j) * rng.symmetric();
                x.V.mu = sol.mubar_ext[j] + dom.radius(Coord::Mu, j) * rng.symmetric();
                VTriple v = model->rho(j, x.K, x.V);
                double env = sol.cutoff.chi(j + 1) * std::pow(sol.gbar_ext[j + 1], 3);
                ratio = std::max(ratio, std::max({std::abs(v.g), std::abs(v.z),
                                                  std::abs(v.mu)}) / env);
            }
        }
        r.observed["max_ratio"] = ratio;
        r.observed["declared_M"] = model->declared_M;
        r.pass = ratio <= model->declared_M * (1 + 1e-9);
        s.add(r);
    }

    // D_K contraction for the linear built-in
    {
        Check c = make_check("model.dk-contraction",
                             "||psi(K+d,V) - psi(K,V)|| <= kappa ||d|| (1 + 1e-8)");
        ModelConfig mc;
        mc.kind = "cubic";
        auto model = make_model(mc, sol);
        Rng rng(s.seed + 6);
        bool ok = true;
        double worst = 0.0;
        for (int rep = 0; rep < 200; ++rep) {
            std::size_t j = static_cast<std::size_t>(rng.uniform01() * 100);
            FlowSequence::Entry x;
            x.K.assign(1, dom.radius(Coord::K, j) * 0.5 * rng.symmetric());
            x.V.g = sol.gbar_ext[j] + 0.5 * dom.radius(Coord::G, j) * rng.symmetric();
            x.V.z = sol.zbar_ext[j];
            x.V.mu = sol.mubar_ext[j];
            std::vector<double> d{0.3 * dom.radius(Coord::K, j) * rng.symmetric()};
            std::vector<double> Kd{x.K[0] + d[0]};
            double diff = std::abs(model->psi(j, Kd, x.V)[0] - model->psi(j, x.K, x.V)[0]);
            double bound = model->declared_kappa * std::abs(d[0]) * (1 + 1e-8);
            worst = std::max(worst, diff / std::max(bound, 1e-300));
            ok = ok && diff <= bound;
        }
        c.observed["max_ratio"] = worst;
        c.pass = ok;
        s.add(c);
    }

    // weighted-space transcription: ||rho(x)||_v <= M/h on the unit w-ball
    {
        Check c = make_check("model.weighted-transcription", "||rho(x)||_{X^v} <= M / h");
        ModelConfig mc;
        mc.kind = "cubic";
        auto model = make_model(mc, sol);
        FlowSequence xbar = xbar_assemble(std::vector<double>(1, 0.0), sol, *model, 0.6);
        Rng rng(s.seed + 7);
        double worst = 0.0;
        for (int rep = 0; rep < 10; ++rep) {
            FlowSequence x = xbar;
            for (std::size_t j = 0; j <= sol.horizon; ++j) {
                x[j].K[0] += scheme.w(Coord::K, j) * rng.symmetric();
                x[j].V.g += scheme.w(Coord::G, j) * rng.symmetric();
                x[j].V.z += scheme.w(Coord::Z, j) * rng.symmetric();
                x[j].V.mu += scheme.w(Coord::Mu, j) * rng.symmetric();
            }
            FlowSequence rho(sol.horizon);
            for (std::size_t j = 0; j <= sol.horizon; ++j) {
                rho[j].K.assign(1, 0.0);
                rho[j].V = model->rho(j, x[j].K, x[j].V);
            }
            worst = std::max(worst, weighted_norm(rho, scheme, WhichNorm::V));
        }
        c.observed["max_v_norm"] = worst;
        c.observed["M_over_h"] = model->declared_M / scheme.h();
        c.pass = worst <= model->declared_M / scheme.h() * (1 + 1e-9);
        s.add(c);
    }
}

void check_linear_suite(Suite& s) {
    ParamSeq p = instances::finite_cutoff();
    QuadraticSolution sol = solve_quadratic_bvp(0.02, p, 120);
    ModelConfig mc;
    mc.kind = "cubic";
    auto model = make_model(mc, sol);
    DomainSpec dom(sol, 1.0, 4.0);
    std::vector<double> gring(sol.gbar_ext.begin(), sol.gbar_ext.begin() + 121);
    WeightScheme scheme(gring, sol.cutoff, 1.0, 0.6, 4.0);
    FlowSequence xbar = xbar_assemble(std::vector<double>(1, 0.0), sol, *model, 0.6);
    BlockMatrices blocks = build_L(xbar, p);

    // A-product bound
    {
        Check c = make_check("linear.a-product",
                             "||A_j...A_l|| <= C (gring_{j+1}/gring_l)^2, fitted C stable");
        Rng rng(s.seed + 8);
        double cfit = 0.0;
        for (int rep = 0; rep < 100; ++rep) {
            std::size_t l = static_cast<std::size_t>(rng.uniform01() * 100);
            std::size_t j = l + static_cast<std::size_t>(rng.uniform01() * (119 - l));
            double prod = 1.0;
            for (std::size_t k = l; k <= j; ++k) prod *= blocks.a_gg[k];
            double env = std::pow(sol.gbar_ext[j + 1] / sol.gbar_ext[l], 2);
            cfit = std::max(cfit, std::abs(prod) / env);
        }
        c.observed["fitted_C"] = cfit;
        c.pass = cfit <= 2.0;
        s.add(c);
    }

    // C-inverse product structure
    {
        Check c = make_check("linear.c-inverse-products",
                             "(z,z) bounded, (mu,mu) <= C alpha^{l-j+1}, (mu,z) <= C chi_j");
        Rng rng(s.seed + 9);
        double czz = 0.0, cmumu = 0.0, cmuz = 0.0;
        for (int rep = 0; rep < 100; ++rep) {
            std::size_t j = static_cast<std::size_t>(rng.uniform01() * 100);
            std::size_t l = j + static_cast<std::size_t>(rng.uniform01() * (119 - j));
            // accumulate the 2x2 product of inverses
            double pzz = 1.0, pmz = 0.0, pmm = 1.0;
            for (std::size_t k = j; k <= l; ++k) {
                double izz = 1.0 / blocks.c_zz[k];
                double imm = 1.0 / blocks.c_mumu[k];
                double imz = -blocks.c_muz[k] * izz * imm;
                // [izz 0; imz imm] * [pzz 0; pmz pmm]
                double nzz = izz * pzz;
                double nmz = imz * pzz + imm * pmz;
                double nmm = imm * pmm;
                pzz = nzz; pmz = nmz; pmm = nmm;
            }
            czz = std::max(czz, std::abs(pzz));
            cmumu = std::max(cmumu,
                             std::abs(pmm) / std::pow(blocks.alpha,
                                                      static_cast<double>(l - j + 1)));
            cmuz = std::max(cmuz, std::abs(pmz) / sol.cutoff.chi(j));
        }
        c.observed["C_zz"] = czz;
        c.observed["C_mumu"] = cmumu;
        c.observed["C_muz"] = cmuz;
        c.pass = czz <= 2.0 && cmumu <= 2.0 && std::isfinite(cmuz);
        s.add(c);
    }

    // S0 exactness and block diagonality
    {
        Check c = make_check("linear.s0-exactness",
                             "equation residual of S0 r at 1e-12 relative");
        Rng rng(s.seed + 10);
        FlowSequence r = random_flow(120, 1, 1.0, rng);
        for (std::size_t j = 0; j <= 120; ++j) {
            r[j].K[0] *= scheme.v(Coord::K, j);
            r[j].V.g *= scheme.v(Coord::G, j);
            r[j].V.z *= scheme.v(Coord::Z, j);
            r[j].V.mu *= scheme.v(Coord::Mu, j);
        }
        FlowSequence y = apply_S0(r, blocks, p, sol.cutoff, sol.gbar_ext);
        double worst = 0.0;
        for (std::size_t j = 0; j < 120; ++j) {
            double scale = std::max({std::abs(y[j + 1].V.g), std::abs(y[j + 1].V.z),
                                     std::abs(y[j + 1].V.mu), std::abs(r[j].V.g),
                                     std::abs(r[j].V.z), std::abs(r[j].V.mu), 1e-30});
            double rg = y[j + 1].V.g - (blocks.a_gg[j] * y[j].V.g + r[j].V.g);
            double rz = y[j + 1].V.z -
                        (blocks.b_zg[j] * y[j].V.g + blocks.c_zz[j] * y[j].V.z + r[j].V.z);
            double rmu = y[j + 1].V.mu -
                         (blocks.b_mug[j] * y[j].V.g + blocks.c_muz[j] * y[j].V.z +
                          blocks.c_mumu[j] * y[j].V.mu + r[j].V.mu);
            worst = std::max({worst, std::abs(rg) / scale, std::abs(rz) / scale,
                              std::abs(rmu) / scale});
        }
        c.observed["max_rel_residual"] = worst;
        c.tolerance = 1e-12;
        c.pass = worst <= 1e-12;
        s.add(c);

        Check bd = make_check("linear.s0-block-diagonal",
                              "K-only inputs give exactly zero V output");
        FlowSequence rk = r.zeros_like();
        for (std::size_t j = 0; j <= 120; ++j) rk[j].K[0] = scheme.v(Coord::K, j);
        FlowSequence yk = apply_S0(rk, blocks, p, sol.cutoff, sol.gbar_ext);
        double vmaxv = 0.0;
        for (std::size_t j = 0; j <= 120; ++j)
            vmaxv = std::max({vmaxv, std::abs(yk[j].V.g), std::abs(yk[j].V.z),
                              std::abs(yk[j].V.mu)});
        bd.observed["max_V_component"] = vmaxv;
        bd.pass = vmaxv == 0.0;
        s.add(bd);
    }

    // Neumann consistency
    {
        Check c = make_check("linear.neumann-consistency",
                             "(1 - S0 W) y reproduces S0 r within 10 tol");
        Rng rng(s.seed + 11);
        FlowSequence r(120);
        for (std::size_t j = 0; j <= 120; ++j) {
            r[j].K.assign(1, 0.0);
            r[j].V = model->rho(j, xbar[j].K, xbar[j].V);
        }
        WOperator W = build_W(0.7, xbar, *model, p, xbar, dom, scheme);
        double tol = 1e-12;
        SolveReport rep;
        FlowSequence y = apply_S(W, r, blocks, p, sol.cutoff, sol.gbar_ext, scheme, tol, 80,
                                 &rep);
        FlowSequence lhs = y;
        lhs.axpy(-1.0, apply_S0(W.apply(y), blocks, p, sol.cutoff, sol.gbar_ext));
        FlowSequence s0r = apply_S0(r, blocks, p, sol.cutoff, sol.gbar_ext);
        lhs.axpy(-1.0, s0r);
        double gap = weighted_norm(lhs, scheme, WhichNorm::W);
        c.observed["gap_w"] = gap;
        c.observed["contraction"] = rep.contraction;
        c.tolerance = 10 * tol;
        c.pass = gap <= 10 * tol;
        s.add(c);
    }

    // (a, h) independence of the S0 norm estimate
    {
        Check c = make_check("linear.s0-norm-ah-independence",
                             "randomized ||S0|| estimates vary < 10% over the (a,h) grid");
        double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
        for (double fa : {0.5, 1.0, 2.0}) {
            for (double fh : {0.5, 1.0, 2.0}) {
                WeightScheme sc(gring, sol.cutoff, fa * 1.0, 0.2, fh * 4.0);
                auto op = [&](const FlowSequence& rr) {
                    return apply_S0(rr, blocks, p, sol.cutoff, sol.gbar_ext);
                };
                double est = operator_norm_estimate(op, xbar, sc, WhichNorm::W, 60,
                                                    s.seed + 12);
                lo = std::min(lo, est);
                hi = std::max(hi, est);
            }
        }
        c.observed["min_estimate"] = lo;
        c.observed["max_estimate"] = hi;
        c.tolerance = 0.10;
        c.pass = (hi - lo) <= 0.10 * lo;
        s.add(c);
    }
}

void check_homotopy_suite(Suite& s) {
    // rho == 0 reduction
    {
        Check c = make_check("homotopy.rho-zero-reduction", "||x(1) - xbar||_w <= 1e-8");
        InstanceConfig cfg;
        cfg.params = instances::finite_cutoff();
        cfg.model.kind = "zero";
        cfg.g0 = 0.02;
        cfg.horizon = 60;
        auto inst = make_instance(cfg);
        HomotopyConfig hc;
        FlowResult res = integrate_homotopy(inst->xbar, hc, *inst);
        double dev = weighted_deviation_norm(res.x_final, inst->xbar, *inst->scheme,
                                             WhichNorm::W);
        c.observed["deviation_w"] = dev;
        c.tolerance = 1e-8;
        c.pass = dev <= 1e-8;
        s.add(c);
    }

    InstanceConfig cfg;
    cfg.params = instances::finite_cutoff();
    cfg.model.kind = "cubic";
    cfg.g0 = 0.02;
    cfg.horizon = 60;
    auto inst = make_instance(cfg);
    HomotopyConfig hc;
    FlowResult res = integrate_homotopy(inst->xbar, hc, *inst);

    // oracle triangle
    {
        Check c = make_check("homotopy.oracle-triangle",
                             "homotopy / shooting / sweep pairwise gaps <= 1e-7 in w-norm");
        ShootingResult sh = shooting_solve({}, cfg.g0, *inst, inst->horizon + 1, 1e-12);
        SweepResult sw = sweep_solve({}, cfg.g0, *inst, 1e-12, 400);
        auto gap = [&](const FlowSequence& a, const FlowSequence& b) {
            return weighted_deviation_norm(a, b, *inst->scheme, WhichNorm::W);
        };
        double g1 = gap(res.x_final, sh.trajectory);
        double g2 = gap(res.x_final, sw.trajectory);
        double g3 = gap(sh.trajectory, sw.trajectory);
        c.observed["homotopy_vs_shooting"] = g1;
        c.observed["homotopy_vs_sweep"] = g2;
        c.observed["shooting_vs_sweep"] = g3;
        c.tolerance = 1e-7;
        c.pass = g1 <= 1e-7 && g2 <= 1e-7 && g3 <= 1e-7;
        s.add(c);
    }

    // ball containment and the final clause ratios
    {
        Check c = make_check("homotopy.ball-containment",
                             "the path stays in xring + (1/2)B; final clauses <= b");
        c.observed["final_max_ratio"] = res.ratios.max();
        c.pass = res.ball_ok && res.clauses_ok;
        s.add(c);
    }

    // boundary conditions
    {
        Check c = make_check("homotopy.boundary-conditions",
                             "pi_u x_0(1) = u_0 exactly; v-tail within the clause bound");
        bool u0_exact = res.x_final[0].K == inst->xbar[0].K &&
                        res.x_final[0].V.g == inst->xbar[0].V.g;
        std::size_t J = inst->horizon;
        double zgap = std::abs(res.x_final[J].V.z - inst->sol.zbar_ext[J]) /
                      inst->scheme->w(Coord::Z, J);
        double mugap = std::abs(res.x_final[J].V.mu - inst->sol.mubar_ext[J]) /
                       inst->scheme->w(Coord::Mu, J);
        c.observed["z_tail_ratio"] = zgap;
        c.observed["mu_tail_ratio"] = mugap;
        c.pass = u0_exact && zgap <= inst->b && mugap <= inst->b;
        s.add(c);
    }

    // backward uniqueness probe
    {
        Check c = make_check("homotopy.backward-uniqueness",
                             "integrating backward from x(1) recovers xbar");
        FlowSequence x0 = integrate_homotopy_backward(res.x_final, hc, *inst);
        double dev = weighted_deviation_norm(x0, inst->xbar, *inst->scheme, WhichNorm::W);
        c.observed["deviation_w"] = dev;
        c.tolerance = 1e-7;
        c.pass = dev <= 1e-7;
        s.add(c);
    }

    // derivative boundedness over a g0 grid
    {
        Check c = make_check("homotopy.derivative-bounded",
                             "|dz0/dg0| and |dmu0/dg0| stable over the g0 grid");
        double worst_z = 0.0, best_z = std::numeric_limits<double>::infinity();
        for (double g0 : {0.04, 0.02, 0.01}) {
            InstanceConfig c2 = cfg;
            c2.g0 = g0;
            SensitivityResult sr = sensitivity(c2, 0.05 * g0, hc);
            worst_z = std::max(worst_z, std::abs(sr.dz0_dg0));
            best_z = std::min(best_z, std::abs(sr.dz0_dg0));
        }
        c.observed["max_abs_dz0"] = worst_z;
        c.observed["min_abs_dz0"] = best_z;
        c.pass = std::isfinite(worst_z) && worst_z < 100.0;
        s.add(c);
    }
}

} // namespace

std::vector<CheckResult> verify_suite(const std::string& filter, std::uint64_t seed) {
    Suite s;
    s.seed = seed;
    check_params_suite(s);
    check_quadratic_suite(s);
    check_model_suite(s);
    check_linear_suite(s);
    check_homotopy_suite(s);

    if (filter.empty()) return s.results;
    std::vector<CheckResult> out;
    for (CheckResult& c : s.results)
        if (c.name.find(filter) != std::string::npos) out.push_back(std::move(c));
    return out;
}

} // namespace rgflow
