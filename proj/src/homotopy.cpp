#include "rgflow/homotopy.hpp"

#include <algorithm>
#include <cmath>

#include "rgflow/kernels.hpp"

namespace rgflow {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
}

VTriple Instance::vbar_after() const {
    std::size_t j = horizon + 1;
    if (sol.gbar_ext.size() <= j || sol.zbar_ext.size() <= j || sol.mubar_ext.size() <= j)
        fail(ErrorCode::ExtendHorizon, "quadratic solution not available at J+1");
    return VTriple(sol.gbar_ext[j], sol.zbar_ext[j], sol.mubar_ext[j]);
}

std::size_t adaptive_horizon(const ParamSeq& params, double g0, double tail_tol,
                             std::size_t floor_horizon, std::size_t cap) {
    CutoffData cutoff = cutoff_time(params);
    std::vector<double> g = iterate_gbar(g0, params, floor_horizon);
    // both decay channels must fall below the tail tolerance: the chi gbar
    // envelope and, past a finite cut-off, the mu-contraction rate 1/lambda
    const double alpha0 = 1.0 / std::max(params.lambda.inf_with_limit(), 1.0 + 1e-9);
    auto good = [&](std::size_t J) {
        if (cutoff.chi(J) * g[J] > tail_tol) return false;
        if (cutoff.infinite()) return true; // the cap governs this regime
        if (J <= cutoff.j_omega) return false;
        return std::pow(alpha0, double(J - cutoff.j_omega)) <= tail_tol;
    };
    std::size_t J = floor_horizon;
    while (J < cap && !good(J)) {
        std::size_t next = std::min(cap, 2 * J);
        extend_gbar(g, params, next);
        J = next;
    }
    return J;
}

std::unique_ptr<Instance> make_instance(const InstanceConfig& cfg) {
    auto inst = std::make_unique<Instance>();
    inst->params = cfg.params;
    inst->params.validate();
    inst->cutoff = cutoff_time(inst->params);
    inst->b = cfg.b;
    inst->a_star = cfg.a_star;

    std::size_t J = cfg.horizon;
    if (J == 0)
        J = adaptive_horizon(inst->params, cfg.g0, cfg.tail_tol, cfg.horizon_floor,
                             cfg.horizon_cap);
    inst->horizon = J;

    QuadraticOptions qopts;
    qopts.tol = cfg.quad_tol;
    qopts.enforce_gates = cfg.enforce_gates;
    inst->sol = solve_quadratic_bvp(cfg.g0, inst->params, J, qopts);
    // apply_S0 and the pinned boundary need the quadratic data one index past
    // J; the truncated solutions continue exactly by the forward recursions
    extend_gbar(inst->sol.gbar_ext, inst->params, J + 2);
    {
        std::vector<double>& zb = inst->sol.zbar_ext;
        const ParamSeq& p = inst->params;
        while (zb.size() < J + 2) {
            std::size_t j = zb.size() - 1;
            double g = inst->sol.gbar_ext[j];
            zb.push_back(zb[j] - p.zeta.at(j) * g * zb[j] - p.theta.at(j) * g * g);
        }
        std::vector<double>& mb = inst->sol.mubar_ext;
        while (mb.size() < J + 2) {
            std::size_t j = mb.size() - 1;
            double g = inst->sol.gbar_ext[j];
            double z = zb[j];
            mb.push_back((p.lambda.at(j) - tau_at(p, j, g, z)) * mb[j] +
                         sigma_at(p, j, g, z));
        }
    }

    inst->model = make_model(cfg.model, inst->sol);
    inst->dom = std::make_unique<DomainSpec>(inst->sol, cfg.a, cfg.h);

    std::vector<double> gring(inst->sol.gbar_ext.begin(),
                              inst->sol.gbar_ext.begin() + static_cast<long>(J + 1));
    inst->scheme = std::make_unique<WeightScheme>(std::move(gring), inst->cutoff, cfg.a,
                                                  cfg.a_star, cfg.h);

    std::vector<double> K0 = cfg.K0;
    if (K0.empty()) K0.assign(inst->model->d_K(0), 0.0);
    inst->xbar = xbar_assemble(K0, inst->sol, *inst->model, cfg.a_star);
    inst->blocks = build_L(inst->xbar, inst->params);
    return inst;
}

FlowSequence F_eval(double t, const FlowSequence& x, const Instance& inst, double fp_tol,
                    std::size_t fp_max_iter, SolveReport* report, bool enforce_ball) {
    const std::size_t J = x.horizon();
    // rho over the trajectory: entry j feeds the step-j equation; K rows zero
    FlowSequence r(J);
    for (std::size_t j = 0; j <= J; ++j) r[j].K.assign(inst.model->d_K(j + 1), 0.0);
    kernels::for_each_index(0, J, [&](std::size_t j) {
        r[j].V = inst.model->rho(j, x[j].K, x[j].V);
    });

    WOperator W = build_W(t, x, *inst.model, inst.params, inst.xbar, *inst.dom, *inst.scheme,
                          enforce_ball);
    return apply_S(W, r, inst.blocks, inst.params, inst.cutoff, inst.sol.gbar_ext,
                   *inst.scheme, fp_tol, fp_max_iter, report);
}

ResidualReport flow_residual(const FlowSequence& x, double t, const Instance& inst) {
    const std::size_t J = x.horizon();
    ResidualReport rep;
    rep.interior = kernels::max_over_indices(0, J - 1, [&](std::size_t j) {
        FlowSequence::Entry next = phi_step(t, x[j], j, inst.params, *inst.model);
        double worst = 0.0;
        for (std::size_t i = 0; i < next.K.size(); ++i)
            worst = std::max(worst, std::abs(x[j + 1].K[i] - next.K[i]) /
                                        residual_weight(*inst.scheme, Coord::K, j));
        worst = std::max(worst, std::abs(x[j + 1].V.g - next.V.g) /
                                    residual_weight(*inst.scheme, Coord::G, j));
        worst = std::max(worst, std::abs(x[j + 1].V.z - next.V.z) /
                                    residual_weight(*inst.scheme, Coord::Z, j));
        worst = std::max(worst, std::abs(x[j + 1].V.mu - next.V.mu) /
                                    residual_weight(*inst.scheme, Coord::Mu, j));
        return worst;
    });
    // boundary row: pi_v Phi^t_J(x_J) = quadratic (z, mu) at J+1
    FlowSequence::Entry after = phi_step(t, x[J], J, inst.params, *inst.model);
    VTriple pin = inst.vbar_after();
    rep.boundary =
        std::max(std::abs(after.V.z - pin.z) / residual_weight(*inst.scheme, Coord::Z, J),
                 std::abs(after.V.mu - pin.mu) / residual_weight(*inst.scheme, Coord::Mu, J));
    return rep;
}

namespace {

struct BallViolation {
    std::size_t j = 0;
    const char* clause = "";
    double ratio = 0.0;
};

BallViolation worst_ball_entry(const FlowSequence& x, const FlowSequence& ref,
                               const WeightScheme& scheme) {
    BallViolation worst;
    for (std::size_t j = 0; j < x.size(); ++j) {
        double dk = 0.0;
        for (std::size_t i = 0; i < x[j].K.size(); ++i)
            dk = std::max(dk, std::abs(x[j].K[i] - ref[j].K[i]));
        struct { double v; const char* c; } rows[4] = {
            {dk / scheme.w(Coord::K, j), "K"},
            {std::abs(x[j].V.g - ref[j].V.g) / scheme.w(Coord::G, j), "g"},
            {std::abs(x[j].V.z - ref[j].V.z) / scheme.w(Coord::Z, j), "z"},
            {std::abs(x[j].V.mu - ref[j].V.mu) / scheme.w(Coord::Mu, j), "mu"},
        };
        for (auto& row : rows)
            if (row.v > worst.ratio) worst = {j, row.c, row.v};
    }
    return worst;
}

struct OdeStats {
    std::size_t accepted = 0, rejected = 0, fevals = 0;
};

// Dormand-Prince 5(4) pair.
FlowSequence integrate_path(double t0, double t1, const FlowSequence& x0,
                            const HomotopyConfig& cfg, const Instance& inst, OdeStats* stats) {
    auto f = [&](double t, const FlowSequence& x) {
        if (stats) ++stats->fevals;
        return F_eval(t, x, inst, cfg.fp_tol, cfg.fp_max_iter, nullptr, cfg.enforce_ball);
    };
    auto check_ball = [&](const FlowSequence& x, double t) {
        if (!cfg.enforce_ball) return;
        double dev = weighted_deviation_norm(x, inst.xbar, *inst.scheme, WhichNorm::W);
        if (dev > 0.5 * (1.0 + 1e-12)) {
            BallViolation v = worst_ball_entry(x, inst.xbar, *inst.scheme);
            fail(ErrorCode::DomainViolation,
                 "existence-ball exit at t=" + std::to_string(t) + ": clause " +
                     std::string(v.clause) + " at j=" + std::to_string(v.j) + " reached " +
                     std::to_string(v.ratio),
                 v.j);
        }
    };

    FlowSequence x = x0;
    const double dir = t1 >= t0 ? 1.0 : -1.0;
    const double span = std::abs(t1 - t0);

    if (cfg.integrator == HomotopyConfig::Integrator::Rk4Fixed) {
        const std::size_t n = std::max<std::size_t>(cfg.rk4_steps, 4);
        const double h = dir * span / static_cast<double>(n);
        double t = t0;
        for (std::size_t s = 0; s < n; ++s) {
            FlowSequence k1 = f(t, x);
            FlowSequence y = x; y.axpy(0.5 * h, k1);
            FlowSequence k2 = f(t + 0.5 * h, y);
            y = x; y.axpy(0.5 * h, k2);
            FlowSequence k3 = f(t + 0.5 * h, y);
            y = x; y.axpy(h, k3);
            FlowSequence k4 = f(t + h, y);
            x.axpy(h / 6.0, k1);
            x.axpy(h / 3.0, k2);
            x.axpy(h / 3.0, k3);
            x.axpy(h / 6.0, k4);
            t += h;
            check_ball(x, t);
            if (stats) ++stats->accepted;
        }
        return x;
    }

    // adaptive RK45
    static const double A[7][6] = {
        {},
        {1.0 / 5},
        {3.0 / 40, 9.0 / 40},
        {44.0 / 45, -56.0 / 15, 32.0 / 9},
        {19372.0 / 6561, -25360.0 / 2187, 64448.0 / 6561, -212.0 / 729},
        {9017.0 / 3168, -355.0 / 33, 46732.0 / 5247, 49.0 / 176, -5103.0 / 18656},
        {35.0 / 384, 0.0, 500.0 / 1113, 125.0 / 192, -2187.0 / 6784, 11.0 / 84},
    };
    static const double C[7] = {0, 1.0 / 5, 3.0 / 10, 4.0 / 5, 8.0 / 9, 1.0, 1.0};
    static const double D[7] = {71.0 / 57600, 0.0, -71.0 / 16695, 71.0 / 1920,
                                -17253.0 / 339200, 22.0 / 525, -1.0 / 40};

    double t = t0;
    double h = dir * std::min(0.1, span);
    FlowSequence k[7];
    k[0] = f(t, x);
    while (dir * (t1 - t) > 1e-14) {
        if (dir * (t + h - t1) > 0.0) h = t1 - t;
        for (int s = 1; s < 7; ++s) {
            FlowSequence y = x;
            for (int q = 0; q < s; ++q)
                if (A[s][q] != 0.0) y.axpy(h * A[s][q], k[q]);
            k[s] = f(t + C[s] * h, y);
        }
        // 5th-order solution is the stage-7 argument (FSAL form)
        FlowSequence x5 = x;
        for (int q = 0; q < 6; ++q)
            if (A[6][q] != 0.0) x5.axpy(h * A[6][q], k[q]);
        FlowSequence err = x.zeros_like();
        for (int q = 0; q < 7; ++q)
            if (D[q] != 0.0) err.axpy(h * D[q], k[q]);

        double dev = weighted_deviation_norm(x5, inst.xbar, *inst.scheme, WhichNorm::W);
        double scale = cfg.abs_tol + cfg.rel_tol * std::max(1.0, dev);
        double err_norm = weighted_norm(err, *inst.scheme, WhichNorm::W) / scale;

        if (err_norm <= 1.0) {
            t += h;
            x = std::move(x5);
            k[0] = k[6]; // FSAL
            check_ball(x, t);
            if (stats) ++stats->accepted;
        } else {
            if (stats) ++stats->rejected;
        }
        double factor = err_norm > 0.0 ? 0.9 * std::pow(err_norm, -0.2) : 5.0;
        factor = std::clamp(factor, 0.2, 5.0);
        h *= factor;
        if (std::abs(h) < cfg.min_step)
            fail(ErrorCode::NonContraction,
                 "integrator step size fell below the floor at t=" + std::to_string(t));
    }
    return x;
}

} // namespace

FlowResult integrate_homotopy(const FlowSequence& xbar, const HomotopyConfig& config,
                              const Instance& inst) {
    OdeStats stats;
    FlowResult out;
    out.x_final = integrate_path(0.0, 1.0, xbar, config, inst, &stats);
    out.steps_accepted = stats.accepted;
    out.steps_rejected = stats.rejected;
    out.f_evaluations = stats.fevals;
    out.ratios = ball_ratios(out.x_final, inst.xbar, *inst.scheme);
    out.clauses_ok = out.ratios.max() <= inst.b;
    out.ball_ok = out.ratios.max() <= 0.5 * (1.0 + 1e-12);
    ResidualReport res = flow_residual(out.x_final, 1.0, inst);
    out.flow_residual = res.interior;
    out.boundary_gap = res.boundary;
    return out;
}

FlowSequence integrate_homotopy_backward(const FlowSequence& x1, const HomotopyConfig& config,
                                         const Instance& inst) {
    return integrate_path(1.0, 0.0, x1, config, inst, nullptr);
}

ShootingResult shooting_solve(const std::vector<double>& K0, double g0, const Instance& inst,
                              std::size_t J_s, double tol, double z0_guess,
                              double mu0_guess) {
    // conditioning of the forward map grows like lambda^{J_s}; refuse depths
    // where the mu-column of the Jacobian approaches overflow
    const double lam = inst.params.lambda.inf_with_limit();
    if (static_cast<double>(J_s) * std::log(std::max(lam, 1.01)) > 230.0)
        fail(ErrorCode::InvalidParameters,
             "shooting horizon too deep: conditioning grows like lambda^J; reduce J_s");
    if (J_s > inst.horizon + 1)
        fail(ErrorCode::InvalidParameters, "shooting horizon exceeds the instance horizon");

    std::vector<double> K0v = K0;
    if (K0v.empty()) K0v.assign(inst.model->d_K(0), 0.0);

    // forward map: (z0, mu0) -> (z, mu) at index J_s under Phi^1, together
    // with the exact tangents in the z0- and mu0-directions (variational
    // recursion; full-map finite differences are noise at these depths)
    struct ShotResult {
        double z, mu;
        double jzz, jzm, jmz, jmm; // d(z,mu)_{J_s} / d(z0,mu0)
    };
    auto shot = [&](double z0, double mu0, FlowSequence* keep) {
        FlowSequence::Entry e;
        e.K = K0v;
        e.V = VTriple(g0, z0, mu0);
        FlowSequence::Entry tz_dir, tmu_dir;
        tz_dir.K.assign(K0v.size(), 0.0);
        tz_dir.V = VTriple(0.0, 1.0, 0.0);
        tmu_dir.K.assign(K0v.size(), 0.0);
        tmu_dir.V = VTriple(0.0, 0.0, 1.0);
        if (keep) (*keep)[0] = e;
        for (std::size_t j = 0; j < J_s; ++j) {
            FlowSequence::Entry tz_next =
                phi_tangent(1.0, e, tz_dir, j, inst.params, *inst.model, *inst.dom);
            FlowSequence::Entry tmu_next =
                phi_tangent(1.0, e, tmu_dir, j, inst.params, *inst.model, *inst.dom);
            e = phi_step(1.0, e, j, inst.params, *inst.model);
            tz_dir = std::move(tz_next);
            tmu_dir = std::move(tmu_next);
            if (keep && j + 1 < keep->size()) (*keep)[j + 1] = e;
        }
        return ShotResult{e.V.z, e.V.mu, tz_dir.V.z, tmu_dir.V.z, tz_dir.V.mu,
                          tmu_dir.V.mu};
    };

    double z0 = std::isnan(z0_guess) ? inst.sol.zbar_ext[0] : z0_guess;
    double mu0 = std::isnan(mu0_guess) ? inst.sol.mubar_ext[0] : mu0_guess;
    const double sz = std::max(inst.dom->radius(Coord::Z, 0), 1e-12);
    const double smu = std::max(inst.dom->radius(Coord::Mu, 0), 1e-12);
    std::size_t total_its = 0;

    // Continuation in the shooting depth: the expanding mu-channel amplifies
    // initial-guess error by lambda^{J}, so the depth grows in small stages
    // and each stage starts from the previous root. Within a stage the
    // trajectory then stays in the tame region and Newton converges fast.
    const std::size_t J_s_saved = J_s;
    std::size_t stage = std::min<std::size_t>(J_s_saved, 8);
    for (;; stage = std::min(J_s_saved, stage + 6)) {
        J_s = stage;
        const double tz = inst.sol.zbar_ext[J_s];
        const double tmu = inst.sol.mubar_ext[J_s];

        double prev_step = std::numeric_limits<double>::infinity();
        bool converged = false;
        for (std::size_t it = 0; it < 30; ++it, ++total_its) {
            ShotResult s = shot(z0, mu0, nullptr);
            double gz = s.z - tz, gmu = s.mu - tmu;
            double det = s.jzz * s.jmm - s.jzm * s.jmz;
            if (!(std::abs(det) > 0.0) || !std::isfinite(det))
                fail(ErrorCode::NewtonDivergence, "singular shooting Jacobian; reduce J_s");
            double step_z = -(s.jmm * gz - s.jzm * gmu) / det;
            double step_mu = -(-s.jmz * gz + s.jzz * gmu) / det;
            z0 += step_z;
            mu0 += step_mu;
            if (!std::isfinite(z0) || !std::isfinite(mu0) || std::abs(z0) > 1e6 ||
                std::abs(mu0) > 1e6)
                fail(ErrorCode::NewtonDivergence,
                     "shooting Newton left its basin; reduce J_s or use the sweep oracle");
            double step = std::max(std::abs(step_z) / sz, std::abs(step_mu) / smu);
            if (step <= tol) { converged = true; break; }
            // stagnation at the floating-point noise floor counts as converged
            if (it >= 4 && step < 1e-9 && step >= 0.25 * prev_step) {
                converged = true;
                break;
            }
            prev_step = step;
        }
        if (!converged)
            fail(ErrorCode::NewtonDivergence,
                 "shooting Newton did not converge at depth " + std::to_string(stage));
        if (stage == J_s_saved) break;
    }
    J_s = J_s_saved;

    // Stable representation. Plain forward iteration is useless in the mu
    // channel (lambda^J amplifies last-ulp error), so mu is rebuilt backward
    // from the matched boundary while (K, g, z) go forward; outer rounds
    // absorb the rho-coupling of mu into the forward rows.
    const ParamSeq& p = inst.params;
    std::vector<FlowSequence::Entry> x(J_s + 1);
    auto stable_path = [&](double z0_cur) {
        for (std::size_t j = 0; j <= J_s; ++j) {
            x[j].K.assign(inst.model->d_K(j), 0.0);
            x[j].V = VTriple(inst.sol.gbar_ext[j], inst.sol.zbar_ext[j],
                             inst.sol.mubar_ext[j]);
        }
        x[0].K = K0v;
        x[0].V.g = g0;
        x[0].V.z = z0_cur;
        for (int round = 0; round < 3; ++round) {
            for (std::size_t j = 0; j < J_s; ++j) {
                FlowSequence::Entry next = phi_step(1.0, x[j], j, p, *inst.model);
                x[j + 1].K = std::move(next.K);
                x[j + 1].V.g = next.V.g;
                x[j + 1].V.z = next.V.z;
            }
            x[J_s].V.mu = inst.sol.mubar_ext[J_s];
            for (std::size_t j = J_s; j-- > 0;) {
                double g = x[j].V.g, z = x[j].V.z;
                double denom = p.lambda.at(j) - p.ups_gmu.at(j) * g - p.ups_zmu.at(j) * z;
                double mu_j = x[j].V.mu;
                for (int inner = 0; inner < 3; ++inner) {
                    FlowSequence::Entry probe = x[j];
                    probe.V.mu = mu_j;
                    VTriple rho = inst.model->rho(j, probe.K, probe.V);
                    mu_j = (x[j + 1].V.mu - p.eta.at(j) * g - p.gamma.at(j) * z +
                            p.ups_gg.at(j) * g * g + p.ups_gz.at(j) * g * z +
                            p.ups_zz.at(j) * z * z - rho.mu) /
                           denom;
                }
                x[j].V.mu = mu_j;
            }
        }
        return x[J_s].V.z - inst.sol.zbar_ext[J_s];
    };

    // Refinement of the z root on the stabilized map: the pure forward map's
    // z-output carries a noise floor through the expanding channel, the
    // stabilized one is clean to machine precision.
    for (int ref = 0; ref < 8; ++ref) {
        double gz = stable_path(z0);
        // z-tangent along the frozen-mu forward rows
        FlowSequence::Entry w;
        w.K.assign(K0v.size(), 0.0);
        w.V = VTriple(0.0, 1.0, 0.0);
        for (std::size_t j = 0; j < J_s; ++j) {
            w = phi_tangent(1.0, x[j], w, j, inst.params, *inst.model, *inst.dom);
            w.V.mu = 0.0; // mu is pinned by the backward pass
        }
        if (!(std::abs(w.V.z) > 0.0)) break;
        double step = -gz / w.V.z;
        z0 += step;
        if (std::abs(step) <= 1e-3 * tol * sz) break;
    }
    stable_path(z0);
    mu0 = x[0].V.mu;

    ShootingResult out;
    out.z0 = z0;
    out.mu0 = mu0;
    out.newton_iterations = total_its;
    out.trajectory = FlowSequence(std::min(J_s, inst.horizon));
    for (std::size_t j = 0; j < out.trajectory.size(); ++j) out.trajectory[j] = x[j];
    return out;
}

SweepResult sweep_solve(const std::vector<double>& K0, double g0, const Instance& inst,
                        double tol, std::size_t max_sweeps) {
    const std::size_t J = inst.horizon;
    const ParamSeq& p = inst.params;
    std::vector<double> K0v = K0;
    if (K0v.empty()) K0v.assign(inst.model->d_K(0), 0.0);

    FlowSequence x = inst.xbar;
    x[0].K = K0v;
    x[0].V.g = g0;
    VTriple pin = inst.vbar_after();

    double relax = 1.0;
    double prev_change = kInf;
    bool relaxed = false;
    SweepResult out;

    for (std::size_t sweep = 0; sweep < max_sweeps; ++sweep) {
        FlowSequence next = x;

        // forward pass: (K, g) with (z, mu) held at the previous iterate
        for (std::size_t j = 0; j < J; ++j) {
            VTriple rho = inst.model->rho(j, next[j].K, next[j].V);
            next[j + 1].K = inst.model->psi(j, next[j].K, next[j].V);
            double g = next[j].V.g;
            next[j + 1].V.g = g - p.beta.at(j) * g * g + rho.g;
        }

        // backward pass: (z, mu) from the nonlinear backward recursions with
        // the pinned boundary; rho sees the fresh (K, g) and the stale (z, mu)
        double z_next = pin.z, mu_next = pin.mu;
        for (std::size_t j = J + 1; j-- > 0;) {
            double g = next[j].V.g;
            VTriple rho = inst.model->rho(j, next[j].K, next[j].V);
            double denom_z = 1.0 - p.zeta.at(j) * g;
            double z = (z_next + p.theta.at(j) * g * g - rho.z) / denom_z;
            double denom_mu = p.lambda.at(j) - p.ups_gmu.at(j) * g - p.ups_zmu.at(j) * z;
            if (!(denom_mu > 1.0))
                fail(ErrorCode::ExpansivityViolated,
                     "sweep lost expansivity at j=" + std::to_string(j), j);
            double mu = (mu_next - p.eta.at(j) * g - p.gamma.at(j) * z +
                         p.ups_gg.at(j) * g * g + p.ups_gz.at(j) * g * z +
                         p.ups_zz.at(j) * z * z - rho.mu) /
                        denom_mu;
            next[j].V.z = z;
            next[j].V.mu = mu;
            z_next = z;
            mu_next = mu;
        }

        FlowSequence diff = next;
        diff.axpy(-1.0, x);
        double change = weighted_norm(diff, *inst.scheme, WhichNorm::W);
        if (relax != 1.0) {
            FlowSequence blend = x;
            blend.axpy(relax, diff);
            next = std::move(blend);
        }
        x = std::move(next);

        out.sweeps = sweep + 1;
        out.final_change = change;
        if (change < tol) {
            out.trajectory = std::move(x);
            return out;
        }
        if (change > prev_change && sweep > 1) {
            if (!relaxed) {
                relax = 0.5;
                relaxed = true;
            } else {
                fail(ErrorCode::NonContraction,
                     "sweep iteration failed to contract (change " + std::to_string(change) +
                         ")");
            }
        }
        prev_change = change;
    }
    fail(ErrorCode::NonContraction, "sweep did not converge within max_sweeps");
}

SensitivityResult sensitivity(const InstanceConfig& base, double dg0,
                              const HomotopyConfig& hconfig) {
    // pin the horizon across the finite-difference solves
    std::size_t J_fix = base.horizon;
    if (J_fix == 0)
        J_fix = adaptive_horizon(base.params, base.g0, base.tail_tol, base.horizon_floor,
                                 base.horizon_cap);
    auto solve_v0 = [&](double g0) {
        InstanceConfig cfg = base;
        cfg.g0 = g0;
        cfg.horizon = J_fix;
        auto inst = make_instance(cfg);
        FlowResult res = integrate_homotopy(inst->xbar, hconfig, *inst);
        return std::pair<double, double>(res.x_final[0].V.z, res.x_final[0].V.mu);
    };
    auto central = [&](double h) {
        auto hi = solve_v0(base.g0 + h);
        auto lo = solve_v0(base.g0 - h);
        return std::pair<double, double>((hi.first - lo.first) / (2.0 * h),
                                         (hi.second - lo.second) / (2.0 * h));
    };
    auto d1 = central(dg0);
    auto d2 = central(0.5 * dg0);
    SensitivityResult out;
    out.dz0_dg0 = d2.first;
    out.dmu0_dg0 = d2.second;
    out.richardson_error_z = std::abs(d2.first - d1.first) / 3.0;
    out.richardson_error_mu = std::abs(d2.second - d1.second) / 3.0;
    return out;
}

ContinuityReport external_parameter_sweep(const InstanceFamily& family,
                                          const std::vector<double>& m_grid,
                                          const HomotopyConfig& hconfig) {
    if (m_grid.empty()) fail(ErrorCode::InvalidParameters, "empty parameter grid");
    ContinuityReport rep;
    rep.m_values = m_grid;

    std::vector<FlowSequence> solutions(m_grid.size());
    std::vector<char> solved(m_grid.size(), 0);
    std::vector<std::string> failures(m_grid.size());

    // parameter points are independent; run them as a parallel kernel with
    // deterministic per-slot writes
    kernels::for_each_index(0, m_grid.size() - 1, [&](std::size_t i) {
        try {
            InstanceConfig cfg = family(m_grid[i]);
            auto inst = make_instance(cfg);
            FlowResult res = integrate_homotopy(inst->xbar, hconfig, *inst);
            solutions[i] = std::move(res.x_final);
            solved[i] = 1;
        } catch (const Error& e) {
            failures[i] = "m=" + std::to_string(m_grid[i]) + ": " + e.what();
        }
    });
    for (const std::string& s : failures)
        if (!s.empty()) rep.failures.push_back(s);

    std::size_t jr = kInfiniteIndex;
    for (std::size_t i = 0; i < m_grid.size(); ++i)
        if (solved[i]) jr = std::min(jr, solutions[i].horizon());
    if (jr == kInfiniteIndex) return rep; // nothing solved
    rep.report_horizon = std::min<std::size_t>(jr, 200);

    for (std::size_t i = 0; i + 1 < m_grid.size(); ++i) {
        if (!solved[i] || !solved[i + 1]) {
            rep.diffs.push_back(std::numeric_limits<double>::quiet_NaN());
            rep.moduli.push_back(std::numeric_limits<double>::quiet_NaN());
            continue;
        }
        double d = 0.0;
        for (std::size_t j = 0; j <= rep.report_horizon; ++j) {
            const auto& a = solutions[i][j];
            const auto& b = solutions[i + 1][j];
            for (std::size_t q = 0; q < std::min(a.K.size(), b.K.size()); ++q)
                d = std::max(d, std::abs(a.K[q] - b.K[q]));
            d = std::max(d, std::abs(a.V.g - b.V.g));
            d = std::max(d, std::abs(a.V.z - b.V.z));
            d = std::max(d, std::abs(a.V.mu - b.V.mu));
        }
        rep.diffs.push_back(d);
        double dm = std::abs(m_grid[i + 1] - m_grid[i]);
        rep.moduli.push_back(dm > 0.0 ? d / dm : kInf);
    }
    return rep;
}

} // namespace rgflow
