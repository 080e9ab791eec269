#include <cstdlib>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "rgflow/homotopy.hpp"
#include "rgflow/io.hpp"
#include "rgflow/kernels.hpp"
#include "rgflow/verify.hpp"

namespace {

using rgflow::Json;

constexpr int kExitOk = 0;
constexpr int kExitCertificate = 1;
constexpr int kExitConfig = 2;
constexpr int kExitSolver = 3;
constexpr int kExitBallExit = 4;

int exit_code_for(const rgflow::Error& e) {
    switch (e.code()) {
        case rgflow::ErrorCode::InvalidParameters: return kExitConfig;
        case rgflow::ErrorCode::DomainViolation: return kExitBallExit;
        default: return kExitSolver;
    }
}

struct CommonOpts {
    std::string config_path;
    std::string out_dir = "out";
    double g0 = -1.0;
    long horizon = -1;
    long seed = -1;
    double b = -1.0, h = -1.0, a = -1.0, a_star = -1.0;
    std::string model_kind;
    double tail_tol = -1.0;
};

Json load_config(const std::string& path) {
    std::ifstream f(path);
    if (!f) rgflow::fail(rgflow::ErrorCode::InvalidParameters, "cannot open config " + path);
    Json j;
    try {
        j = Json::parse(f);
    } catch (const std::exception& e) {
        rgflow::fail(rgflow::ErrorCode::InvalidParameters,
                     std::string("config is not valid JSON: ") + e.what());
    }
    return j;
}

// flags override config keys of the same (kebab-case) name
void apply_overrides(Json& cfg, const CommonOpts& o) {
    if (o.g0 > 0) cfg["g0"] = o.g0;
    if (o.horizon >= 0) cfg["horizon"] = static_cast<std::size_t>(o.horizon);
    if (o.seed >= 0) cfg["seed"] = static_cast<std::uint64_t>(o.seed);
    if (o.b > 0) cfg["b"] = o.b;
    if (o.h > 0) cfg["h"] = o.h;
    if (o.a > 0) cfg["a"] = o.a;
    if (o.a_star > 0) cfg["a_star"] = o.a_star;
    if (o.tail_tol > 0) cfg["tail_tol"] = o.tail_tol;
    if (!o.model_kind.empty()) {
        if (!cfg.contains("model")) cfg["model"] = Json::object();
        cfg["model"]["kind"] = o.model_kind;
    }
    if (const char* env = std::getenv("RGFLOW_SEED")) cfg["seed"] = std::stoull(env);
}

std::uint64_t config_seed(const Json& cfg) {
    return cfg.contains("seed") ? cfg.at("seed").get<std::uint64_t>() : 1;
}

Json strip_run_keys(Json cfg) {
    // keys consumed by the CLI layer rather than the instance builder
    for (const char* k : {"seed", "output", "integrator", "sweep", "verify", "oracle",
                          "flow_tol"})
        cfg.erase(k);
    return cfg;
}

rgflow::HomotopyConfig integrator_from_config(const Json& cfg) {
    rgflow::HomotopyConfig hc;
    if (!cfg.contains("integrator")) return hc;
    const Json& j = cfg.at("integrator");
    std::string kind = j.value("kind", std::string("rk45"));
    if (kind == "rk4")
        hc.integrator = rgflow::HomotopyConfig::Integrator::Rk4Fixed;
    else if (kind != "rk45")
        rgflow::fail(rgflow::ErrorCode::InvalidParameters,
                     "integrator.kind must be rk45 or rk4");
    hc.rel_tol = j.value("rel_tol", hc.rel_tol);
    hc.abs_tol = j.value("abs_tol", hc.abs_tol);
    hc.rk4_steps = j.value("rk4_steps", hc.rk4_steps);
    hc.fp_tol = j.value("fp_tol", hc.fp_tol);
    return hc;
}

int cmd_quadratic(const CommonOpts& opts) {
    Json cfg = load_config(opts.config_path);
    apply_overrides(cfg, opts);
    rgflow::InstanceConfig icfg = rgflow::instance_from_json(strip_run_keys(cfg));

    std::size_t J = icfg.horizon;
    if (J == 0)
        J = rgflow::adaptive_horizon(icfg.params, icfg.g0, icfg.tail_tol, icfg.horizon_floor,
                                     icfg.horizon_cap);
    rgflow::QuadraticOptions qopts;
    qopts.tol = icfg.quad_tol;
    rgflow::QuadraticSolution sol = rgflow::solve_quadratic_bvp(icfg.g0, icfg.params, J, qopts);

    Json cert = rgflow::solution_to_json(sol);
    // asymptotic-ratio checks
    rgflow::CutoffData cutoff = rgflow::cutoff_time(icfg.params);
    if (2 * (J / 2) > 0 && sol.gbar_ext.size() > J) {
        rgflow::SumCertificate sc =
            rgflow::sum_certificate(2.0, 0.0, 0, J / 2, sol, cutoff);
        cert["sum_certificate_n2"] =
            Json{{"ratio", sc.ratio}, {"ratio_doubled", sc.ratio_doubled}, {"stable", sc.stable}};
    }
    rgflow::ProductAsymptotic pa = rgflow::product_asymptotic(2.0, 0, sol, icfg.params);
    cert["product_asymptotic_gamma2"] =
        Json{{"c_0", pa.c_j},
             {"residual_bound", std::isfinite(pa.residual_bound)
                                    ? Json(pa.residual_bound)
                                    : Json("infinity")}};
    double binv = icfg.params.beta.at(0);
    if (binv > 0.0)
        cert["gbar_asymptotic_ratio"] =
            sol.gbar_ext[J] * (1.0 / sol.g0 + binv * static_cast<double>(J));

    bool pass = sol.z_tail.certified && sol.mu_tail.certified;
    cert["pass"] = pass;

    rgflow::write_file_atomic(opts.out_dir + "/quadratic_trajectory.csv",
                              rgflow::solution_to_csv(sol));
    rgflow::write_file_atomic(opts.out_dir + "/quadratic_certificates.json",
                              rgflow::render_report(cert));
    std::cout << (pass ? "quadratic: certificates pass\n"
                       : "quadratic: certificate failure (see report)\n");
    return pass ? kExitOk : kExitCertificate;
}

int run_assumption_gate(const rgflow::Instance& inst, Json& into, std::uint64_t seed) {
    rgflow::A1Report a1 = rgflow::check_A1(inst.params, inst.horizon);
    rgflow::A2Report a2 = rgflow::check_A2(inst.params, inst.cutoff, inst.horizon);
    rgflow::A3Report a3 =
        rgflow::check_A3(*inst.model, *inst.dom, *inst.scheme, 40, seed);
    into["A1"] = rgflow::report_to_json(a1);
    into["A2"] = rgflow::report_to_json(a2);
    into["A3"] = rgflow::report_to_json(a3);
    return a1.pass && a2.pass && a3.pass;
}

int cmd_flow(const CommonOpts& opts, bool force) {
    Json cfg = load_config(opts.config_path);
    apply_overrides(cfg, opts);
    double flow_tol = cfg.value("flow_tol", 1e-8);
    rgflow::HomotopyConfig hc = integrator_from_config(cfg);
    std::uint64_t seed = config_seed(cfg);
    rgflow::InstanceConfig icfg = rgflow::instance_from_json(strip_run_keys(cfg));
    auto inst = rgflow::make_instance(icfg);

    Json body;
    if (!run_assumption_gate(*inst, body, seed) && !force) {
        std::cerr << "flow: assumption reports failed (rerun with --force to proceed)\n";
        rgflow::write_file_atomic(opts.out_dir + "/flow_result.json",
                                  rgflow::render_report(body));
        return kExitSolver;
    }

    rgflow::FlowResult res = rgflow::integrate_homotopy(inst->xbar, hc, *inst);
    Json r = rgflow::flow_result_to_json(res, *inst);
    for (auto it = r.begin(); it != r.end(); ++it) body[it.key()] = it.value();
    bool pass = res.clauses_ok && res.flow_residual <= flow_tol;
    body["flow_tol"] = flow_tol;
    body["pass"] = pass;
    {
        // final linear-solver diagnostics at t = 1
        rgflow::SolveReport srep;
        rgflow::F_eval(1.0, res.x_final, *inst, hc.fp_tol, hc.fp_max_iter, &srep);
        body["linear_solver"] = rgflow::report_to_json(srep);
    }

    rgflow::write_file_atomic(opts.out_dir + "/flow_trajectory.csv",
                              rgflow::trajectory_to_csv(res.x_final, *inst));
    rgflow::write_file_atomic(opts.out_dir + "/flow_residuals.csv",
                              rgflow::residuals_to_csv(res.x_final, 1.0, *inst));
    rgflow::write_file_atomic(opts.out_dir + "/flow_result.json", rgflow::render_report(body));
    std::cout << (pass ? "flow: ball clauses and residual pass\n" : "flow: FAILED\n");
    return pass ? kExitOk : kExitCertificate;
}

int cmd_verify(const CommonOpts& opts, const std::string& only) {
    std::string filter = only;
    std::uint64_t seed = 20240901;
    if (!opts.config_path.empty()) {
        Json cfg = load_config(opts.config_path);
        if (cfg.contains("verify")) {
            filter = cfg.at("verify").value("only", filter);
            seed = cfg.at("verify").value("seed", seed);
        }
        if (cfg.contains("seed")) seed = cfg.at("seed").get<std::uint64_t>();
    }
    if (const char* env = std::getenv("RGFLOW_SEED")) seed = std::stoull(env);

    std::vector<rgflow::CheckResult> results = rgflow::verify_suite(filter, seed);
    Json items = Json::array();
    std::size_t bad = 0;
    for (const rgflow::CheckResult& c : results) {
        Json item;
        item["name"] = c.name;
        item["statement"] = c.statement;
        item["pass"] = c.pass;
        item["expected_fail"] = c.expected_fail;
        item["as_expected"] = c.as_expected();
        item["tolerance"] = c.tolerance;
        Json obs;
        for (const auto& [k, v] : c.observed)
            obs[k] = std::isfinite(v) ? Json(v) : Json("infinity");
        item["observed"] = obs;
        if (!c.note.empty()) item["note"] = c.note;
        items.push_back(item);
        if (!c.as_expected()) ++bad;
        std::cout << (c.as_expected() ? "[ ok ] " : "[FAIL] ") << c.name
                  << (c.expected_fail ? " (expected-fail)" : "") << "\n";
    }
    Json body;
    body["checks"] = items;
    body["failures"] = bad;
    rgflow::write_file_atomic(opts.out_dir + "/verify_report.json",
                              rgflow::render_report(body));
    if (results.empty()) {
        std::cerr << "verify: no checks matched the filter\n";
        return kExitConfig;
    }
    return bad == 0 ? kExitOk : kExitCertificate;
}

int cmd_sweep(const CommonOpts& opts, long jobs) {
    Json cfg = load_config(opts.config_path);
    apply_overrides(cfg, opts);
    if (!cfg.contains("sweep"))
        rgflow::fail(rgflow::ErrorCode::InvalidParameters, "config lacks the 'sweep' block");
    Json sweep = cfg.at("sweep");
    rgflow::HomotopyConfig hc = integrator_from_config(cfg);
    rgflow::InstanceConfig base = rgflow::instance_from_json(strip_run_keys(cfg));
    double min_fraction = sweep.value("min_success_fraction", 1.0);

    if (jobs > 1) {
#ifdef _OPENMP
        omp_set_num_threads(static_cast<int>(jobs));
#endif
        rgflow::kernels::set_default_exec(rgflow::kernels::Exec::Parallel);
    }

    std::string csv = "index,parameter,z0,mu0,dz0_dg0,dmu0_dg0,status\n";
    Json summary;
    std::size_t total = 0, good = 0;

    if (sweep.contains("g0_grid")) {
        std::vector<double> grid = sweep.at("g0_grid").get<std::vector<double>>();
        if (grid.empty())
            rgflow::fail(rgflow::ErrorCode::InvalidParameters, "empty g0_grid");
        double dg0_rel = sweep.value("dg0_rel", 0.05);
        double dmin = std::numeric_limits<double>::infinity(), dmax = 0.0;
        for (std::size_t i = 0; i < grid.size(); ++i) {
            ++total;
            try {
                rgflow::InstanceConfig c2 = base;
                c2.g0 = grid[i];
                auto inst = rgflow::make_instance(c2);
                rgflow::FlowResult res = rgflow::integrate_homotopy(inst->xbar, hc, *inst);
                rgflow::SensitivityResult sr =
                    rgflow::sensitivity(c2, dg0_rel * grid[i], hc);
                csv += std::to_string(i) + "," + std::to_string(grid[i]) + "," +
                       std::to_string(res.x_final[0].V.z) + "," +
                       std::to_string(res.x_final[0].V.mu) + "," +
                       std::to_string(sr.dz0_dg0) + "," + std::to_string(sr.dmu0_dg0) +
                       ",ok\n";
                dmin = std::min(dmin, std::abs(sr.dz0_dg0));
                dmax = std::max(dmax, std::abs(sr.dz0_dg0));
                ++good;
            } catch (const rgflow::Error& e) {
                csv += std::to_string(i) + "," + std::to_string(grid[i]) + ",,,,," +
                       std::string("error: ") + e.what() + "\n";
            }
        }
        summary["derivative_fit"] =
            Json{{"min_abs_dz0", dmin}, {"max_abs_dz0", dmax},
                 {"uniform", dmax <= 2.0 * std::max(dmin, 1e-300)}};
    } else if (sweep.contains("family")) {
        const Json& fam = sweep.at("family");
        std::string kind = fam.value("kind", std::string("beta-scale"));
        if (kind != "beta-scale")
            rgflow::fail(rgflow::ErrorCode::InvalidParameters,
                         "unknown sweep family '" + kind + "'");
        std::vector<double> ms = fam.value("m_values", std::vector<double>{});
        if (ms.empty())
            rgflow::fail(rgflow::ErrorCode::InvalidParameters, "empty m_values");
        rgflow::InstanceFamily family = [&](double m) {
            rgflow::InstanceConfig c2 = base;
            std::vector<double> prefix = base.params.beta.prefix();
            for (double& x : prefix) x *= m;
            rgflow::TailRule tail = base.params.beta.tail();
            tail.value *= m;
            c2.params.beta = rgflow::CoeffSeq(prefix, tail);
            return c2;
        };
        rgflow::ContinuityReport rep = rgflow::external_parameter_sweep(family, ms, hc);
        total = ms.size();
        good = ms.size() - rep.failures.size();
        summary["continuity"] = rgflow::continuity_to_json(rep);
        for (std::size_t i = 0; i < ms.size(); ++i)
            csv += std::to_string(i) + "," + std::to_string(ms[i]) + ",,,,,ok\n";
    } else {
        rgflow::fail(rgflow::ErrorCode::InvalidParameters,
                     "sweep block needs 'g0_grid' or 'family'");
    }

    double fraction = total ? static_cast<double>(good) / static_cast<double>(total) : 0.0;
    summary["points_total"] = total;
    summary["points_succeeded"] = good;
    summary["success_fraction"] = fraction;
    bool pass = fraction >= min_fraction;
    summary["pass"] = pass;

    rgflow::write_file_atomic(opts.out_dir + "/sweep_points.csv", csv);
    rgflow::write_file_atomic(opts.out_dir + "/sweep_summary.json",
                              rgflow::render_report(summary));
    std::cout << "sweep: " << good << "/" << total << " points succeeded\n";
    return pass ? kExitOk : kExitCertificate;
}

int cmd_oracle_compare(const CommonOpts& opts) {
    Json cfg = load_config(opts.config_path);
    apply_overrides(cfg, opts);
    double tol = cfg.contains("oracle") ? cfg.at("oracle").value("tol", 1e-7) : 1e-7;
    rgflow::HomotopyConfig hc = integrator_from_config(cfg);
    rgflow::InstanceConfig icfg = rgflow::instance_from_json(strip_run_keys(cfg));
    auto inst = rgflow::make_instance(icfg);

    rgflow::FlowResult res = rgflow::integrate_homotopy(inst->xbar, hc, *inst);
    rgflow::ShootingResult sh =
        rgflow::shooting_solve(icfg.K0, icfg.g0, *inst, inst->horizon + 1, 1e-12);
    rgflow::SweepResult sw = rgflow::sweep_solve(icfg.K0, icfg.g0, *inst, 1e-12, 500);

    auto gap = [&](const rgflow::FlowSequence& x, const rgflow::FlowSequence& y) {
        return rgflow::weighted_deviation_norm(x, y, *inst->scheme, rgflow::WhichNorm::W);
    };
    double g1 = gap(res.x_final, sh.trajectory);
    double g2 = gap(res.x_final, sw.trajectory);
    double g3 = gap(sh.trajectory, sw.trajectory);
    bool pass = g1 <= tol && g2 <= tol && g3 <= tol;

    Json body;
    body["homotopy_vs_shooting_w"] = g1;
    body["homotopy_vs_sweep_w"] = g2;
    body["shooting_vs_sweep_w"] = g3;
    body["tol"] = tol;
    body["pass"] = pass;
    rgflow::write_file_atomic(opts.out_dir + "/oracle_compare.json",
                              rgflow::render_report(body));
    std::cout << (pass ? "oracle-compare: pairwise gaps within tol\n"
                       : "oracle-compare: FAILED\n");
    return pass ? kExitOk : kExitCertificate;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"rgflow: quadratic flows near a non-hyperbolic fixed point, "
                 "perturbed boundary-value solves, and their certificates"};
    app.require_subcommand(1);
    // the domain parameter flag --h needs the short help flag out of the way
    app.set_help_flag("--help", "print help");

    // verify runs single-threaded unless asked; sweep opts in
    rgflow::kernels::set_default_exec(rgflow::kernels::Exec::Serial);

    CommonOpts opts;
    bool force = false;
    std::string only;
    long jobs = 1;

    auto add_common = [&](CLI::App* sub, bool config_required = true) {
        sub->set_help_flag("--help", "print help");
        auto* c = sub->add_option("--config", opts.config_path, "JSON run configuration");
        if (config_required) c->required();
        sub->add_option("--out-dir", opts.out_dir, "output directory");
        sub->add_option("--g0", opts.g0, "override g0");
        sub->add_option("--horizon", opts.horizon, "override the working horizon");
        sub->add_option("--seed", opts.seed, "override the run seed");
        sub->add_option("--b", opts.b, "override the ball-clause fraction b");
        sub->add_option("--h", opts.h, "override the domain parameter h");
        sub->add_option("--a", opts.a, "override the domain parameter a");
        sub->add_option("--a-star", opts.a_star, "override a*");
        sub->add_option("--tail-tol", opts.tail_tol, "override the tail tolerance");
        sub->add_option("--model-kind", opts.model_kind, "override model.kind");
    };

    CLI::App* quad = app.add_subcommand("quadratic", "solve the quadratic boundary-value flow");
    add_common(quad);
    CLI::App* flow = app.add_subcommand("flow", "integrate the homotopy to the perturbed flow");
    add_common(flow);
    flow->add_flag("--force", force, "proceed even when the assumption reports fail");
    CLI::App* verify = app.add_subcommand("verify", "run the named invariant suite");
    add_common(verify, false);
    verify->add_option("--only", only, "run only checks whose name contains this string");
    CLI::App* sweep = app.add_subcommand("sweep", "parameter sweeps (g0 grid or family)");
    add_common(sweep);
    sweep->add_option("--jobs", jobs, "parallel sweep workers");
    CLI::App* oracle =
        app.add_subcommand("oracle-compare", "homotopy vs shooting vs sweep on one instance");
    add_common(oracle);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);
        return rc == 0 ? kExitOk : kExitConfig;
    }

    try {
        if (quad->parsed()) return cmd_quadratic(opts);
        if (flow->parsed()) return cmd_flow(opts, force);
        if (verify->parsed()) return cmd_verify(opts, only);
        if (sweep->parsed()) return cmd_sweep(opts, jobs);
        if (oracle->parsed()) return cmd_oracle_compare(opts);
    } catch (const rgflow::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_code_for(e);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitSolver;
    }
    return kExitConfig;
}
