#include "rgflow/io.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>

namespace rgflow {

namespace {

void reject_unknown(const Json& j, const std::set<std::string>& allowed,
                    const std::string& where) {
    for (auto it = j.begin(); it != j.end(); ++it)
        if (!allowed.count(it.key()))
            fail(ErrorCode::InvalidParameters,
                 "unknown key '" + it.key() + "' in " + where);
}

double get_num(const Json& j, const std::string& key, double fallback) {
    if (!j.contains(key)) return fallback;
    if (!j.at(key).is_number())
        fail(ErrorCode::InvalidParameters, "'" + key + "' must be a number");
    return j.at(key).get<double>();
}

CoeffSeq seq_from_json(const Json& j, const std::string& name) {
    if (j.is_number()) return CoeffSeq::constant(j.get<double>());
    if (!j.is_object())
        fail(ErrorCode::InvalidParameters,
             "sequence '" + name + "' must be a number or an object");
    reject_unknown(j, {"prefix", "tail"}, "sequence '" + name + "'");
    std::vector<double> prefix;
    if (j.contains("prefix")) {
        if (!j.at("prefix").is_array())
            fail(ErrorCode::InvalidParameters, "'" + name + ".prefix' must be an array");
        prefix = j.at("prefix").get<std::vector<double>>();
    }
    TailRule tail;
    if (j.contains("tail")) {
        const Json& t = j.at("tail");
        reject_unknown(t, {"rule", "value", "ratio"}, "tail of '" + name + "'");
        std::string rule = t.value("rule", "zero");
        if (rule == "zero") {
            tail.kind = TailRule::Kind::Zero;
        } else if (rule == "constant") {
            tail.kind = TailRule::Kind::Constant;
            tail.value = get_num(t, "value", 0.0);
        } else if (rule == "geometric") {
            tail.kind = TailRule::Kind::Geometric;
            tail.value = get_num(t, "value", 0.0);
            tail.ratio = get_num(t, "ratio", 0.0);
        } else {
            fail(ErrorCode::InvalidParameters,
                 "tail rule of '" + name + "' must be zero|constant|geometric");
        }
    }
    return CoeffSeq(std::move(prefix), tail);
}

Json seq_to_json(const CoeffSeq& s) {
    Json out;
    out["prefix"] = s.prefix();
    Json tail;
    switch (s.tail().kind) {
        case TailRule::Kind::Zero: tail["rule"] = "zero"; break;
        case TailRule::Kind::Constant:
            tail["rule"] = "constant";
            tail["value"] = s.tail().value;
            break;
        case TailRule::Kind::Geometric:
            tail["rule"] = "geometric";
            tail["value"] = s.tail().value;
            tail["ratio"] = s.tail().ratio;
            break;
    }
    out["tail"] = tail;
    return out;
}

const char* kSeqNames[11] = {"beta", "eta", "gamma", "lambda", "theta", "zeta",
                             "ups_gg", "ups_gz", "ups_gmu", "ups_zz", "ups_zmu"};

CoeffSeq& seq_field(ParamSeq& p, const std::string& name) {
    if (name == "beta") return p.beta;
    if (name == "eta") return p.eta;
    if (name == "gamma") return p.gamma;
    if (name == "lambda") return p.lambda;
    if (name == "theta") return p.theta;
    if (name == "zeta") return p.zeta;
    if (name == "ups_gg") return p.ups_gg;
    if (name == "ups_gz") return p.ups_gz;
    if (name == "ups_gmu") return p.ups_gmu;
    if (name == "ups_zz") return p.ups_zz;
    return p.ups_zmu;
}

const CoeffSeq& seq_field(const ParamSeq& p, const std::string& name) {
    return seq_field(const_cast<ParamSeq&>(p), name);
}

} // namespace

ParamSeq params_from_json(const Json& j) {
    if (!j.is_object()) fail(ErrorCode::InvalidParameters, "params must be an object");
    std::set<std::string> allowed{"omega"};
    for (const char* n : kSeqNames) allowed.insert(n);
    reject_unknown(j, allowed, "params");

    ParamSeq p;
    if (j.contains("omega")) {
        p.omega = get_num(j, "omega", 2.0);
        if (!(p.omega > 1.0))
            fail(ErrorCode::InvalidParameters, "omega must exceed 1");
    }
    for (const char* n : kSeqNames)
        if (j.contains(n)) seq_field(p, n) = seq_from_json(j.at(n), n);
    p.validate();
    return p;
}

Json params_to_json(const ParamSeq& p) {
    Json out;
    out["omega"] = p.omega;
    for (const char* n : kSeqNames) out[n] = seq_to_json(seq_field(p, n));
    return out;
}

ModelConfig model_from_json(const Json& j) {
    if (!j.is_object()) fail(ErrorCode::InvalidParameters, "model must be an object");
    reject_unknown(j, {"kind", "d", "kappa0", "c_psi", "c_rho", "seed", "kappa", "R", "M"},
                   "model");
    ModelConfig cfg;
    cfg.kind = j.value("kind", std::string("zero"));
    cfg.d = j.value("d", std::size_t{1});
    cfg.kappa0 = get_num(j, "kappa0", cfg.kappa0);
    cfg.c_psi = get_num(j, "c_psi", cfg.c_psi);
    cfg.c_rho = get_num(j, "c_rho", cfg.c_rho);
    if (j.contains("seed")) cfg.seed = j.at("seed").get<std::uint64_t>();
    cfg.kappa = get_num(j, "kappa", -1.0);
    cfg.R = get_num(j, "R", -1.0);
    cfg.M = get_num(j, "M", -1.0);
    return cfg;
}

InstanceConfig instance_from_json(const Json& j) {
    if (!j.is_object()) fail(ErrorCode::InvalidParameters, "config must be an object");
    reject_unknown(j,
                   {"params", "model", "g0", "K0", "a", "a_star", "h", "b", "quad_tol",
                    "horizon", "tail_tol", "horizon_cap", "seed", "tolerances"},
                   "config");
    InstanceConfig cfg;
    if (!j.contains("params")) fail(ErrorCode::InvalidParameters, "config lacks 'params'");
    cfg.params = params_from_json(j.at("params"));
    if (j.contains("model")) cfg.model = model_from_json(j.at("model"));
    cfg.g0 = get_num(j, "g0", cfg.g0);
    if (!(cfg.g0 > 0.0)) fail(ErrorCode::InvalidParameters, "g0 must be positive");
    if (j.contains("K0")) {
        if (j.at("K0").is_array())
            cfg.K0 = j.at("K0").get<std::vector<double>>();
        else
            cfg.K0.assign(cfg.model.d, j.at("K0").get<double>());
    }
    cfg.a = get_num(j, "a", cfg.a);
    cfg.a_star = get_num(j, "a_star", cfg.a_star);
    cfg.h = get_num(j, "h", cfg.h);
    cfg.b = get_num(j, "b", cfg.b);
    if (!(cfg.b > 0.0 && cfg.b < 1.0))
        fail(ErrorCode::InvalidParameters, "b must lie in (0,1)");
    cfg.quad_tol = get_num(j, "quad_tol", cfg.quad_tol);
    cfg.horizon = j.value("horizon", std::size_t{0});
    cfg.tail_tol = get_num(j, "tail_tol", cfg.tail_tol);
    cfg.horizon_cap = j.value("horizon_cap", cfg.horizon_cap);
    return cfg;
}

Json report_to_json(const A1Report& r) {
    Json out;
    out["beta_sup"] = r.beta_sup;
    out["c_best"] = r.c_best;
    out["exceptional_indices"] = r.exceptional;
    out["scan_limit"] = r.scan_limit;
    out["pass"] = r.pass;
    return out;
}

Json report_to_json(const A2Report& r) {
    Json out;
    out["lambda_min"] = r.lambda_min;
    out["zeta_positive_count"] = r.zeta_positive_count;
    out["zeta_clause_pass"] = r.zeta_clause_pass;
    out["c_env"] = std::isfinite(r.c_env) ? Json(r.c_env) : Json("infinity");
    out["lambda_pass"] = r.lambda_pass;
    out["env_pass"] = r.env_pass;
    out["pass"] = r.pass;
    return out;
}

Json report_to_json(const A3Report& r) {
    Json out;
    out["kappa_hat"] = r.kappa_hat;
    out["R_hat"] = r.R_hat;
    out["M_hat"] = r.M_hat;
    out["M_value"] = r.M_value;
    out["M_first"] = r.M_first;
    out["M_higher"] = r.M_higher;
    out["samples_used"] = r.samples_used;
    out["samples_skipped"] = r.samples_skipped;
    out["kappa_pass"] = r.kappa_pass;
    out["R_pass"] = r.R_pass;
    out["M_pass"] = r.M_pass;
    out["constraint_pass"] = r.constraint_pass;
    out["pass"] = r.pass;
    return out;
}

Json report_to_json(const SolveReport& r) {
    Json out;
    out["iterations"] = r.iterations;
    out["residual_v"] = r.residual_v;
    out["contraction"] = r.contraction;
    out["tail_bound_z"] = std::isfinite(r.tail_bound_z) ? Json(r.tail_bound_z)
                                                        : Json("infinity");
    out["tail_bound_mu"] = std::isfinite(r.tail_bound_mu) ? Json(r.tail_bound_mu)
                                                          : Json("infinity");
    out["tail_certified"] = r.tail_certified;
    return out;
}

namespace {
Json tail_to_json(const TailCertificate& t) {
    Json out;
    out["bound"] = std::isfinite(t.bound) ? Json(t.bound) : Json("infinity");
    out["trunc_index"] = t.trunc_index;
    out["certified"] = t.certified;
    return out;
}
} // namespace

Json solution_to_json(const QuadraticSolution& sol) {
    Json out;
    out["horizon"] = sol.horizon;
    out["g0"] = sol.g0;
    out["j_omega"] = sol.cutoff.infinite() ? Json("infinity") : Json(sol.cutoff.j_omega);
    out["alpha"] = sol.alpha;
    out["env_z"] = sol.env_z;
    out["env_mu"] = sol.env_mu;
    out["z_tail"] = tail_to_json(sol.z_tail);
    out["mu_tail"] = tail_to_json(sol.mu_tail);
    return out;
}

Json flow_result_to_json(const FlowResult& res, const Instance& inst) {
    Json out;
    out["horizon"] = inst.horizon;
    out["ball_ratio_K"] = res.ratios.K;
    out["ball_ratio_g"] = res.ratios.g;
    out["ball_ratio_z"] = res.ratios.z;
    out["ball_ratio_mu"] = res.ratios.mu;
    out["b"] = inst.b;
    out["clauses_ok"] = res.clauses_ok;
    out["flow_residual"] = res.flow_residual;
    out["boundary_gap"] = res.boundary_gap;
    out["steps_accepted"] = res.steps_accepted;
    out["steps_rejected"] = res.steps_rejected;
    out["f_evaluations"] = res.f_evaluations;
    return out;
}

Json continuity_to_json(const ContinuityReport& rep) {
    Json out;
    out["m_values"] = rep.m_values;
    out["diffs"] = rep.diffs;
    out["moduli"] = rep.moduli;
    out["failures"] = rep.failures;
    out["report_horizon"] = rep.report_horizon;
    return out;
}

namespace {
std::string fmt17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}
} // namespace

std::string solution_to_csv(const QuadraticSolution& sol) {
    std::string out = "j,gbar,zbar,mubar,chi\n";
    for (std::size_t j = 0; j <= sol.horizon; ++j) {
        out += std::to_string(j);
        out += ',';
        out += fmt17(sol.vbar[j].g);
        out += ',';
        out += fmt17(sol.vbar[j].z);
        out += ',';
        out += fmt17(sol.vbar[j].mu);
        out += ',';
        out += fmt17(sol.cutoff.chi(j));
        out += '\n';
    }
    return out;
}

std::string trajectory_to_csv(const FlowSequence& x, const Instance& inst) {
    std::size_t dmax = 0;
    for (std::size_t j = 0; j < x.size(); ++j) dmax = std::max(dmax, x[j].K.size());
    std::string out = "j";
    for (std::size_t i = 0; i < dmax; ++i) out += ",K" + std::to_string(i);
    out += ",g,z,mu,ratio_K,ratio_g,ratio_z,ratio_mu\n";
    for (std::size_t j = 0; j < x.size(); ++j) {
        out += std::to_string(j);
        for (std::size_t i = 0; i < dmax; ++i) {
            out += ',';
            out += i < x[j].K.size() ? fmt17(x[j].K[i]) : "";
        }
        out += ',';
        out += fmt17(x[j].V.g);
        out += ',';
        out += fmt17(x[j].V.z);
        out += ',';
        out += fmt17(x[j].V.mu);
        double dk = 0.0;
        for (std::size_t i = 0; i < x[j].K.size(); ++i)
            dk = std::max(dk, std::abs(x[j].K[i] - inst.xbar[j].K[i]));
        out += ',';
        out += fmt17(dk / inst.scheme->w(Coord::K, j));
        out += ',';
        out += fmt17(std::abs(x[j].V.g - inst.xbar[j].V.g) / inst.scheme->w(Coord::G, j));
        out += ',';
        out += fmt17(std::abs(x[j].V.z - inst.xbar[j].V.z) / inst.scheme->w(Coord::Z, j));
        out += ',';
        out += fmt17(std::abs(x[j].V.mu - inst.xbar[j].V.mu) / inst.scheme->w(Coord::Mu, j));
        out += '\n';
    }
    return out;
}

std::string residuals_to_csv(const FlowSequence& x, double t, const Instance& inst) {
    std::string out = "j,res_K,res_g,res_z,res_mu\n";
    const std::size_t J = x.horizon();
    for (std::size_t j = 0; j < J; ++j) {
        FlowSequence::Entry next = phi_step(t, x[j], j, inst.params, *inst.model);
        double rk = 0.0;
        for (std::size_t i = 0; i < next.K.size(); ++i)
            rk = std::max(rk, std::abs(x[j + 1].K[i] - next.K[i]));
        out += std::to_string(j);
        out += ',';
        out += fmt17(rk / residual_weight(*inst.scheme, Coord::K, j));
        out += ',';
        out += fmt17(std::abs(x[j + 1].V.g - next.V.g) /
                     residual_weight(*inst.scheme, Coord::G, j));
        out += ',';
        out += fmt17(std::abs(x[j + 1].V.z - next.V.z) /
                     residual_weight(*inst.scheme, Coord::Z, j));
        out += ',';
        out += fmt17(std::abs(x[j + 1].V.mu - next.V.mu) /
                     residual_weight(*inst.scheme, Coord::Mu, j));
        out += '\n';
    }
    return out;
}

void write_file_atomic(const std::string& path, const std::string& content) {
    namespace fs = std::filesystem;
    fs::path target(path);
    if (target.has_parent_path()) fs::create_directories(target.parent_path());
    fs::path tmp = target;
    tmp += ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
        if (!f) fail(ErrorCode::InvalidParameters, "cannot open " + tmp.string());
        f << content;
        if (!f) fail(ErrorCode::InvalidParameters, "short write to " + tmp.string());
    }
    fs::rename(tmp, target);
}

std::string render_report(Json body) {
    Json out;
    out["meta"] = Json{{"tool", "rgflow"}};
    for (auto it = body.begin(); it != body.end(); ++it) out[it.key()] = it.value();
    return out.dump(2) + "\n";
}

} // namespace rgflow
