#include "rgflow/assumptions.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "rgflow/kernels.hpp"
#include "rgflow/rng.hpp"

namespace rgflow {

A1Report check_A1(const ParamSeq& params, std::size_t horizon) {
    A1Report rep;
    rep.beta_sup = params.beta.sup_abs();
    CutoffData cutoff = cutoff_time(params);
    rep.scan_limit = cutoff.infinite() ? horizon : std::min(cutoff.j_omega, horizon);

    // candidate c values: observed positive betas plus 1; feasibility means
    // at most floor(1/c) violations among j <= scan_limit; ties toward larger c
    std::set<double, std::greater<double>> candidates{1.0};
    for (std::size_t j = 0; j <= rep.scan_limit; ++j) {
        double b = params.beta.at(j);
        if (b > 0.0) candidates.insert(b);
    }
    for (double c : candidates) {
        std::vector<std::size_t> bad;
        for (std::size_t j = 0; j <= rep.scan_limit; ++j)
            if (params.beta.at(j) < c) bad.push_back(j);
        if (bad.size() <= static_cast<std::size_t>(std::floor(1.0 / c))) {
            rep.c_best = c;
            rep.exceptional = std::move(bad);
            break;
        }
    }
    rep.pass = std::isfinite(rep.beta_sup) && rep.c_best > 0.0;
    return rep;
}

A2Report check_A2(const ParamSeq& params, const CutoffData& cutoff, std::size_t horizon) {
    A2Report rep;

    rep.lambda_min = params.lambda.inf_with_limit();
    rep.lambda_pass = rep.lambda_min > 1.0;
    if (!rep.lambda_pass) {
        for (std::size_t j = 0; j <= horizon; ++j)
            if (params.lambda.at(j) <= 1.0) { rep.offending_lambda_index = j; break; }
    }

    std::size_t zeta_limit = cutoff.infinite() ? horizon : std::min(cutoff.j_omega, horizon);
    for (std::size_t j = 0; j <= zeta_limit; ++j)
        if (params.zeta.at(j) > 0.0) ++rep.zeta_positive_count;
    rep.zeta_clause_pass =
        !cutoff.infinite() || params.zeta.eventually_nonpositive_from() != kInfiniteIndex;

    double env = 0.0;
    for (const CoeffSeq* s : {&params.eta, &params.gamma, &params.theta, &params.zeta,
                              &params.ups_gg, &params.ups_gz, &params.ups_gmu,
                              &params.ups_zz, &params.ups_zmu})
        env = std::max(env, sup_over_chi(*s, cutoff));
    rep.c_env = env;
    rep.env_pass = std::isfinite(env);

    rep.pass = rep.lambda_pass && rep.zeta_clause_pass && rep.env_pass;
    return rep;
}

namespace {

// sup-norm unit direction over the K block, or a V coordinate direction
FlowSequence::Entry zero_entry(std::size_t d) {
    FlowSequence::Entry e;
    e.K.assign(d, 0.0);
    return e;
}

struct A3Sampler {
    const PerturbationModel& model;
    const DomainSpec& dom;

    double env3(std::size_t j) const {
        double g = dom.gbar(j + 1);
        return dom.chi(j + 1) * g * g * g;
    }
    double env2(std::size_t j) const {
        double g = dom.gbar(j + 1);
        return dom.chi(j + 1) * g * g;
    }
    double envHigher(std::size_t j, int n, int m) const {
        double g = dom.gbar(j + 1);
        double lg = std::abs(std::log(g));
        return std::pow(dom.chi(j + 1) * g * g * g, 1.0 - n) *
               std::pow(g * g * lg, -static_cast<double>(m));
    }

    FlowSequence::Entry sample_point(std::size_t j, Rng& rng) const {
        FlowSequence::Entry e = zero_entry(model.d_K(j));
        double rk = dom.radius(Coord::K, j);
        for (double& k : e.K) k = 0.9 * rk * rng.symmetric();
        e.V.g = dom.gbar(j) + 0.9 * dom.radius(Coord::G, j) * rng.symmetric();
        e.V.z = dom.zbar(j) + 0.9 * dom.radius(Coord::Z, j) * rng.symmetric();
        e.V.mu = dom.mubar(j) + 0.9 * dom.radius(Coord::Mu, j) * rng.symmetric();
        return e;
    }

    // random sup-norm unit direction restricted to K or V coordinates
    FlowSequence::Entry direction(std::size_t j, bool in_K, Rng& rng) const {
        FlowSequence::Entry e = zero_entry(model.d_K(j));
        if (in_K) {
            for (double& k : e.K) k = rng.uniform01() < 0.5 ? -1.0 : 1.0;
        } else {
            e.V.g = rng.uniform01() < 0.5 ? -1.0 : 1.0;
            e.V.z = rng.uniform01() < 0.5 ? -1.0 : 1.0;
            e.V.mu = rng.uniform01() < 0.5 ? -1.0 : 1.0;
        }
        return e;
    }

    struct PhiVal {
        std::vector<double> psi;
        VTriple rho;
    };
    PhiVal eval(std::size_t j, const FlowSequence::Entry& x) const {
        return {model.psi(j, x.K, x.V), model.rho(j, x.K, x.V)};
    }
    static FlowSequence::Entry shifted(const FlowSequence::Entry& x, double c,
                                       const FlowSequence::Entry& d) {
        FlowSequence::Entry out = x;
        for (std::size_t i = 0; i < out.K.size(); ++i) out.K[i] += c * d.K[i];
        out.V += c * d.V;
        return out;
    }

    // second difference along (u, v); steps in absolute units
    PhiVal second_diff(std::size_t j, const FlowSequence::Entry& x, const FlowSequence::Entry& u,
                       double hu, const FlowSequence::Entry& v, double hv) const {
        PhiVal pp = eval(j, shifted(shifted(x, hu, u), hv, v));
        PhiVal pm = eval(j, shifted(shifted(x, hu, u), -hv, v));
        PhiVal mp = eval(j, shifted(shifted(x, -hu, u), hv, v));
        PhiVal mm = eval(j, shifted(shifted(x, -hu, u), -hv, v));
        PhiVal out;
        out.psi.resize(pp.psi.size());
        double s = 1.0 / (4.0 * hu * hv);
        for (std::size_t i = 0; i < pp.psi.size(); ++i)
            out.psi[i] = (pp.psi[i] - pm.psi[i] - mp.psi[i] + mm.psi[i]) * s;
        out.rho.g = (pp.rho.g - pm.rho.g - mp.rho.g + mm.rho.g) * s;
        out.rho.z = (pp.rho.z - pm.rho.z - mp.rho.z + mm.rho.z) * s;
        out.rho.mu = (pp.rho.mu - pm.rho.mu - mp.rho.mu + mm.rho.mu) * s;
        return out;
    }
};

double vmax(const VTriple& v) {
    return std::max(std::abs(v.g), std::max(std::abs(v.z), std::abs(v.mu)));
}

} // namespace

A3Report check_A3(const PerturbationModel& model, const DomainSpec& dom,
                  const WeightScheme& scheme, std::size_t sample_count,
                  std::uint64_t rng_seed) {
    A3Report rep;
    A3Sampler S{model, dom};

    // sampled scales: geometric spread over the known range. Beyond the
    // cut-off time the coordinates shrink like Omega^{-j}; finite differences
    // lose all relative precision there, so sampling stops a few scales past
    // j_Omega (the assumption is uniform in j, the chi regime is exercised by
    // the first decaying scales).
    std::vector<std::size_t> js;
    std::size_t top = dom.known_horizon() > 1 ? dom.known_horizon() - 1 : 0;
    top = std::min(top, dom.solution().horizon > 0 ? dom.solution().horizon - 1 : 0);
    const CutoffData& cutoff = dom.solution().cutoff;
    if (!cutoff.infinite()) top = std::min(top, cutoff.j_omega + 5);
    for (std::size_t j = 0; j <= top;) {
        js.push_back(j);
        j = j < 4 ? j + 1 : j + j / 2;
    }

    double kappa_hat = 0.0, R_hat = 0.0;
    double M_value = 0.0, M_first = 0.0, M_higher = 0.0;
    std::size_t used = 0, skipped = 0;

    for (std::size_t ji = 0; ji < js.size(); ++ji) {
        std::size_t j = js[ji];
        Rng rng = Rng::substream(rng_seed, ji);
        const std::size_t dj = model.d_K(j);
        const double rk = dom.radius(Coord::K, j);
        const double rv[3] = {dom.radius(Coord::G, j), dom.radius(Coord::Z, j),
                              dom.radius(Coord::Mu, j)};

        for (std::size_t s = 0; s < sample_count; ++s) {
            FlowSequence::Entry x = S.sample_point(j, rng);
            try {
                // R: psi at K = 0
                FlowSequence::Entry x0 = x;
                for (double& k : x0.K) k = 0.0;
                R_hat = std::max(R_hat, sup_norm(model.psi(j, x0.K, x0.V)) / S.env3(j));

                // value bound of rho
                M_value = std::max(M_value, vmax(model.rho(j, x.K, x.V)) / S.env3(j));

                // first derivatives: K columns then V columns
                std::vector<double> psi_row(model.d_K(j + 1), 0.0);
                VTriple rho_row{};
                for (std::size_t i = 0; i < dj; ++i) {
                    FlowSequence::Entry e = zero_entry(dj);
                    e.K[i] = 1.0;
                    PhiDerivative d = model_directional_derivative(model, dom, j, x, e);
                    for (std::size_t r = 0; r < psi_row.size(); ++r)
                        psi_row[r] += std::abs(d.dpsi[r]);
                    rho_row.g += std::abs(d.drho.g);
                    rho_row.z += std::abs(d.drho.z);
                    rho_row.mu += std::abs(d.drho.mu);
                }
                kappa_hat = std::max(kappa_hat, *std::max_element(psi_row.begin(), psi_row.end()));
                M_first = std::max(M_first, vmax(rho_row));

                std::vector<double> psi_vrow(model.d_K(j + 1), 0.0);
                VTriple rho_vrow{};
                for (int c = 0; c < 3; ++c) {
                    FlowSequence::Entry e = zero_entry(dj);
                    if (c == 0) e.V.g = 1.0;
                    if (c == 1) e.V.z = 1.0;
                    if (c == 2) e.V.mu = 1.0;
                    PhiDerivative d = model_directional_derivative(model, dom, j, x, e);
                    for (std::size_t r = 0; r < psi_vrow.size(); ++r)
                        psi_vrow[r] += std::abs(d.dpsi[r]);
                    rho_vrow.g += std::abs(d.drho.g);
                    rho_vrow.z += std::abs(d.drho.z);
                    rho_vrow.mu += std::abs(d.drho.mu);
                }
                double dv = std::max(*std::max_element(psi_vrow.begin(), psi_vrow.end()),
                                     vmax(rho_vrow));
                M_first = std::max(M_first, dv / S.env2(j));

                // second derivatives (n + m = 2), directional estimates
                const double hk = 1e-3 * rk;
                const double hv = 1e-3 * std::min(rv[0], std::min(rv[1], rv[2]));
                struct Pair { bool uK, vK; int n, m; };
                for (Pair pr : {Pair{true, true, 2, 0}, Pair{true, false, 1, 1},
                                Pair{false, false, 0, 2}}) {
                    FlowSequence::Entry u = S.direction(j, pr.uK, rng);
                    FlowSequence::Entry v = S.direction(j, pr.vK, rng);
                    auto d2 = S.second_diff(j, x, u, pr.uK ? hk : hv, v, pr.vK ? hk : hv);
                    double val = std::max(sup_norm(d2.psi), vmax(d2.rho));
                    M_higher = std::max(M_higher, val / S.envHigher(j, pr.n, pr.m));
                }

                // third derivatives (n + m = 3) via differenced second diffs
                const double hk3 = 1e-2 * rk;
                const double hv3 = 1e-2 * std::min(rv[0], std::min(rv[1], rv[2]));
                struct Triple { bool uK, vK, wK; int n, m; };
                for (Triple tr : {Triple{true, true, true, 3, 0},
                                  Triple{true, true, false, 2, 1},
                                  Triple{true, false, false, 1, 2},
                                  Triple{false, false, false, 0, 3}}) {
                    FlowSequence::Entry u = S.direction(j, tr.uK, rng);
                    FlowSequence::Entry v = S.direction(j, tr.vK, rng);
                    FlowSequence::Entry w = S.direction(j, tr.wK, rng);
                    double hu = tr.uK ? hk3 : hv3;
                    double hw2 = tr.vK ? hk3 : hv3;
                    double hw3 = tr.wK ? hk3 : hv3;
                    auto dp = S.second_diff(j, A3Sampler::shifted(x, hw3, w), u, hu, v, hw2);
                    auto dm = S.second_diff(j, A3Sampler::shifted(x, -hw3, w), u, hu, v, hw2);
                    double val = 0.0;
                    for (std::size_t i = 0; i < dp.psi.size(); ++i)
                        val = std::max(val, std::abs(dp.psi[i] - dm.psi[i]) / (2.0 * hw3));
                    val = std::max(val, std::abs(dp.rho.g - dm.rho.g) / (2.0 * hw3));
                    val = std::max(val, std::abs(dp.rho.z - dm.rho.z) / (2.0 * hw3));
                    val = std::max(val, std::abs(dp.rho.mu - dm.rho.mu) / (2.0 * hw3));
                    M_higher = std::max(M_higher, val / S.envHigher(j, tr.n, tr.m));
                }
                ++used;
            } catch (const Error&) {
                ++skipped;
            }
        }
    }

    rep.kappa_hat = kappa_hat;
    rep.R_hat = R_hat;
    rep.M_value = M_value;
    rep.M_first = M_first;
    rep.M_higher = M_higher;
    rep.M_hat = std::max(M_value, std::max(M_first, M_higher));
    rep.samples_used = used;
    rep.samples_skipped = skipped;

    const double slack = 1.0 + 1e-9;
    const double omega = dom.solution().cutoff.omega;
    rep.kappa_pass = kappa_hat <= model.declared_kappa * slack;
    rep.R_pass = R_hat <= model.declared_R * slack;
    rep.M_pass = rep.M_hat <= model.declared_M * slack;
    rep.constraint_pass = model.declared_kappa * omega < 1.0 &&
                          model.declared_R < scheme.a() * (1.0 - model.declared_kappa * omega);
    rep.pass = rep.kappa_pass && rep.R_pass && rep.M_pass && rep.constraint_pass;
    return rep;
}

} // namespace rgflow
