#include "rgflow/linear.hpp"

#include <algorithm>
#include <cmath>

#include "rgflow/kernels.hpp"
#include "rgflow/rng.hpp"

namespace rgflow {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
}

BlockMatrices build_L(const FlowSequence& xring, const ParamSeq& p) {
    const std::size_t J = xring.horizon();
    BlockMatrices b;
    b.horizon = J;
    b.a_gg.resize(J + 1);
    b.b_zg.resize(J + 1);
    b.b_mug.resize(J + 1);
    b.c_zz.resize(J + 1);
    b.c_muz.resize(J + 1);
    b.c_mumu.resize(J + 1);

    double run = 0.0, run_min = 0.0, best = 0.0;
    CutoffData cutoff = cutoff_time(p);
    for (std::size_t j = 0; j <= J; ++j) {
        const VTriple& v = xring[j].V;
        const double g = v.g, z = v.z, mu = v.mu;
        b.a_gg[j] = 1.0 - 2.0 * p.beta.at(j) * g;
        b.b_zg[j] = -(2.0 * p.theta.at(j) * g + p.zeta.at(j) * z);
        b.b_mug[j] = p.eta.at(j) - 2.0 * p.ups_gg.at(j) * g - p.ups_gz.at(j) * z -
                     p.ups_gmu.at(j) * mu;
        b.c_zz[j] = 1.0 - p.zeta.at(j) * g;
        b.c_muz[j] = p.gamma.at(j) - p.ups_gz.at(j) * g - 2.0 * p.ups_zz.at(j) * z -
                     p.ups_zmu.at(j) * mu;
        b.c_mumu[j] = p.lambda.at(j) - p.ups_gmu.at(j) * g - p.ups_zmu.at(j) * z;
        if (!(b.c_zz[j] > 0.0))
            fail(ErrorCode::InvalidParameters,
                 "C block not invertible: 1 - zeta_j gring_j <= 0 at j=" + std::to_string(j), j);
        if (!(b.c_mumu[j] > 1.0))
            fail(ErrorCode::ExpansivityViolated,
                 "lambdaring_j <= 1 at j=" + std::to_string(j), j);
        b.alpha = std::max(b.alpha, 1.0 / b.c_mumu[j]);

        run -= std::log(b.c_zz[j]);
        best = std::max(best, run - run_min);
        run_min = std::min(run_min, run);

        double cg = cutoff.chi(j) * g;
        b.env_z_ring = std::max(b.env_z_ring, std::abs(z) / cg);
    }
    b.zeta_prod_sup = std::exp(best);
    b.zeta_nonpos_from = p.zeta.eventually_nonpositive_from();
    return b;
}

namespace {

// Absolute bounds on the neglected l > J parts of the backward v-sums when
// the zero boundary is imposed at the horizon. Uses |u_{g,l}| <=
// |u_{g,J+1}| (gring_l / gring_{J+1})^2 (valid since |1-2x| <= (1-x)^2 for
// x <= 1/2) and the analytic coefficient envelopes.
struct TailBounds {
    double z = kInf, mu = kInf;
    bool certified = false;
};

TailBounds s0_tail_bounds(const BlockMatrices& b, const ParamSeq& p, const CutoffData& cutoff,
                          const std::vector<double>& gring, double u_g_after) {
    TailBounds out;
    const std::size_t J = b.horizon;
    if (gring.size() < J + 2) return out; // need gring_{J+1}
    if (b.zeta_nonpos_from == kInfiniteIndex || b.zeta_nonpos_from > J) return out;

    // factor sanity for the A-product comparison
    const double beta_sup = p.beta.sup_abs();
    if (beta_sup * gring[0] > 0.5) return out;

    ParamSeq pc = p;
    TailEnv env = classify_tail(pc, cutoff, gring, J + 1);
    if (env.kind == TailEnv::Kind::None) return out;
    double s3 = tail_sum_bound(env, cutoff, gring, J + 1, 3.0, 0.0);
    double s2 = tail_sum_bound(env, cutoff, gring, J + 1, 2.0, 0.0);
    // include the first neglected index explicitly
    double gJ1 = gring[J + 1];
    double chiJ1 = cutoff.chi(J + 1);
    s3 += chiJ1 * gJ1 * gJ1 * gJ1;
    s2 += chiJ1 * gJ1 * gJ1;
    if (!std::isfinite(s3) || !std::isfinite(s2)) return out;

    const double c_theta = sup_over_chi(p.theta, cutoff);
    const double c_zeta = sup_over_chi(p.zeta, cutoff);
    const double c_eta = sup_over_chi(p.eta, cutoff);
    const double c_gamma = sup_over_chi(p.gamma, cutoff);
    const double c_ugg = sup_over_chi(p.ups_gg, cutoff);
    const double c_ugz = sup_over_chi(p.ups_gz, cutoff);
    const double c_ugmu = sup_over_chi(p.ups_gmu, cutoff);
    const double c_uzz = sup_over_chi(p.ups_zz, cutoff);
    const double c_uzmu = sup_over_chi(p.ups_zmu, cutoff);
    if (!std::isfinite(c_theta + c_zeta + c_eta + c_gamma + c_ugg + c_ugz + c_ugmu + c_uzz +
                       c_uzmu))
        return out;

    // |b_zg,l| <= C_xi chi_l gring_l, |b_mug,l| <= C_etar chi_l (crude z <= env_z g)
    const double zfac = b.env_z_ring;
    const double c_xi = 2.0 * c_theta + c_zeta * zfac;
    const double g_hi = env.g_hi;
    const double c_etar = c_eta + 2.0 * c_ugg * g_hi + c_ugz * zfac * g_hi + c_ugmu;
    // (mu,z) entry of the C^{-1} products: bounded by T_z * C_gammar * alpha/(1-alpha)
    const double c_gammar = c_gamma + c_ugz * g_hi + 2.0 * c_uzz * zfac * g_hi + c_uzmu;
    const double s_sigma = b.zeta_prod_sup * c_gammar * b.alpha / (1.0 - b.alpha);

    const double U = std::abs(u_g_after) / (gJ1 * gJ1);
    out.z = b.zeta_prod_sup * c_xi * U * s3;
    out.mu = s_sigma * c_xi * U * s3 + c_etar * U * s2;
    out.certified = true;
    return out;
}

} // namespace

FlowSequence apply_S0(const FlowSequence& r, const BlockMatrices& b, const ParamSeq& p,
                      const CutoffData& cutoff, const std::vector<double>& gring,
                      SolveReport* report, double certified_tail_tol, std::size_t k0_dim) {
    const std::size_t J = r.horizon();
    if (b.horizon < J)
        fail(ErrorCode::ExtendHorizon, "blocks built on a shorter horizon than the residual");

    FlowSequence y(J);
    // u-pass: pi_K u_j = pi_K r_{j-1} (shapes follow the data, entry j of r
    // lives at scale j+1); g forward with the running scalar
    y[0].K.assign(k0_dim != 0 ? k0_dim : r[0].K.size(), 0.0);
    for (std::size_t j = 1; j <= J; ++j) y[j].K = r[j - 1].K;
    for (std::size_t j = 0; j < J; ++j)
        y[j + 1].V.g = b.a_gg[j] * y[j].V.g + r[j].V.g;

    // v-pass: backward from the zero boundary at J+1
    double u_g_after = b.a_gg[J] * y[J].V.g + r[J].V.g; // u_{g,J+1}
    double vz = 0.0, vmu = 0.0;
    for (std::size_t j = J + 1; j-- > 0;) {
        double rhs_z = vz - b.b_zg[j] * y[j].V.g - r[j].V.z;
        double rhs_mu = vmu - b.b_mug[j] * y[j].V.g - r[j].V.mu;
        vz = rhs_z / b.c_zz[j];
        vmu = (rhs_mu - b.c_muz[j] * vz) / b.c_mumu[j];
        y[j].V.z = vz;
        y[j].V.mu = vmu;
    }

    if (report || std::isfinite(certified_tail_tol)) {
        TailBounds tb = s0_tail_bounds(b, p, cutoff, gring, u_g_after);
        if (report) {
            report->tail_bound_z = tb.z;
            report->tail_bound_mu = tb.mu;
            report->tail_certified = tb.certified &&
                                     std::max(tb.z, tb.mu) <= certified_tail_tol;
        }
        if (std::isfinite(certified_tail_tol) &&
            !(tb.certified && std::max(tb.z, tb.mu) <= certified_tail_tol))
            fail(ErrorCode::ExtendHorizon,
                 "backward-sum tail bound unattainable at this horizon");
    }
    return y;
}

// --- W ----------------------------------------------------------------------

WOperator::WOperator(double t, const FlowSequence& x, const FlowSequence& xring,
                     const ParamSeq& params, const PerturbationModel& model,
                     const DomainSpec& dom)
    : t_(t), x_(x), xring_(&xring), params_(&params), model_(&model), dom_(&dom) {}

FlowSequence::Entry WOperator::apply_at(std::size_t j, const FlowSequence::Entry& y_j) const {
    const ParamSeq& p = *params_;
    const VTriple& v = x_[j].V;
    const VTriple& vr = (*xring_)[j].V;
    const double dg = v.g - vr.g, dz = v.z - vr.z, dmu = v.mu - vr.mu;

    FlowSequence::Entry out;
    // [D PhiBar0(x_j) - D PhiBar0(xring_j)] y_j, V rows only
    double da = -2.0 * p.beta.at(j) * dg;
    double dxi = 2.0 * p.theta.at(j) * dg + p.zeta.at(j) * dz;
    double dczz = -p.zeta.at(j) * dg;
    double deta = -2.0 * p.ups_gg.at(j) * dg - p.ups_gz.at(j) * dz - p.ups_gmu.at(j) * dmu;
    double dgam = -p.ups_gz.at(j) * dg - 2.0 * p.ups_zz.at(j) * dz - p.ups_zmu.at(j) * dmu;
    double dlam = -p.ups_gmu.at(j) * dg - p.ups_zmu.at(j) * dz;

    out.V.g = da * y_j.V.g;
    out.V.z = -dxi * y_j.V.g + dczz * y_j.V.z;
    out.V.mu = deta * y_j.V.g + dgam * y_j.V.z + dlam * y_j.V.mu;

    // + D(psi_j, t rho_j)(x_j) y_j
    PhiDerivative d = model_directional_derivative(*model_, *dom_, j, x_[j], y_j);
    out.K = std::move(d.dpsi);
    out.V += t_ * d.drho;
    return out;
}

FlowSequence WOperator::apply(const FlowSequence& y) const {
    FlowSequence out(y.horizon());
    kernels::for_each_index(0, y.horizon(),
                            [&](std::size_t j) { out[j] = apply_at(j, y[j]); });
    return out;
}

WOperator build_W(double t, const FlowSequence& x, const PerturbationModel& model,
                  const ParamSeq& params, const FlowSequence& xring, const DomainSpec& dom,
                  const WeightScheme& scheme, bool enforce_ball) {
    if (enforce_ball) {
        double dev = weighted_deviation_norm(x, xring, scheme, WhichNorm::W);
        if (dev > 0.5 * (1.0 + 1e-12)) {
            // name the worst clause for the diagnostics
            BallRatios r = ball_ratios(x, xring, scheme);
            std::string clause = r.K >= r.g && r.K >= r.z && r.K >= r.mu ? "K"
                                 : r.g >= r.z && r.g >= r.mu             ? "g"
                                 : r.z >= r.mu                           ? "z"
                                                                         : "mu";
            fail(ErrorCode::DomainViolation,
                 "x leaves xring + (1/2)B: ||x - xring||_w = " + std::to_string(dev) +
                     ", worst clause " + clause);
        }
    }
    return WOperator(t, x, xring, params, model, dom);
}

FlowSequence apply_S(const WOperator& W, const FlowSequence& r, const BlockMatrices& blocks,
                     const ParamSeq& params, const CutoffData& cutoff,
                     const std::vector<double>& gring, const WeightScheme& scheme,
                     double tol, std::size_t max_iter, SolveReport* report) {
    SolveReport local;
    const std::size_t k0 = W.x()[0].K.size();
    FlowSequence s0r = apply_S0(r, blocks, params, cutoff, gring, &local,
                                std::numeric_limits<double>::infinity(), k0);
    FlowSequence y = s0r;

    double prev_delta = kInf;
    double contraction = 0.0;
    std::size_t it = 0;
    for (; it < max_iter; ++it) {
        FlowSequence wy = W.apply(y);
        FlowSequence y_new = apply_S0(wy, blocks, params, cutoff, gring, nullptr,
                                      std::numeric_limits<double>::infinity(), k0);
        y_new.axpy(1.0, s0r);
        FlowSequence diff = y_new;
        diff.axpy(-1.0, y);
        double delta = weighted_norm(diff, scheme, WhichNorm::W);
        y = std::move(y_new);
        if (std::isfinite(prev_delta) && prev_delta > 0.0)
            contraction = std::max(contraction, delta / prev_delta);
        if (delta < tol) break;
        if (delta > prev_delta && it > 2)
            fail(ErrorCode::NonContraction,
                 "fixed-point iteration stopped contracting (increment " +
                     std::to_string(delta) + ")");
        prev_delta = delta;
    }
    if (it == max_iter)
        fail(ErrorCode::NonContraction,
             "fixed-point iteration did not reach tol within max_iter");

    // residual of y_{j+1} - D_x Phi_j(t, x_j) y_j = r_j, v-weighted
    const std::size_t J = r.horizon();
    double resid = kernels::max_over_indices(0, J - 1, [&](std::size_t j) {
        FlowSequence::Entry lhs;
        // L_j y_j; the K row of L vanishes (pi_K A = 0)
        lhs.K.assign(y[j + 1].K.size(), 0.0);
        lhs.V.g = blocks.a_gg[j] * y[j].V.g;
        lhs.V.z = blocks.b_zg[j] * y[j].V.g + blocks.c_zz[j] * y[j].V.z;
        lhs.V.mu = blocks.b_mug[j] * y[j].V.g + blocks.c_muz[j] * y[j].V.z +
                   blocks.c_mumu[j] * y[j].V.mu;
        FlowSequence::Entry wy = W.apply_at(j, y[j]);
        double worst = 0.0;
        for (std::size_t i = 0; i < y[j + 1].K.size(); ++i) {
            double res = y[j + 1].K[i] - (lhs.K[i] + wy.K[i] + r[j].K[i]);
            worst = std::max(worst, std::abs(res) / residual_weight(scheme, Coord::K, j));
        }
        double res_g = y[j + 1].V.g - (lhs.V.g + wy.V.g + r[j].V.g);
        double res_z = y[j + 1].V.z - (lhs.V.z + wy.V.z + r[j].V.z);
        double res_mu = y[j + 1].V.mu - (lhs.V.mu + wy.V.mu + r[j].V.mu);
        worst = std::max(worst, std::abs(res_g) / residual_weight(scheme, Coord::G, j));
        worst = std::max(worst, std::abs(res_z) / residual_weight(scheme, Coord::Z, j));
        worst = std::max(worst, std::abs(res_mu) / residual_weight(scheme, Coord::Mu, j));
        return worst;
    });

    local.iterations = it + 1;
    local.residual_v = resid;
    local.contraction = contraction;
    if (report) *report = local;
    return y;
}

double operator_norm_estimate(const std::function<FlowSequence(const FlowSequence&)>& op,
                              const FlowSequence& shape, const WeightScheme& scheme,
                              WhichNorm out_norm, std::size_t probes, std::uint64_t seed) {
    double best = 0.0;
    for (std::size_t pidx = 0; pidx < probes; ++pidx) {
        Rng rng = Rng::substream(seed, pidx);
        // Rademacher probes on the unit sphere of X^w: extremal coordinates
        // concentrate the max-ratio estimate far better than interior points
        FlowSequence probe = shape.zeros_like();
        for (std::size_t j = 0; j < probe.size(); ++j) {
            auto pm = [&] { return rng.uniform01() < 0.5 ? -1.0 : 1.0; };
            for (double& k : probe[j].K) k = scheme.w(Coord::K, j) * pm();
            probe[j].V.g = scheme.w(Coord::G, j) * pm();
            probe[j].V.z = scheme.w(Coord::Z, j) * pm();
            probe[j].V.mu = scheme.w(Coord::Mu, j) * pm();
        }
        double in_norm = weighted_norm(probe, scheme, WhichNorm::W);
        if (in_norm == 0.0) continue;
        FlowSequence out = op(probe);
        best = std::max(best, weighted_norm(out, scheme, out_norm) / in_norm);
    }
    return best;
}

} // namespace rgflow
