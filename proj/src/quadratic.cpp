#include "rgflow/quadratic.hpp"

#include <algorithm>
#include <cmath>

namespace rgflow {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
}

VTriple quadratic_step(const VTriple& v, const ParamSeq& p, std::size_t j) {
    const double g = v.g, z = v.z, mu = v.mu;
    VTriple out;
    out.g = g - p.beta.at(j) * g * g;
    out.z = z - p.theta.at(j) * g * g - p.zeta.at(j) * g * z;
    out.mu = p.eta.at(j) * g + p.gamma.at(j) * z + p.lambda.at(j) * mu -
             (p.ups_gg.at(j) * g * g + p.ups_gz.at(j) * g * z + p.ups_gmu.at(j) * g * mu +
              p.ups_zz.at(j) * z * z + p.ups_zmu.at(j) * z * mu);
    return out;
}

std::vector<double> iterate_gbar(double g0, const ParamSeq& p, std::size_t J) {
    if (!(g0 > 0.0))
        fail(ErrorCode::InvalidParameters, "g0 must be positive");
    std::vector<double> g(J + 1);
    g[0] = g0;
    for (std::size_t j = 0; j < J; ++j) {
        g[j + 1] = g[j] - p.beta.at(j) * g[j] * g[j];
        if (!(g[j + 1] > 0.0))
            fail(ErrorCode::GZeroTooLarge,
                 "gbar positivity lost at j=" + std::to_string(j + 1) +
                     "; reduce g0", j + 1);
    }
    return g;
}

void extend_gbar(std::vector<double>& g, const ParamSeq& p, std::size_t J) {
    if (g.empty()) fail(ErrorCode::InvalidParameters, "cannot extend empty gbar");
    std::size_t j = g.size() - 1;
    if (J + 1 <= g.size()) return;
    g.resize(J + 1);
    for (; j < J; ++j) {
        g[j + 1] = g[j] - p.beta.at(j) * g[j] * g[j];
        if (!(g[j + 1] > 0.0))
            fail(ErrorCode::GZeroTooLarge,
                 "gbar positivity lost at j=" + std::to_string(j + 1), j + 1);
    }
}

double sigma_at(const ParamSeq& p, std::size_t j, double g, double z) {
    return p.eta.at(j) * g + p.gamma.at(j) * z - p.ups_gg.at(j) * g * g -
           p.ups_gz.at(j) * g * z - p.ups_zz.at(j) * z * z;
}

double tau_at(const ParamSeq& p, std::size_t j, double g, double z) {
    return p.ups_gmu.at(j) * g + p.ups_zmu.at(j) * z;
}

// --- certified tails -------------------------------------------------------

TailEnv classify_tail(const ParamSeq& params, const CutoffData& cutoff,
                      const std::vector<double>& gbar, std::size_t from) {
    TailEnv env;
    if (from >= gbar.size()) return env;
    const double g_from = gbar[from];
    const double beta_sup = params.beta.sup_abs();

    if (!cutoff.infinite()) {
        // sum_{l>from} |beta_l| <= beta_sup * sum chi_l, closed form
        double ones = 0.0;
        if (from < cutoff.j_omega) ones = static_cast<double>(cutoff.j_omega - from);
        std::size_t geo_start = std::max(from + 1, cutoff.j_omega + 1);
        double geo = cutoff.chi(geo_start) * cutoff.omega / (cutoff.omega - 1.0);
        double sum_absbeta = beta_sup * (ones + geo);
        double q0 = 2.0 * g_from * sum_absbeta;
        if (q0 > 0.3) return env; // uncertifiable this far out; move 'from' later
        double factor = std::exp(2.0 * q0);
        env.g_hi = g_from * factor;
        env.g_lo = g_from / factor;
        if (env.g_hi * beta_sup > 0.5 || env.g_hi >= 1.0) return env;
        env.kind = TailEnv::Kind::GeometricChi;
        return env;
    }

    // j_Omega infinite: need a positive beta floor on the whole tail
    const TailRule& bt = params.beta.tail();
    if (bt.kind != TailRule::Kind::Constant || !(bt.value > 0.0)) return env;
    double floor = bt.value;
    for (std::size_t l = from + 1; l < params.beta.prefix_size(); ++l)
        floor = std::min(floor, params.beta.at(l));
    if (!(floor > 0.0)) return env;
    if (g_from * beta_sup > 0.5 || g_from >= 1.0) return env;
    env.kind = TailEnv::Kind::HarmonicBeta;
    env.beta_floor = floor;
    env.g_hi = g_from;
    env.g_lo = 0.0;
    return env;
}

double tail_sum_bound(const TailEnv& env, const CutoffData& cutoff,
                      const std::vector<double>& gbar, std::size_t from,
                      double n, double m) {
    if (env.kind == TailEnv::Kind::None) return kInf;
    if (env.kind == TailEnv::Kind::GeometricChi) {
        if (env.g_hi >= 1.0 || env.g_lo <= 0.0) return kInf;
        double L = std::max(std::abs(std::log(env.g_lo)), std::abs(std::log(env.g_hi)));
        double ones = 0.0;
        if (from < cutoff.j_omega) ones = static_cast<double>(cutoff.j_omega - from);
        std::size_t geo_start = std::max(from + 1, cutoff.j_omega + 1);
        double sum_chi = ones + cutoff.chi(geo_start) * cutoff.omega / (cutoff.omega - 1.0);
        return sum_chi * std::pow(env.g_hi, n) * std::pow(L, m);
    }
    // HarmonicBeta: gbar_l <= 1/(A + c(l-from)); integral comparison needs n > 1
    if (!(n > 1.0)) return kInf;
    const double A = 1.0 / gbar[from];
    const double c = env.beta_floor;
    if (A < 3.0) return kInf; // log envelope needs 1/gbar comfortably above e
    double integral;
    if (m == 0.0) {
        integral = std::pow(A, 1.0 - n) / (n - 1.0);
    } else if (m == 1.0) {
        integral = std::pow(A, 1.0 - n) * (std::log(A) / (n - 1.0) + 1.0 / ((n - 1.0) * (n - 1.0)));
    } else {
        return kInf;
    }
    return integral / c;
}

namespace {

// sup over 0 <= j <= l <= последний of prod_{k=j}^{l} (1-zeta_k g_k)^{-1},
// via running log partial sums.
double measure_zeta_product_sup(const ParamSeq& p, const std::vector<double>& g) {
    double run = 0.0, run_min = 0.0, best = 0.0;
    for (std::size_t k = 0; k < g.size(); ++k) {
        double f = 1.0 - p.zeta.at(k) * g[k];
        if (!(f > 0.0))
            fail(ErrorCode::DivergentTail,
                 "1 - zeta_j gbar_j vanished at j=" + std::to_string(k), k);
        run -= std::log(f);
        best = std::max(best, run - run_min);
        run_min = std::min(run_min, run);
    }
    return std::exp(best);
}

struct ZbarExt {
    std::vector<double> values; // 0..trunc
    TailCertificate tail;
};

ZbarExt solve_zbar_ext(std::vector<double>& gbar, const ParamSeq& p,
                       const CutoffData& cutoff, double tol, std::size_t J) {
    // divergence of the infinite sum: theta does not vanish while gbar has a
    // positive limit
    const TailRule& tt = p.theta.tail();
    const TailRule& bt = p.beta.tail();
    const bool theta_const_tail = (tt.kind == TailRule::Kind::Constant && tt.value != 0.0);
    const bool beta_positive_tail = (bt.kind == TailRule::Kind::Constant && bt.value > 0.0);
    if (theta_const_tail && !beta_positive_tail)
        fail(ErrorCode::DivergentTail,
             "zbar sum diverges: theta has a non-vanishing tail while gbar does not decay");

    const std::size_t l_zeta = p.zeta.eventually_nonpositive_from();
    const double c_theta = sup_over_chi(p.theta, cutoff);
    const std::size_t max_extra = std::max<std::size_t>(4 * (J + 1), 200000);

    std::size_t trunc = J;
    TailCertificate cert;
    if (l_zeta != kInfiniteIndex && std::isfinite(c_theta)) {
        std::size_t jt = std::max(J, std::max(l_zeta, p.beta.prefix_size()));
        double p_hat = 0.0;
        for (;;) {
            extend_gbar(gbar, p, jt);
            if (p_hat == 0.0) p_hat = measure_zeta_product_sup(p, gbar);
            TailEnv env = classify_tail(p, cutoff, gbar, jt);
            double s2 = tail_sum_bound(env, cutoff, gbar, jt, 2.0, 0.0) +
                        cutoff.chi(jt) * gbar[jt] * gbar[jt];
            double bound = p_hat * c_theta * s2;
            if (bound <= tol) {
                cert.bound = bound;
                cert.certified = true;
                trunc = jt;
                break;
            }
            if (jt >= J + max_extra) {
                cert.bound = bound;
                cert.certified = false;
                trunc = jt;
                break;
            }
            jt = std::min(J + max_extra, 2 * jt + 100);
        }
    } else {
        // uncertifiable (e.g. persistently positive zeta): impose the zero
        // boundary at the requested horizon and say so
        cert.bound = kInf;
        cert.certified = false;
        trunc = J;
    }
    cert.trunc_index = trunc;

    ZbarExt out;
    out.tail = cert;
    out.values.assign(trunc + 1, 0.0);
    for (std::size_t j = trunc; j-- > 0;) {
        double f = 1.0 - p.zeta.at(j) * gbar[j];
        if (!(f > 0.0))
            fail(ErrorCode::DivergentTail,
                 "1 - zeta_j gbar_j vanished at j=" + std::to_string(j), j);
        out.values[j] = (out.values[j + 1] + p.theta.at(j) * gbar[j] * gbar[j]) / f;
    }
    return out;
}

struct MubarExt {
    std::vector<double> values; // 0..trunc
    TailCertificate tail;
    double alpha_measured = 0.0;
};

// Extends gbar and zbar forward as needed; zbar continues by the forward flow
// recursion, which the truncated solution satisfies exactly.
MubarExt solve_mubar_ext(std::vector<double>& gbar, std::vector<double>& zbar,
                         const ParamSeq& p, const CutoffData& cutoff, double tol,
                         std::size_t J) {
    auto lam_minus_tau = [&](std::size_t j) {
        return p.lambda.at(j) - tau_at(p, j, gbar[j], zbar[j]);
    };
    auto extend_to = [&](std::size_t jt) {
        std::size_t old = gbar.size() - 1;
        extend_gbar(gbar, p, jt);
        if (zbar.size() < jt + 1) {
            std::size_t zold = zbar.size() - 1;
            zbar.resize(jt + 1);
            for (std::size_t j = zold; j < jt; ++j)
                zbar[j + 1] = zbar[j] - p.zeta.at(j) * gbar[j] * zbar[j] -
                              p.theta.at(j) * gbar[j] * gbar[j];
        }
        (void)old;
    };

    // measured expansion over the known range
    double alpha = 0.0;
    for (std::size_t j = 0; j <= J; ++j) {
        double lt = lam_minus_tau(j);
        if (!(lt > 1.0))
            fail(ErrorCode::ExpansivityViolated,
                 "(lambda_j - tau_j) <= 1 at j=" + std::to_string(j), j);
        alpha = std::max(alpha, 1.0 / lt);
    }

    // analytic tail rate: lambda floor minus a crude tau envelope
    TailEnv env = classify_tail(p, cutoff, gbar, J);
    double g_hi = env.kind != TailEnv::Kind::None ? env.g_hi : 1.5 * gbar[J];
    double z_hi = 0.0;
    for (std::size_t j = 0; j <= J; ++j) z_hi = std::max(z_hi, std::abs(zbar[j]));
    z_hi = 1.5 * z_hi + g_hi;
    double tau_hat = p.ups_gmu.sup_abs() * g_hi + p.ups_zmu.sup_abs() * z_hi;
    double lam_floor = p.lambda.inf_with_limit();
    double alpha_tail = (lam_floor - tau_hat > 1.0) ? 1.0 / (lam_floor - tau_hat) : kInf;
    double sigma_hat = p.eta.sup_abs() * g_hi + p.gamma.sup_abs() * z_hi +
                       p.ups_gg.sup_abs() * g_hi * g_hi +
                       p.ups_gz.sup_abs() * g_hi * z_hi + p.ups_zz.sup_abs() * z_hi * z_hi;

    MubarExt out;
    std::size_t trunc = J;
    if (std::isfinite(alpha_tail) && alpha_tail < 1.0) {
        double rate = std::max(alpha, alpha_tail);
        // pad so that rate^pad * sigma_hat * rate/(1-rate) <= tol
        double target = tol * (1.0 - rate) / std::max(sigma_hat, 1e-300);
        double pad = target >= 1.0 ? 0.0 : std::ceil(std::log(target) / std::log(rate));
        pad = std::min(pad, 20000.0);
        trunc = J + static_cast<std::size_t>(std::max(0.0, pad));
        out.tail.bound = std::pow(rate, static_cast<double>(trunc - J)) * sigma_hat * rate /
                         (1.0 - rate);
        out.tail.certified = out.tail.bound <= tol;
    } else {
        out.tail.bound = kInf;
        out.tail.certified = false;
    }
    out.tail.trunc_index = trunc;

    extend_to(trunc);
    out.values.assign(trunc + 1, 0.0);
    for (std::size_t j = trunc; j-- > 0;) {
        double lt = lam_minus_tau(j);
        if (!(lt > 1.0))
            fail(ErrorCode::ExpansivityViolated,
                 "(lambda_j - tau_j) <= 1 at j=" + std::to_string(j), j);
        out.values[j] = (out.values[j + 1] - sigma_at(p, j, gbar[j], zbar[j])) / lt;
    }
    out.alpha_measured = alpha;
    return out;
}

} // namespace

BackwardSolve solve_zbar(const std::vector<double>& gbar, const ParamSeq& p, double tol) {
    if (gbar.empty()) fail(ErrorCode::InvalidParameters, "empty gbar");
    CutoffData cutoff = cutoff_time(p);
    std::vector<double> g = gbar;
    std::size_t J = gbar.size() - 1;
    ZbarExt ext = solve_zbar_ext(g, p, cutoff, tol, J);
    BackwardSolve out;
    out.values.assign(ext.values.begin(), ext.values.begin() + static_cast<long>(J + 1));
    out.tail = ext.tail;
    return out;
}

BackwardSolve solve_mubar(const std::vector<double>& gbar, const std::vector<double>& zbar,
                          const ParamSeq& p, double tol) {
    if (gbar.empty() || zbar.size() < gbar.size())
        fail(ErrorCode::InvalidParameters, "gbar/zbar length mismatch");
    CutoffData cutoff = cutoff_time(p);
    std::vector<double> g = gbar, z = zbar;
    std::size_t J = gbar.size() - 1;
    MubarExt ext = solve_mubar_ext(g, z, p, cutoff, tol, J);
    BackwardSolve out;
    out.values.assign(ext.values.begin(), ext.values.begin() + static_cast<long>(J + 1));
    out.tail = ext.tail;
    return out;
}

QuadraticSolution solve_quadratic_bvp(double g0, const ParamSeq& p, std::size_t J,
                                      const QuadraticOptions& opts) {
    p.validate();
    const double beta_sup = p.beta.sup_abs();
    if (opts.enforce_gates && g0 * beta_sup > opts.g0_gate)
        fail(ErrorCode::GZeroTooLarge,
             "g0 * ||beta||_inf = " + std::to_string(g0 * beta_sup) +
                 " exceeds the gate " + std::to_string(opts.g0_gate));

    QuadraticSolution sol;
    sol.horizon = J;
    sol.g0 = g0;
    sol.cutoff = cutoff_time(p);
    sol.gbar_ext = iterate_gbar(g0, p, J);

    ZbarExt zext = solve_zbar_ext(sol.gbar_ext, p, sol.cutoff, opts.tol, J);
    sol.z_tail = zext.tail;
    sol.z_trunc = zext.tail.trunc_index;
    sol.zbar_ext = std::move(zext.values);

    MubarExt mext = solve_mubar_ext(sol.gbar_ext, sol.zbar_ext, p, sol.cutoff, opts.tol, J);
    sol.mu_tail = mext.tail;
    sol.mu_trunc = mext.tail.trunc_index;
    sol.mubar_ext = std::move(mext.values);
    sol.alpha = mext.alpha_measured;
    if (opts.enforce_gates && sol.alpha > opts.alpha_gate)
        fail(ErrorCode::ExpansivityViolated,
             "measured alpha = " + std::to_string(sol.alpha) + " exceeds the gate " +
                 std::to_string(opts.alpha_gate));

    sol.vbar.resize(J + 1);
    for (std::size_t j = 0; j <= J; ++j) {
        sol.vbar[j] = VTriple(sol.gbar_ext[j], sol.zbar_ext[j], sol.mubar_ext[j]);
        double cg = sol.cutoff.chi(j) * sol.gbar_ext[j];
        sol.env_z = std::max(sol.env_z, std::abs(sol.zbar_ext[j]) / cg);
        sol.env_mu = std::max(sol.env_mu, std::abs(sol.mubar_ext[j]) / cg);
    }
    return sol;
}

DerivativeBundle gbar_derivatives(const QuadraticSolution& sol, const ParamSeq& p) {
    const std::size_t J = sol.horizon;
    const std::size_t zt = sol.z_trunc;
    const std::size_t mt = sol.mu_trunc;
    const std::size_t top = std::max(zt, mt);
    const std::vector<double>& g = sol.gbar_ext;
    const std::vector<double>& z = sol.zbar_ext;
    if (g.size() < top + 1 || z.size() < std::max(zt, mt) + 1)
        fail(ErrorCode::InvalidParameters, "solution lacks the extended arrays");

    std::vector<double> dg(top + 1), d2g(top + 1);
    dg[0] = 1.0;
    d2g[0] = 0.0;
    for (std::size_t j = 0; j < top; ++j) {
        double b = p.beta.at(j);
        double f = 1.0 - 2.0 * b * g[j];
        dg[j + 1] = dg[j] * f;
        d2g[j + 1] = d2g[j] * f - 2.0 * b * dg[j] * dg[j];
    }

    std::vector<double> dz(top + 1, 0.0), d2z(top + 1, 0.0);
    for (std::size_t j = zt; j-- > 0;) {
        double th = p.theta.at(j), ze = p.zeta.at(j);
        double D = 1.0 - ze * g[j];
        dz[j] = (dz[j + 1] + 2.0 * th * g[j] * dg[j] + z[j] * ze * dg[j]) / D;
        d2z[j] = (d2z[j + 1] + 2.0 * th * (dg[j] * dg[j] + g[j] * d2g[j]) +
                  2.0 * dz[j] * ze * dg[j] + z[j] * ze * d2g[j]) / D;
    }
    // beyond the z truncation the solution continues by the forward flow
    // recursion, so its derivatives do too (needed when mt > zt)
    for (std::size_t l = zt; l < top; ++l) {
        double th = p.theta.at(l), ze = p.zeta.at(l);
        dz[l + 1] = dz[l] * (1.0 - ze * g[l]) - ze * dg[l] * z[l] - 2.0 * th * g[l] * dg[l];
        d2z[l + 1] = d2z[l] * (1.0 - ze * g[l]) - 2.0 * ze * dg[l] * dz[l] -
                     ze * d2g[l] * z[l] - 2.0 * th * (dg[l] * dg[l] + g[l] * d2g[l]);
    }

    std::vector<double> dmu(mt + 1, 0.0), d2mu(mt + 1, 0.0);
    const std::vector<double>& mu = sol.mubar_ext;
    for (std::size_t j = mt; j-- > 0;) {
        double dsig = p.eta.at(j) * dg[j] + p.gamma.at(j) * dz[j] -
                      2.0 * p.ups_gg.at(j) * g[j] * dg[j] -
                      p.ups_gz.at(j) * (dg[j] * z[j] + g[j] * dz[j]) -
                      2.0 * p.ups_zz.at(j) * z[j] * dz[j];
        double d2sig = p.eta.at(j) * d2g[j] + p.gamma.at(j) * d2z[j] -
                       2.0 * p.ups_gg.at(j) * (dg[j] * dg[j] + g[j] * d2g[j]) -
                       p.ups_gz.at(j) * (d2g[j] * z[j] + 2.0 * dg[j] * dz[j] + g[j] * d2z[j]) -
                       2.0 * p.ups_zz.at(j) * (dz[j] * dz[j] + z[j] * d2z[j]);
        double dtau = p.ups_gmu.at(j) * dg[j] + p.ups_zmu.at(j) * dz[j];
        double d2tau = p.ups_gmu.at(j) * d2g[j] + p.ups_zmu.at(j) * d2z[j];
        double lt = p.lambda.at(j) - tau_at(p, j, g[j], z[j]);
        dmu[j] = (dmu[j + 1] - dsig + mu[j] * dtau) / lt;
        d2mu[j] = (d2mu[j + 1] - d2sig + 2.0 * dmu[j] * dtau + mu[j] * d2tau) / lt;
    }

    DerivativeBundle out;
    auto slice = [J](const std::vector<double>& v) {
        return std::vector<double>(v.begin(), v.begin() + static_cast<long>(J + 1));
    };
    out.dg = slice(dg);
    out.d2g = slice(d2g);
    out.dz = slice(dz);
    out.d2z = slice(d2z);
    out.dmu = slice(dmu);
    out.d2mu = slice(d2mu);
    return out;
}

ProductAsymptotic product_asymptotic(double gamma, std::size_t j, const QuadraticSolution& sol,
                                     const ParamSeq& p) {
    ProductAsymptotic out;
    if (gamma == 0.0) return out;
    const std::vector<double>& g = sol.gbar_ext;
    const std::size_t end = g.size() - 1;
    if (j > end) fail(ErrorCode::InvalidParameters, "index beyond solved range");

    double logsum = 0.0;
    for (std::size_t k = j; k < end; ++k) {
        double bg = p.beta.at(k) * g[k];
        double f = 1.0 - gamma * bg;
        if (!(f > 0.0))
            fail(ErrorCode::InvalidParameters,
                 "1 - gamma beta_k gbar_k <= 0 at k=" + std::to_string(k), k);
        double r = std::pow(1.0 - bg, gamma) / f - 1.0;
        logsum += std::log1p(r);
    }

    // remainder beyond the computed range:
    // |log(1+r_k)| <= 2 gamma(gamma+1) (beta_k gbar_k)^2 <= 2 gamma(gamma+1) B^2 chi_k gbar_k^2
    const double B = p.beta.sup_abs();
    double rem = 0.0;
    if (B > 0.0) {
        TailEnv env = classify_tail(p, sol.cutoff, g, end);
        double s2 = tail_sum_bound(env, sol.cutoff, g, end, 2.0, 0.0);
        rem = 2.0 * gamma * (gamma + 1.0) * B * B * s2;
    }

    out.c_j = std::exp(logsum);
    out.residual_bound = std::isfinite(rem) ? out.c_j * (std::exp(rem) - 1.0) : kInf;
    return out;
}

SumCertificate sum_certificate(double n, double m, std::size_t j, std::size_t k,
                               const QuadraticSolution& sol, const CutoffData& cutoff) {
    if (k < j) fail(ErrorCode::InvalidParameters, "sum_certificate requires k >= j");
    const std::vector<double>& g = sol.gbar_ext;
    SumCertificate out;
    auto ratio_at = [&](std::size_t kk) {
        double lhs = 0.0;
        for (std::size_t l = j; l <= kk; ++l) {
            double gl = g[l];
            lhs += cutoff.chi(l) * std::pow(gl, n) * std::pow(std::abs(std::log(gl)), m);
        }
        double rhs;
        if (n == 1.0)
            rhs = std::pow(std::abs(std::log(g[kk])), m + 1.0);
        else
            rhs = cutoff.chi(j) * std::pow(g[j], n - 1.0) *
                  std::pow(std::abs(std::log(g[j])), m);
        return lhs / rhs;
    };
    if (2 * k >= g.size())
        fail(ErrorCode::ExtendHorizon,
             "sum_certificate needs gbar out to 2k; solve with a larger horizon");
    out.ratio = ratio_at(k);
    out.ratio_doubled = ratio_at(2 * k);
    double lo = std::min(out.ratio, out.ratio_doubled);
    double hi = std::max(out.ratio, out.ratio_doubled);
    out.stable = hi <= 1.1 * lo;
    return out;
}

} // namespace rgflow
