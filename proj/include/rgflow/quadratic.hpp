#pragma once

#include <cstddef>
#include <limits>
#include <vector>

#include "rgflow/params.hpp"
#include "rgflow/sequence.hpp"

namespace rgflow {

/// One step of the triangular quadratic flow:
///   g' = g - beta_j g^2
///   z' = z - theta_j g^2 - zeta_j g z
///   mu' = eta_j g + gamma_j z + lambda_j mu
///         - (ugg g^2 + ugz g z + ugmu g mu + uzz z^2 + uzmu z mu)
VTriple quadratic_step(const VTriple& v, const ParamSeq& params, std::size_t j);

/// Forward iteration of gbar_{j+1} = gbar_j - beta_j gbar_j^2; all entries
/// positive or a GZeroTooLarge error carrying the offending index.
std::vector<double> iterate_gbar(double g0, const ParamSeq& params, std::size_t J);

/// Certificate attached to a truncated backward sum: the boundary was imposed
/// at trunc_index, and |value_exact_j - value_j| <= bound for all j in range.
struct TailCertificate {
    double bound = std::numeric_limits<double>::infinity();
    std::size_t trunc_index = 0;
    bool certified = false;
};

struct BackwardSolve {
    std::vector<double> values; ///< j = 0..J (requested horizon)
    TailCertificate tail;
};

/// zbar_j = sum_{l>=j} prod_{k=j}^{l} (1-zeta_k gbar_k)^{-1} theta_l gbar_l^2,
/// realized as the backward recursion from a truncation index at which the
/// certified tail bound drops below tol (extending gbar internally). When the
/// tail cannot be certified (positive zeta persisting, say) the boundary sits
/// at the provided horizon and the certificate reports infinity; a provably
/// divergent sum raises DivergentTail instead.
BackwardSolve solve_zbar(const std::vector<double>& gbar, const ParamSeq& params, double tol);

/// mubar_j = -sum_{l>=j} (prod_{k=j}^{l} (lambda_k - tau_k)^{-1}) sigma_l with
/// sigma, tau from the etatau combinations; geometric tail at rate
/// alpha = sup (lambda_j - tau_j)^{-1} < 1, else ExpansivityViolated.
BackwardSolve solve_mubar(const std::vector<double>& gbar, const std::vector<double>& zbar,
                          const ParamSeq& params, double tol);

/// sigma_j = eta_j g + gamma_j z - ugg g^2 - ugz g z - uzz z^2,
/// tau_j = ugmu g + uzmu z  (the mu recursion reads mu_{j+1} = (lambda_j - tau_j) mu_j + sigma_j).
double sigma_at(const ParamSeq& params, std::size_t j, double g, double z);
double tau_at(const ParamSeq& params, std::size_t j, double g, double z);

/// The solved quadratic boundary-value flow with certificates.
struct QuadraticSolution {
    std::size_t horizon = 0;
    double g0 = 0.0;
    std::vector<VTriple> vbar;    ///< j = 0..J
    TailCertificate z_tail, mu_tail;
    double alpha = 0.0;           ///< measured sup over known range of (lambda_j - tau_j)^{-1}
    double env_z = 0.0;           ///< fitted sup_j |zbar_j| / (chi_j gbar_j)
    double env_mu = 0.0;
    CutoffData cutoff;

    // extended arrays kept for derivative solves and tail-aware consumers
    std::vector<double> gbar_ext; ///< j = 0..max(z_trunc, mu_trunc)
    std::vector<double> zbar_ext;
    std::vector<double> mubar_ext;
    std::size_t z_trunc = 0;
    std::size_t mu_trunc = 0;

    double gbar(std::size_t j) const { return gbar_ext[j]; }
    double chi(std::size_t j) const { return cutoff.chi(j); }
};

struct QuadraticOptions {
    double tol = 1e-12;
    double g0_gate = 0.1;    ///< refuse g0 * ||beta||_inf above this
    double alpha_gate = 0.75;///< refuse (lambda - tau)^{-1} above this
    bool enforce_gates = true;
};

/// Composes iterate_gbar, solve_zbar, solve_mubar; certifies the envelopes
/// |zbar_j| <= C chi_j gbar_j and |mubar_j| <= C chi_j gbar_j with fitted C.
QuadraticSolution solve_quadratic_bvp(double g0, const ParamSeq& params, std::size_t J,
                                      const QuadraticOptions& opts = {});

/// First and second derivatives of (gbar, zbar, mubar) in the initial
/// condition g0, by exact differentiation of the truncated recursions.
struct DerivativeBundle {
    std::vector<double> dg, dz, dmu;    ///< j = 0..J
    std::vector<double> d2g, d2z, d2mu;
};

DerivativeBundle gbar_derivatives(const QuadraticSolution& sol, const ParamSeq& params);

/// c_j = exp sum_{k>=j} log(1+r_k) for the product identity
///   prod_{k=j}^{l} (1 - gamma beta_k gbar_k)^{-1} = (gbar_j / gbar_{l+1})^gamma (c_j + O(chi_l gbar_l)).
struct ProductAsymptotic {
    double c_j = 1.0;
    double residual_bound = 0.0; ///< certified bound on the dropped tail of the log-sum
};

ProductAsymptotic product_asymptotic(double gamma, std::size_t j, const QuadraticSolution& sol,
                                     const ParamSeq& params);

/// Observed ratio of sum_{l=j}^{k} chi_l gbar_l^n |log gbar_l|^m to the
/// envelope |log gbar_k|^{m+1} (n = 1) or chi_j gbar_j^{n-1} |log gbar_j|^m
/// (n > 1), plus the same ratio at doubled k for a stability certificate.
struct SumCertificate {
    double ratio = 0.0;
    double ratio_doubled = 0.0;
    bool stable = false; ///< within 10% across the two k values
};

SumCertificate sum_certificate(double n, double m, std::size_t j, std::size_t k,
                               const QuadraticSolution& sol, const CutoffData& cutoff);

// --- certified tail machinery (shared with the linear solver) -------------

/// Decay class of sums sum_l chi_l gbar_l^n beyond an index: geometric via the
/// chi envelope (finite j_Omega), harmonic via a positive beta floor
/// (j_Omega infinite, constant positive tail), or uncertifiable.
struct TailEnv {
    enum class Kind { GeometricChi, HarmonicBeta, None } kind = Kind::None;
    double beta_floor = 0.0;   ///< HarmonicBeta: beta_l >= floor for all tail l
    double g_hi = 0.0;         ///< upper bound on gbar_l beyond the index
    double g_lo = 0.0;         ///< positive lower bound (GeometricChi only)
};

TailEnv classify_tail(const ParamSeq& params, const CutoffData& cutoff,
                      const std::vector<double>& gbar, std::size_t from);

/// Certified upper bound on sum_{l > from} chi_l gbar_l^n |log gbar_l|^m
/// (m in {0, 1}); +infinity when the class is None.
double tail_sum_bound(const TailEnv& env, const CutoffData& cutoff,
                      const std::vector<double>& gbar, std::size_t from,
                      double n, double m);

/// Continue the gbar recursion from the back of the given array to length J+1.
void extend_gbar(std::vector<double>& gbar, const ParamSeq& params, std::size_t J);

} // namespace rgflow
