#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <vector>

#include "rgflow/params.hpp"
#include "rgflow/perturbation.hpp"
#include "rgflow/quadratic.hpp"
#include "rgflow/sequence.hpp"
#include "rgflow/weights.hpp"

namespace rgflow {

/// Frozen linearization L_j = D PhiBar0_j(xring_j) in the (u, v) split with
/// u = (K, g), v = (z, mu):
///   A_j = [[0, 0], [0, 1 - 2 beta_j gring_j]]           (K row/column zero)
///   B_j = [[0, -xiring_j], [0, etaring_j]]
///   C_j = [[1 - zeta_j gring_j, 0], [gammaring_j, lambdaring_j]]
struct BlockMatrices {
    std::vector<double> a_gg;    ///< 1 - 2 beta_j gring_j
    std::vector<double> b_zg;    ///< -(2 theta_j gring_j + zeta_j zring_j)
    std::vector<double> b_mug;   ///< eta_j - 2 ugg g - ugz z - ugmu mu at xring
    std::vector<double> c_zz;    ///< 1 - zeta_j gring_j
    std::vector<double> c_muz;   ///< gamma_j - ugz g - 2 uzz z - uzmu mu at xring
    std::vector<double> c_mumu;  ///< lambda_j - ugmu g - uzmu z at xring
    double alpha = 0.0;          ///< max_j 1 / c_mumu_j (must be < 1)
    std::size_t horizon = 0;

    // analytic data for the truncation-tail certificate
    double env_z_ring = 0.0;     ///< sup_j |zring_j| / (chi_j gring_j)
    std::size_t zeta_nonpos_from = 0;
    double zeta_prod_sup = 1.0;  ///< sup over ranges of prod (1 - zeta g)^{-1}
};

/// Blocks at the reference trajectory; spot-verifiable against a
/// finite-difference Jacobian of quadratic_step.
BlockMatrices build_L(const FlowSequence& xring, const ParamSeq& params);

struct SolveReport {
    std::size_t iterations = 0;
    double residual_v = 0.0;        ///< v-weighted equation residual
    double contraction = 0.0;       ///< measured fixed-point contraction factor
    double tail_bound_z = 0.0;      ///< absolute neglected-tail bounds of the
    double tail_bound_mu = 0.0;     ///< backward v-sums (infinity if open)
    bool tail_certified = false;
};

/// y = S0 r: u forward via running scalar products, v backward with the zero
/// boundary at the horizon; exact for the truncated system, with an analytic
/// bound on the dropped l > J contributions of the infinite-horizon sums.
/// certified_tail_tol, when finite, turns an unattained bound into an
/// ExtendHorizon error. The K block of entry j of the residual lives at scale
/// j+1, so y_0's K dimension is not derivable from r; pass k0_dim when the
/// model varies d_K across scales (0 infers it from r, correct for constant
/// dimensions).
FlowSequence apply_S0(const FlowSequence& r, const BlockMatrices& blocks,
                      const ParamSeq& params, const CutoffData& cutoff,
                      const std::vector<double>& gring, SolveReport* report = nullptr,
                      double certified_tail_tol = std::numeric_limits<double>::infinity(),
                      std::size_t k0_dim = 0);

/// W_j(t, x_j) = [D PhiBar0_j(x_j) - D PhiBar0_j(xring_j)] + D(psi_j, t rho_j)(x_j).
class WOperator {
public:
    WOperator(double t, const FlowSequence& x, const FlowSequence& xring,
              const ParamSeq& params, const PerturbationModel& model, const DomainSpec& dom);

    /// w_j = W_j(t, x_j) y_j; the result is FlowSequence-shaped with entry j
    /// feeding the step-j equation.
    FlowSequence apply(const FlowSequence& y) const;

    /// Per-entry action (pure; callable concurrently).
    FlowSequence::Entry apply_at(std::size_t j, const FlowSequence::Entry& y_j) const;

    double t() const { return t_; }
    const FlowSequence& x() const { return x_; }

private:
    double t_;
    FlowSequence x_;
    const FlowSequence* xring_;
    const ParamSeq* params_;
    const PerturbationModel* model_;
    const DomainSpec* dom_;
};

/// W at (t, x) with the ball precondition ||x - xring||_w <= 1/2 checked.
WOperator build_W(double t, const FlowSequence& x, const PerturbationModel& model,
                  const ParamSeq& params, const FlowSequence& xring, const DomainSpec& dom,
                  const WeightScheme& scheme, bool enforce_ball = true);

/// S(t, x) r by fixed-point iteration y <- S0 (W y) + S0 r, the Neumann form
/// of (1 - S0 W)^{-1} S0 r; non-contraction raises NonContraction.
FlowSequence apply_S(const WOperator& W, const FlowSequence& r, const BlockMatrices& blocks,
                     const ParamSeq& params, const CutoffData& cutoff,
                     const std::vector<double>& gring, const WeightScheme& scheme,
                     double tol, std::size_t max_iter, SolveReport* report = nullptr);

/// Randomized lower-bound estimate of an operator norm from X^w (probes on
/// the unit ball, coordinates weight-scaled) into X^w or X^v.
double operator_norm_estimate(const std::function<FlowSequence(const FlowSequence&)>& op,
                              const FlowSequence& shape, const WeightScheme& scheme,
                              WhichNorm out_norm, std::size_t probes, std::uint64_t seed);

} // namespace rgflow
