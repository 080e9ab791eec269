#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "rgflow/params.hpp"
#include "rgflow/perturbation.hpp"
#include "rgflow/weights.hpp"

namespace rgflow {

/// (A1): beta bounded; beta_j >= c for all but floor(1/c) values of j <= j_Omega.
struct A1Report {
    double beta_sup = 0.0;
    double c_best = 0.0;                      ///< largest feasible c (0 when none)
    std::vector<std::size_t> exceptional;     ///< indices with beta_j < c_best
    std::size_t scan_limit = 0;               ///< min(j_Omega, horizon)
    bool pass = false;
};

A1Report check_A1(const ParamSeq& params, std::size_t horizon);

/// (A2): lambda_j >= lambda > 1; zeta_j <= 0 for all but finitely many
/// j <= j_Omega; the other coefficients bounded by C_env * chi_j.
struct A2Report {
    double lambda_min = 0.0;          ///< inf over all j, tail resolved analytically
    std::size_t zeta_positive_count = 0;
    bool zeta_clause_pass = false;
    double c_env = 0.0;               ///< smallest envelope constant; inf when open
    bool lambda_pass = false;
    bool env_pass = false;
    bool pass = false;
    std::size_t offending_lambda_index = kInfiniteIndex;
};

A2Report check_A2(const ParamSeq& params, const CutoffData& cutoff, std::size_t horizon);

/// (A3): Monte-Carlo envelope estimates over sampled domain points, checked
/// against the model's declared (kappa, R, M) and the constraint
/// R < a (1 - kappa Omega).
struct A3Report {
    double kappa_hat = 0.0;
    double R_hat = 0.0;
    double M_hat = 0.0;
    double M_value = 0.0;       ///< rho-value contribution to M_hat
    double M_first = 0.0;       ///< first-derivative contributions
    double M_higher = 0.0;      ///< second/third-derivative contributions
    std::size_t samples_used = 0;
    std::size_t samples_skipped = 0;
    bool kappa_pass = false, R_pass = false, M_pass = false, constraint_pass = false;
    bool pass = false;
};

A3Report check_A3(const PerturbationModel& model, const DomainSpec& dom,
                  const WeightScheme& scheme, std::size_t sample_count,
                  std::uint64_t rng_seed);

} // namespace rgflow
