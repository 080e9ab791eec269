#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "rgflow/params.hpp"
#include "rgflow/quadratic.hpp"
#include "rgflow/sequence.hpp"

namespace rgflow {

/// Contract for the perturbation maps (psi_j, rho_j). Implementations must be
/// pure and reentrant; the library evaluates them concurrently across j.
/// Directional derivatives are optional; absent ones fall back to central
/// finite differences scaled by the domain radii.
class PerturbationModel {
public:
    virtual ~PerturbationModel() = default;

    virtual std::string name() const = 0;
    virtual std::size_t d_K(std::size_t j) const = 0;

    virtual std::vector<double> psi(std::size_t j, std::span<const double> K,
                                    const VTriple& V) const = 0;
    virtual VTriple rho(std::size_t j, std::span<const double> K, const VTriple& V) const = 0;

    virtual bool has_analytic_derivatives() const { return false; }

    /// [D psi_j(x)](dK, dV), directional.
    virtual std::vector<double> dpsi(std::size_t j, std::span<const double> K, const VTriple& V,
                                     std::span<const double> dK, const VTriple& dV) const;
    /// [D rho_j(x)](dK, dV), directional.
    virtual VTriple drho(std::size_t j, std::span<const double> K, const VTriple& V,
                         std::span<const double> dK, const VTriple& dV) const;

    /// Declared envelope constants of the third-order bounds.
    double declared_kappa = 0.1;
    double declared_R = 0.1;
    double declared_M = 1.0;
};

/// Per-scale trust region around the quadratic solution:
///   ||K_j|| <= a chi_j gbar_j^3,        |g_j - gbar_j| <= h gbar_j^2 |log gbar_j|,
///   |z_j - zbar_j| <= h chi_j gbar_j^2 |log gbar_j|,  same for mu.
class DomainSpec {
public:
    DomainSpec(const QuadraticSolution& sol, double a, double h);

    double radius(Coord c, std::size_t j) const;

    double a() const { return a_; }
    double h() const { return h_; }
    const QuadraticSolution& solution() const { return *sol_; }

    double gbar(std::size_t j) const;
    double zbar(std::size_t j) const;
    double mubar(std::size_t j) const;
    double chi(std::size_t j) const { return sol_->cutoff.chi(j); }
    std::size_t known_horizon() const;

private:
    const QuadraticSolution* sol_;
    double a_, h_;
};

/// Membership in D_j (closed: boundary cases count as inside).
bool in_domain(const FlowSequence::Entry& x_j, std::size_t j, const DomainSpec& dom);

/// Kbar_{j+1} = psi_j(Kbar_j, Vbar_j) with the small-ball containment
/// certificate ||Kbar_j|| <= a* chi_j gbar_j^3; violation raises
/// ModelViolatesA3 carrying the offending index.
std::vector<std::vector<double>> kbar_iterate(const std::vector<double>& K0,
                                              const QuadraticSolution& sol,
                                              const PerturbationModel& model,
                                              double a_star);

/// The approximate flow xbar = (Kbar, Vbar); the t = 0 initial condition of
/// the homotopy.
FlowSequence xbar_assemble(const std::vector<double>& K0, const QuadraticSolution& sol,
                           const PerturbationModel& model, double a_star);

/// One step of Phi^t: (psi_j(x_j), quadratic_step(V_j) + t rho_j(x_j)).
FlowSequence::Entry phi_step(double t, const FlowSequence::Entry& x_j, std::size_t j,
                             const ParamSeq& params, const PerturbationModel& model);

/// Tangent action D Phi^t_j(x_j)[dir]: the variational step used for exact
/// shooting Jacobians (forward finite differences of the whole map are
/// useless at deep horizons, where the mu channel amplifies by lambda^J).
FlowSequence::Entry phi_tangent(double t, const FlowSequence::Entry& x_j,
                                const FlowSequence::Entry& dir, std::size_t j,
                                const ParamSeq& params, const PerturbationModel& model,
                                const DomainSpec& dom);

/// Directional derivative of (psi_j, rho_j) with the finite-difference
/// fallback: central differences with step 1e-6 in domain-radius units.
struct PhiDerivative {
    std::vector<double> dpsi;
    VTriple drho;
};
PhiDerivative model_directional_derivative(const PerturbationModel& model, const DomainSpec& dom,
                                           std::size_t j, const FlowSequence::Entry& x,
                                           const FlowSequence::Entry& dir);

// --- built-in models -------------------------------------------------------

struct ModelConfig {
    std::string kind = "zero"; ///< zero | cubic | random-poly
    std::size_t d = 1;         ///< constant K-block dimension
    double kappa0 = 0.2;       ///< linear K contraction of psi
    double c_psi = 0.25;       ///< amplitude of the V-part of psi
    double c_rho = 0.25;       ///< amplitude of rho
    std::uint64_t seed = 1;    ///< random-poly coefficient seed
    // declared constants; <= 0 means derive defaults from the amplitudes
    double kappa = -1.0, R = -1.0, M = -1.0;
};

std::unique_ptr<PerturbationModel> make_model(const ModelConfig& cfg,
                                              const QuadraticSolution& sol);

} // namespace rgflow
