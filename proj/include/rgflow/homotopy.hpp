#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "rgflow/assumptions.hpp"
#include "rgflow/linear.hpp"
#include "rgflow/params.hpp"
#include "rgflow/perturbation.hpp"
#include "rgflow/quadratic.hpp"
#include "rgflow/weights.hpp"

namespace rgflow {

/// Everything needed to pose one boundary-value instance: coefficients,
/// model, domain/weights, the approximate flow and the frozen blocks.
struct InstanceConfig {
    ParamSeq params;
    ModelConfig model;
    double g0 = 0.02;
    std::vector<double> K0;      ///< empty = zeros of dimension model.d
    double a = 1.0, a_star = 0.6, h = 4.0, b = 0.9;
    double quad_tol = 1e-12;
    std::size_t horizon = 0;     ///< 0 = adaptive
    double tail_tol = 1e-10;     ///< adaptive-horizon target for chi_J gbar_J
    std::size_t horizon_cap = 400;
    std::size_t horizon_floor = 16;
    bool enforce_gates = true;   ///< quadratic-solver g0 and alpha gates
};

class Instance {
public:
    ParamSeq params;
    CutoffData cutoff;
    QuadraticSolution sol;
    std::unique_ptr<PerturbationModel> model;
    std::unique_ptr<DomainSpec> dom;
    std::unique_ptr<WeightScheme> scheme;
    FlowSequence xbar;
    BlockMatrices blocks;
    double b = 0.9;
    double a_star = 0.6;
    std::size_t horizon = 0;

    VTriple vbar_after() const; ///< quadratic values at index J+1 (the pinned boundary)

    Instance() = default;
    Instance(const Instance&) = delete;
    Instance& operator=(const Instance&) = delete;
};

/// Adaptive working horizon: grows until chi_J gbar_J <= tail_tol, capped.
std::size_t adaptive_horizon(const ParamSeq& params, double g0, double tail_tol,
                             std::size_t floor_horizon, std::size_t cap);

std::unique_ptr<Instance> make_instance(const InstanceConfig& cfg);

/// F(t, x) = S(t, x) rho(x): evaluates rho over the trajectory and applies
/// the linear boundary-value solve.
FlowSequence F_eval(double t, const FlowSequence& x, const Instance& inst,
                    double fp_tol = 1e-12, std::size_t fp_max_iter = 80,
                    SolveReport* report = nullptr, bool enforce_ball = true);

struct HomotopyConfig {
    enum class Integrator { Rk45Adaptive, Rk4Fixed };
    Integrator integrator = Integrator::Rk45Adaptive;
    double rel_tol = 1e-9;
    double abs_tol = 1e-11;
    std::size_t rk4_steps = 64;
    double fp_tol = 1e-12;
    std::size_t fp_max_iter = 80;
    bool enforce_ball = true;
    double min_step = 1e-8;
};

struct FlowResult {
    FlowSequence x_final;
    BallRatios ratios;           ///< the four ball-clause sups over j
    double flow_residual = 0.0;  ///< max_j v-weighted residual of x_{j+1} - Phi^1_j(x_j)
    double boundary_gap = 0.0;   ///< v-weighted residual of the pinned J+1 boundary row
    std::size_t steps_accepted = 0;
    std::size_t steps_rejected = 0;
    std::size_t f_evaluations = 0;
    bool ball_ok = true;
    bool clauses_ok = true;      ///< all four ratios <= b
};

/// Integrates xdot = F(t, x) from x(0) = xbar to t = 1.
FlowResult integrate_homotopy(const FlowSequence& xbar, const HomotopyConfig& config,
                              const Instance& inst);

/// Integrates backward from a t = 1 state to t = 0 (the uniqueness probe).
FlowSequence integrate_homotopy_backward(const FlowSequence& x1, const HomotopyConfig& config,
                                         const Instance& inst);

/// Newton shooting on (z0, mu0): forward iteration of Phi^1 to index J+1,
/// matching the quadratic boundary values there.
struct ShootingResult {
    double z0 = 0.0, mu0 = 0.0;
    std::size_t newton_iterations = 0;
    FlowSequence trajectory; ///< forward trajectory at the root, j = 0..J
};

ShootingResult shooting_solve(const std::vector<double>& K0, double g0, const Instance& inst,
                              std::size_t J_s, double tol,
                              double z0_guess = std::numeric_limits<double>::quiet_NaN(),
                              double mu0_guess = std::numeric_limits<double>::quiet_NaN());

/// Forward/backward Gauss-Seidel sweeps on the nonlinear system with the
/// pinned boundary; relaxation 0.5 is applied once on observed
/// non-contraction before failing.
struct SweepResult {
    FlowSequence trajectory;
    std::size_t sweeps = 0;
    double final_change = 0.0; ///< w-norm change of the last sweep
};

SweepResult sweep_solve(const std::vector<double>& K0, double g0, const Instance& inst,
                        double tol, std::size_t max_sweeps);

/// Central finite differences of the solved (z0, mu0) over g0, with a
/// Richardson estimate of the truncation error.
struct SensitivityResult {
    double dz0_dg0 = 0.0;
    double dmu0_dg0 = 0.0;
    double richardson_error_z = 0.0;
    double richardson_error_mu = 0.0;
};

SensitivityResult sensitivity(const InstanceConfig& base, double dg0,
                              const HomotopyConfig& hconfig = {});

/// One family member per external parameter value m.
using InstanceFamily = std::function<InstanceConfig(double m)>;

struct ContinuityReport {
    std::vector<double> m_values;
    std::vector<double> diffs;       ///< sup_j |x_j(m_{i+1}) - x_j(m_i)| per interval
    std::vector<double> moduli;      ///< diffs / |m_{i+1} - m_i|
    std::vector<std::string> failures; ///< per-point failure messages (index-tagged)
    std::size_t report_horizon = 0;
};

ContinuityReport external_parameter_sweep(const InstanceFamily& family,
                                          const std::vector<double>& m_grid,
                                          const HomotopyConfig& hconfig = {});

/// v-weighted flow residual of a trajectory under Phi^t (j = 0..J-1) and the
/// boundary-row gap at J against the pinned quadratic values.
struct ResidualReport {
    double interior = 0.0;
    double boundary = 0.0;
};
ResidualReport flow_residual(const FlowSequence& x, double t, const Instance& inst);

} // namespace rgflow
