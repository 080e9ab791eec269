#include "rgflow/perturbation.hpp"

#include <algorithm>
#include <cmath>

#include "rgflow/quadratic.hpp"
#include "rgflow/rng.hpp"

namespace rgflow {

// --- derivative fallback ----------------------------------------------------

std::vector<double> PerturbationModel::dpsi(std::size_t, std::span<const double>,
                                            const VTriple&, std::span<const double>,
                                            const VTriple&) const {
    fail(ErrorCode::InvalidParameters,
         "model declares analytic derivatives but does not implement dpsi");
}

VTriple PerturbationModel::drho(std::size_t, std::span<const double>, const VTriple&,
                                std::span<const double>, const VTriple&) const {
    fail(ErrorCode::InvalidParameters,
         "model declares analytic derivatives but does not implement drho");
}

PhiDerivative model_directional_derivative(const PerturbationModel& model, const DomainSpec& dom,
                                           std::size_t j, const FlowSequence::Entry& x,
                                           const FlowSequence::Entry& dir) {
    PhiDerivative out;
    if (model.has_analytic_derivatives()) {
        out.dpsi = model.dpsi(j, x.K, x.V, dir.K, dir.V);
        out.drho = model.drho(j, x.K, x.V, dir.K, dir.V);
        return out;
    }
    // central difference along dir, step 1e-6 in domain-radius units
    double scale = 0.0;
    double rk = dom.radius(Coord::K, j);
    for (double d : dir.K) scale = std::max(scale, std::abs(d) / rk);
    scale = std::max(scale, std::abs(dir.V.g) / dom.radius(Coord::G, j));
    scale = std::max(scale, std::abs(dir.V.z) / dom.radius(Coord::Z, j));
    scale = std::max(scale, std::abs(dir.V.mu) / dom.radius(Coord::Mu, j));
    if (scale == 0.0) {
        out.dpsi.assign(model.d_K(j + 1), 0.0);
        out.drho = VTriple{};
        return out;
    }
    const double eps = 1e-6 / scale;
    FlowSequence::Entry hi = x, lo = x;
    for (std::size_t i = 0; i < x.K.size(); ++i) {
        hi.K[i] += eps * dir.K[i];
        lo.K[i] -= eps * dir.K[i];
    }
    hi.V += eps * dir.V;
    lo.V -= eps * dir.V;

    std::vector<double> ph = model.psi(j, hi.K, hi.V), pl = model.psi(j, lo.K, lo.V);
    out.dpsi.resize(ph.size());
    for (std::size_t i = 0; i < ph.size(); ++i) out.dpsi[i] = (ph[i] - pl[i]) / (2.0 * eps);
    VTriple rh = model.rho(j, hi.K, hi.V), rl = model.rho(j, lo.K, lo.V);
    out.drho = VTriple((rh.g - rl.g) / (2.0 * eps), (rh.z - rl.z) / (2.0 * eps),
                       (rh.mu - rl.mu) / (2.0 * eps));
    return out;
}

// --- domain -----------------------------------------------------------------

DomainSpec::DomainSpec(const QuadraticSolution& sol, double a, double h)
    : sol_(&sol), a_(a), h_(h) {
    if (!(a > 0.0 && h > 0.0))
        fail(ErrorCode::InvalidParameters, "domain needs a > 0 and h > 0");
}

std::size_t DomainSpec::known_horizon() const {
    return std::min(sol_->gbar_ext.size(), sol_->zbar_ext.size()) - 1;
}

double DomainSpec::gbar(std::size_t j) const { return sol_->gbar_ext[j]; }
double DomainSpec::zbar(std::size_t j) const { return sol_->zbar_ext[j]; }
double DomainSpec::mubar(std::size_t j) const {
    if (j < sol_->mubar_ext.size()) return sol_->mubar_ext[j];
    fail(ErrorCode::ExtendHorizon, "mubar not solved out to j=" + std::to_string(j), j);
}

double DomainSpec::radius(Coord c, std::size_t j) const {
    double g = gbar(j);
    double lg = std::abs(std::log(g));
    double ch = chi(j);
    switch (c) {
        case Coord::K: return a_ * ch * g * g * g;
        case Coord::G: return h_ * g * g * lg;
        case Coord::Z: return h_ * ch * g * g * lg;
        case Coord::Mu: return h_ * ch * g * g * lg;
    }
    return 0.0;
}

bool in_domain(const FlowSequence::Entry& x_j, std::size_t j, const DomainSpec& dom) {
    if (sup_norm(x_j.K) > dom.radius(Coord::K, j)) return false;
    if (std::abs(x_j.V.g - dom.gbar(j)) > dom.radius(Coord::G, j)) return false;
    if (std::abs(x_j.V.z - dom.zbar(j)) > dom.radius(Coord::Z, j)) return false;
    if (std::abs(x_j.V.mu - dom.mubar(j)) > dom.radius(Coord::Mu, j)) return false;
    return true;
}

// --- Kbar / xbar / Phi^t ----------------------------------------------------

std::vector<std::vector<double>> kbar_iterate(const std::vector<double>& K0,
                                              const QuadraticSolution& sol,
                                              const PerturbationModel& model,
                                              double a_star) {
    const std::size_t J = sol.horizon;
    if (K0.size() != model.d_K(0))
        fail(ErrorCode::InvalidParameters, "K0 dimension mismatch");
    std::vector<std::vector<double>> K(J + 1);
    K[0] = K0;
    const double slack = 1.0 + 1e-9;
    for (std::size_t j = 0; j <= J; ++j) {
        double cap = a_star * sol.cutoff.chi(j) * std::pow(sol.gbar_ext[j], 3);
        if (sup_norm(K[j]) > cap * slack)
            fail(ErrorCode::ModelViolatesA3,
                 "Kbar containment ||Kbar_j|| <= a* chi_j gbar_j^3 failed at j=" +
                     std::to_string(j),
                 j);
        if (j < J) K[j + 1] = model.psi(j, K[j], sol.vbar[j]);
    }
    return K;
}

FlowSequence xbar_assemble(const std::vector<double>& K0, const QuadraticSolution& sol,
                           const PerturbationModel& model, double a_star) {
    auto K = kbar_iterate(K0, sol, model, a_star);
    FlowSequence x(sol.horizon);
    for (std::size_t j = 0; j <= sol.horizon; ++j) {
        x[j].K = std::move(K[j]);
        x[j].V = sol.vbar[j];
    }
    return x;
}

FlowSequence::Entry phi_step(double t, const FlowSequence::Entry& x_j, std::size_t j,
                             const ParamSeq& params, const PerturbationModel& model) {
    FlowSequence::Entry out;
    out.K = model.psi(j, x_j.K, x_j.V);
    out.V = quadratic_step(x_j.V, params, j);
    if (t != 0.0) {
        VTriple r = model.rho(j, x_j.K, x_j.V);
        out.V += t * r;
    }
    return out;
}

FlowSequence::Entry phi_tangent(double t, const FlowSequence::Entry& x_j,
                                const FlowSequence::Entry& dir, std::size_t j,
                                const ParamSeq& p, const PerturbationModel& model,
                                const DomainSpec& dom) {
    const double g = x_j.V.g, z = x_j.V.z, mu = x_j.V.mu;
    const double wg = dir.V.g, wz = dir.V.z, wmu = dir.V.mu;
    FlowSequence::Entry out;
    out.V.g = (1.0 - 2.0 * p.beta.at(j) * g) * wg;
    out.V.z = -(2.0 * p.theta.at(j) * g + p.zeta.at(j) * z) * wg +
              (1.0 - p.zeta.at(j) * g) * wz;
    double eta_t = p.eta.at(j) - 2.0 * p.ups_gg.at(j) * g - p.ups_gz.at(j) * z -
                   p.ups_gmu.at(j) * mu;
    double gam_t = p.gamma.at(j) - p.ups_gz.at(j) * g - 2.0 * p.ups_zz.at(j) * z -
                   p.ups_zmu.at(j) * mu;
    double lam_t = p.lambda.at(j) - p.ups_gmu.at(j) * g - p.ups_zmu.at(j) * z;
    out.V.mu = eta_t * wg + gam_t * wz + lam_t * wmu;

    PhiDerivative d = model_directional_derivative(model, dom, j, x_j, dir);
    out.K = std::move(d.dpsi);
    if (t != 0.0) out.V += t * d.drho;
    return out;
}

// --- built-ins --------------------------------------------------------------

namespace {

/// Shared per-scale data for the built-ins: envelopes chi_{j+1} gbar_{j+1}^3
/// and the scaling of deviations by gbar_j and chi_j gbar_j^3.
class ScaledModelBase : public PerturbationModel {
public:
    ScaledModelBase(const QuadraticSolution& sol, std::size_t d) : d_(d) {
        const std::size_t n = std::min(sol.gbar_ext.size(), sol.zbar_ext.size());
        gb_.assign(sol.gbar_ext.begin(), sol.gbar_ext.begin() + static_cast<long>(n));
        zb_.assign(sol.zbar_ext.begin(), sol.zbar_ext.begin() + static_cast<long>(n));
        mb_.assign(n, 0.0);
        for (std::size_t j = 0; j < std::min(n, sol.mubar_ext.size()); ++j)
            mb_[j] = sol.mubar_ext[j];
        chi_.resize(n);
        for (std::size_t j = 0; j < n; ++j) chi_[j] = sol.cutoff.chi(j);
    }

    std::size_t d_K(std::size_t) const override { return d_; }

protected:
    double env3(std::size_t j) const { // chi_{j+1} gbar_{j+1}^3
        require(j + 1);
        double g = gb_[j + 1];
        return chi_[j + 1] * g * g * g;
    }
    double kscale(std::size_t j) const { // chi_j gbar_j^3
        require(j);
        double g = gb_[j];
        return chi_[j] * g * g * g;
    }
    // deviation coordinates scaled by gbar_j
    double qg(std::size_t j, const VTriple& V) const { return (V.g - gb_[j]) / gb_[j]; }
    double qz(std::size_t j, const VTriple& V) const { return (V.z - zb_[j]) / gb_[j]; }
    double qmu(std::size_t j, const VTriple& V) const { return (V.mu - mb_[j]) / gb_[j]; }
    double gbar(std::size_t j) const { return gb_[j]; }

    double ktilde(std::size_t j, std::span<const double> K) const {
        double s = 0.0;
        for (double k : K) s += k;
        return s / (static_cast<double>(K.size()) * kscale(j));
    }

    void require(std::size_t j) const {
        if (j >= gb_.size())
            fail(ErrorCode::ExtendHorizon,
                 "model envelope data not available at j=" + std::to_string(j), j);
    }

    std::size_t d_;
    std::vector<double> gb_, zb_, mb_, chi_;
};

class ZeroPerturbation final : public PerturbationModel {
public:
    explicit ZeroPerturbation(std::size_t d) : d_(d) {
        declared_kappa = 0.1;
        declared_R = 0.05;
        declared_M = 0.1;
    }
    std::string name() const override { return "zero"; }
    std::size_t d_K(std::size_t) const override { return d_; }
    std::vector<double> psi(std::size_t, std::span<const double>, const VTriple&) const override {
        return std::vector<double>(d_, 0.0);
    }
    VTriple rho(std::size_t, std::span<const double>, const VTriple&) const override {
        return {};
    }
    bool has_analytic_derivatives() const override { return true; }
    std::vector<double> dpsi(std::size_t, std::span<const double>, const VTriple&,
                             std::span<const double>, const VTriple&) const override {
        return std::vector<double>(d_, 0.0);
    }
    VTriple drho(std::size_t, std::span<const double>, const VTriple&, std::span<const double>,
                 const VTriple&) const override {
        return {};
    }

private:
    std::size_t d_;
};

/// psi_j(K,V) = kappa0 K + c_psi chi_{j+1} gbar_{j+1}^3 u(q) 1
/// rho_j(K,V) = (c_rho chi_{j+1} gbar_{j+1}^3 s(q)(1 + tanh(Ktilde)/2), 0, 0)
/// with u(q) = tanh(q_g)/2 + sin(q_z)/4 + cos(q_mu)/4 and
/// s(q) = cos(q_g + q_z/2 + q_mu/2); all shape factors bounded by 1.
class CubicMonomial final : public ScaledModelBase {
public:
    CubicMonomial(const QuadraticSolution& sol, const ModelConfig& cfg)
        : ScaledModelBase(sol, cfg.d), kappa0_(cfg.kappa0), cpsi_(cfg.c_psi), crho_(cfg.c_rho) {
        declared_kappa = cfg.kappa > 0 ? cfg.kappa : std::max(kappa0_, 0.01);
        declared_R = cfg.R > 0 ? cfg.R : std::max(1.05 * cpsi_, 0.01);
        declared_M = cfg.M > 0 ? cfg.M : std::max(4.0 * std::max(cpsi_, crho_), 0.05);
    }

    std::string name() const override { return "cubic"; }

    std::vector<double> psi(std::size_t j, std::span<const double> K,
                            const VTriple& V) const override {
        double u = 0.5 * std::tanh(qg(j, V)) + 0.25 * std::sin(qz(j, V)) +
                   0.25 * std::cos(qmu(j, V));
        double add = cpsi_ * env3(j) * u;
        std::vector<double> out(d_);
        for (std::size_t i = 0; i < d_; ++i) out[i] = kappa0_ * K[i] + add;
        return out;
    }

    VTriple rho(std::size_t j, std::span<const double> K, const VTriple& V) const override {
        double s = std::cos(qg(j, V) + 0.5 * qz(j, V) + 0.5 * qmu(j, V));
        double kt = ktilde(j, K);
        return VTriple(crho_ * env3(j) * s * (1.0 + 0.5 * std::tanh(kt)), 0.0, 0.0);
    }

    bool has_analytic_derivatives() const override { return true; }

    std::vector<double> dpsi(std::size_t j, std::span<const double>, const VTriple& V,
                             std::span<const double> dK, const VTriple& dV) const override {
        double g = gbar(j);
        double du = 0.5 * sech2(qg(j, V)) * dV.g / g + 0.25 * std::cos(qz(j, V)) * dV.z / g -
                    0.25 * std::sin(qmu(j, V)) * dV.mu / g;
        double add = cpsi_ * env3(j) * du;
        std::vector<double> out(d_);
        for (std::size_t i = 0; i < d_; ++i) out[i] = kappa0_ * dK[i] + add;
        return out;
    }

    VTriple drho(std::size_t j, std::span<const double> K, const VTriple& V,
                 std::span<const double> dK, const VTriple& dV) const override {
        double g = gbar(j);
        double arg = qg(j, V) + 0.5 * qz(j, V) + 0.5 * qmu(j, V);
        double darg = (dV.g + 0.5 * dV.z + 0.5 * dV.mu) / g;
        double kt = ktilde(j, K);
        double dkt = 0.0;
        for (double d : dK) dkt += d;
        dkt /= static_cast<double>(K.size()) * kscale(j);
        double s = std::cos(arg);
        double f = 1.0 + 0.5 * std::tanh(kt);
        double d = crho_ * env3(j) * (-std::sin(arg) * darg * f + s * 0.5 * sech2(kt) * dkt);
        return VTriple(d, 0.0, 0.0);
    }

private:
    static double sech2(double x) {
        double c = std::cosh(x);
        return 1.0 / (c * c);
    }
    double kappa0_, cpsi_, crho_;
};

/// Seeded degree-<=3 polynomial in the bounded variables
/// (tanh q_g, tanh q_z, tanh q_mu, tanh Ktilde), coefficients normalized to
/// sum of |.| equal 1 per output; derivatives are left to the finite
/// difference fallback on purpose. The psi polynomial uses the V variables
/// only, so D_K psi is exactly kappa0.
class RandomPolynomial final : public ScaledModelBase {
public:
    RandomPolynomial(const QuadraticSolution& sol, const ModelConfig& cfg)
        : ScaledModelBase(sol, cfg.d), kappa0_(cfg.kappa0), cpsi_(cfg.c_psi), crho_(cfg.c_rho) {
        declared_kappa = cfg.kappa > 0 ? cfg.kappa : std::max(kappa0_, 0.01);
        declared_R = cfg.R > 0 ? cfg.R : std::max(1.05 * cpsi_, 0.01);
        declared_M = cfg.M > 0 ? cfg.M : std::max(6.0 * std::max(cpsi_, crho_), 0.05);
        // monomial exponents over 4 variables with total degree <= 3
        for (int e1 = 0; e1 <= 3; ++e1)
            for (int e2 = 0; e1 + e2 <= 3; ++e2)
                for (int e3 = 0; e1 + e2 + e3 <= 3; ++e3)
                    for (int e4 = 0; e1 + e2 + e3 + e4 <= 3; ++e4)
                        exps_.push_back({e1, e2, e3, e4});
        Rng rng(cfg.seed);
        auto draw = [&](std::vector<double>& c) {
            c.resize(exps_.size());
            double sum = 0.0;
            for (double& v : c) {
                v = rng.symmetric();
                sum += std::abs(v);
            }
            for (double& v : c) v /= sum;
        };
        draw(cpsi_coef_);
        draw(crho_g_);
        draw(crho_z_);
        draw(crho_mu_);
    }

    std::string name() const override { return "random-poly"; }

    std::vector<double> psi(std::size_t j, std::span<const double> K,
                            const VTriple& V) const override {
        std::array<double, 4> t = vars(j, K, V);
        t[3] = 0.0; // psi must not pick up extra K-contraction beyond kappa0
        double p = poly(cpsi_coef_, t);
        double add = cpsi_ * env3(j) * p;
        std::vector<double> out(d_);
        for (std::size_t i = 0; i < d_; ++i) out[i] = kappa0_ * K[i] + add;
        return out;
    }

    VTriple rho(std::size_t j, std::span<const double> K, const VTriple& V) const override {
        std::array<double, 4> t = vars(j, K, V);
        double e = crho_ * env3(j);
        return VTriple(e * poly(crho_g_, t), e * poly(crho_z_, t), e * poly(crho_mu_, t));
    }

private:
    std::array<double, 4> vars(std::size_t j, std::span<const double> K,
                               const VTriple& V) const {
        return {std::tanh(qg(j, V)), std::tanh(qz(j, V)), std::tanh(qmu(j, V)),
                std::tanh(ktilde(j, K))};
    }
    double poly(const std::vector<double>& coef, const std::array<double, 4>& t) const {
        double s = 0.0;
        for (std::size_t i = 0; i < exps_.size(); ++i) {
            double m = coef[i];
            for (int a = 0; a < exps_[i][0]; ++a) m *= t[0];
            for (int a = 0; a < exps_[i][1]; ++a) m *= t[1];
            for (int a = 0; a < exps_[i][2]; ++a) m *= t[2];
            for (int a = 0; a < exps_[i][3]; ++a) m *= t[3];
            s += m;
        }
        return s;
    }

    double kappa0_, cpsi_, crho_;
    std::vector<std::array<int, 4>> exps_;
    std::vector<double> cpsi_coef_, crho_g_, crho_z_, crho_mu_;
};

} // namespace

std::unique_ptr<PerturbationModel> make_model(const ModelConfig& cfg,
                                              const QuadraticSolution& sol) {
    if (cfg.d == 0) fail(ErrorCode::InvalidParameters, "model dimension d must be positive");
    if (cfg.kind == "zero") return std::make_unique<ZeroPerturbation>(cfg.d);
    if (cfg.kind == "cubic") return std::make_unique<CubicMonomial>(sol, cfg);
    if (cfg.kind == "random-poly") return std::make_unique<RandomPolynomial>(sol, cfg);
    fail(ErrorCode::InvalidParameters, "unknown model kind '" + cfg.kind + "'");
}

} // namespace rgflow
