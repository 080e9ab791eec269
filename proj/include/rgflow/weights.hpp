#pragma once

#include <cstddef>
#include <vector>

#include "rgflow/params.hpp"
#include "rgflow/sequence.hpp"

namespace rgflow {

enum class WhichNorm { W, V };

/// The weights w and v over the reference sequence gring:
///   w_K = (a-a*) chi_j gring_j^3     v_K = (a-a*) chi_j gring_j^3
///   w_g = h gring_j^2 |log gring_j|  v_g = h chi_j gring_j^3
///   w_z = w_mu = h chi_j gring_j^2 |log gring_j|   v_z = v_mu = v_g
/// All weights are strictly positive for gring_0 in (0, 1/e).
class WeightScheme {
public:
    WeightScheme(std::vector<double> gring, CutoffData cutoff,
                 double a, double a_star, double h);

    double w(Coord c, std::size_t j) const { return table_w_[idx(c, j)]; }
    double v(Coord c, std::size_t j) const { return table_v_[idx(c, j)]; }
    double weight(WhichNorm which, Coord c, std::size_t j) const {
        return which == WhichNorm::W ? w(c, j) : v(c, j);
    }

    std::size_t horizon() const { return horizon_; }
    double a() const { return a_; }
    double a_star() const { return a_star_; }
    double h() const { return h_; }
    const CutoffData& cutoff() const { return cutoff_; }
    const std::vector<double>& gring() const { return gring_; }

private:
    std::size_t idx(Coord c, std::size_t j) const {
        return 4 * j + static_cast<std::size_t>(c);
    }

    std::vector<double> gring_;
    CutoffData cutoff_;
    double a_, a_star_, h_;
    std::size_t horizon_;
    std::vector<double> table_w_, table_v_;
};

/// sup over j <= J of max over coordinates of weight^{-1} |x_{alpha,j}|;
/// the K block is measured in its sup norm.
double weighted_norm(const FlowSequence& x, const WeightScheme& scheme, WhichNorm which);

/// Same, for the deviation x - ref.
double weighted_deviation_norm(const FlowSequence& x, const FlowSequence& ref,
                               const WeightScheme& scheme, WhichNorm which);

/// Weight used for equation residuals. This is v, except that the g row drops
/// the chi factor (giving h gring^3): stored g-values do not decay with chi,
/// so their floating-point defect floor is ulp(g); the chi-free g-weight
/// matches the chi-free w_g of the solution norm and keeps the metric
/// attainable at machine precision.
inline double residual_weight(const WeightScheme& scheme, Coord c, std::size_t j) {
    double v = scheme.v(c, j);
    if (c == Coord::G) v /= scheme.cutoff().chi(j);
    return v;
}

/// Per-coordinate-class deviation sups (the four ball-clause ratios).
struct BallRatios {
    double K = 0.0, g = 0.0, z = 0.0, mu = 0.0;
    double max() const { return std::max(std::max(K, g), std::max(z, mu)); }
};

BallRatios ball_ratios(const FlowSequence& x, const FlowSequence& ref,
                       const WeightScheme& scheme);

} // namespace rgflow
