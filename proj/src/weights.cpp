#include "rgflow/weights.hpp"

#include <cmath>

#include "rgflow/kernels.hpp"

namespace rgflow {

WeightScheme::WeightScheme(std::vector<double> gring, CutoffData cutoff,
                           double a, double a_star, double h)
    : gring_(std::move(gring)), cutoff_(cutoff), a_(a), a_star_(a_star), h_(h) {
    if (gring_.empty()) fail(ErrorCode::InvalidParameters, "empty gring");
    if (!(a_ > 0.0 && h_ > 0.0) || !(a_star_ < a_) || !(a_star_ > 0.0))
        fail(ErrorCode::InvalidParameters, "weights need 0 < a* < a and h > 0");
    horizon_ = gring_.size() - 1;
    table_w_.resize(4 * (horizon_ + 1));
    table_v_.resize(4 * (horizon_ + 1));
    for (std::size_t j = 0; j <= horizon_; ++j) {
        double g = gring_[j];
        if (!(g > 0.0 && g < 1.0))
            fail(ErrorCode::InvalidParameters,
                 "gring_j outside (0,1); weights lose positivity at j=" + std::to_string(j), j);
        double lg = std::abs(std::log(g));
        double c = cutoff_.chi(j);
        double g2 = g * g, g3 = g2 * g;
        table_w_[idx(Coord::K, j)] = (a_ - a_star_) * c * g3;
        table_w_[idx(Coord::G, j)] = h_ * g2 * lg;
        table_w_[idx(Coord::Z, j)] = h_ * c * g2 * lg;
        table_w_[idx(Coord::Mu, j)] = h_ * c * g2 * lg;
        table_v_[idx(Coord::K, j)] = (a_ - a_star_) * c * g3;
        table_v_[idx(Coord::G, j)] = h_ * c * g3;
        table_v_[idx(Coord::Z, j)] = h_ * c * g3;
        table_v_[idx(Coord::Mu, j)] = h_ * c * g3;
    }
}

double weighted_norm(const FlowSequence& x, const WeightScheme& scheme, WhichNorm which) {
    if (x.empty()) fail(ErrorCode::InvalidParameters, "weighted_norm of empty sequence");
    if (x.horizon() > scheme.horizon())
        fail(ErrorCode::InvalidParameters, "sequence exceeds the weight table horizon");
    return kernels::weighted_sup(x, nullptr, scheme, which);
}

double weighted_deviation_norm(const FlowSequence& x, const FlowSequence& ref,
                               const WeightScheme& scheme, WhichNorm which) {
    if (!x.same_shape(ref)) fail(ErrorCode::InvalidParameters, "shape mismatch in deviation norm");
    if (x.horizon() > scheme.horizon())
        fail(ErrorCode::InvalidParameters, "sequence exceeds the weight table horizon");
    return kernels::weighted_sup(x, &ref, scheme, which);
}

BallRatios ball_ratios(const FlowSequence& x, const FlowSequence& ref,
                       const WeightScheme& scheme) {
    return kernels::ball_ratios_impl(x, ref, scheme);
}

} // namespace rgflow
