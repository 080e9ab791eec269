#include "rgflow/params.hpp"

#include <algorithm>
#include <cmath>

namespace rgflow {

namespace {

// Checks whether |beta_j| <= B * Omega^{-(j-k)} holds for every j > k.
// Prefix indices are scanned; the tail is resolved in closed form.
bool cutoff_condition_holds(const CoeffSeq& beta, double sup, double omega, std::size_t k) {
    const std::size_t n = beta.prefix_size();
    for (std::size_t j = k + 1; j < n; ++j) {
        double bound = sup * std::pow(omega, -static_cast<double>(j - k));
        if (std::abs(beta.at(j)) > bound) return false;
    }
    const TailRule& tail = beta.tail();
    const bool tail_vanishes =
        tail.kind == TailRule::Kind::Zero ||
        ((tail.kind == TailRule::Kind::Constant || tail.kind == TailRule::Kind::Geometric) &&
         tail.value == 0.0);
    if (tail_vanishes) return true;
    if (tail.kind == TailRule::Kind::Constant) return false; // fails as j -> inf
    // geometric: need |c| (|r| Omega)^(j-n) <= B Omega^(k-n) for all j >= max(n, k+1)
    const double growth = std::abs(tail.ratio) * omega;
    if (growth > 1.0) return false;
    const std::size_t j0 = std::max(n, k + 1);
    const double lhs = std::abs(tail.value) *
                       std::pow(growth, static_cast<double>(j0 - n));
    const double rhs = sup * std::pow(omega, static_cast<double>(k) - static_cast<double>(n));
    return lhs <= rhs;
}

} // namespace

CutoffData cutoff_time(const ParamSeq& params) {
    params.validate();
    const CoeffSeq& beta = params.beta;
    const double sup = beta.sup_abs();
    CutoffData out;
    out.omega = params.omega;
    if (sup == 0.0) {
        out.j_omega = 0;
        return out;
    }
    // The condition is monotone in k, and when it holds for any finite k it
    // holds for k = prefix_len (empty prefix constraint, weakest tail
    // constraint), so the scan range is complete.
    const std::size_t k_max = beta.prefix_size();
    for (std::size_t k = 0; k <= k_max; ++k) {
        if (cutoff_condition_holds(beta, sup, params.omega, k)) {
            out.j_omega = k;
            return out;
        }
    }
    out.j_omega = kInfiniteIndex;
    return out;
}

double sup_over_chi(const CoeffSeq& seq, const CutoffData& cutoff) {
    constexpr double inf = std::numeric_limits<double>::infinity();
    double best = 0.0;
    const std::size_t n = seq.prefix_size();
    for (std::size_t j = 0; j < n; ++j) {
        double c = cutoff.chi(j);
        double v = std::abs(seq.at(j));
        if (v == 0.0) continue;
        best = std::max(best, v / c);
    }
    const TailRule& tail = seq.tail();
    const bool tail_vanishes = seq.tail_is_zero();
    if (tail_vanishes) return best;

    if (cutoff.infinite()) {
        // chi == 1 everywhere: tail contributes its own sup
        return std::max(best, seq.tail_sup_abs());
    }
    if (tail.kind == TailRule::Kind::Constant) {
        // |c| * Omega^{(j - j_Omega)_+} -> infinity
        return inf;
    }
    // geometric tail: |c| |r|^(j-n) / chi_j; beyond max(n, j_Omega) the ratio
    // changes by |r|*Omega per step
    const double growth = std::abs(tail.ratio) * cutoff.omega;
    if (growth > 1.0) return inf;
    const std::size_t j0 = std::max(n, cutoff.j_omega);
    // between n and j0 (chi == 1 region) values decay: sup at j = n
    best = std::max(best, std::abs(tail.value) / cutoff.chi(n));
    double at_j0 = std::abs(tail.value) * std::pow(std::abs(tail.ratio), static_cast<double>(j0 - n)) /
                   cutoff.chi(j0);
    best = std::max(best, at_j0); // growth <= 1 => sup of the far tail is at j0
    return best;
}

std::size_t default_horizon(const CutoffData& cutoff, double tol, std::size_t floor_horizon) {
    if (cutoff.infinite()) return floor_horizon;
    double steps = std::ceil(std::log(1.0 / tol) / std::log(cutoff.omega));
    std::size_t j = cutoff.j_omega + static_cast<std::size_t>(std::max(0.0, steps));
    return std::max(j, floor_horizon);
}

} // namespace rgflow
