#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <vector>

#include "rgflow/errors.hpp"

namespace rgflow {

constexpr std::size_t kInfiniteIndex = static_cast<std::size_t>(-1);

/// Rule describing a coefficient sequence beyond its stored prefix.
/// zero:       s_j = 0
/// constant:   s_j = value
/// geometric:  s_j = value * ratio^(j - prefix_len),  |ratio| < 1
struct TailRule {
    enum class Kind { Zero, Constant, Geometric };
    Kind kind = Kind::Zero;
    double value = 0.0;
    double ratio = 0.0;
};

/// One coefficient sequence: finite prefix plus tail rule. Querying any
/// index is total; sup/inf over all j resolve the tail in closed form.
class CoeffSeq {
public:
    CoeffSeq() = default;
    CoeffSeq(std::vector<double> prefix, TailRule tail)
        : prefix_(std::move(prefix)), tail_(tail) {
        validate();
    }

    /// Constant sequence s_j = c for all j.
    static CoeffSeq constant(double c) {
        return CoeffSeq({}, TailRule{TailRule::Kind::Constant, c, 0.0});
    }
    static CoeffSeq zero() { return CoeffSeq{}; }

    double at(std::size_t j) const {
        if (j < prefix_.size()) return prefix_[j];
        switch (tail_.kind) {
            case TailRule::Kind::Zero: return 0.0;
            case TailRule::Kind::Constant: return tail_.value;
            case TailRule::Kind::Geometric:
                return tail_.value *
                       std::pow(tail_.ratio, static_cast<double>(j - prefix_.size()));
        }
        return 0.0;
    }

    std::size_t prefix_size() const { return prefix_.size(); }
    const std::vector<double>& prefix() const { return prefix_; }
    const TailRule& tail() const { return tail_; }

    /// sup_j |s_j|, exact.
    double sup_abs() const {
        double s = tail_sup_abs();
        for (double v : prefix_) s = std::max(s, std::abs(v));
        return s;
    }

    /// inf_j s_j including the limit point of the tail.
    double inf_with_limit() const {
        double s = tail_inf_with_limit();
        for (double v : prefix_) s = std::min(s, v);
        return s;
    }

    /// True when s_j <= 0 for every j >= some index; returns that index, or
    /// kInfiniteIndex when positive values persist indefinitely.
    std::size_t eventually_nonpositive_from() const {
        bool tail_ok = false;
        switch (tail_.kind) {
            case TailRule::Kind::Zero: tail_ok = true; break;
            case TailRule::Kind::Constant: tail_ok = tail_.value <= 0.0; break;
            case TailRule::Kind::Geometric:
                // sign pattern: value*ratio^k; nonpositive for all k needs
                // value <= 0 and ratio >= 0 (alternating signs never qualify
                // unless value == 0)
                tail_ok = tail_.value == 0.0 || (tail_.value <= 0.0 && tail_.ratio >= 0.0);
                break;
        }
        if (!tail_ok) return kInfiniteIndex;
        std::size_t from = prefix_.size();
        while (from > 0 && prefix_[from - 1] <= 0.0) --from;
        return from;
    }

    /// sup over the tail region only (j >= prefix_len) of |s_j|.
    double tail_sup_abs() const {
        switch (tail_.kind) {
            case TailRule::Kind::Zero: return 0.0;
            case TailRule::Kind::Constant: return std::abs(tail_.value);
            case TailRule::Kind::Geometric: return std::abs(tail_.value);
        }
        return 0.0;
    }

    bool tail_is_zero() const {
        return tail_.kind == TailRule::Kind::Zero ||
               (tail_.kind != TailRule::Kind::Zero && tail_.value == 0.0);
    }

private:
    double tail_inf_with_limit() const {
        switch (tail_.kind) {
            case TailRule::Kind::Zero: return 0.0;
            case TailRule::Kind::Constant: return tail_.value;
            case TailRule::Kind::Geometric: {
                if (tail_.value == 0.0) return 0.0;
                // values value*ratio^k -> 0; with negative ratio both signs occur
                double worst = std::min(tail_.value, tail_.value * tail_.ratio);
                return std::min(worst, 0.0);
            }
        }
        return 0.0;
    }

    void validate() const {
        if (tail_.kind == TailRule::Kind::Geometric && std::abs(tail_.ratio) >= 1.0)
            fail(ErrorCode::InvalidParameters,
                 "geometric tail requires |ratio| < 1, got " + std::to_string(tail_.ratio));
    }

    std::vector<double> prefix_;
    TailRule tail_;
};

/// The coefficient data of the quadratic flow plus the cut-off base Omega.
struct ParamSeq {
    CoeffSeq beta;
    CoeffSeq eta;
    CoeffSeq gamma;
    CoeffSeq lambda = CoeffSeq::constant(2.0);
    CoeffSeq theta;
    CoeffSeq zeta;
    CoeffSeq ups_gg, ups_gz, ups_gmu, ups_zz, ups_zmu;
    double omega = 2.0;

    void validate() const {
        if (!(omega > 1.0))
            fail(ErrorCode::InvalidParameters, "Omega must exceed 1");
    }
};

/// Omega-cut-off time j_Omega and the envelope chi_j = Omega^{-(j-j_Omega)_+}.
struct CutoffData {
    std::size_t j_omega = kInfiniteIndex;
    double omega = 2.0;

    bool infinite() const { return j_omega == kInfiniteIndex; }

    double chi(std::size_t j) const {
        if (infinite() || j <= j_omega) return 1.0;
        return std::pow(omega, -static_cast<double>(j - j_omega));
    }
};

/// Minimal k with |beta_j| <= Omega^{-(j-k)_+} ||beta||_inf for all j, or
/// infinity when no finite k works. Exact: the prefix is scanned and the tail
/// resolved analytically.
CutoffData cutoff_time(const ParamSeq& params);

inline double chi(std::size_t j, const CutoffData& cutoff) { return cutoff.chi(j); }

/// sup_j |s_j| / chi_j, exact; +infinity when the envelope does not close.
double sup_over_chi(const CoeffSeq& seq, const CutoffData& cutoff);

/// Default working horizon: max(j_Omega + ceil(log(1/tol)/log Omega), floor),
/// so that chi_J <= tol; the floor applies when j_Omega is infinite.
std::size_t default_horizon(const CutoffData& cutoff, double tol, std::size_t floor_horizon = 1000);

} // namespace rgflow
