#include "rgflow/kernels.hpp"

#include <algorithm>
#include <atomic>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace rgflow {
namespace kernels {

namespace {
std::atomic<Exec> g_default{
#ifdef _OPENMP
    Exec::Parallel
#else
    Exec::Serial
#endif
};

inline double entry_sup(const FlowSequence::Entry& e, const FlowSequence::Entry* ref,
                        const WeightScheme& scheme, WhichNorm which, std::size_t j) {
    double s = 0.0;
    double wk = scheme.weight(which, Coord::K, j);
    if (ref) {
        for (std::size_t i = 0; i < e.K.size(); ++i)
            s = std::max(s, std::abs(e.K[i] - ref->K[i]) / wk);
        s = std::max(s, std::abs(e.V.g - ref->V.g) / scheme.weight(which, Coord::G, j));
        s = std::max(s, std::abs(e.V.z - ref->V.z) / scheme.weight(which, Coord::Z, j));
        s = std::max(s, std::abs(e.V.mu - ref->V.mu) / scheme.weight(which, Coord::Mu, j));
    } else {
        for (double k : e.K) s = std::max(s, std::abs(k) / wk);
        s = std::max(s, std::abs(e.V.g) / scheme.weight(which, Coord::G, j));
        s = std::max(s, std::abs(e.V.z) / scheme.weight(which, Coord::Z, j));
        s = std::max(s, std::abs(e.V.mu) / scheme.weight(which, Coord::Mu, j));
    }
    return s;
}
} // namespace

Exec default_exec() { return g_default.load(); }
void set_default_exec(Exec e) { g_default.store(e); }

double weighted_sup(const FlowSequence& x, const FlowSequence* ref,
                    const WeightScheme& scheme, WhichNorm which, Exec exec) {
    const std::size_t n = x.size();
    double best = 0.0;
    if (exec == Exec::Parallel) {
#ifdef _OPENMP
#pragma omp parallel for reduction(max : best) schedule(static)
#endif
        for (long jj = 0; jj < static_cast<long>(n); ++jj) {
            auto j = static_cast<std::size_t>(jj);
            const FlowSequence::Entry* r = ref ? &(*ref)[j] : nullptr;
            best = std::max(best, entry_sup(x[j], r, scheme, which, j));
        }
    } else {
        for (std::size_t j = 0; j < n; ++j) {
            const FlowSequence::Entry* r = ref ? &(*ref)[j] : nullptr;
            best = std::max(best, entry_sup(x[j], r, scheme, which, j));
        }
    }
    return best;
}

double weighted_sup(const FlowSequence& x, const FlowSequence* ref,
                    const WeightScheme& scheme, WhichNorm which) {
    return weighted_sup(x, ref, scheme, which, default_exec());
}

BallRatios ball_ratios_impl(const FlowSequence& x, const FlowSequence& ref,
                            const WeightScheme& scheme, Exec exec) {
    const std::size_t n = x.size();
    double rk = 0.0, rg = 0.0, rz = 0.0, rmu = 0.0;
    if (exec == Exec::Parallel) {
#ifdef _OPENMP
#pragma omp parallel for reduction(max : rk, rg, rz, rmu) schedule(static)
#endif
        for (long jj = 0; jj < static_cast<long>(n); ++jj) {
            auto j = static_cast<std::size_t>(jj);
            const auto& e = x[j];
            const auto& f = ref[j];
            double dk = 0.0;
            for (std::size_t i = 0; i < e.K.size(); ++i)
                dk = std::max(dk, std::abs(e.K[i] - f.K[i]));
            rk = std::max(rk, dk / scheme.w(Coord::K, j));
            rg = std::max(rg, std::abs(e.V.g - f.V.g) / scheme.w(Coord::G, j));
            rz = std::max(rz, std::abs(e.V.z - f.V.z) / scheme.w(Coord::Z, j));
            rmu = std::max(rmu, std::abs(e.V.mu - f.V.mu) / scheme.w(Coord::Mu, j));
        }
    } else {
        for (std::size_t j = 0; j < n; ++j) {
            const auto& e = x[j];
            const auto& f = ref[j];
            double dk = 0.0;
            for (std::size_t i = 0; i < e.K.size(); ++i)
                dk = std::max(dk, std::abs(e.K[i] - f.K[i]));
            rk = std::max(rk, dk / scheme.w(Coord::K, j));
            rg = std::max(rg, std::abs(e.V.g - f.V.g) / scheme.w(Coord::G, j));
            rz = std::max(rz, std::abs(e.V.z - f.V.z) / scheme.w(Coord::Z, j));
            rmu = std::max(rmu, std::abs(e.V.mu - f.V.mu) / scheme.w(Coord::Mu, j));
        }
    }
    BallRatios out;
    out.K = rk; out.g = rg; out.z = rz; out.mu = rmu;
    return out;
}

BallRatios ball_ratios_impl(const FlowSequence& x, const FlowSequence& ref,
                            const WeightScheme& scheme) {
    return ball_ratios_impl(x, ref, scheme, default_exec());
}

void for_each_index(std::size_t first, std::size_t last,
                    const std::function<void(std::size_t)>& body, Exec exec) {
    if (exec == Exec::Parallel) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
        for (long jj = static_cast<long>(first); jj <= static_cast<long>(last); ++jj)
            body(static_cast<std::size_t>(jj));
    } else {
        for (std::size_t j = first; j <= last; ++j) body(j);
    }
}

void for_each_index(std::size_t first, std::size_t last,
                    const std::function<void(std::size_t)>& body) {
    for_each_index(first, last, body, default_exec());
}

double max_over_indices(std::size_t first, std::size_t last,
                        const std::function<double(std::size_t)>& score, Exec exec) {
    double best = 0.0;
    if (exec == Exec::Parallel) {
#ifdef _OPENMP
#pragma omp parallel for reduction(max : best) schedule(static)
#endif
        for (long jj = static_cast<long>(first); jj <= static_cast<long>(last); ++jj)
            best = std::max(best, score(static_cast<std::size_t>(jj)));
    } else {
        for (std::size_t j = first; j <= last; ++j) best = std::max(best, score(j));
    }
    return best;
}

double max_over_indices(std::size_t first, std::size_t last,
                        const std::function<double(std::size_t)>& score) {
    return max_over_indices(first, last, score, default_exec());
}

} // namespace kernels
} // namespace rgflow
