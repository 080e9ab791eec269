#pragma once

#include <cstddef>
#include <functional>

#include "rgflow/sequence.hpp"
#include "rgflow/weights.hpp"

namespace rgflow {
namespace kernels {

/// Execution policy for the data-parallel kernels. Parallel runs use OpenMP
/// when compiled in; all reductions are max-reductions or independent per-j
/// slot writes, so results are identical to the serial reference bit for bit.
enum class Exec { Serial, Parallel };

Exec default_exec();
void set_default_exec(Exec e);

/// max over (alpha, j) of weight^{-1} |x - ref| (ref optional).
double weighted_sup(const FlowSequence& x, const FlowSequence* ref,
                    const WeightScheme& scheme, WhichNorm which, Exec exec);
double weighted_sup(const FlowSequence& x, const FlowSequence* ref,
                    const WeightScheme& scheme, WhichNorm which);

BallRatios ball_ratios_impl(const FlowSequence& x, const FlowSequence& ref,
                            const WeightScheme& scheme, Exec exec);
BallRatios ball_ratios_impl(const FlowSequence& x, const FlowSequence& ref,
                            const WeightScheme& scheme);

/// Fill out[j] for j = first..last by independent per-j evaluation.
/// The functor must be pure; the loop order is unspecified.
void for_each_index(std::size_t first, std::size_t last,
                    const std::function<void(std::size_t)>& body, Exec exec);
void for_each_index(std::size_t first, std::size_t last,
                    const std::function<void(std::size_t)>& body);

/// max over j = first..last of a per-index score (pure functor).
double max_over_indices(std::size_t first, std::size_t last,
                        const std::function<double(std::size_t)>& score, Exec exec);
double max_over_indices(std::size_t first, std::size_t last,
                        const std::function<double(std::size_t)>& score);

} // namespace kernels
} // namespace rgflow
