#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace rgflow {

/// Coarse failure classes; the CLI maps these onto process exit codes.
enum class ErrorCode {
    InvalidParameters,   // bad config / inadmissible coefficient data
    GZeroTooLarge,       // gbar positivity lost or solver gate refused
    ExpansivityViolated, // (lambda_j - tau_j)^{-1} >= 1 somewhere
    DivergentTail,       // backward sum provably divergent
    ExtendHorizon,       // tail bound unattainable at the given horizon
    ModelViolatesA3,     // containment / envelope failure of a model
    DomainViolation,     // point left D_j or the existence ball
    NonContraction,      // fixed-point or sweep iteration failed to contract
    NewtonDivergence,    // shooting iteration left its basin
};

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what)
        : std::runtime_error(what), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

    /// Offending sequence index, when one exists (else npos).
    std::size_t index = static_cast<std::size_t>(-1);

private:
    ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what,
                              std::size_t index = static_cast<std::size_t>(-1)) {
    Error e(code, what);
    e.index = index;
    throw e;
}

} // namespace rgflow
