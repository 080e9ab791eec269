#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace rgflow {

/// One named invariant check: the observed fitted constants, the tolerance it
/// was held to, and whether it came out as expected (the counterexample
/// instances are expected to fail their envelope checks).
struct CheckResult {
    std::string name;
    std::string statement;     ///< which bound or identity the check certifies
    bool pass = false;
    bool expected_fail = false; ///< the check is supposed to fail on this instance
    double tolerance = 0.0;
    std::map<std::string, double> observed;
    std::string note;

    bool as_expected() const { return pass != expected_fail; }
};

/// Runs the cross-module invariant suite on the built-in instance set.
/// An empty filter runs everything; otherwise only checks whose name
/// contains the filter string.
std::vector<CheckResult> verify_suite(const std::string& filter = "",
                                      std::uint64_t seed = 20240901);

} // namespace rgflow

#include "rgflow/params.hpp"

namespace rgflow::instances {

/// beta = 1 up to the cut at j = 39, zero after (finite cut-off time).
ParamSeq finite_cutoff();
/// constant coefficients, j_Omega infinite.
ParamSeq infinite_cutoff();
/// zeta = theta = beta = 1: the positive-zeta instance whose z-envelope grows.
ParamSeq counterexample();
/// zeta = -1 companion of the counterexample.
ParamSeq counterexample_negative();
/// seeded random coefficients satisfying (A1)-(A2).
ParamSeq random_admissible(std::uint64_t seed);

} // namespace rgflow::instances
