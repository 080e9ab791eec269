#pragma once

#include <string>

#include <json.hpp>

#include "rgflow/assumptions.hpp"
#include "rgflow/homotopy.hpp"
#include "rgflow/params.hpp"
#include "rgflow/quadratic.hpp"

namespace rgflow {

using Json = nlohmann::ordered_json;

/// ParamSeq <-> JSON. Schema: {"omega": x, "<name>": {"prefix": [...],
/// "tail": {"rule": "zero"|"constant"|"geometric", "value": c, "ratio": r}}}
/// Missing sequences default to zero (lambda defaults to constant 2).
/// Unknown keys are rejected.
ParamSeq params_from_json(const Json& j);
Json params_to_json(const ParamSeq& p);

/// Model / instance configs (the CLI payloads). Unknown keys rejected.
ModelConfig model_from_json(const Json& j);
InstanceConfig instance_from_json(const Json& j);

Json report_to_json(const A1Report& r);
Json report_to_json(const A2Report& r);
Json report_to_json(const A3Report& r);
Json report_to_json(const SolveReport& r);
Json solution_to_json(const QuadraticSolution& sol);
Json flow_result_to_json(const FlowResult& res, const Instance& inst);
Json continuity_to_json(const ContinuityReport& rep);

/// Quadratic trajectory CSV: j, gbar, zbar, mubar, chi.
std::string solution_to_csv(const QuadraticSolution& sol);

/// Flow trajectory CSV: j, K..., g, z, mu plus the four per-j ball ratios.
std::string trajectory_to_csv(const FlowSequence& x, const Instance& inst);

/// Per-j residual-weighted defects of the flow equation under Phi^t
/// (diagnostic companion of the flow result).
std::string residuals_to_csv(const FlowSequence& x, double t, const Instance& inst);

/// Atomic write: temp file in the target directory, then rename.
void write_file_atomic(const std::string& path, const std::string& content);

/// Serialize with a detached metadata block; everything outside "meta" is
/// byte-identical across reruns with equal config and seed.
std::string render_report(Json body);

} // namespace rgflow
