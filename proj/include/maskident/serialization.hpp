#pragma once

#include <string>

#include <nlohmann/json.hpp>

#include "maskident/counterexamples.hpp"
#include "maskident/models.hpp"
#include "maskident/recovery.hpp"
#include "maskident/tensor.hpp"

namespace maskident {

using Json = nlohmann::json;

/// Row-major: one inner array per row.
Json matrix_to_json(const Matrix& m);
/// `where` prefixes error messages (e.g. "config.model.emission").
Matrix matrix_from_json(const Json& j, const std::string& where = "matrix");
Json vector_to_json(const Vector& v);
Vector vector_from_json(const Json& j, const std::string& where = "vector");

/// {"kind":"hmm"|"ghmm","d","k","emission"|"means","transition"}.
Json params_to_json(const ModelParams& params);
ModelParams params_from_json(const Json& j, const std::string& where = "model");

/// {"dims":[n1,n2,n3],"data":[flat, first index slowest]}.
Json tensor_to_json(const Tensor3& t);
Tensor3 tensor_from_json(const Json& j, const std::string& where = "tensor");

/// Wall time is left out unless requested so reruns serialise identically.
Json report_to_json(const RecoveryReport& report, bool include_timing = false);
Json pair_to_json(const CounterexamplePair& pair);
Json validation_to_json(const CounterexampleReport& report);
Json certificate_to_json(const HouseholderCertificate& cert);

}  // namespace maskident
