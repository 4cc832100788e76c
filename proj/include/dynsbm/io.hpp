#pragma once

#include <json.hpp>
#include <string>

#include "dynsbm/experiment.hpp"
#include "dynsbm/params.hpp"
#include "dynsbm/report.hpp"
#include "dynsbm/sampler.hpp"
#include "dynsbm/theory.hpp"

namespace dynsbm {

using Json = nlohmann::json;

// ModelParams <-> {"Q":int, "gamma":[[..]], "pi":[[..]] or [[[..]], ...],
//                  "delta":float, "zeta":float}
Json params_to_json(const ModelParams& params);
ModelParams params_from_json(const Json& j);

// GraphSequence <-> {"n":.., "T":.., "edges":[[t,i,j], ...]} with 0-based
// indices and only the upper-triangle 1-entries, sorted by (t,i,j).
Json graphs_to_json(const GraphSequence& x);
GraphSequence graphs_from_json(const Json& j);

// LatentPaths <-> {"labels":[[...]]}, n rows of T entries, 1-based classes.
Json labels_to_json(const LatentPaths& z);
LatentPaths labels_from_json(const Json& j);

Json report_to_json(const EstimationReport& report);
Json concentration_to_json(const ConcentrationReport& report);

ExperimentConfig experiment_config_from_json(const Json& j);

Json matrix_to_json(const Matrix& m);
Matrix matrix_from_json(const Json& j);

Json read_json_file(const std::string& path);
void write_json_file(const std::string& path, const Json& j);
void write_text_file(const std::string& path, const std::string& text);
std::string read_text_file(const std::string& path);

// Shortest round-trip decimal form; NaN prints as "nan".
std::string format_double(double v);

}  // namespace dynsbm
