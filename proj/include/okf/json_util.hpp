#pragma once

#include "okf/common.hpp"

#include <json.hpp>

namespace okf {

nlohmann::json to_json(const Mat& m);
nlohmann::json to_json(const Vec& v);
/// Throws SchemaError on ragged or non-numeric input.
Mat matrix_from_json(const nlohmann::json& j);
Vec vector_from_json(const nlohmann::json& j);

}  // namespace okf
