#pragma once

#include "okf/okf_train.hpp"

#include <json.hpp>

#include <filesystem>
#include <optional>
#include <string>

namespace okf {

inline constexpr int kParamsSchemaVersion = 1;

/// Persisted noise parameters. `method` is "estimated", "oracle" or
/// "optimized"; only optimized parameters carry theta.
struct ParamsFile {
  int schema_version = kParamsSchemaVersion;
  int dim_x = 0;
  int dim_z = 0;
  std::string method = "estimated";
  std::optional<NoiseParams> theta;
  Mat Q;
  Mat R;
  std::string model_fingerprint;
  nlohmann::json train_config = nullptr;
  nlohmann::json final_losses = nullptr;
  nlohmann::json provenance = nlohmann::json::object();

  static ParamsFile from_estimate(const Mat& q, const Mat& r, std::string method, std::string fingerprint);
  static ParamsFile from_trained(const NoiseParams& p, std::string fingerprint);
};

nlohmann::json to_json(const ParamsFile& p);
ParamsFile params_from_json(const nlohmann::json& j);

/// Doubles are written with round-trip precision, so theta reads back bit-exactly.
void write_params(const ParamsFile& p, const std::filesystem::path& path);
ParamsFile read_params(const std::filesystem::path& path);

/// Writes JSON text atomically (temporary file + rename), creating parent directories.
void write_json_file(const nlohmann::json& j, const std::filesystem::path& path);
nlohmann::json read_json_file(const std::filesystem::path& path);

}  // namespace okf
