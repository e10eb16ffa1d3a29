#include "okf/params_io.hpp"

#include "okf/json_util.hpp"

#include <fstream>
#include <sstream>

namespace okf {

namespace fs = std::filesystem;
using nlohmann::json;

ParamsFile ParamsFile::from_estimate(const Mat& q, const Mat& r, std::string method, std::string fingerprint) {
  ParamsFile p;
  p.dim_x = static_cast<int>(q.rows());
  p.dim_z = static_cast<int>(r.rows());
  p.method = std::move(method);
  p.Q = q;
  p.R = r;
  p.model_fingerprint = std::move(fingerprint);
  return p;
}

ParamsFile ParamsFile::from_trained(const NoiseParams& np, std::string fingerprint) {
  ParamsFile p;
  p.dim_x = np.dim_x;
  p.dim_z = np.dim_z;
  p.method = "optimized";
  p.theta = np;
  p.Q = np.Q();
  p.R = np.R();
  p.model_fingerprint = std::move(fingerprint);
  return p;
}

json to_json(const ParamsFile& p) {
  json j;
  j["schema_version"] = p.schema_version;
  j["d_x"] = p.dim_x;
  j["d_z"] = p.dim_z;
  j["method"] = p.method;
  if (p.theta) {
    j["parameterization"] = to_string(p.theta->kind);
    j["theta_Q"] = to_json(p.theta->theta_q);
    j["theta_R"] = to_json(p.theta->theta_r);
  } else {
    j["parameterization"] = nullptr;
    j["theta_Q"] = nullptr;
    j["theta_R"] = nullptr;
  }
  j["Q"] = to_json(p.Q);
  j["R"] = to_json(p.R);
  j["model_fingerprint"] = p.model_fingerprint;
  j["train_config"] = p.train_config;
  j["final_losses"] = p.final_losses;
  j["provenance"] = p.provenance;
  return j;
}

ParamsFile params_from_json(const json& j) {
  ParamsFile p;
  try {
    p.schema_version = j.at("schema_version").get<int>();
    if (p.schema_version != kParamsSchemaVersion) {
      throw SchemaError("params: unsupported schema_version " + std::to_string(p.schema_version));
    }
    p.dim_x = j.at("d_x").get<int>();
    p.dim_z = j.at("d_z").get<int>();
    p.method = j.at("method").get<std::string>();
    p.Q = matrix_from_json(j.at("Q"));
    p.R = matrix_from_json(j.at("R"));
    if (p.Q.rows() != p.dim_x || p.Q.cols() != p.dim_x || p.R.rows() != p.dim_z || p.R.cols() != p.dim_z) {
      throw SchemaError("params: Q/R shape differs from d_x/d_z");
    }
    if (!j.at("theta_Q").is_null()) {
      const auto kind = parse_parameterization(j.at("parameterization").get<std::string>());
      if (!kind) throw SchemaError("params: unknown parameterization");
      NoiseParams np;
      np.kind = *kind;
      np.dim_x = p.dim_x;
      np.dim_z = p.dim_z;
      np.theta_q = vector_from_json(j.at("theta_Q"));
      np.theta_r = vector_from_json(j.at("theta_R"));
      const bool diag = np.kind == Parameterization::diagonal;
      if (np.theta_q.size() != (diag ? p.dim_x : CholeskyVector::size_for(p.dim_x)) ||
          np.theta_r.size() != (diag ? p.dim_z : CholeskyVector::size_for(p.dim_z))) {
        throw SchemaError("params: theta length differs from the parameterization");
      }
      p.theta = np;
    }
    p.model_fingerprint = j.value("model_fingerprint", std::string());
    p.train_config = j.value("train_config", json(nullptr));
    p.final_losses = j.value("final_losses", json(nullptr));
    p.provenance = j.value("provenance", json::object());
  } catch (const json::exception& e) {
    throw SchemaError(std::string("params: ") + e.what());
  }
  return p;
}

void write_json_file(const json& j, const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    if (!out) throw Error("cannot write " + tmp.string());
    out << j.dump(2) << '\n';
    if (!out) throw Error("write failed for " + tmp.string());
  }
  fs::rename(tmp, path);
}

json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

void write_params(const ParamsFile& p, const fs::path& path) { write_json_file(to_json(p), path); }

ParamsFile read_params(const fs::path& path) {
  try {
    return params_from_json(read_json_file(path));
  } catch (const SchemaError& e) {
    throw SchemaError(path.string() + ": " + e.what());
  }
}

}  // namespace okf
