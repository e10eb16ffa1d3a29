#include "okf/json_util.hpp"

namespace okf {

using nlohmann::json;

json to_json(const Mat& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

json to_json(const Vec& v) {
  json out = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v[i]);
  return out;
}

Mat matrix_from_json(const json& j) {
  if (!j.is_array()) throw SchemaError("matrix must be an array of rows");
  const auto rows = static_cast<Eigen::Index>(j.size());
  const auto cols = rows == 0 ? 0 : static_cast<Eigen::Index>(j[0].size());
  Mat m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    const auto& row = j[static_cast<size_t>(i)];
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols) throw SchemaError("ragged matrix");
    for (Eigen::Index k = 0; k < cols; ++k) {
      const auto& e = row[static_cast<size_t>(k)];
      if (!e.is_number()) throw SchemaError("matrix entry is not a number");
      m(i, k) = e.get<double>();
    }
  }
  return m;
}

Vec vector_from_json(const json& j) {
  if (!j.is_array()) throw SchemaError("vector must be an array");
  Vec v(static_cast<Eigen::Index>(j.size()));
  for (size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) throw SchemaError("vector entry is not a number");
    v[static_cast<Eigen::Index>(i)] = j[i].get<double>();
  }
  return v;
}

}  // namespace okf
