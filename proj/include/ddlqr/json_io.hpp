#pragma once

#include <stdexcept>
#include <string>

#include <json.hpp>

#include "ddlqr/linalg.hpp"

// JSON <-> Eigen conversions. Matrices are stored as nested arrays of rows
// (row-major); vectors as flat arrays. Errors carry the JSON field path.
namespace ddlqr {

struct JsonError : std::runtime_error {
  explicit JsonError(const std::string& path, const std::string& what)
      : std::runtime_error(path + ": " + what) {}
};

inline nlohmann::json to_json(const MatrixXd& M) {
  nlohmann::json rows = nlohmann::json::array();
  for (int i = 0; i < M.rows(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (int j = 0; j < M.cols(); ++j) row.push_back(M(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline nlohmann::json to_json(const VectorXd& v) {
  nlohmann::json arr = nlohmann::json::array();
  for (int i = 0; i < v.size(); ++i) arr.push_back(v[i]);
  return arr;
}

inline VectorXd vector_from_json(const nlohmann::json& j, const std::string& path) {
  if (!j.is_array()) throw JsonError(path, "expected an array of numbers");
  VectorXd v(j.size());
  for (size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) throw JsonError(path + "[" + std::to_string(i) + "]", "expected a number");
    v[static_cast<int>(i)] = j[i].get<double>();
  }
  return v;
}

// Accepts a nested array of rows, or a flat numeric array (read as one row),
// or a plain number (1x1).
inline MatrixXd matrix_from_json(const nlohmann::json& j, const std::string& path) {
  if (j.is_number()) {
    MatrixXd M(1, 1);
    M(0, 0) = j.get<double>();
    return M;
  }
  if (!j.is_array() || j.empty()) throw JsonError(path, "expected a non-empty array");
  if (j[0].is_number()) {
    MatrixXd M(1, j.size());
    for (size_t c = 0; c < j.size(); ++c) {
      if (!j[c].is_number()) throw JsonError(path, "mixed row content");
      M(0, static_cast<int>(c)) = j[c].get<double>();
    }
    return M;
  }
  const size_t cols = j[0].size();
  MatrixXd M(j.size(), cols);
  for (size_t r = 0; r < j.size(); ++r) {
    const std::string rpath = path + "[" + std::to_string(r) + "]";
    if (!j[r].is_array() || j[r].size() != cols) throw JsonError(rpath, "ragged or non-array row");
    for (size_t c = 0; c < cols; ++c) {
      if (!j[r][c].is_number()) throw JsonError(rpath, "expected numbers");
      M(static_cast<int>(r), static_cast<int>(c)) = j[r][c].get<double>();
    }
  }
  return M;
}

inline const nlohmann::json& require_field(const nlohmann::json& j, const std::string& key,
                                           const std::string& path) {
  if (!j.is_object() || !j.contains(key)) throw JsonError(path + "." + key, "missing required field");
  return j.at(key);
}

inline int int_from_json(const nlohmann::json& j, const std::string& path) {
  if (!j.is_number_integer()) throw JsonError(path, "expected an integer");
  return j.get<int>();
}

inline double double_from_json(const nlohmann::json& j, const std::string& path) {
  if (!j.is_number()) throw JsonError(path, "expected a number");
  return j.get<double>();
}

}  // namespace ddlqr
