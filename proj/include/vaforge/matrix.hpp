#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "vaforge/errors.hpp"

namespace vaforge {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// Dense N x D numeric features with row ids and named columns.
struct FeatureMatrix {
  std::vector<std::string> ids;
  std::vector<std::string> columns;
  Matrix values;

  FeatureMatrix() = default;
  FeatureMatrix(std::vector<std::string> row_ids, std::vector<std::string> column_names, Matrix data)
      : ids(std::move(row_ids)), columns(std::move(column_names)), values(std::move(data)) {
    if (static_cast<std::size_t>(values.rows()) != ids.size() ||
        static_cast<std::size_t>(values.cols()) != columns.size()) {
      throw DimensionError("feature matrix shape does not match ids/columns");
    }
  }

  std::size_t rows() const noexcept { return ids.size(); }
  std::size_t cols() const noexcept { return columns.size(); }

  FeatureMatrix select_rows(const std::vector<std::size_t>& rows_to_keep) const {
    Matrix out(static_cast<Eigen::Index>(rows_to_keep.size()), values.cols());
    std::vector<std::string> out_ids;
    out_ids.reserve(rows_to_keep.size());
    for (std::size_t r = 0; r < rows_to_keep.size(); ++r) {
      out.row(static_cast<Eigen::Index>(r)) = values.row(static_cast<Eigen::Index>(rows_to_keep[r]));
      out_ids.push_back(ids.at(rows_to_keep[r]));
    }
    return FeatureMatrix(std::move(out_ids), columns, std::move(out));
  }

  // Rows reordered to match `wanted` ids; every id must be present.
  FeatureMatrix select_ids(const std::vector<std::string>& wanted) const {
    std::unordered_map<std::string, std::size_t> pos;
    for (std::size_t i = 0; i < ids.size(); ++i) pos.emplace(ids[i], i);
    std::vector<std::size_t> rows_to_keep;
    rows_to_keep.reserve(wanted.size());
    for (const auto& id : wanted) {
      const auto it = pos.find(id);
      if (it == pos.end()) throw AlignmentError("id '" + id + "' not present in feature matrix");
      rows_to_keep.push_back(it->second);
    }
    return select_rows(rows_to_keep);
  }
};

inline void require_finite(const Matrix& m, const char* what) {
  if (!m.allFinite()) throw NonFiniteError(std::string(what) + " contains NaN or Inf");
}

// N x C row-stochastic class probabilities keyed by record id.
struct ProbMatrix {
  std::vector<std::string> ids;
  std::vector<std::string> classes;
  Matrix values;

  static constexpr double kRowTolerance = 1e-6;

  ProbMatrix() = default;
  ProbMatrix(std::vector<std::string> row_ids, std::vector<std::string> class_names, Matrix data)
      : ids(std::move(row_ids)), classes(std::move(class_names)), values(std::move(data)) {
    if (static_cast<std::size_t>(values.rows()) != ids.size() ||
        static_cast<std::size_t>(values.cols()) != classes.size()) {
      throw DimensionError("probability matrix shape does not match ids/classes");
    }
    std::unordered_set<std::string> seen;
    for (const auto& id : ids) {
      if (!seen.insert(id).second) throw DuplicateIdError("duplicate id '" + id + "' in probability matrix");
    }
    for (Eigen::Index r = 0; r < values.rows(); ++r) {
      if ((values.row(r).array() < 0.0).any() || !values.row(r).allFinite()) {
        throw StochasticityError("row '" + ids[static_cast<std::size_t>(r)] + "' has negative or non-finite entries");
      }
      if (std::abs(values.row(r).sum() - 1.0) > kRowTolerance) {
        throw StochasticityError("row '" + ids[static_cast<std::size_t>(r)] + "' does not sum to 1");
      }
    }
  }

  std::size_t rows() const noexcept { return ids.size(); }

  // Same rows in `wanted` id order and `wanted_classes` column order;
  // alignment is always by name.
  ProbMatrix aligned(const std::vector<std::string>& wanted, const std::vector<std::string>& wanted_classes) const {
    std::unordered_map<std::string, Eigen::Index> rpos, cpos;
    for (std::size_t i = 0; i < ids.size(); ++i) rpos.emplace(ids[i], static_cast<Eigen::Index>(i));
    for (std::size_t i = 0; i < classes.size(); ++i) cpos.emplace(classes[i], static_cast<Eigen::Index>(i));
    if (wanted_classes.size() != classes.size()) throw AlignmentError("class lists differ");
    std::vector<Eigen::Index> cols;
    for (const auto& c : wanted_classes) {
      const auto it = cpos.find(c);
      if (it == cpos.end()) throw AlignmentError("class '" + c + "' missing from probability matrix");
      cols.push_back(it->second);
    }
    Matrix out(static_cast<Eigen::Index>(wanted.size()), static_cast<Eigen::Index>(cols.size()));
    for (std::size_t r = 0; r < wanted.size(); ++r) {
      const auto it = rpos.find(wanted[r]);
      if (it == rpos.end()) throw AlignmentError("id '" + wanted[r] + "' missing from probability matrix");
      for (std::size_t c = 0; c < cols.size(); ++c) {
        out(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = values(it->second, cols[c]);
      }
    }
    ProbMatrix pm;
    pm.ids = wanted;
    pm.classes = wanted_classes;
    pm.values = std::move(out);
    return pm;
  }
};

// Argmax with ties broken toward the lowest class index.
inline int argmax_row(const Matrix& m, Eigen::Index r) {
  int best = 0;
  for (Eigen::Index c = 1; c < m.cols(); ++c) {
    if (m(r, c) > m(r, best)) best = static_cast<int>(c);
  }
  return best;
}

inline std::vector<int> argmax_labels(const ProbMatrix& p) {
  std::vector<int> out(p.rows());
  for (std::size_t r = 0; r < out.size(); ++r) out[r] = argmax_row(p.values, static_cast<Eigen::Index>(r));
  return out;
}

}  // namespace vaforge
