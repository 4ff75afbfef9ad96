#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "survclf/core/error.hpp"

namespace survclf::tree {

// Dense row-major matrix of category indices.
class FeatureMatrix {
 public:
  FeatureMatrix() = default;
  FeatureMatrix(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), data_(rows * cols) {}

  static FeatureMatrix from_rows(const std::vector<std::vector<int>>& rows, std::size_t cols) {
    FeatureMatrix m(rows.size(), cols);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (rows[i].size() != cols) throw DataError("feature row length mismatch");
      std::copy(rows[i].begin(), rows[i].end(), m.data_.begin() + i * cols);
    }
    return m;
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  int operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
  int& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  std::span<const int> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }
  std::span<int> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  void push_row(std::span<const int> r) {
    if (rows_ == 0 && cols_ == 0) cols_ = r.size();
    if (r.size() != cols_) throw DataError("feature row length mismatch");
    data_.insert(data_.end(), r.begin(), r.end());
    ++rows_;
  }

 private:
  std::size_t rows_ = 0, cols_ = 0;
  std::vector<int> data_;
};

// Set of categories (arity <= 64) sent to the left child.
using CategorySet = std::uint64_t;

constexpr bool contains(CategorySet s, int category) {
  return category >= 0 && category < 64 && ((s >> category) & 1U);
}

inline std::vector<int> members(CategorySet s) {
  std::vector<int> out;
  for (int c = 0; c < 64; ++c) {
    if (contains(s, c)) out.push_back(c);
  }
  return out;
}

// Lexicographic order of the sorted member lists.
inline bool lex_less(CategorySet a, CategorySet b) {
  const auto ma = members(a), mb = members(b);
  return std::lexicographical_compare(ma.begin(), ma.end(), mb.begin(), mb.end());
}

struct Node {
  int feature = -1;
  CategorySet left_set = 0;
  int left = -1;
  int right = -1;
  int leaf = -1;  // index into the tree's leaf table, >= 0 for leaves

  bool is_leaf() const { return leaf >= 0; }
};

// Root-to-leaf walk; returns the leaf table index.
inline int find_leaf(const std::vector<Node>& nodes, std::span<const int> x) {
  int id = 0;
  while (!nodes[id].is_leaf()) {
    const auto& n = nodes[id];
    id = contains(n.left_set, x[n.feature]) ? n.left : n.right;
  }
  return nodes[id].leaf;
}

inline void check_arities(const FeatureMatrix& x, const std::vector<int>& arities) {
  if (x.cols() != arities.size()) {
    throw DataError("feature count " + std::to_string(x.cols()) + " does not match arity table (" +
                    std::to_string(arities.size()) + ")");
  }
  for (std::size_t r = 0; r < x.rows(); ++r) {
    for (std::size_t c = 0; c < x.cols(); ++c) {
      if (x(r, c) < 0 || x(r, c) >= arities[c]) {
        throw DataError("feature " + std::to_string(c) + " value " + std::to_string(x(r, c)) +
                        " outside arity " + std::to_string(arities[c]));
      }
    }
  }
}

inline void check_row(std::span<const int> x, const std::vector<int>& arities) {
  if (x.size() != arities.size()) throw DataError("feature vector length does not match model");
  for (std::size_t c = 0; c < x.size(); ++c) {
    if (x[c] < 0 || x[c] >= arities[c]) {
      throw DataError("feature " + std::to_string(c) + " value out of range");
    }
  }
}

inline int default_mtry(std::size_t n_features) {
  return std::max(1, static_cast<int>(std::ceil(std::sqrt(static_cast<double>(n_features)))));
}

// Candidate left sets for one feature in one node: categories present in the
// node are ordered by event rate (ties by category index) and every proper
// prefix of that order is a candidate. This is exact for binary features.
struct CategoryStats {
  std::vector<double> count;
  std::vector<double> events;
};

inline std::vector<CategorySet> ordered_cuts(const CategoryStats& st) {
  std::vector<int> present;
  for (int c = 0; c < static_cast<int>(st.count.size()); ++c) {
    if (st.count[c] > 0) present.push_back(c);
  }
  if (present.size() < 2) return {};
  std::stable_sort(present.begin(), present.end(), [&](int a, int b) {
    // events_a / count_a < events_b / count_b without division
    return st.events[a] * st.count[b] < st.events[b] * st.count[a];
  });
  std::vector<CategorySet> cuts;
  CategorySet s = 0;
  for (std::size_t j = 0; j + 1 < present.size(); ++j) {
    s |= CategorySet{1} << present[j];
    cuts.push_back(s);
  }
  return cuts;
}

// Best split so far under the deterministic tie-break: higher score, then
// lower feature index, then lexicographically smaller left set.
struct SplitChoice {
  double score = 0.0;
  int feature = -1;
  CategorySet left_set = 0;

  bool valid() const { return feature >= 0; }

  void offer(double s, int f, CategorySet set) {
    if (!(s > 0)) return;
    if (!valid() || s > score ||
        (s == score && (f < feature || (f == feature && lex_less(set, left_set))))) {
      score = s;
      feature = f;
      left_set = set;
    }
  }
};

}  // namespace survclf::tree
