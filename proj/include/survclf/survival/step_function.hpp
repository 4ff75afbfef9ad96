#pragma once

#include <algorithm>
#include <cstddef>
#include <utility>
#include <vector>

namespace survclf::survival {

// Right-continuous step function on a strictly increasing grid. Before the
// first grid point the function equals `initial` (1 for survival, 0 for
// cumulative hazard).
class StepFunction {
 public:
  StepFunction() = default;
  StepFunction(std::vector<double> grid, std::vector<double> values, double initial)
      : grid_(std::move(grid)), values_(std::move(values)), initial_(initial) {}

  double operator()(double t) const {
    const auto it = std::upper_bound(grid_.begin(), grid_.end(), t);
    if (it == grid_.begin()) return initial_;
    return values_[static_cast<std::size_t>(it - grid_.begin()) - 1];
  }

  const std::vector<double>& grid() const { return grid_; }
  const std::vector<double>& values() const { return values_; }
  double initial() const { return initial_; }
  std::size_t size() const { return grid_.size(); }
  bool empty() const { return grid_.empty(); }

  // Value at the last grid point, or `initial` for an empty function.
  double last() const { return values_.empty() ? initial_ : values_.back(); }

 private:
  std::vector<double> grid_;
  std::vector<double> values_;
  double initial_ = 0.0;
};

}  // namespace survclf::survival
