#pragma once

#include <algorithm>
#include <numeric>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "survclf/survival/step_function.hpp"

namespace survclf::survival {

// Distinct event times with deaths and number at risk.
struct RiskTable {
  std::vector<int> time;
  std::vector<double> deaths;
  std::vector<double> at_risk;
};

// `order` must list sample positions sorted ascending by time.
inline RiskTable risk_table_sorted(std::span<const int> times, std::span<const int> events,
                                   std::span<const std::size_t> order) {
  RiskTable rt;
  double remaining = static_cast<double>(order.size());
  for (std::size_t k = 0; k < order.size();) {
    const int t = times[order[k]];
    double d = 0, n = 0;
    for (; k < order.size() && times[order[k]] == t; ++k) {
      ++n;
      d += events[order[k]] ? 1 : 0;
    }
    if (d > 0) {
      rt.time.push_back(t);
      rt.deaths.push_back(d);
      rt.at_risk.push_back(remaining);
    }
    remaining -= n;
  }
  return rt;
}

inline RiskTable risk_table(std::span<const int> times, std::span<const int> events) {
  if (times.size() != events.size()) throw std::invalid_argument("times/events length mismatch");
  if (times.empty()) throw std::invalid_argument("empty input");
  std::vector<std::size_t> order(times.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return times[a] < times[b]; });
  return risk_table_sorted(times, events, order);
}

inline StepFunction kaplan_meier(const RiskTable& rt) {
  std::vector<double> grid, values;
  double s = 1.0;
  for (std::size_t j = 0; j < rt.time.size(); ++j) {
    s *= 1.0 - rt.deaths[j] / rt.at_risk[j];
    grid.push_back(rt.time[j]);
    values.push_back(s);
  }
  return {std::move(grid), std::move(values), 1.0};
}

inline StepFunction nelson_aalen(const RiskTable& rt) {
  std::vector<double> grid, values;
  double h = 0.0;
  for (std::size_t j = 0; j < rt.time.size(); ++j) {
    h += rt.deaths[j] / rt.at_risk[j];
    grid.push_back(rt.time[j]);
    values.push_back(h);
  }
  return {std::move(grid), std::move(values), 0.0};
}

// Product-limit survival estimate. Throws std::invalid_argument on empty input.
inline StepFunction kaplan_meier(std::span<const int> times, std::span<const int> events) {
  return kaplan_meier(risk_table(times, events));
}

// Cumulative hazard, sum of d/n over event times.
inline StepFunction nelson_aalen(std::span<const int> times, std::span<const int> events) {
  return nelson_aalen(risk_table(times, events));
}

// Log-rank chi-square (sum(dL - eL))^2 / sum(V) with the hypergeometric
// variance per distinct event time. Walks `order` (positions sorted by time)
// once. Returns nullopt when one group is empty and 0 when the variance is 0.
inline std::optional<double> logrank_sorted(std::span<const int> times, std::span<const int> events,
                                            std::span<const std::size_t> order,
                                            const auto& in_left) {
  double n = static_cast<double>(order.size());
  double n_left = 0;
  for (auto i : order) n_left += in_left(i) ? 1 : 0;
  if (n_left == 0 || n_left == n) return std::nullopt;
  double diff = 0, var = 0;
  for (std::size_t k = 0; k < order.size();) {
    const int t = times[order[k]];
    double d = 0, d_left = 0, m = 0, m_left = 0;
    for (; k < order.size() && times[order[k]] == t; ++k) {
      const auto i = order[k];
      const bool left = in_left(i);
      ++m;
      m_left += left ? 1 : 0;
      if (events[i]) {
        ++d;
        d_left += left ? 1 : 0;
      }
    }
    if (d > 0) {
      const double p = n_left / n;
      diff += d_left - d * p;
      if (n > 1) var += d * p * (1 - p) * (n - d) / (n - 1);
    }
    n -= m;
    n_left -= m_left;
  }
  if (!(var > 0)) return 0.0;
  return diff * diff / var;
}

// Group flags: nonzero means left.
inline std::optional<double> logrank_statistic(std::span<const int> times,
                                               std::span<const int> events,
                                               std::span<const int> left) {
  if (times.size() != events.size() || times.size() != left.size()) {
    throw std::invalid_argument("logrank_statistic: length mismatch");
  }
  std::vector<std::size_t> order(times.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return times[a] < times[b]; });
  return logrank_sorted(times, events, order, [&](std::size_t i) { return left[i] != 0; });
}

}  // namespace survclf::survival
