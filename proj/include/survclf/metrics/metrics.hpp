#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace survclf::metrics {

// Harrell's pair counts. A pair (i, j) is comparable when t_i < t_j and
// event_i = 1; it is concordant when risk_i > risk_j.
struct ConcordanceCounts {
  std::int64_t concordant = 0;
  std::int64_t tied = 0;
  std::int64_t comparable = 0;

  std::optional<double> index() const {
    if (comparable == 0) return std::nullopt;
    return (static_cast<double>(concordant) + 0.5 * static_cast<double>(tied)) /
           static_cast<double>(comparable);
  }
};

// O(n log n): walk times from largest to smallest, keeping a Fenwick tree over
// risk ranks of all strictly later samples.
inline ConcordanceCounts concordance_counts(std::span<const int> times, std::span<const int> events,
                                            std::span<const double> risks) {
  const std::size_t n = times.size();
  if (events.size() != n || risks.size() != n) {
    throw std::invalid_argument("c_index: length mismatch");
  }
  std::vector<double> sorted_risks(risks.begin(), risks.end());
  std::sort(sorted_risks.begin(), sorted_risks.end());
  sorted_risks.erase(std::unique(sorted_risks.begin(), sorted_risks.end()), sorted_risks.end());
  auto rank = [&](double r) {
    return static_cast<std::size_t>(std::lower_bound(sorted_risks.begin(), sorted_risks.end(), r) -
                                    sorted_risks.begin());
  };
  std::vector<std::int64_t> tree(sorted_risks.size() + 1, 0);
  auto add = [&](std::size_t pos) {
    for (++pos; pos < tree.size(); pos += pos & (~pos + 1)) ++tree[pos];
  };
  auto prefix = [&](std::size_t count) {  // samples with rank < count
    std::int64_t s = 0;
    for (; count > 0; count -= count & (~count + 1)) s += tree[count];
    return s;
  };

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return times[a] > times[b] || (times[a] == times[b] && a < b);
  });
  ConcordanceCounts c;
  std::int64_t inserted = 0;
  for (std::size_t k = 0; k < n;) {
    std::size_t end = k;
    while (end < n && times[order[end]] == times[order[k]]) ++end;
    for (std::size_t q = k; q < end; ++q) {
      const auto i = order[q];
      if (!events[i]) continue;
      const auto r = rank(risks[i]);
      const auto below = prefix(r);
      const auto at_or_below = prefix(r + 1);
      c.concordant += below;
      c.tied += at_or_below - below;
      c.comparable += inserted;
    }
    for (std::size_t q = k; q < end; ++q) add(rank(risks[order[q]]));
    inserted += static_cast<std::int64_t>(end - k);
    k = end;
  }
  return c;
}

inline std::optional<double> c_index(std::span<const int> times, std::span<const int> events,
                                     std::span<const double> risks) {
  return concordance_counts(times, events, risks).index();
}

struct Confusion {
  std::int64_t tp = 0, fp = 0, tn = 0, fn = 0;
};

inline Confusion confusion(std::span<const int> truth, std::span<const int> predicted) {
  if (truth.size() != predicted.size()) throw std::invalid_argument("confusion: length mismatch");
  Confusion c;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i]) {
      (predicted[i] ? c.tp : c.fn)++;
    } else {
      (predicted[i] ? c.fp : c.tn)++;
    }
  }
  return c;
}

// Undefined (zero-denominator) entries are nullopt rather than 0.
struct ConfusionMetrics {
  std::optional<double> accuracy, precision, recall, npv, specificity, f1;
};

inline std::optional<double> ratio(std::int64_t num, std::int64_t den) {
  if (den == 0) return std::nullopt;
  return static_cast<double>(num) / static_cast<double>(den);
}

inline ConfusionMetrics confusion_metrics(const Confusion& c) {
  ConfusionMetrics m;
  m.accuracy = ratio(c.tp + c.tn, c.tp + c.tn + c.fp + c.fn);
  m.precision = ratio(c.tp, c.tp + c.fp);
  m.recall = ratio(c.tp, c.tp + c.fn);
  m.npv = ratio(c.tn, c.tn + c.fn);
  m.specificity = ratio(c.tn, c.tn + c.fp);
  if (m.precision && m.recall) {
    const double p = *m.precision, r = *m.recall;
    m.f1 = p + r > 0 ? 2 * p * r / (p + r) : 0.0;
  }
  return m;
}

inline ConfusionMetrics confusion_metrics(std::span<const int> truth, std::span<const int> predicted) {
  return confusion_metrics(confusion(truth, predicted));
}

// F1 used as an optimisation objective, with undefined treated as 0.
inline double f1_or_zero(const Confusion& c) {
  const auto denom = 2 * c.tp + c.fp + c.fn;
  return denom == 0 ? 0.0 : 2.0 * static_cast<double>(c.tp) / static_cast<double>(denom);
}

// Mann-Whitney AUROC with midranks for tied scores. Higher score = positive.
inline std::optional<double> auroc(std::span<const int> truth, std::span<const double> scores) {
  const std::size_t n = truth.size();
  if (scores.size() != n) throw std::invalid_argument("auroc: length mismatch");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double rank_sum = 0, n_pos = 0;
  for (std::size_t k = 0; k < n;) {
    std::size_t end = k;
    while (end < n && scores[order[end]] == scores[order[k]]) ++end;
    const double midrank = (static_cast<double>(k + 1) + static_cast<double>(end)) / 2.0;
    for (std::size_t q = k; q < end; ++q) {
      if (truth[order[q]]) {
        rank_sum += midrank;
        ++n_pos;
      }
    }
    k = end;
  }
  const double n_neg = static_cast<double>(n) - n_pos;
  if (n_pos == 0 || n_neg == 0) return std::nullopt;
  return (rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg);
}

// Step-wise area under the precision-recall curve (average precision):
// sum over distinct thresholds of (R_k - R_k-1) * P_k.
inline std::optional<double> auprc(std::span<const int> truth, std::span<const double> scores) {
  const std::size_t n = truth.size();
  if (scores.size() != n) throw std::invalid_argument("auprc: length mismatch");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  double total_pos = 0;
  for (int t : truth) total_pos += t ? 1 : 0;
  if (total_pos == 0) return std::nullopt;
  double tp = 0, fp = 0, prev_recall = 0, area = 0;
  for (std::size_t k = 0; k < n;) {
    std::size_t end = k;
    while (end < n && scores[order[end]] == scores[order[k]]) ++end;
    for (std::size_t q = k; q < end; ++q) (truth[order[q]] ? tp : fp) += 1;
    const double recall = tp / total_pos;
    area += (recall - prev_recall) * (tp / (tp + fp));
    prev_recall = recall;
    k = end;
  }
  return area;
}

struct MetricsReport {
  std::optional<double> c_index, accuracy, precision, recall, npv, specificity, auroc, auprc, f1;
};

}  // namespace survclf::metrics
