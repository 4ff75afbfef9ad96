#include "survclf/metrics/metrics.hpp"

#include <algorithm>
#include <set>

#include "gtest/gtest.h"
#include "survclf/core/rng.hpp"
#include "survclf/metrics/evaluate.hpp"

namespace survclf::metrics {
namespace {

double brute_c_index(const std::vector<int>& t, const std::vector<int>& e, const std::vector<double>& r) {
  double num = 0, den = 0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    for (std::size_t j = 0; j < t.size(); ++j) {
      if (t[i] < t[j] && e[i]) {
        den += 1;
        if (r[i] > r[j]) num += 1;
        else if (r[i] == r[j]) num += 0.5;
      }
    }
  }
  return num / den;
}

// Trapezoid under the ROC polyline traced by every distinct threshold.
double trapezoid_auroc(const std::vector<int>& y, const std::vector<double>& s) {
  std::set<double, std::greater<>> th(s.begin(), s.end());
  double pos = std::count(y.begin(), y.end(), 1), neg = static_cast<double>(y.size()) - pos;
  double px = 0, py = 0, area = 0;
  for (double c : th) {
    double tp = 0, fp = 0;
    for (std::size_t i = 0; i < y.size(); ++i) {
      if (s[i] >= c) (y[i] ? tp : fp) += 1;
    }
    const double x = fp / neg, v = tp / pos;
    area += (x - px) * (v + py) / 2;
    px = x;
    py = v;
  }
  return area;
}

// Average precision recomputed from scratch at every distinct threshold.
double enumerated_ap(const std::vector<int>& y, const std::vector<double>& s) {
  std::set<double, std::greater<>> th(s.begin(), s.end());
  double pos = std::count(y.begin(), y.end(), 1), prev_r = 0, area = 0;
  for (double c : th) {
    double tp = 0, fp = 0;
    for (std::size_t i = 0; i < y.size(); ++i) {
      if (s[i] >= c) (y[i] ? tp : fp) += 1;
    }
    area += (tp / pos - prev_r) * tp / (tp + fp);
    prev_r = tp / pos;
  }
  return area;
}

TEST(CIndex, PerfectOrdering) {
  EXPECT_DOUBLE_EQ(*c_index(std::vector<int>{2, 10, 5}, std::vector<int>{1, 1, 1},
                            std::vector<double>{0.9, 0.1, 0.5}),
                   1.0);
}

TEST(CIndex, ConstantRiskIsHalf) {
  EXPECT_DOUBLE_EQ(*c_index(std::vector<int>{2, 10, 5}, std::vector<int>{1, 0, 1},
                            std::vector<double>{0.3, 0.3, 0.3}),
                   0.5);
}

TEST(CIndex, NoComparablePairs) {
  EXPECT_FALSE(c_index(std::vector<int>{2, 3}, std::vector<int>{0, 0}, std::vector<double>{1, 2}));
}

TEST(CIndex, MatchesBruteForceWithTies) {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    Rng rng(seed);
    std::vector<int> t(200), e(200);
    std::vector<double> r(200);
    for (std::size_t i = 0; i < 200; ++i) {
      t[i] = 1 + static_cast<int>(rng.index(40));
      e[i] = rng.bernoulli(0.6);
      r[i] = static_cast<double>(rng.index(15));
    }
    const auto counts = concordance_counts(t, e, r);
    EXPECT_DOUBLE_EQ(*counts.index(), brute_c_index(t, e, r)) << seed;
  }
}

TEST(Confusion, WorkedExample) {
  Confusion c{3, 1, 5, 1};
  const auto m = confusion_metrics(c);
  EXPECT_DOUBLE_EQ(*m.precision, 0.75);
  EXPECT_DOUBLE_EQ(*m.recall, 0.75);
  EXPECT_DOUBLE_EQ(*m.f1, 0.75);
  EXPECT_DOUBLE_EQ(*m.accuracy, 0.8);
  EXPECT_DOUBLE_EQ(*m.specificity, 5.0 / 6.0);
  EXPECT_DOUBLE_EQ(*m.npv, 5.0 / 6.0);
}

TEST(Confusion, UndefinedEntriesAreMissing) {
  const auto m = confusion_metrics(std::vector<int>{0, 0, 0}, std::vector<int>{0, 0, 0});
  EXPECT_FALSE(m.precision);
  EXPECT_FALSE(m.recall);
  EXPECT_FALSE(m.f1);
  EXPECT_DOUBLE_EQ(*m.specificity, 1.0);
  EXPECT_EQ(format_value(m.f1), "n/a");
}

TEST(Auroc, MatchesTrapezoidAndAuprcMatchesEnumeration) {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    Rng rng(seed);
    std::vector<int> y(300);
    std::vector<double> s(300);
    for (std::size_t i = 0; i < y.size(); ++i) {
      y[i] = rng.bernoulli(0.3);
      s[i] = static_cast<double>(rng.index(20)) + (y[i] ? 3.0 : 0.0);
    }
    EXPECT_NEAR(*auroc(y, s), trapezoid_auroc(y, s), 1e-12);
    EXPECT_NEAR(*auprc(y, s), enumerated_ap(y, s), 1e-12);
  }
}

TEST(Auroc, ComplementAndRandomScores) {
  Rng rng(7);
  std::vector<int> y(20000);
  std::vector<double> s(20000), neg(20000);
  for (std::size_t i = 0; i < y.size(); ++i) {
    y[i] = rng.bernoulli(0.5);
    s[i] = rng.uniform01();
    neg[i] = -s[i];
  }
  EXPECT_NEAR(*auroc(y, s) + *auroc(y, neg), 1.0, 1e-12);
  EXPECT_NEAR(*auroc(y, s), 0.5, 0.05);
}

TEST(Auroc, SingleClassIsUndefined) {
  EXPECT_FALSE(auroc(std::vector<int>{1, 1}, std::vector<double>{0.1, 0.2}));
  EXPECT_FALSE(auprc(std::vector<int>{0, 0}, std::vector<double>{0.1, 0.2}));
}

TEST(Auprc, ConstantScoreIsPrevalence) {
  std::vector<int> y = {1, 0, 0, 1, 0, 0, 0, 0};
  std::vector<double> s(y.size(), 0.4);
  EXPECT_DOUBLE_EQ(*auprc(y, s), 0.25);
}

TEST(ReportTable, ColumnOrder) {
  MetricsReport r;
  r.c_index = 0.709;
  r.accuracy = 0.71;
  r.precision = 0.719;
  r.recall = 0.714;
  r.npv = 0.702;
  r.specificity = 0.706;
  r.auroc = 0.78;
  r.auprc = 0.786;
  r.f1 = 0.755;
  const auto table = format_table({{"HTN", r}});
  const auto header = table.substr(0, table.find('\n'));
  EXPECT_LT(header.find("C Index"), header.find("Accuracy"));
  EXPECT_LT(header.find("AUPRC"), header.find("F1 score"));
  const auto line = table.substr(table.find("HTN"));
  std::vector<std::string> cells;
  for (std::size_t p = 0; (p = line.find(" | ", p)) != std::string::npos; p += 3) {
    cells.push_back(line.substr(p + 3, 5));
  }
  EXPECT_EQ(cells, (std::vector<std::string>{"0.709", "0.710", "0.719", "0.714", "0.702", "0.706",
                                             "0.780", "0.786", "0.755"}));
}

}  // namespace
}  // namespace survclf::metrics
