#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <set>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "survclf/core/error.hpp"
#include "survclf/core/parallel.hpp"
#include "survclf/core/rng.hpp"
#include "survclf/tree/tree.hpp"

namespace survclf::explain {

using tree::FeatureMatrix;

// Must be safe to call concurrently.
using Surface = std::function<double(std::span<const int>)>;

struct Attribution {
  double base_value = 0.0;
  std::vector<double> phi;
  double f_x = 0.0;
  double residual = 0.0;  // f_x - base_value - sum(phi)
  bool exact = false;
  bool singular = false;  // weighted system was rank deficient; phi is zero
};

struct ShapOptions {
  std::size_t budget = 2048;  // coalitions evaluated in sampled mode
  std::uint64_t seed = 0;
  std::size_t max_exact_features = 12;
  bool force_sampled = false;
  std::size_t threads = 1;
};

// Shapley kernel weight of one coalition of size s out of m features.
inline double shapley_kernel(std::size_t m, std::size_t s) {
  return static_cast<double>(m - 1) / (std::exp(std::lgamma(m + 1.0) - std::lgamma(s + 1.0) -
                                                std::lgamma(m - s + 1.0)) *
                                       static_cast<double>(s) * static_cast<double>(m - s));
}

struct Coalition {
  std::uint64_t mask;
  double weight;
};

namespace detail {

inline std::uint64_t binomial(std::size_t n, std::size_t k) {
  if (k > n) return 0;
  std::uint64_t r = 1;
  for (std::size_t i = 1; i <= k; ++i) r = r * (n - k + i) / i;
  return r;
}

// Every subset of size s of {0..m-1}, in increasing mask order.
inline void all_of_size(std::size_t m, std::size_t s, std::vector<std::uint64_t>& out) {
  std::uint64_t v = (std::uint64_t{1} << s) - 1;
  const std::uint64_t limit = std::uint64_t{1} << m;
  while (v < limit) {
    out.push_back(v);
    const std::uint64_t t = v | (v - 1);
    v = (t + 1) | (((~t & -~t) - 1) >> (__builtin_ctzll(v) + 1));
  }
}

inline std::uint64_t pow2_minus_2(std::size_t m) {
  return m >= 63 ? UINT64_MAX : (std::uint64_t{1} << m) - 2;
}

}  // namespace detail

inline std::vector<Coalition> exact_coalitions(std::size_t m) {
  std::vector<Coalition> out;
  for (std::size_t s = 1; s < m; ++s) {
    std::vector<std::uint64_t> masks;
    detail::all_of_size(m, s, masks);
    const double w = shapley_kernel(m, s);
    for (auto z : masks) out.push_back({z, w});
  }
  return out;
}

// Budget split across coalition sizes by kernel mass. A size whose share
// covers all of its subsets is enumerated and its leftover share is passed on;
// other sizes get distinct uniform draws that share the size's mass equally.
inline std::vector<Coalition> sampled_coalitions(std::size_t m, std::size_t budget, std::uint64_t seed) {
  std::vector<double> mass(m, 0.0);
  for (std::size_t s = 1; s < m; ++s) mass[s] = static_cast<double>(m - 1) / static_cast<double>(s * (m - s));
  std::vector<bool> full(m, false);
  std::vector<std::size_t> alloc(m, 0);
  double remaining = static_cast<double>(budget);
  bool changed = true;
  while (changed) {
    changed = false;
    double open_mass = 0;
    for (std::size_t s = 1; s < m; ++s) {
      if (!full[s]) open_mass += mass[s];
    }
    for (std::size_t s = 1; s < m && open_mass > 0; ++s) {
      if (full[s]) continue;
      const double share = remaining * mass[s] / open_mass;
      const auto count = detail::binomial(m, s);
      if (share >= static_cast<double>(count)) {
        full[s] = true;
        alloc[s] = static_cast<std::size_t>(count);
        remaining -= static_cast<double>(count);
        changed = true;
        break;
      }
    }
  }
  {
    // Largest-remainder rounding of the leftover budget over open sizes.
    double open_mass = 0;
    for (std::size_t s = 1; s < m; ++s) {
      if (!full[s]) open_mass += mass[s];
    }
    const double left = std::max(0.0, std::floor(remaining));
    std::vector<std::pair<double, std::size_t>> frac;
    double used = 0;
    for (std::size_t s = 1; s < m; ++s) {
      if (full[s]) continue;
      const double share = left * mass[s] / open_mass;
      alloc[s] = static_cast<std::size_t>(std::floor(share));
      used += static_cast<double>(alloc[s]);
      frac.emplace_back(-(share - std::floor(share)), s);
    }
    std::sort(frac.begin(), frac.end());
    for (std::size_t i = 0; i < frac.size() && used < left; ++i, ++used) ++alloc[frac[i].second];
  }

  Rng rng(mix_seed(seed, 0x5a4b));
  std::vector<Coalition> out;
  for (std::size_t s = 1; s < m; ++s) {
    if (full[s]) {
      std::vector<std::uint64_t> masks;
      detail::all_of_size(m, s, masks);
      const double w = shapley_kernel(m, s);
      for (auto z : masks) out.push_back({z, w});
      continue;
    }
    std::set<std::uint64_t> seen;
    std::vector<std::uint64_t> picked;
    for (std::size_t tries = 0; picked.size() < alloc[s] && tries < 20 * alloc[s] + 100; ++tries) {
      std::uint64_t z = 0;
      for (auto f : rng.sample_without_replacement(m, s)) z |= std::uint64_t{1} << f;
      if (seen.insert(z).second) picked.push_back(z);
    }
    if (picked.empty()) continue;
    const double w = mass[s] / static_cast<double>(picked.size());
    for (auto z : picked) out.push_back({z, w});
  }
  return out;
}

// Value of coalition z: mean surface output over the background with the
// features outside z taken from each background row.
inline double coalition_value(const Surface& f, std::span<const int> x, const FeatureMatrix& background,
                              std::uint64_t z, std::vector<int>& buf) {
  const std::size_t m = x.size();
  buf.resize(m);
  double sum = 0;
  for (std::size_t b = 0; b < background.rows(); ++b) {
    const auto row = background.row(b);
    for (std::size_t i = 0; i < m; ++i) buf[i] = (z >> i) & 1U ? x[i] : row[i];
    sum += f(buf);
  }
  return sum / static_cast<double>(background.rows());
}

inline double background_mean(const Surface& f, const FeatureMatrix& background) {
  double s = 0;
  for (std::size_t b = 0; b < background.rows(); ++b) s += f(background.row(b));
  return s / static_cast<double>(background.rows());
}

// Kernel SHAP with the efficiency constraint sum(phi) = f(x) - base imposed by
// eliminating the last coefficient.
inline Attribution kernel_shap(const Surface& f, std::span<const int> x, const FeatureMatrix& background,
                               const ShapOptions& opt = {}) {
  const std::size_t m = x.size();
  if (m == 0) throw ConfigError("kernel_shap needs at least one feature");
  if (m > 62) throw ConfigError("kernel_shap supports at most 62 features");
  if (background.rows() == 0) throw DataError("kernel_shap background set is empty");
  if (background.cols() != m) throw DataError("background width does not match the explained point");

  Attribution a;
  a.base_value = background_mean(f, background);
  a.f_x = f(x);
  a.phi.assign(m, 0.0);
  const double delta = a.f_x - a.base_value;
  a.exact = !opt.force_sampled &&
            (m <= opt.max_exact_features || opt.budget >= detail::pow2_minus_2(m));
  if (m == 1) {
    a.phi[0] = delta;
    a.exact = true;
    return a;
  }
  const auto coalitions = a.exact ? exact_coalitions(m) : sampled_coalitions(m, opt.budget, opt.seed);
  std::vector<double> values(coalitions.size());
  const std::size_t threads = resolve_threads(opt.threads);
  const std::size_t chunk = 64;
  const std::size_t n_chunks = (coalitions.size() + chunk - 1) / chunk;
  parallel_for(n_chunks, threads, [&](std::size_t c) {
    std::vector<int> buf;
    const std::size_t end = std::min(coalitions.size(), (c + 1) * chunk);
    for (std::size_t k = c * chunk; k < end; ++k) {
      values[k] = coalition_value(f, x, background, coalitions[k].mask, buf);
    }
  });

  const std::size_t p = m - 1;
  Eigen::MatrixXd ata = Eigen::MatrixXd::Zero(p, p);
  Eigen::VectorXd aty = Eigen::VectorXd::Zero(p);
  Eigen::VectorXd row(p);
  for (std::size_t k = 0; k < coalitions.size(); ++k) {
    const auto z = coalitions[k].mask;
    const double last = static_cast<double>((z >> p) & 1U);
    for (std::size_t i = 0; i < p; ++i) row[i] = static_cast<double>((z >> i) & 1U) - last;
    const double y = values[k] - a.base_value - last * delta;
    const double w = coalitions[k].weight;
    ata.noalias() += w * row * row.transpose();
    aty += w * y * row;
  }
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(ata);
  qr.setThreshold(1e-10);
  if (qr.rank() < static_cast<Eigen::Index>(p)) {
    a.singular = true;
    a.residual = delta;
    return a;
  }
  const Eigen::VectorXd sol = qr.solve(aty);
  double rest = 0;
  for (std::size_t i = 0; i < p; ++i) {
    a.phi[i] = sol[i];
    rest += sol[i];
  }
  a.phi[p] = delta - rest;
  double total = 0;
  for (double v : a.phi) total += v;
  a.residual = a.f_x - a.base_value - total;
  return a;
}

// Background rows drawn without replacement; all rows when size >= rows.
inline FeatureMatrix sample_background(const FeatureMatrix& x, std::size_t size, std::uint64_t seed) {
  FeatureMatrix out(0, x.cols());
  if (size >= x.rows()) {
    for (std::size_t r = 0; r < x.rows(); ++r) out.push_row(x.row(r));
    return out;
  }
  Rng rng(mix_seed(seed, 0xbac6));
  auto idx = rng.sample_without_replacement(x.rows(), size);
  std::sort(idx.begin(), idx.end());
  for (auto r : idx) out.push_row(x.row(r));
  return out;
}

}  // namespace survclf::explain
