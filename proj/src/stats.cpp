#include "bite/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace bite::stats {

double normal_upper_tail(double z) { return 0.5 * std::erfc(z / std::sqrt(2.0)); }

double exact_upper_tail(std::size_t n, long w) {
  const long max_sum = static_cast<long>(n * (n + 1) / 2);
  if (w <= 0) return 1.0;
  if (w > max_sum) return 0.0;
  // counts[s] = number of sign assignments with W+ = s, scaled by 2^-k as we go.
  std::vector<double> counts(static_cast<std::size_t>(max_sum) + 1, 0.0);
  counts[0] = 1.0;
  long reach = 0;
  for (std::size_t k = 1; k <= n; ++k) {
    const long r = static_cast<long>(k);
    for (long s = reach + r; s >= 0; --s) {
      const double keep = counts[static_cast<std::size_t>(s)];
      const double add = s >= r ? counts[static_cast<std::size_t>(s - r)] : 0.0;
      counts[static_cast<std::size_t>(s)] = 0.5 * (keep + add);
    }
    reach += r;
  }
  double tail = 0.0;
  for (long s = w; s <= max_sum; ++s) tail += counts[static_cast<std::size_t>(s)];
  return std::min(1.0, tail);
}

WilcoxonResult wilcoxon_signed_rank_greater(const std::vector<double>& differences,
                                            std::size_t exact_limit) {
  std::vector<double> d;
  d.reserve(differences.size());
  for (double v : differences) {
    if (!std::isfinite(v)) throw std::invalid_argument("non-finite difference");
    if (v != 0.0) d.push_back(v);
  }
  WilcoxonResult res;
  res.n = d.size();
  if (d.empty()) return res;

  std::vector<std::size_t> order(d.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&d](std::size_t a, std::size_t b) { return std::abs(d[a]) < std::abs(d[b]); });

  double tie_term = 0.0;
  bool ties = false;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && std::abs(d[order[j + 1]]) == std::abs(d[order[i]])) ++j;
    const double rank = 0.5 * static_cast<double>(i + j + 2);
    const double t = static_cast<double>(j - i + 1);
    if (t > 1.0) {
      ties = true;
      tie_term += t * t * t - t;
    }
    for (std::size_t k = i; k <= j; ++k) {
      (d[order[k]] > 0.0 ? res.w_plus : res.w_minus) += rank;
    }
    i = j + 1;
  }

  const double n = static_cast<double>(res.n);
  if (!ties && res.n <= exact_limit) {
    res.exact = true;
    res.p_value = exact_upper_tail(res.n, std::lround(res.w_plus));
    return res;
  }
  const double mean = n * (n + 1.0) / 4.0;
  const double var = n * (n + 1.0) * (2.0 * n + 1.0) / 24.0 - tie_term / 48.0;
  if (var <= 0.0) {
    res.p_value = 1.0;
    return res;
  }
  res.z = (res.w_plus - mean - 0.5) / std::sqrt(var);
  res.p_value = normal_upper_tail(res.z);
  return res;
}

}  // namespace bite::stats
