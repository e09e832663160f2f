#pragma once

#include <cstddef>
#include <vector>

namespace bite::stats {

struct WilcoxonResult {
  std::size_t n = 0;  // non-zero differences
  double w_plus = 0.0;
  double w_minus = 0.0;
  double z = 0.0;  // normal approximation statistic (0 when exact)
  double p_value = 1.0;
  bool exact = false;
};

/// Paired one-sided signed-rank test of H1: differences tend to be positive.
/// Zero differences are dropped; ties get average ranks. Exact null
/// distribution for tie-free samples with n <= exact_limit, otherwise the
/// normal approximation with tie and continuity corrections.
WilcoxonResult wilcoxon_signed_rank_greater(const std::vector<double>& differences,
                                            std::size_t exact_limit = 50);

/// P(W+ >= w) under the null for n untied ranks (integer w).
double exact_upper_tail(std::size_t n, long w);

double normal_upper_tail(double z);

}  // namespace bite::stats
