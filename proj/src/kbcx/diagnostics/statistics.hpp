#pragma once

#include <cstddef>
#include <vector>

namespace kbcx {

/// Mean and population standard deviation of paired rank differences.
struct ConsistencyStats {
    double mean = 0;
    double stdev = 0;
    std::size_t pairs = 0;
};

ConsistencyStats consistency_stats(const std::vector<double>& diffs);

struct WilcoxonResult {
    double w = 0;  // min(W+, W-)
    double w_plus = 0, w_minus = 0;
    double p = 1;  // two-sided
    std::size_t n = 0;  // nonzero differences
    bool exact = false;
};

inline constexpr std::size_t kWilcoxonExactMax = 25;

/// Zero differences are dropped; |d| ranked with average ties. Exact null
/// distribution for n <= 25, otherwise the normal approximation with tie and
/// continuity corrections. All-zero input fails with ErrorCode::Degenerate.
WilcoxonResult wilcoxon_signed_rank(const std::vector<double>& diffs);

/// The two branches on their own (same zero dropping and ranking).
WilcoxonResult wilcoxon_exact(const std::vector<double>& diffs);
WilcoxonResult wilcoxon_normal(const std::vector<double>& diffs);

/// Average ranks (1-based) of `values`, ties sharing the mean position.
std::vector<double> average_ranks(const std::vector<double>& values);

}  // namespace kbcx
