#include "kbcx/diagnostics/statistics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "kbcx/errors.hpp"

namespace kbcx {

ConsistencyStats consistency_stats(const std::vector<double>& diffs) {
    if (diffs.empty()) fail(ErrorCode::InvalidArgument, "consistency statistics need at least one pair");
    ConsistencyStats s;
    s.pairs = diffs.size();
    const double n = static_cast<double>(diffs.size());
    s.mean = std::accumulate(diffs.begin(), diffs.end(), 0.0) / n;
    double ss = 0;
    for (double d : diffs) ss += (d - s.mean) * (d - s.mean);
    s.stdev = std::sqrt(ss / n);
    return s;
}

std::vector<double> average_ranks(const std::vector<double>& values) {
    std::vector<std::size_t> order(values.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
    std::vector<double> ranks(values.size());
    for (std::size_t i = 0; i < order.size();) {
        std::size_t j = i;
        while (j < order.size() && values[order[j]] == values[order[i]]) ++j;
        const double avg = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
        for (std::size_t k = i; k < j; ++k) ranks[order[k]] = avg;
        i = j;
    }
    return ranks;
}

namespace {

struct Ranked {
    std::vector<double> abs, ranks;
    std::vector<bool> positive;
    double w_plus = 0, w_minus = 0;
};

Ranked rank_nonzero(const std::vector<double>& diffs) {
    Ranked r;
    for (double d : diffs) {
        if (!std::isfinite(d)) fail(ErrorCode::InvalidArgument, "wilcoxon: non-finite difference");
        if (d == 0) continue;
        r.abs.push_back(std::abs(d));
        r.positive.push_back(d > 0);
    }
    if (r.abs.empty()) fail(ErrorCode::Degenerate, "degenerate sample: all differences are zero");
    r.ranks = average_ranks(r.abs);
    for (std::size_t i = 0; i < r.ranks.size(); ++i) (r.positive[i] ? r.w_plus : r.w_minus) += r.ranks[i];
    return r;
}

WilcoxonResult base_result(const Ranked& r) {
    WilcoxonResult w;
    w.n = r.abs.size();
    w.w_plus = r.w_plus;
    w.w_minus = r.w_minus;
    w.w = std::min(r.w_plus, r.w_minus);
    return w;
}

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

}  // namespace

WilcoxonResult wilcoxon_exact(const std::vector<double>& diffs) {
    const Ranked r = rank_nonzero(diffs);
    WilcoxonResult w = base_result(r);
    w.exact = true;
    if (w.n > 62) fail(ErrorCode::InvalidArgument, "exact wilcoxon supports at most 62 differences");
    // Average ranks are multiples of 1/2; count sign assignments per doubled W+.
    std::vector<std::size_t> twice(w.n);
    std::size_t total = 0;
    for (std::size_t i = 0; i < w.n; ++i) {
        twice[i] = static_cast<std::size_t>(std::llround(2 * r.ranks[i]));
        total += twice[i];
    }
    std::vector<unsigned long long> count(total + 1, 0);
    count[0] = 1;
    std::size_t reach = 0;
    for (std::size_t v : twice) {
        for (std::size_t s = reach + 1; s-- > 0;)
            if (count[s]) count[s + v] += count[s];
        reach += v;
    }
    const auto w2 = static_cast<std::size_t>(std::llround(2 * w.w));
    unsigned long long below = 0;
    for (std::size_t s = 0; s <= w2; ++s) below += count[s];
    const double all = std::ldexp(1.0, static_cast<int>(w.n));
    w.p = std::min(1.0, 2.0 * static_cast<double>(below) / all);
    return w;
}

WilcoxonResult wilcoxon_normal(const std::vector<double>& diffs) {
    const Ranked r = rank_nonzero(diffs);
    WilcoxonResult w = base_result(r);
    const double n = static_cast<double>(w.n);
    const double mean = n * (n + 1) / 4;
    double tie = 0;
    std::map<double, std::size_t> groups;
    for (double a : r.abs) ++groups[a];
    for (const auto& [v, t] : groups) tie += static_cast<double>(t * t * t - t);
    const double var = n * (n + 1) * (2 * n + 1) / 24 - tie / 48;
    const double dev = std::abs(w.w - mean) - 0.5;
    if (var <= 0 || dev <= 0) {
        w.p = 1.0;
        return w;
    }
    w.p = std::min(1.0, 2.0 * normal_cdf(-dev / std::sqrt(var)));
    return w;
}

WilcoxonResult wilcoxon_signed_rank(const std::vector<double>& diffs) {
    std::size_t nonzero = 0;
    for (double d : diffs) nonzero += d != 0;
    return nonzero <= kWilcoxonExactMax ? wilcoxon_exact(diffs) : wilcoxon_normal(diffs);
}

}  // namespace kbcx
