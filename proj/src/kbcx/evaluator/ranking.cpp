#include "kbcx/evaluator/ranking.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>

#include "kbcx/errors.hpp"

namespace kbcx {

namespace {

template <typename S>
double rank_impl(std::span<const S> scores, EntityId gold, std::span<const EntityId> filter_out,
                 const std::vector<std::size_t>* clusters) {
    const std::size_t n = scores.size();
    if (gold >= n) fail(ErrorCode::InvalidArgument, "gold id " + std::to_string(gold) + " out of range " + std::to_string(n));
    if (clusters && clusters->size() != n) {
        fail(ErrorCode::InvalidArgument, "cluster map covers " + std::to_string(clusters->size()) + " of " +
                                             std::to_string(n) + " candidates");
    }
    std::vector<char> excluded(n, 0);
    for (EntityId e : filter_out) {
        if (e == gold) fail(ErrorCode::InvalidArgument, "gold answer is in the filter set");
        if (e < n) excluded[e] = 1;
    }
    std::vector<EntityId> members{gold};
    if (clusters) {
        members.clear();
        const std::size_t c = (*clusters)[gold];
        for (EntityId e = 0; e < n; ++e)
            if ((*clusters)[e] == c) {
                members.push_back(e);
                excluded[e] = 1;
            }
    } else {
        excluded[gold] = 1;
    }
    double best = static_cast<double>(n) + 1;
    for (EntityId m : members) {
        const S s = scores[m];
        std::size_t greater = 0, ties = 0;
        for (EntityId e = 0; e < n; ++e) {
            if (excluded[e]) continue;
            if (scores[e] > s) {
                ++greater;
            } else if (scores[e] == s) {
                ++ties;
            }
        }
        best = std::min(best, 1.0 + static_cast<double>(greater) + 0.5 * static_cast<double>(ties));
    }
    return best;
}

std::string fmt(double v, int prec) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", prec, v);
    return buf;
}

}  // namespace

double rank_query(std::span<const double> scores, EntityId gold, std::span<const EntityId> filter_out,
                  const std::vector<std::size_t>* clusters) {
    return rank_impl(scores, gold, filter_out, clusters);
}

double rank_query(std::span<const float> scores, EntityId gold, std::span<const EntityId> filter_out,
                  const std::vector<std::size_t>* clusters) {
    return rank_impl(scores, gold, filter_out, clusters);
}

RankingReport summarize(std::vector<double> ranks, std::string split) {
    RankingReport r;
    r.split = std::move(split);
    r.ranks = std::move(ranks);
    if (r.ranks.empty()) return r;
    for (double k : r.ranks) {
        r.mr += k;
        r.mrr += 1.0 / k;
        r.hits1 += k <= 1.0;
        r.hits3 += k <= 3.0;
        r.hits10 += k <= 10.0;
    }
    const double n = static_cast<double>(r.ranks.size());
    r.mr /= n;
    r.mrr /= n;
    r.hits1 /= n;
    r.hits3 /= n;
    r.hits10 /= n;
    return r;
}

std::string report_tsv(const std::vector<RankingReport>& reports) {
    std::ostringstream os;
    os << "split\tMR\tMRR\tH@1\tH@10\tn_queries\n";
    for (const auto& r : reports) {
        os << r.split << '\t' << fmt(r.mr, 6) << '\t' << fmt(r.mrr, 6) << '\t' << fmt(r.hits1, 6) << '\t'
           << fmt(r.hits10, 6) << '\t' << r.n_queries() << '\n';
    }
    return os.str();
}

std::string report_table(const std::vector<RankingReport>& reports) {
    std::ostringstream os;
    char line[160];
    std::snprintf(line, sizeof line, "%-10s %10s %8s %8s %8s %10s\n", "split", "MR", "MRR", "H@1", "H@10", "queries");
    os << line;
    for (const auto& r : reports) {
        std::snprintf(line, sizeof line, "%-10s %10.2f %8.4f %8.4f %8.4f %10zu\n", r.split.c_str(), r.mr, r.mrr,
                      r.hits1, r.hits10, r.n_queries());
        os << line;
    }
    return os.str();
}

}  // namespace kbcx
