#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "kbcx/data/kb.hpp"

namespace kbcx {

/// Average-tie rank of `gold` among candidates not in `filter_out` (sorted,
/// must not contain gold). With `clusters`, every member of gold's cluster
/// counts as correct: the result is the best rank over members, each ranked
/// with the other members filtered.
double rank_query(std::span<const double> scores, EntityId gold, std::span<const EntityId> filter_out = {},
                  const std::vector<std::size_t>* clusters = nullptr);

double rank_query(std::span<const float> scores, EntityId gold, std::span<const EntityId> filter_out = {},
                  const std::vector<std::size_t>* clusters = nullptr);

struct RankingReport {
    std::string split;
    std::vector<double> ranks;
    double mr = 0, mrr = 0, hits1 = 0, hits3 = 0, hits10 = 0;
    std::size_t n_queries() const { return ranks.size(); }
};

/// Aggregates a rank list (MR, MRR, Hits@1/3/10).
RankingReport summarize(std::vector<double> ranks, std::string split = "");

/// `split<TAB>MR<TAB>MRR<TAB>H@1<TAB>H@10<TAB>n_queries` with a header line.
std::string report_tsv(const std::vector<RankingReport>& reports);
std::string report_table(const std::vector<RankingReport>& reports);

}  // namespace kbcx
