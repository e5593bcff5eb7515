#pragma once

#include <cstddef>
#include <optional>

#include "kbcx/data/kb.hpp"
#include "kbcx/evaluator/ranking.hpp"
#include "kbcx/models/link_model.hpp"

namespace kbcx {

struct EvalOptions {
    std::size_t batch_size = 256;
    // 0 reads KBCX_WORKERS from the environment (default 1).
    std::size_t workers = 0;
    // Ignore gold clusters even when the knowledge base has them.
    bool use_clusters = true;
    // Evaluate only the first n queries.
    std::optional<std::size_t> max_queries;
};

std::size_t resolve_workers(std::size_t requested);

/// Filtered ranking of both query directions of a split. Names of the
/// knowledge base are encoded through the model, so a GRU model can score a
/// knowledge base it was not trained on.
template <typename T>
RankingReport evaluate(const LinkModel<T>& model, const KnowledgeBase& kb, Split split, const FilterIndex& filter,
                       const EvalOptions& options = {});

/// `evaluate` for a GRU-encoder model on a knowledge base it has never seen.
template <typename T>
RankingReport zero_shot_evaluate(const LinkModel<T>& model, const KnowledgeBase& kb, Split split,
                                 const FilterIndex& filter, const EvalOptions& options = {});

}  // namespace kbcx
