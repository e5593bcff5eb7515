#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "kbcx/data/kb.hpp"
#include "kbcx/evaluator/evaluate.hpp"
#include "kbcx/models/link_model.hpp"

namespace kbcx {

enum class TrainMode { Pretrain, Finetune };

std::string_view to_string(TrainMode mode);
TrainMode parse_train_mode(std::string_view name);

struct TrainConfig {
    TrainMode mode = TrainMode::Finetune;
    ModelSpec model;
    double learning_rate = 3e-4;
    std::size_t batch_size = 1024;
    std::size_t epochs = 500;
    // Validate every n epochs and after the last one; 0 validates only at the end.
    std::size_t validate_every = 25;
    std::uint64_t seed = 1;
    // Cap on validation queries (both directions counted); unset uses all.
    std::optional<std::size_t> max_valid_queries;

    /// Pretrain: 100 epochs, batch 4096, validation every 20 epochs.
    /// Finetune: 500 epochs, validation every 25 epochs.
    static TrainConfig defaults(TrainMode mode);

    nlohmann::json to_json() const;
    /// Overrides fields present in `j` on top of `base`.
    static TrainConfig from_json(const nlohmann::json& j, const TrainConfig& base);
};

struct EpochRecord {
    std::size_t epoch = 0;
    double loss = 0;
    std::optional<double> valid_mrr;
};

template <typename T>
struct TrainResult {
    LinkModel<T> model;  // parameters with the best validation MRR
    std::optional<double> best_valid_mrr;
    std::size_t best_epoch = 0;
    std::vector<EpochRecord> history;
    Checkpoint checkpoint(const TrainConfig& cfg) const;
};

/// Mean softmax cross-entropy of a batch of tail queries. Finetune mode
/// scores every entity; pretrain mode scores the distinct tails of the batch.
/// 5★E adds its N3 penalty divided by the batch size.
template <typename T>
Var<T> loss_1n(const LinkModel<T>& model, Binding<T>& b, const std::vector<Query>& batch, TrainMode mode,
               const ForwardContext& ctx);

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Shuffled mini-batch Adam training on the train split (both directions).
/// Returns the snapshot with the best validation MRR (the last one when the
/// knowledge base has no validation triples).
template <typename T>
TrainResult<T> train(const TrainConfig& cfg, const KnowledgeBase& kb, LinkModel<T> model,
                     const EpochCallback& on_epoch = {});

/// Fresh model for a knowledge base, optionally initialized from a pretrained one.
template <typename T>
LinkModel<T> make_model(const TrainConfig& cfg, const KnowledgeBase& kb, const WordVectors* word_vectors = nullptr,
                        const LinkModel<T>* pretrained = nullptr);

struct GridSpec {
    std::vector<double> learning_rates;
    std::vector<double> dropouts;
    std::vector<double> n3_lambdas;
    std::vector<std::size_t> batch_sizes;
    std::vector<std::size_t> dims;

    /// Cartesian product over non-empty axes applied to `base`.
    std::vector<TrainConfig> cells(const TrainConfig& base) const;
    static GridSpec from_json(const nlohmann::json& j);
};

struct GridRow {
    std::size_t cell = 0;
    nlohmann::json config;
    double valid_mr = 0, valid_mrr = 0, valid_h10 = 0;
};

template <typename T>
struct GridResult {
    TrainResult<T> best;
    TrainConfig best_config;
    std::vector<GridRow> rows;
};

template <typename T>
GridResult<T> grid_search(const std::vector<TrainConfig>& cells, const KnowledgeBase& kb,
                          const std::function<LinkModel<T>(const TrainConfig&)>& factory);

/// `cell-id<TAB>config-json<TAB>valid_MR<TAB>valid_MRR<TAB>valid_H@10` per row.
std::string grid_table(const std::vector<GridRow>& rows);

}  // namespace kbcx
