#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "kbcx/data/kb.hpp"
#include "kbcx/diagnostics/doge.hpp"
#include "kbcx/diagnostics/statistics.hpp"
#include "kbcx/evaluator/ranking.hpp"
#include "kbcx/models/link_model.hpp"
#include "kbcx/trainer/train.hpp"

namespace kbcx {

/// Raw scores of every candidate placed in the missing slot. A missing head
/// is scored as a tail query through the reciprocal relation.
template <typename T>
std::vector<double> candidate_scores(const LinkModel<T>& model, const DiagnosticInstance& inst);

/// Average-tie rank of the gold candidate (1..K).
template <typename T>
double rank_candidates(const LinkModel<T>& model, const DiagnosticInstance& inst);

/// Ranks of the selected instances (all when `which` is empty), spread over
/// KBCX_WORKERS threads.
template <typename T>
std::vector<double> rank_instances(const LinkModel<T>& model, const DiagnosticSet& set,
                                   const std::vector<std::size_t>& which = {}, std::size_t workers = 0);

struct ConsistencyReport {
    std::map<std::string, ConsistencyStats> by_kind;  // twin kind name
    std::map<std::string, ConsistencyStats> by_category;
    ConsistencyStats overall;
};

/// Statistics of r(original) - r(twin) over every synonym and inverse twin.
template <typename T>
ConsistencyReport consistency_report(const LinkModel<T>& model, const DiagnosticSet& set);

/// Per-category ranking of general-knowledge items plus an "all" row.
template <typename T>
std::map<std::string, RankingReport> category_report(const LinkModel<T>& model, const DiagnosticSet& set);

struct DeductiveCase {
    std::size_t background = 0;  // index of the general item
    std::size_t probe = 0;       // index of the deductive item
};

std::vector<DeductiveCase> deductive_cases(const DiagnosticSet& set);

struct DeductiveReport {
    RankingReport background, no_added, with_added;
};

/// Fine-tunes a copy of `model` on added facts. The knowledge base covers the
/// names of `scope` and of the facts (plus every name of a table model) and
/// the model keeps its architecture; dropout and N3 weight come from `cfg`.
template <typename T>
LinkModel<T> finetune_on_facts(const LinkModel<T>& model, const std::vector<RawTriple>& train_facts,
                               const std::vector<RawTriple>& valid_facts, const std::vector<DiagnosticInstance>& scope,
                               const TrainConfig& cfg);

/// Background knowledge and probes zero-shot, then probes after fine-tuning
/// on the added facts.
template <typename T>
DeductiveReport deductive_protocol(const LinkModel<T>& model, const DiagnosticSet& set,
                                   const std::vector<RawTriple>& added_train, const std::vector<RawTriple>& added_valid,
                                   const TrainConfig& cfg);

struct GroupedRanks {
    std::map<std::string, RankingReport> groups;  // st-masc, st-fem, anti-masc, anti-fem
    std::optional<WilcoxonResult> wilcoxon;       // over name-swap pairs
    std::string note;                              // set when the test is degenerate
};

struct StereotypeReport {
    GroupedRanks no_added;
    RankingReport background;
    std::optional<GroupedRanks> with_added;
};

/// Name items of the stereotype subset grouped by group, with the Wilcoxon
/// test over twin pairs; background occupation facts; optionally the name
/// items again after fine-tuning on added facts.
template <typename T>
StereotypeReport stereotype_report(const LinkModel<T>& model, const DiagnosticSet& set,
                                   const std::vector<RawTriple>* added_train,
                                   const std::vector<RawTriple>* added_valid, const TrainConfig& cfg);

/// Every twin link of the stereotype subset must join two name items
/// one-to-one.
std::vector<std::pair<std::size_t, std::size_t>> stereotype_pairs(const DiagnosticSet& set);

/// `section<TAB>row<TAB>MR<TAB>MRR<TAB>H@1<TAB>n` report rows.
std::string diagnostic_tsv(const DeductiveReport& r);
std::string diagnostic_tsv(const StereotypeReport& r);
std::string diagnostic_tsv(const std::map<std::string, RankingReport>& categories);
/// `kind<TAB>name<TAB>pairs<TAB>mean<TAB>stdev` (population stdev).
std::string diagnostic_tsv(const ConsistencyReport& r);

nlohmann::json to_json(const RankingReport& r);
nlohmann::json to_json(const DeductiveReport& r);
nlohmann::json to_json(const StereotypeReport& r);
nlohmann::json to_json(const ConsistencyReport& r);

}  // namespace kbcx
