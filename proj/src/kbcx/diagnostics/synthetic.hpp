#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "kbcx/data/kb.hpp"
#include "kbcx/diagnostics/doge.hpp"

namespace kbcx {

/// <X, first, h> and <h, second, t> imply <X, implied, t>.
struct ChainRule {
    std::string first, second, implied;
};

/// A small generated world with diagnostic items over it. Companies are
/// located in cities; people work for companies and are based in the city of
/// their employer; occupations have tasks. Companies have synonym surface
/// forms (a renamed suffix token), "located in" has the synonym "situated in"
/// and the inverse "hosts".
struct SyntheticDiagnostics {
    std::vector<RawTriple> train, valid, test;                   // pre-training world
    std::vector<std::pair<std::string, std::string>> clusters;  // surface name, cluster label
    std::vector<DiagnosticInstance> instances;
    std::vector<RawTriple> deductive_train, deductive_valid;
    std::vector<RawTriple> stereotype_train, stereotype_valid;
    std::vector<ChainRule> rules;
};

/// Deterministic in (seed, size); size >= 1 scales every population.
SyntheticDiagnostics generate_synthetic_diagnostics(std::uint64_t seed, std::size_t size = 1);

/// Writes train/valid/test.tsv, clusters.tsv, doge.jsonl, deductive_*.tsv,
/// stereotype_*.tsv and rules.json under `dir`; returns the written paths.
std::vector<std::filesystem::path> write_synthetic_diagnostics(const SyntheticDiagnostics& data,
                                                               const std::filesystem::path& dir);

nlohmann::json rules_to_json(const std::vector<ChainRule>& rules);
std::vector<ChainRule> rules_from_json(const nlohmann::json& j);

}  // namespace kbcx
