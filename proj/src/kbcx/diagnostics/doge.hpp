#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "json.hpp"

namespace kbcx {

enum class InstanceKind { General, EntitySynonymTwin, RelationSynonymTwin, InverseTwin, Deductive, Stereotype };

std::string_view to_string(InstanceKind kind);
InstanceKind parse_instance_kind(std::string_view name);

enum class StereotypeGroup { StMasc, StFem, AntiMasc, AntiFem };

std::string_view to_string(StereotypeGroup group);
StereotypeGroup parse_stereotype_group(std::string_view name);

inline constexpr std::string_view kMissingSlot = "?";

/// One multiple-choice item. Exactly one of `head` and `tail` is "?".
///
/// JSON-lines fields: id, head, relation, tail, candidates, gold (index into
/// candidates), category, subcategory, kind, and optionally twin_of, group.
/// A deductive item links to its background fact (a general item) through
/// twin_of. Stereotype items with a group are name items; those without one
/// hold background facts about the occupations.
struct DiagnosticInstance {
    std::string id;
    std::string head, relation, tail;
    std::vector<std::string> candidates;
    std::size_t gold = 0;
    std::string category, subcategory;
    InstanceKind kind = InstanceKind::General;
    std::optional<std::string> twin_of;
    std::optional<StereotypeGroup> group;

    bool head_missing() const { return head == kMissingSlot; }
    const std::string& gold_name() const { return candidates.at(gold); }
};

nlohmann::json to_json(const DiagnosticInstance& inst);
DiagnosticInstance instance_from_json(const nlohmann::json& j);

/// Exactly one missing slot, 10 or 50 candidates, gold in range, candidates
/// distinct after normalization.
void validate_instance(const DiagnosticInstance& inst);

/// Validated instances with unique ids and resolvable twin links. Twins share
/// the candidate set and the gold answer of the item they point to.
class DiagnosticSet {
   public:
    DiagnosticSet() = default;
    explicit DiagnosticSet(std::vector<DiagnosticInstance> instances);

    const std::vector<DiagnosticInstance>& instances() const { return instances_; }
    std::size_t size() const { return instances_.size(); }
    const DiagnosticInstance& at(const std::string& id) const;
    std::optional<std::size_t> index_of(const std::string& id) const;

    /// (original index, twin index) for every item of `kind` with twin_of.
    std::vector<std::pair<std::size_t, std::size_t>> twin_pairs(InstanceKind kind) const;
    std::vector<std::size_t> of_kind(InstanceKind kind) const;

   private:
    std::vector<DiagnosticInstance> instances_;
    std::unordered_map<std::string, std::size_t> index_;
};

DiagnosticSet parse_doge(std::istream& in, const std::string& origin = "doge");
DiagnosticSet load_doge(const std::filesystem::path& path);
std::string serialize_doge(const std::vector<DiagnosticInstance>& instances);

}  // namespace kbcx
