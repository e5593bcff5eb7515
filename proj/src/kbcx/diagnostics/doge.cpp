#include "kbcx/diagnostics/doge.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "kbcx/data/names.hpp"
#include "kbcx/errors.hpp"

namespace kbcx {

namespace {

constexpr std::pair<InstanceKind, std::string_view> kKindNames[] = {
    {InstanceKind::General, "general"},
    {InstanceKind::EntitySynonymTwin, "entity-synonym-twin"},
    {InstanceKind::RelationSynonymTwin, "relation-synonym-twin"},
    {InstanceKind::InverseTwin, "inverse-twin"},
    {InstanceKind::Deductive, "deductive"},
    {InstanceKind::Stereotype, "stereotype"},
};

constexpr std::pair<StereotypeGroup, std::string_view> kGroupNames[] = {
    {StereotypeGroup::StMasc, "st-masc"},
    {StereotypeGroup::StFem, "st-fem"},
    {StereotypeGroup::AntiMasc, "anti-masc"},
    {StereotypeGroup::AntiFem, "anti-fem"},
};

}  // namespace

std::string_view to_string(InstanceKind kind) {
    for (auto [k, n] : kKindNames)
        if (k == kind) return n;
    return "general";
}

InstanceKind parse_instance_kind(std::string_view name) {
    for (auto [k, n] : kKindNames)
        if (n == name) return k;
    fail(ErrorCode::Parse, "unknown instance kind '" + std::string(name) + "'");
}

std::string_view to_string(StereotypeGroup group) {
    for (auto [g, n] : kGroupNames)
        if (g == group) return n;
    return "st-masc";
}

StereotypeGroup parse_stereotype_group(std::string_view name) {
    for (auto [g, n] : kGroupNames)
        if (n == name) return g;
    fail(ErrorCode::Parse, "unknown stereotype group '" + std::string(name) + "'");
}

nlohmann::json to_json(const DiagnosticInstance& inst) {
    nlohmann::json out;
    out["id"] = inst.id;
    out["head"] = inst.head;
    out["relation"] = inst.relation;
    out["tail"] = inst.tail;
    out["candidates"] = inst.candidates;
    out["gold"] = inst.gold;
    out["category"] = inst.category;
    out["subcategory"] = inst.subcategory;
    out["kind"] = std::string(to_string(inst.kind));
    if (inst.twin_of) out["twin_of"] = *inst.twin_of;
    if (inst.group) out["group"] = std::string(to_string(*inst.group));
    return out;
}

DiagnosticInstance instance_from_json(const nlohmann::json& j) {
    if (!j.is_object()) fail(ErrorCode::Parse, "instance must be a JSON object");
    DiagnosticInstance d;
    try {
        d.id = j.at("id").is_string() ? j.at("id").get<std::string>() : j.at("id").dump();
        d.head = j.at("head").get<std::string>();
        d.relation = j.at("relation").get<std::string>();
        d.tail = j.at("tail").get<std::string>();
        d.candidates = j.at("candidates").get<std::vector<std::string>>();
        d.gold = j.at("gold").get<std::size_t>();
        d.category = j.value("category", "");
        d.subcategory = j.value("subcategory", "");
        d.kind = parse_instance_kind(j.value("kind", "general"));
        if (j.contains("twin_of") && !j["twin_of"].is_null()) {
            d.twin_of = j["twin_of"].is_string() ? j["twin_of"].get<std::string>() : j["twin_of"].dump();
        }
        if (j.contains("group") && !j["group"].is_null())
            d.group = parse_stereotype_group(j["group"].get<std::string>());
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::Parse, std::string("malformed instance: ") + e.what());
    }
    return d;
}

void validate_instance(const DiagnosticInstance& inst) {
    const std::string where = "instance '" + inst.id + "': ";
    if ((inst.head == kMissingSlot) == (inst.tail == kMissingSlot)) {
        fail(ErrorCode::InvalidArgument, where + "exactly one of head and tail must be \"?\"");
    }
    if (inst.relation.empty()) fail(ErrorCode::InvalidArgument, where + "empty relation");
    if (inst.candidates.size() != 10 && inst.candidates.size() != 50) {
        fail(ErrorCode::InvalidArgument,
             where + "expected 10 or 50 candidates, found " + std::to_string(inst.candidates.size()));
    }
    if (inst.gold >= inst.candidates.size()) fail(ErrorCode::InvalidArgument, where + "gold index out of range");
    std::set<std::string> seen;
    for (const auto& c : inst.candidates) {
        if (!seen.insert(normalize_name(c)).second)
            fail(ErrorCode::InvalidArgument, where + "duplicate candidate '" + c + "'");
    }
}

DiagnosticSet::DiagnosticSet(std::vector<DiagnosticInstance> instances) : instances_(std::move(instances)) {
    for (std::size_t i = 0; i < instances_.size(); ++i) {
        validate_instance(instances_[i]);
        if (!index_.emplace(instances_[i].id, i).second)
            fail(ErrorCode::InvalidArgument, "duplicate instance id '" + instances_[i].id + "'");
    }
    for (const auto& inst : instances_) {
        if (!inst.twin_of) continue;
        auto it = index_.find(*inst.twin_of);
        if (it == index_.end()) {
            fail(ErrorCode::InvalidArgument,
                 "instance '" + inst.id + "' links to missing instance '" + *inst.twin_of + "'");
        }
        if (inst.kind == InstanceKind::Deductive) continue;
        const auto& orig = instances_[it->second];
        auto a = inst.candidates, b = orig.candidates;
        std::sort(a.begin(), a.end());
        std::sort(b.begin(), b.end());
        if (a != b || inst.gold_name() != orig.gold_name()) {
            fail(ErrorCode::InvalidArgument, "twin '" + inst.id + "' does not share candidates and gold with '" +
                                                 orig.id + "'");
        }
    }
}

const DiagnosticInstance& DiagnosticSet::at(const std::string& id) const {
    auto i = index_of(id);
    if (!i) fail(ErrorCode::InvalidArgument, "unknown instance '" + id + "'");
    return instances_[*i];
}

std::optional<std::size_t> DiagnosticSet::index_of(const std::string& id) const {
    auto it = index_.find(id);
    if (it == index_.end()) return std::nullopt;
    return it->second;
}

std::vector<std::pair<std::size_t, std::size_t>> DiagnosticSet::twin_pairs(InstanceKind kind) const {
    std::vector<std::pair<std::size_t, std::size_t>> out;
    for (std::size_t i = 0; i < instances_.size(); ++i) {
        const auto& inst = instances_[i];
        if (inst.kind == kind && inst.twin_of) out.emplace_back(index_.at(*inst.twin_of), i);
    }
    return out;
}

std::vector<std::size_t> DiagnosticSet::of_kind(InstanceKind kind) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < instances_.size(); ++i)
        if (instances_[i].kind == kind) out.push_back(i);
    return out;
}

DiagnosticSet parse_doge(std::istream& in, const std::string& origin) {
    std::vector<DiagnosticInstance> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            auto inst = instance_from_json(nlohmann::json::parse(line));
            validate_instance(inst);
            out.push_back(std::move(inst));
        } catch (const nlohmann::json::exception& e) {
            fail(ErrorCode::Parse, origin + ":" + std::to_string(lineno) + ": " + e.what());
        } catch (const Error& e) {
            fail(e.code(), origin + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    return DiagnosticSet(std::move(out));
}

DiagnosticSet load_doge(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorCode::Io, "cannot open " + path.string());
    return parse_doge(in, path.string());
}

std::string serialize_doge(const std::vector<DiagnosticInstance>& instances) {
    std::string out;
    for (const auto& inst : instances) {
        out += to_json(inst).dump();
        out += '\n';
    }
    return out;
}

}  // namespace kbcx
