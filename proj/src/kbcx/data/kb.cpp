#include "kbcx/data/kb.hpp"

#include <algorithm>
#include <fstream>
#include <set>

#include "kbcx/data/names.hpp"
#include "kbcx/errors.hpp"

namespace kbcx {

std::string_view to_string(Split split) {
    switch (split) {
        case Split::Train: return "train";
        case Split::Valid: return "valid";
        case Split::Test: return "test";
    }
    return "?";
}

Split parse_split(std::string_view name) {
    if (name == "train") return Split::Train;
    if (name == "valid") return Split::Valid;
    if (name == "test") return Split::Test;
    fail(ErrorCode::InvalidArgument, "unknown split '" + std::string(name) + "' (expected train, valid or test)");
}

KbFormat parse_kb_format(std::string_view name) {
    if (name == "triple-tsv") return KbFormat::TripleTsv;
    if (name == "olpbench-tsv") return KbFormat::OlpbenchTsv;
    fail(ErrorCode::InvalidArgument, "unknown kb format '" + std::string(name) + "'");
}

std::optional<EntityId> KnowledgeBase::find_entity(std::string_view normalized) const {
    auto it = entity_index_.find(std::string(normalized));
    if (it == entity_index_.end()) return std::nullopt;
    return it->second;
}

std::optional<RelationId> KnowledgeBase::find_relation(std::string_view normalized) const {
    auto it = relation_index_.find(std::string(normalized));
    if (it == relation_index_.end()) return std::nullopt;
    return it->second;
}

const std::vector<Triple>& KnowledgeBase::split(Split s) const {
    switch (s) {
        case Split::Train: return train_;
        case Split::Valid: return valid_;
        case Split::Test: return test_;
    }
    return train_;
}

void KnowledgeBase::set_clusters(const std::vector<std::pair<std::string, std::string>>& assignments) {
    std::vector<std::size_t> cluster(num_entities(), SIZE_MAX);
    std::unordered_map<std::string, std::size_t> label_ids;
    for (const auto& [name, label] : assignments) {
        const std::string norm = normalize_name(name);
        auto e = find_entity(norm);
        if (!e) fail(ErrorCode::Parse, "cluster file references unknown entity '" + name + "'");
        auto [it, inserted] = label_ids.emplace(label, label_ids.size());
        cluster[*e] = it->second;
    }
    std::size_t next = label_ids.size();
    for (auto& c : cluster)
        if (c == SIZE_MAX) c = next++;
    clusters_ = std::move(cluster);
}

std::size_t KbBuilder::intern(Table& table, std::string_view raw, const char* synthetic_prefix) {
    std::string norm = normalize_name(raw);
    if (norm.empty()) {
        auto it = table.by_raw_unnamed.find(std::string(raw));
        if (it != table.by_raw_unnamed.end()) return it->second;
        const std::size_t id = table.names.size();
        table.names.push_back(std::string(synthetic_prefix) + std::to_string(id));
        table.unnamed.push_back(true);
        table.by_raw_unnamed.emplace(std::string(raw), id);
        return id;
    }
    auto it = table.by_normalized.find(norm);
    if (it != table.by_normalized.end()) return it->second;
    const std::size_t id = table.names.size();
    table.names.push_back(norm);
    table.unnamed.push_back(false);
    table.by_normalized.emplace(std::move(norm), id);
    return id;
}

EntityId KbBuilder::entity(std::string_view raw_name) { return intern(entities_, raw_name, "entity_"); }

RelationId KbBuilder::relation(std::string_view raw_name) { return intern(relations_, raw_name, "relation_"); }

void KbBuilder::add(Split split, std::string_view head, std::string_view relation, std::string_view tail) {
    const EntityId h = entity(head);
    const RelationId r = this->relation(relation);
    const EntityId t = entity(tail);
    splits_[static_cast<int>(split)].push_back(Triple{h, r, t});
}

KnowledgeBase KbBuilder::build() && {
    KnowledgeBase kb;
    kb.entity_names_ = std::move(entities_.names);
    kb.unnamed_entities_ = std::move(entities_.unnamed);
    for (EntityId e = 0; e < kb.entity_names_.size(); ++e) kb.entity_index_.emplace(kb.entity_names_[e], e);

    const std::size_t raw = relations_.names.size();
    kb.relation_names_ = std::move(relations_.names);
    kb.unnamed_relations_ = std::move(relations_.unnamed);
    for (RelationId r = 0; r < raw; ++r) kb.relation_index_.emplace(kb.relation_names_[r], r);
    for (RelationId r = 0; r < raw; ++r) {
        std::string inv = std::string(kInversePrefix) + kb.relation_names_[r];
        if (kb.relation_index_.count(inv)) {
            fail(ErrorCode::Parse, "reciprocal relation name '" + inv + "' collides with an input relation");
        }
        kb.relation_index_.emplace(inv, raw + r);
        kb.relation_names_.push_back(std::move(inv));
        kb.unnamed_relations_.push_back(kb.unnamed_relations_[r]);
    }
    kb.train_ = std::move(splits_[0]);
    kb.valid_ = std::move(splits_[1]);
    kb.test_ = std::move(splits_[2]);
    return kb;
}

std::vector<RawTriple> read_triple_file(const std::filesystem::path& path, KbFormat format) {
    std::ifstream in(path);
    if (!in) fail(ErrorCode::Io, "cannot open " + path.string());
    std::vector<RawTriple> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<std::string_view> fields;
        std::string_view rest(line);
        while (true) {
            const auto tab = rest.find('\t');
            fields.push_back(rest.substr(0, tab));
            if (tab == std::string_view::npos) break;
            rest.remove_prefix(tab + 1);
        }
        const bool ok = format == KbFormat::TripleTsv ? fields.size() == 3 : fields.size() >= 3;
        if (!ok) {
            fail(ErrorCode::Parse, path.string() + ":" + std::to_string(lineno) + ": expected " +
                                       (format == KbFormat::TripleTsv ? "3" : "at least 3") +
                                       " tab-separated fields, found " + std::to_string(fields.size()));
        }
        out.push_back({std::string(fields[0]), std::string(fields[1]), std::string(fields[2])});
    }
    return out;
}

namespace {

void read_triples(KbBuilder& builder, Split split, const std::filesystem::path& path, KbFormat format) {
    if (path.empty() && split != Split::Train) return;
    for (const auto& t : read_triple_file(path, format)) builder.add(split, t.head, t.relation, t.tail);
}

}  // namespace

KnowledgeBase load_kb(const KbPaths& paths, KbFormat format) {
    KbBuilder builder;
    read_triples(builder, Split::Train, paths.train, format);
    read_triples(builder, Split::Valid, paths.valid, format);
    read_triples(builder, Split::Test, paths.test, format);
    KnowledgeBase kb = std::move(builder).build();
    if (paths.clusters) kb.set_clusters(read_cluster_file(*paths.clusters));
    return kb;
}

std::vector<std::pair<std::string, std::string>> read_cluster_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorCode::Io, "cannot open " + path.string());
    std::vector<std::pair<std::string, std::string>> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto tab = line.find('\t');
        if (tab == std::string::npos || line.find('\t', tab + 1) != std::string::npos) {
            fail(ErrorCode::Parse, path.string() + ":" + std::to_string(lineno) + ": expected name<TAB>cluster_id");
        }
        out.emplace_back(line.substr(0, tab), line.substr(tab + 1));
    }
    return out;
}

void write_split_tsv(const KnowledgeBase& kb, Split split, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) fail(ErrorCode::Io, "cannot write " + path.string());
    for (const Triple& t : kb.split(split)) {
        out << kb.entity_name(t.head) << '\t' << kb.relation_name(t.relation) << '\t' << kb.entity_name(t.tail)
            << '\n';
    }
}

std::vector<Query> tail_query_view(const KnowledgeBase& kb, Split split) {
    const auto& triples = kb.split(split);
    std::vector<Query> out;
    out.reserve(2 * triples.size());
    for (const Triple& t : triples) {
        out.push_back(Query{t.head, t.relation, t.tail});
        out.push_back(Query{t.tail, kb.inverse(t.relation), t.head});
    }
    return out;
}

FilterIndex::FilterIndex(const KnowledgeBase& kb) {
    for (Split s : {Split::Train, Split::Valid, Split::Test}) {
        for (const Query& q : tail_query_view(kb, s)) map_[key(q.head, q.relation)].push_back(q.tail);
    }
    for (auto& [k, tails] : map_) {
        std::sort(tails.begin(), tails.end());
        tails.erase(std::unique(tails.begin(), tails.end()), tails.end());
    }
}

const std::vector<EntityId>& FilterIndex::known_tails(EntityId head, RelationId relation) const {
    static const std::vector<EntityId> empty;
    auto it = map_.find(key(head, relation));
    return it == map_.end() ? empty : it->second;
}

}  // namespace kbcx
