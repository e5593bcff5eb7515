#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace kbcx {

using EntityId = std::size_t;
using RelationId = std::size_t;

struct Triple {
    EntityId head = 0;
    RelationId relation = 0;
    EntityId tail = 0;

    auto operator<=>(const Triple&) const = default;
};

enum class Split { Train, Valid, Test };

std::string_view to_string(Split split);
Split parse_split(std::string_view name);

enum class KbFormat { TripleTsv, OlpbenchTsv };

KbFormat parse_kb_format(std::string_view name);

/// Entity and relation tables plus train/valid/test splits. After
/// construction every raw relation r < R has the reciprocal r + R named
/// "inverse of <name(r)>". Immutable once built.
class KnowledgeBase {
   public:
    std::size_t num_entities() const { return entity_names_.size(); }
    /// Relation count including reciprocals.
    std::size_t num_relations() const { return relation_names_.size(); }
    std::size_t num_raw_relations() const { return relation_names_.size() / 2; }

    const std::vector<std::string>& entity_names() const { return entity_names_; }
    const std::vector<std::string>& relation_names() const { return relation_names_; }
    const std::string& entity_name(EntityId e) const { return entity_names_.at(e); }
    const std::string& relation_name(RelationId r) const { return relation_names_.at(r); }

    RelationId inverse(RelationId r) const {
        const std::size_t raw = num_raw_relations();
        return r < raw ? r + raw : r - raw;
    }

    /// Lookup by already-normalized name.
    std::optional<EntityId> find_entity(std::string_view normalized) const;
    std::optional<RelationId> find_relation(std::string_view normalized) const;

    const std::vector<Triple>& split(Split s) const;

    /// Entities whose raw name normalized to the empty string; they carry a
    /// synthetic name and should be initialized randomly.
    const std::vector<bool>& unnamed_entities() const { return unnamed_entities_; }
    const std::vector<bool>& unnamed_relations() const { return unnamed_relations_; }

    /// Cluster id per entity when gold clusters were loaded.
    const std::optional<std::vector<std::size_t>>& clusters() const { return clusters_; }

    /// Assigns gold clusters from `entity name -> cluster label` pairs (names
    /// normalized here). Entities without a label get singleton clusters.
    void set_clusters(const std::vector<std::pair<std::string, std::string>>& assignments);

   private:
    friend class KbBuilder;

    std::vector<std::string> entity_names_;
    std::vector<std::string> relation_names_;
    std::unordered_map<std::string, EntityId> entity_index_;
    std::unordered_map<std::string, RelationId> relation_index_;
    std::vector<Triple> train_, valid_, test_;
    std::vector<bool> unnamed_entities_, unnamed_relations_;
    std::optional<std::vector<std::size_t>> clusters_;
};

/// Assigns dense ids in first-appearance order and appends reciprocal
/// relations on `build()`.
class KbBuilder {
   public:
    EntityId entity(std::string_view raw_name);
    RelationId relation(std::string_view raw_name);
    void add(Split split, std::string_view head, std::string_view relation, std::string_view tail);
    KnowledgeBase build() &&;

   private:
    struct Table {
        std::vector<std::string> names;
        std::vector<bool> unnamed;
        std::unordered_map<std::string, std::size_t> by_normalized;
        std::unordered_map<std::string, std::size_t> by_raw_unnamed;
    };
    static std::size_t intern(Table& table, std::string_view raw, const char* synthetic_prefix);

    Table entities_, relations_;
    std::vector<Triple> splits_[3];
};

/// Empty valid/test paths load no triples for that split.
struct KbPaths {
    std::filesystem::path train, valid, test;
    std::optional<std::filesystem::path> clusters;
};

struct RawTriple {
    std::string head, relation, tail;
};

/// Raw (unnormalized) triples of one file; malformed lines fail with their
/// line number.
std::vector<RawTriple> read_triple_file(const std::filesystem::path& path, KbFormat format = KbFormat::TripleTsv);

KnowledgeBase load_kb(const KbPaths& paths, KbFormat format = KbFormat::TripleTsv);

/// Reads `entity_name<TAB>cluster_id` lines.
std::vector<std::pair<std::string, std::string>> read_cluster_file(const std::filesystem::path& path);

/// Writes raw (non-reciprocal) triples of one split as triple-tsv.
void write_split_tsv(const KnowledgeBase& kb, Split split, const std::filesystem::path& path);

/// A tail-prediction query with its gold answer.
struct Query {
    EntityId head = 0;
    RelationId relation = 0;
    EntityId tail = 0;
};

/// Every triple yields <h,r> -> t followed by <t,r^-1> -> h.
std::vector<Query> tail_query_view(const KnowledgeBase& kb, Split split);

/// <h,r> -> sorted distinct true tails over train, valid and test in both
/// directions.
class FilterIndex {
   public:
    explicit FilterIndex(const KnowledgeBase& kb);
    FilterIndex() = default;

    const std::vector<EntityId>& known_tails(EntityId head, RelationId relation) const;
    std::size_t size() const { return map_.size(); }

    const std::unordered_map<std::uint64_t, std::vector<EntityId>>& raw() const { return map_; }
    static std::uint64_t key(EntityId head, RelationId relation) {
        return (static_cast<std::uint64_t>(head) << 32) | static_cast<std::uint64_t>(relation);
    }

   private:
    std::unordered_map<std::uint64_t, std::vector<EntityId>> map_;
};

}  // namespace kbcx
