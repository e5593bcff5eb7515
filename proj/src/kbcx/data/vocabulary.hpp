#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace kbcx {

/// Token strings in insertion order; the word id is also the embedding row.
class TokenVocabulary {
   public:
    /// Returns the id of `token`, inserting it when new. Rejects tokens that
    /// are not lowercase alphanumeric.
    std::size_t add(std::string_view token);
    std::optional<std::size_t> find(std::string_view token) const;
    bool contains(std::string_view token) const { return find(token).has_value(); }

    std::size_t size() const { return tokens_.size(); }
    const std::string& token(std::size_t id) const { return tokens_.at(id); }
    const std::vector<std::string>& tokens() const { return tokens_; }

    /// Ids of the known tokens of a normalized name; unknown tokens are omitted.
    std::vector<std::size_t> known_ids(std::string_view normalized_name) const;

    /// Vocabulary over every token of the given normalized names.
    static TokenVocabulary from_names(const std::vector<std::string>& names);

   private:
    std::vector<std::string> tokens_;
    std::unordered_map<std::string, std::size_t> index_;
};

/// Word vectors in file order, stored row-major as [size x dim].
struct WordVectors {
    TokenVocabulary vocab;
    std::size_t dim = 0;
    std::vector<float> rows;
};

struct WordVectorOptions {
    std::optional<std::size_t> vocab_limit;
    // Replace every row by N(0, 0.05^2) draws; only the file's shape is used.
    bool random_ablation = false;
    std::uint64_t seed = 0;
};

/// Reads `token f1 ... fD` lines. Tokens are lowercased; lines whose token is
/// not a single alphanumeric word are skipped. The first occurrence of a
/// duplicated token wins.
WordVectors load_word_vectors(const std::filesystem::path& path, const WordVectorOptions& options = {});

inline constexpr double kEmbeddingInitStd = 0.05;

}  // namespace kbcx
