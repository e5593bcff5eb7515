#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

#include "kbcx/autodiff/parameters.hpp"
#include "kbcx/data/vocabulary.hpp"
#include "kbcx/models/scoring.hpp"
#include "kbcx/models/spec.hpp"
#include "kbcx/trainer/checkpoint.hpp"

namespace kbcx {

enum class Side { Entity, Relation };

/// A scoring model together with its entity and relation encoders.
///
/// Parameter names:
///   table encoder  entity.table [N x We], relation.table [R x Wr]
///   gru encoder    words [V x d_w], entity.gru.*, relation.gru.*,
///                  entity.fallback, relation.fallback (rows for names
///                  without known tokens)
///   tucker         tucker.core, tucker.bn0.*, tucker.bn1.*
///   conve          conve.bn0.*, conve.kernel, conve.projection,
///                  conve.bn1.*, conve.tail_bias
template <typename T>
class LinkModel {
   public:
    LinkModel() = default;

    /// Fresh model over normalized entity and relation names (relations
    /// including reciprocals). With a GRU encoder the vocabulary covers every
    /// token of those names; rows of tokens found in `word_vectors` are copied
    /// from it.
    static LinkModel create(const ModelSpec& spec, std::vector<std::string> entity_names,
                            std::vector<std::string> relation_names, std::uint64_t seed,
                            const WordVectors* word_vectors = nullptr);

    static LinkModel from_checkpoint(const Checkpoint& ckpt);
    Checkpoint to_checkpoint(const nlohmann::json& config = nlohmann::json::object(),
                             std::optional<double> best_valid_mrr = std::nullopt) const;

    const ModelSpec& spec() const { return spec_; }
    ParameterStore<T>& params() { return store_; }
    const ParameterStore<T>& params() const { return store_; }

    const std::vector<std::string>& names(Side side) const { return side == Side::Entity ? entities_ : relations_; }
    std::size_t num_entities() const { return entities_.size(); }
    std::size_t num_relations() const { return relations_.size(); }
    std::optional<std::size_t> find(Side side, const std::string& normalized) const;

    const TokenVocabulary& vocabulary() const { return vocab_; }
    const std::vector<std::size_t>& tokens(Side side, std::size_t id) const { return side_state(side).tokens.at(id); }
    /// Row in `<side>.fallback` used by a name without known tokens.
    std::optional<std::size_t> fallback_row(Side side, std::size_t id) const {
        const std::size_t r = side_state(side).fallback.at(id);
        return r == SIZE_MAX ? std::nullopt : std::optional<std::size_t>(r);
    }
    const ConveGeometry& geometry() const { return geometry_; }
    std::size_t width(Side side) const { return side == Side::Entity ? entity_width(spec_) : relation_width(spec_); }

    /// Encoded rows of the given ids (differentiable).
    Var<T> rows(Binding<T>& b, Side side, const std::vector<std::size_t>& ids) const;
    Var<T> all_rows(Binding<T>& b, Side side) const;

    /// Tail bias of the given entity ids (ConvE only).
    Var<T> bias_rows(Binding<T>& b, const std::vector<std::size_t>& ids) const;
    Var<T> all_bias(Binding<T>& b) const { return b("conve.tail_bias"); }

    /// Score matrix [B x N]. `bias` is required for ConvE and ignored otherwise.
    Var<T> scores(Binding<T>& b, Var<T> heads, Var<T> rels, Var<T> cands, std::optional<Var<T>> bias,
                  const ForwardContext& ctx) const;

    /// N3 penalty of the given rows for 5★E with a positive weight.
    std::optional<Var<T>> regularizer(const std::vector<Var<T>>& rows) const;

    /// Inference encoding of arbitrary normalized names. A table encoder
    /// requires every name to be known. The GRU encoder omits unknown tokens;
    /// a name left without tokens uses its fallback row when the model knows
    /// the name and otherwise a fixed random vector derived from the name.
    Array<T> encode(Side side, const std::vector<std::string>& names) const;

    /// ConvE tail bias for entity names; names the model does not know get 0.
    Array<T> tail_bias(const std::vector<std::string>& names) const;

    /// Inference scores of head/relation rows against candidate rows.
    Array<T> score_rows(const Array<T>& heads, const Array<T>& rels, const Array<T>& cands,
                        const Array<T>* bias) const;

   private:
    struct SideState {
        std::vector<std::vector<std::size_t>> tokens;
        // Row in `<side>.fallback` or SIZE_MAX.
        std::vector<std::size_t> fallback;
        std::size_t num_fallback = 0;
    };

    static LinkModel build(const ModelSpec& spec, std::vector<std::string> entity_names,
                           std::vector<std::string> relation_names, TokenVocabulary vocab, std::mt19937_64& rng,
                           const WordVectors* word_vectors);
    void index_names();
    void prepare_tokens(Side side);
    const SideState& side_state(Side side) const { return side == Side::Entity ? entity_state_ : relation_state_; }
    static const char* prefix(Side side) { return side == Side::Entity ? "entity" : "relation"; }

    ModelSpec spec_;
    ConveGeometry geometry_;
    ParameterStore<T> store_;
    std::vector<std::string> entities_, relations_;
    std::unordered_map<std::string, std::size_t> entity_index_, relation_index_;
    TokenVocabulary vocab_;
    SideState entity_state_, relation_state_;
};

nlohmann::json model_spec_to_json(const ModelSpec& spec);
/// Fields present in `j` override `base`.
ModelSpec model_spec_from_json(const nlohmann::json& j, const ModelSpec& base);

/// Deterministic N(0, 0.05^2) vector for a name nobody has an embedding for.
template <typename T>
std::vector<T> name_seeded_vector(Side side, const std::string& name, std::size_t width);

extern template class LinkModel<float>;
extern template class LinkModel<double>;

}  // namespace kbcx
