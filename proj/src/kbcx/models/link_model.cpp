#include "kbcx/models/link_model.hpp"

#include <numeric>

#include "kbcx/data/names.hpp"
#include "kbcx/encoders/recurrent.hpp"
#include "kbcx/errors.hpp"
#include "kbcx/log.hpp"

namespace kbcx {

namespace {

std::uint64_t fnv1a(std::string_view s, std::uint64_t h = 1469598103934665603ull) {
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

void validate(const ModelSpec& spec) {
    if (spec.dim == 0) fail(ErrorCode::InvalidArgument, "model dimension must be positive");
    if (spec.dropout < 0.0 || spec.dropout >= 1.0) fail(ErrorCode::InvalidArgument, "dropout must lie in [0, 1)");
    if (spec.n3_lambda < 0.0) fail(ErrorCode::InvalidArgument, "N3 weight must be non-negative");
    if (spec.encoder == EncoderKind::Gru && spec.word_dim == 0) {
        fail(ErrorCode::InvalidArgument, "word vector dimension must be positive");
    }
}

}  // namespace

nlohmann::json model_spec_to_json(const ModelSpec& s) {
    return {{"kind", std::string(to_string(s.model))},
            {"encoder", std::string(to_string(s.encoder))},
            {"dim", s.dim},
            {"dropout", s.dropout},
            {"n3_lambda", s.n3_lambda},
            {"conve_rows", s.conve_rows},
            {"word_dim", s.word_dim},
            {"train_word_embeddings", s.train_word_embeddings}};
}

ModelSpec model_spec_from_json(const nlohmann::json& j, const ModelSpec& base) {
    ModelSpec s = base;
    try {
        if (j.contains("kind")) s.model = parse_model_kind(j["kind"].get<std::string>());
        if (j.contains("encoder")) s.encoder = parse_encoder_kind(j["encoder"].get<std::string>());
        if (j.contains("dim")) s.dim = j["dim"].get<std::size_t>();
        if (j.contains("dropout")) s.dropout = j["dropout"].get<double>();
        if (j.contains("n3_lambda")) s.n3_lambda = j["n3_lambda"].get<double>();
        if (j.contains("conve_rows")) s.conve_rows = j["conve_rows"].get<std::size_t>();
        if (j.contains("word_dim")) s.word_dim = j["word_dim"].get<std::size_t>();
        if (j.contains("train_word_embeddings")) s.train_word_embeddings = j["train_word_embeddings"].get<bool>();
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::InvalidArgument, std::string("invalid model settings: ") + e.what());
    }
    return s;
}

template <typename T>
std::vector<T> name_seeded_vector(Side side, const std::string& name, std::size_t width) {
    std::mt19937_64 rng(fnv1a(name, fnv1a(side == Side::Entity ? "entity:" : "relation:")));
    std::normal_distribution<double> n(0.0, kEmbeddingInitStd);
    std::vector<T> v(width);
    for (auto& x : v) x = static_cast<T>(n(rng));
    return v;
}

template <typename T>
LinkModel<T> LinkModel<T>::create(const ModelSpec& spec, std::vector<std::string> entity_names,
                                  std::vector<std::string> relation_names, std::uint64_t seed,
                                  const WordVectors* word_vectors) {
    TokenVocabulary vocab;
    if (spec.encoder == EncoderKind::Gru) {
        std::vector<std::string> all = entity_names;
        all.insert(all.end(), relation_names.begin(), relation_names.end());
        vocab = TokenVocabulary::from_names(all);
    }
    std::mt19937_64 rng(seed);
    return build(spec, std::move(entity_names), std::move(relation_names), std::move(vocab), rng, word_vectors);
}

template <typename T>
LinkModel<T> LinkModel<T>::build(const ModelSpec& spec_in, std::vector<std::string> entity_names,
                                 std::vector<std::string> relation_names, TokenVocabulary vocab, std::mt19937_64& rng,
                                 const WordVectors* word_vectors) {
    ModelSpec spec = spec_in;
    if (word_vectors && spec.encoder == EncoderKind::Gru) spec.word_dim = word_vectors->dim;
    validate(spec);
    LinkModel m;
    m.spec_ = spec;
    m.entities_ = std::move(entity_names);
    m.relations_ = std::move(relation_names);
    m.vocab_ = std::move(vocab);
    m.index_names();
    if (spec.model == ModelKind::ConvE) m.geometry_ = ConveGeometry::for_dim(spec.dim, spec.conve_rows);

    const std::size_t we = entity_width(spec), wr = relation_width(spec);
    auto& st = m.store_;
    if (spec.encoder == EncoderKind::Table) {
        Array<T> e(Shape{m.entities_.size(), we});
        fill_normal(e, kEmbeddingInitStd, rng);
        st.add("entity.table", std::move(e));
        Array<T> r(Shape{m.relations_.size(), wr});
        fill_normal(r, kEmbeddingInitStd, rng);
        st.add("relation.table", std::move(r));
    } else {
        m.prepare_tokens(Side::Entity);
        m.prepare_tokens(Side::Relation);
        Array<T> words(Shape{m.vocab_.size(), spec.word_dim});
        fill_normal(words, kEmbeddingInitStd, rng);
        if (word_vectors) {
            for (std::size_t i = 0; i < m.vocab_.size(); ++i) {
                if (auto src = word_vectors->vocab.find(m.vocab_.token(i))) {
                    for (std::size_t j = 0; j < spec.word_dim; ++j)
                        words.at(i, j) = static_cast<T>(word_vectors->rows[*src * spec.word_dim + j]);
                }
            }
        }
        st.add("words", std::move(words), spec.train_word_embeddings);
        add_gru_params(st, "entity.gru", spec.word_dim, we, rng);
        add_gru_params(st, "relation.gru", spec.word_dim, wr, rng);
        Array<T> ef(Shape{m.entity_state_.num_fallback, we});
        fill_normal(ef, kEmbeddingInitStd, rng);
        st.add("entity.fallback", std::move(ef));
        Array<T> rf(Shape{m.relation_state_.num_fallback, wr});
        fill_normal(rf, kEmbeddingInitStd, rng);
        st.add("relation.fallback", std::move(rf));
    }

    const std::size_t d = spec.dim;
    if (spec.model == ModelKind::Tucker) {
        Array<T> core(Shape{d, d, d});
        fill_uniform(core, 1.0, rng);
        st.add("tucker.core", std::move(core));
        add_batchnorm_params(st, "tucker.bn0", d);
        add_batchnorm_params(st, "tucker.bn1", d);
    } else if (spec.model == ModelKind::ConvE) {
        const auto& g = m.geometry_;
        add_batchnorm_params(st, "conve.bn0", 1);
        Array<T> kernel(Shape{g.channels, 1, g.kernel, g.kernel});
        fill_uniform(kernel, 1.0 / std::sqrt(static_cast<double>(g.kernel * g.kernel)), rng);
        st.add("conve.kernel", std::move(kernel));
        Array<T> proj(Shape{g.flat(), d});
        fill_uniform(proj, 1.0 / std::sqrt(static_cast<double>(g.flat())), rng);
        st.add("conve.projection", std::move(proj));
        add_batchnorm_params(st, "conve.bn1", d);
        st.add("conve.tail_bias", Array<T>(Shape{m.entities_.size()}, T{0}));
    }
    return m;
}

template <typename T>
void LinkModel<T>::index_names() {
    entity_index_.clear();
    relation_index_.clear();
    for (std::size_t i = 0; i < entities_.size(); ++i) {
        if (!entity_index_.emplace(entities_[i], i).second) {
            fail(ErrorCode::InvalidArgument, "duplicate entity name '" + entities_[i] + "'");
        }
    }
    for (std::size_t i = 0; i < relations_.size(); ++i) {
        if (!relation_index_.emplace(relations_[i], i).second) {
            fail(ErrorCode::InvalidArgument, "duplicate relation name '" + relations_[i] + "'");
        }
    }
}

template <typename T>
void LinkModel<T>::prepare_tokens(Side side) {
    SideState& s = side == Side::Entity ? entity_state_ : relation_state_;
    const auto& names = this->names(side);
    s = SideState{};
    std::size_t truncated = 0;
    for (const auto& name : names) {
        auto ids = vocab_.known_ids(name);
        if (ids.size() > kMaxNameTokens) {
            ids.resize(kMaxNameTokens);
            ++truncated;
        }
        s.fallback.push_back(ids.empty() ? s.num_fallback++ : SIZE_MAX);
        s.tokens.push_back(std::move(ids));
    }
    if (truncated) {
        warn(std::to_string(truncated) + " " + prefix(side) + " names truncated to " + std::to_string(kMaxNameTokens) +
             " tokens");
    }
}

template <typename T>
std::optional<std::size_t> LinkModel<T>::find(Side side, const std::string& normalized) const {
    const auto& idx = side == Side::Entity ? entity_index_ : relation_index_;
    auto it = idx.find(normalized);
    if (it == idx.end()) return std::nullopt;
    return it->second;
}

template <typename T>
Var<T> LinkModel<T>::rows(Binding<T>& b, Side side, const std::vector<std::size_t>& ids) const {
    const std::string pre = prefix(side);
    if (spec_.encoder == EncoderKind::Table) return ops::gather_rows(b(pre + ".table"), ids);
    const SideState& s = side_state(side);
    std::vector<std::vector<std::size_t>> lists;
    lists.reserve(ids.size());
    std::vector<std::size_t> pick(ids.size());
    bool any_fallback = false;
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (ids[i] >= s.tokens.size()) {
            fail(ErrorCode::InvalidArgument, std::string(pre) + " id " + std::to_string(ids[i]) + " out of range");
        }
        lists.push_back(s.tokens[ids[i]]);
        if (s.fallback[ids[i]] != SIZE_MAX) {
            pick[i] = ids.size() + s.fallback[ids[i]];
            any_fallback = true;
        } else {
            pick[i] = i;
        }
    }
    Var<T> h = run_gru(b, pre + ".gru", b("words"), lists);
    if (!any_fallback) return h;
    return ops::gather_rows(ops::concat<T>({h, b(pre + ".fallback")}, 0), std::move(pick));
}

template <typename T>
Var<T> LinkModel<T>::all_rows(Binding<T>& b, Side side) const {
    if (spec_.encoder == EncoderKind::Table) return b(std::string(prefix(side)) + ".table");
    std::vector<std::size_t> ids(names(side).size());
    std::iota(ids.begin(), ids.end(), 0);
    return rows(b, side, ids);
}

template <typename T>
Var<T> LinkModel<T>::bias_rows(Binding<T>& b, const std::vector<std::size_t>& ids) const {
    Var<T> bias = b("conve.tail_bias");
    const std::size_t n = bias.shape()[0];
    return ops::reshape(ops::gather_rows(ops::reshape(bias, Shape{n, 1}), ids), Shape{ids.size()});
}

template <typename T>
Var<T> LinkModel<T>::scores(Binding<T>& b, Var<T> heads, Var<T> rels, Var<T> cands, std::optional<Var<T>> bias,
                            const ForwardContext& ctx) const {
    switch (spec_.model) {
        case ModelKind::Tucker: return tucker_scores(b, heads, rels, cands, spec_.dropout, ctx);
        case ModelKind::ConvE:
            if (!bias) fail(ErrorCode::Internal, "conve scoring needs a tail bias");
            return conve_scores(b, heads, rels, cands, *bias, geometry_, spec_.dropout, ctx);
        case ModelKind::FiveStar: return five_star_scores(heads, rels, cands, spec_.dim);
    }
    fail(ErrorCode::Internal, "unknown model kind");
}

template <typename T>
std::optional<Var<T>> LinkModel<T>::regularizer(const std::vector<Var<T>>& rows) const {
    if (spec_.model != ModelKind::FiveStar || spec_.n3_lambda <= 0.0 || rows.empty()) return std::nullopt;
    return n3_penalty(rows, spec_.dim, static_cast<T>(spec_.n3_lambda));
}

template <typename T>
Array<T> LinkModel<T>::encode(Side side, const std::vector<std::string>& names) const {
    const std::size_t w = width(side);
    Array<T> out(Shape{names.size(), w});
    Tape<T> tape(false);
    Binding<T> b(tape, store_);
    if (spec_.encoder == EncoderKind::Table) {
        const auto& table = store_.at(std::string(prefix(side)) + ".table");
        for (std::size_t i = 0; i < names.size(); ++i) {
            auto id = find(side, names[i]);
            if (!id) {
                fail(ErrorCode::InvalidArgument,
                     std::string(prefix(side)) + " '" + names[i] +
                         "' is unknown to this embedding-table model; unseen names can only be encoded by a "
                         "GRU-encoder checkpoint (use zero-shot evaluation with a GRU model)");
            }
            std::copy_n(table.data.begin() + *id * w, w, out.data.begin() + i * w);
        }
        return out;
    }
    const SideState& s = side_state(side);
    std::vector<std::vector<std::size_t>> lists;
    for (const auto& name : names) {
        auto id = find(side, name);
        if (id) {
            lists.push_back(s.tokens[*id]);
        } else {
            auto ids = vocab_.known_ids(name);
            if (ids.size() > kMaxNameTokens) ids.resize(kMaxNameTokens);
            lists.push_back(std::move(ids));
        }
    }
    Var<T> h = run_gru(b, std::string(prefix(side)) + ".gru", b("words"), lists);
    std::copy(h.value().data.begin(), h.value().data.end(), out.data.begin());
    const auto& fallback = store_.at(std::string(prefix(side)) + ".fallback");
    for (std::size_t i = 0; i < names.size(); ++i) {
        if (!lists[i].empty()) continue;
        auto id = find(side, names[i]);
        if (id && s.fallback[*id] != SIZE_MAX) {
            std::copy_n(fallback.data.begin() + s.fallback[*id] * w, w, out.data.begin() + i * w);
        } else {
            auto v = name_seeded_vector<T>(side, names[i], w);
            std::copy(v.begin(), v.end(), out.data.begin() + i * w);
        }
    }
    return out;
}

template <typename T>
Array<T> LinkModel<T>::tail_bias(const std::vector<std::string>& names) const {
    Array<T> out(Shape{names.size()}, T{0});
    if (spec_.model != ModelKind::ConvE) return out;
    const auto& bias = store_.at("conve.tail_bias");
    for (std::size_t i = 0; i < names.size(); ++i)
        if (auto id = find(Side::Entity, names[i])) out[i] = bias[*id];
    return out;
}

template <typename T>
Array<T> LinkModel<T>::score_rows(const Array<T>& heads, const Array<T>& rels, const Array<T>& cands,
                                  const Array<T>* bias) const {
    Tape<T> tape(false);
    Binding<T> b(tape, store_);
    std::optional<Var<T>> bv;
    if (bias) bv = tape.parameter(*bias);
    Var<T> s = scores(b, tape.parameter(heads), tape.parameter(rels), tape.parameter(cands), bv, ForwardContext{});
    return s.value();
}

template <typename T>
Checkpoint LinkModel<T>::to_checkpoint(const nlohmann::json& config, std::optional<double> best_valid_mrr) const {
    Checkpoint c;
    c.dtype = sizeof(T) == 4 ? "f32" : "f64";
    c.meta["model"] = model_spec_to_json(spec_);
    c.meta["entities"] = entities_;
    c.meta["relations"] = relations_;
    c.meta["vocabulary"] = vocab_.tokens();
    c.meta["config"] = config;
    c.meta["best_valid_mrr"] = best_valid_mrr ? nlohmann::json(*best_valid_mrr) : nlohmann::json(nullptr);
    for (const auto& e : store_.entries()) {
        c.arrays.push_back(
            CheckpointArray{e.name, e.value.shape, e.trainable, std::vector<double>(e.value.data.begin(), e.value.data.end())});
    }
    return c;
}

template <typename T>
LinkModel<T> LinkModel<T>::from_checkpoint(const Checkpoint& ckpt) {
    ModelSpec spec;
    std::vector<std::string> ents, rels, tokens;
    try {
        spec = model_spec_from_json(ckpt.meta.at("model"), ModelSpec{});
        ents = ckpt.meta.at("entities").get<std::vector<std::string>>();
        rels = ckpt.meta.at("relations").get<std::vector<std::string>>();
        tokens = ckpt.meta.at("vocabulary").get<std::vector<std::string>>();
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::Parse, std::string("checkpoint metadata incomplete: ") + e.what());
    }
    TokenVocabulary vocab;
    for (const auto& t : tokens) vocab.add(t);
    std::mt19937_64 rng(0);
    LinkModel m = build(spec, std::move(ents), std::move(rels), std::move(vocab), rng, nullptr);
    if (ckpt.arrays.size() != m.store_.entries().size()) {
        fail(ErrorCode::Mismatch, "checkpoint holds " + std::to_string(ckpt.arrays.size()) + " arrays, model layout needs " +
                                      std::to_string(m.store_.entries().size()));
    }
    for (const auto& a : ckpt.arrays) {
        if (!m.store_.contains(a.name)) fail(ErrorCode::Mismatch, "checkpoint array '" + a.name + "' is not part of the model");
        auto& e = m.store_.entry(a.name);
        if (e.value.shape != a.shape) {
            fail(ErrorCode::Mismatch, "checkpoint array '" + a.name + "' has shape " + to_string(a.shape) +
                                          ", model expects " + to_string(e.value.shape));
        }
        for (std::size_t i = 0; i < a.data.size(); ++i) e.value.data[i] = static_cast<T>(a.data[i]);
        e.trainable = a.trainable;
    }
    return m;
}

template class LinkModel<float>;
template class LinkModel<double>;
template std::vector<float> name_seeded_vector<float>(Side, const std::string&, std::size_t);
template std::vector<double> name_seeded_vector<double>(Side, const std::string&, std::size_t);

}  // namespace kbcx
