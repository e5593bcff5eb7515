#include "kbcx/encoders/transfer.hpp"

#include "kbcx/autodiff/gru.hpp"
#include "kbcx/encoders/recurrent.hpp"
#include "kbcx/errors.hpp"

namespace kbcx {

namespace {

template <typename T>
void require_compatible(const LinkModel<T>& pre, const LinkModel<T>& target) {
    const auto& a = pre.spec();
    const auto& b = target.spec();
    if (a.model != b.model) {
        fail(ErrorCode::Mismatch, "cannot transfer a " + std::string(to_string(a.model)) + " checkpoint into a " +
                                      std::string(to_string(b.model)) + " model");
    }
    if (a.dim != b.dim) {
        fail(ErrorCode::Mismatch, "cannot transfer dimension " + std::to_string(a.dim) + " into dimension " +
                                      std::to_string(b.dim));
    }
}

template <typename T>
void require_gru(const LinkModel<T>& pre) {
    if (pre.spec().encoder != EncoderKind::Gru) {
        fail(ErrorCode::Mismatch, "encoder transfer needs a pretrained model with GRU encoders");
    }
}

template <typename T>
void copy_param(const LinkModel<T>& from, LinkModel<T>& to, const std::string& name) {
    const auto& src = from.params().at(name);
    auto& dst = to.params().at(name);
    if (src.shape != dst.shape) {
        fail(ErrorCode::Mismatch, "parameter '" + name + "' has shape " + to_string(src.shape) + " in the source and " +
                                      to_string(dst.shape) + " in the target");
    }
    dst = src;
}

template <typename T>
void copy_batchnorm(const LinkModel<T>& from, LinkModel<T>& to, const std::string& prefix) {
    for (const char* f : {".gamma", ".beta", ".running_mean", ".running_var"}) copy_param(from, to, prefix + f);
}

}  // namespace

template <typename T>
void transfer_gru_to_gru(const LinkModel<T>& pretrained, LinkModel<T>& target) {
    require_gru(pretrained);
    require_compatible(pretrained, target);
    if (target.spec().encoder != EncoderKind::Gru) fail(ErrorCode::Mismatch, "target model has no GRU encoder");
    if (pretrained.spec().word_dim != target.spec().word_dim) {
        fail(ErrorCode::Mismatch, "word vector dimension " + std::to_string(pretrained.spec().word_dim) +
                                      " differs from target " + std::to_string(target.spec().word_dim));
    }
    for (const char* side : {"entity.gru.", "relation.gru."})
        for (const char* p : kGruParamNames) copy_param(pretrained, target, std::string(side) + p);
    const auto& src = pretrained.params().at("words");
    auto& dst = target.params().at("words");
    const std::size_t w = target.spec().word_dim;
    const auto& tv = target.vocabulary();
    for (std::size_t i = 0; i < tv.size(); ++i)
        if (auto j = pretrained.vocabulary().find(tv.token(i)))
            std::copy_n(src.data.begin() + *j * w, w, dst.data.begin() + i * w);
}

template <typename T>
void transfer_gru_to_table(const LinkModel<T>& pretrained, LinkModel<T>& target) {
    require_gru(pretrained);
    require_compatible(pretrained, target);
    if (target.spec().encoder != EncoderKind::Table) fail(ErrorCode::Mismatch, "target model has no embedding table");
    for (Side side : {Side::Entity, Side::Relation}) {
        std::vector<std::string> known;
        std::vector<std::size_t> rows;
        const auto& names = target.names(side);
        for (std::size_t i = 0; i < names.size(); ++i) {
            if (!pretrained.vocabulary().known_ids(names[i]).empty()) {
                known.push_back(names[i]);
                rows.push_back(i);
            }
        }
        if (known.empty()) continue;
        const Array<T> enc = pretrained.encode(side, known);
        auto& table = target.params().at(side == Side::Entity ? "entity.table" : "relation.table");
        const std::size_t w = target.width(side);
        for (std::size_t k = 0; k < rows.size(); ++k)
            std::copy_n(enc.data.begin() + k * w, w, table.data.begin() + rows[k] * w);
    }
}

template <typename T>
void transfer_shared(const LinkModel<T>& pretrained, LinkModel<T>& target, std::mt19937_64& rng) {
    require_compatible(pretrained, target);
    switch (target.spec().model) {
        case ModelKind::Tucker:
            copy_param(pretrained, target, "tucker.core");
            copy_batchnorm(pretrained, target, "tucker.bn0");
            copy_batchnorm(pretrained, target, "tucker.bn1");
            break;
        case ModelKind::ConvE:
            copy_batchnorm(pretrained, target, "conve.bn0");
            copy_param(pretrained, target, "conve.kernel");
            copy_param(pretrained, target, "conve.projection");
            copy_batchnorm(pretrained, target, "conve.bn1");
            fill_normal(target.params().at("conve.tail_bias"), kEmbeddingInitStd, rng);
            break;
        case ModelKind::FiveStar: break;
    }
}

template <typename T>
void initialize_from_pretrained(const LinkModel<T>& pretrained, LinkModel<T>& target, std::uint64_t seed) {
    if (target.spec().encoder == EncoderKind::Gru) {
        transfer_gru_to_gru(pretrained, target);
    } else {
        transfer_gru_to_table(pretrained, target);
    }
    std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ull);
    transfer_shared(pretrained, target, rng);
}

template <typename T>
void extend_model(const LinkModel<T>& pretrained, LinkModel<T>& target) {
    require_compatible(pretrained, target);
    const bool gru = target.spec().encoder == EncoderKind::Gru;
    if (pretrained.spec().encoder != target.spec().encoder) {
        fail(ErrorCode::Mismatch, "cannot extend a model across encoder kinds");
    }
    auto copy_rows = [&](Side side, const std::string& name, auto source_row, auto target_row) {
        const auto& src = pretrained.params().at(name);
        auto& dst = target.params().at(name);
        const std::size_t w = src.shape.size() == 2 ? src.shape[1] : 1;
        const auto& names = target.names(side);
        for (std::size_t i = 0; i < names.size(); ++i) {
            auto j = pretrained.find(side, names[i]);
            if (!j) continue;
            auto from = source_row(*j);
            auto to = target_row(i);
            if (!from || !to) continue;
            std::copy_n(src.data.begin() + *from * w, w, dst.data.begin() + *to * w);
        }
    };
    auto same = [](std::size_t i) { return std::optional<std::size_t>(i); };
    for (Side side : {Side::Entity, Side::Relation}) {
        const std::string prefix = side == Side::Entity ? "entity" : "relation";
        if (gru) {
            copy_rows(side, prefix + ".fallback", [&](std::size_t j) { return pretrained.fallback_row(side, j); },
                      [&](std::size_t i) { return target.fallback_row(side, i); });
        } else {
            copy_rows(side, prefix + ".table", same, same);
        }
    }
    if (gru) transfer_gru_to_gru(pretrained, target);
    std::mt19937_64 unused(0);
    transfer_shared(pretrained, target, unused);
    if (target.spec().model == ModelKind::ConvE) copy_rows(Side::Entity, "conve.tail_bias", same, same);
}

#define KBCX_INSTANTIATE(T)                                                              \
    template void transfer_gru_to_gru<T>(const LinkModel<T>&, LinkModel<T>&);            \
    template void transfer_gru_to_table<T>(const LinkModel<T>&, LinkModel<T>&);          \
    template void transfer_shared<T>(const LinkModel<T>&, LinkModel<T>&, std::mt19937_64&); \
    template void initialize_from_pretrained<T>(const LinkModel<T>&, LinkModel<T>&, std::uint64_t); \
    template void extend_model<T>(const LinkModel<T>&, LinkModel<T>&);
KBCX_INSTANTIATE(float)
KBCX_INSTANTIATE(double)
#undef KBCX_INSTANTIATE

}  // namespace kbcx
