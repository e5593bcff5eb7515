#include "kbcx/models/spec.hpp"

#include "kbcx/errors.hpp"

namespace kbcx {

std::string_view to_string(ModelKind kind) {
    switch (kind) {
        case ModelKind::Tucker: return "tucker";
        case ModelKind::ConvE: return "conve";
        case ModelKind::FiveStar: return "5star";
    }
    return "?";
}

std::string_view to_string(EncoderKind kind) { return kind == EncoderKind::Gru ? "gru" : "none"; }

ModelKind parse_model_kind(std::string_view name) {
    if (name == "tucker") return ModelKind::Tucker;
    if (name == "conve") return ModelKind::ConvE;
    if (name == "5star" || name == "fivestar") return ModelKind::FiveStar;
    fail(ErrorCode::InvalidArgument, "unknown model '" + std::string(name) + "' (expected tucker, conve or 5star)");
}

EncoderKind parse_encoder_kind(std::string_view name) {
    if (name == "none" || name == "table") return EncoderKind::Table;
    if (name == "gru") return EncoderKind::Gru;
    fail(ErrorCode::InvalidArgument, "unknown encoder '" + std::string(name) + "' (expected none or gru)");
}

std::size_t entity_width(const ModelSpec& spec) { return spec.model == ModelKind::FiveStar ? 2 * spec.dim : spec.dim; }

std::size_t relation_width(const ModelSpec& spec) {
    return spec.model == ModelKind::FiveStar ? 8 * spec.dim : spec.dim;
}

ConveGeometry ConveGeometry::for_dim(std::size_t dim, std::size_t rows) {
    if (dim == 0) fail(ErrorCode::InvalidArgument, "conve: dimension must be positive");
    if (rows == 0) {
        for (std::size_t r = 1; r * r <= dim; ++r)
            if (dim % r == 0) rows = r;
    }
    if (dim % rows != 0) {
        fail(ErrorCode::InvalidArgument, "conve: dimension " + std::to_string(dim) + " is not divisible into " +
                                             std::to_string(rows) + " rows");
    }
    ConveGeometry g;
    g.rows = rows;
    g.cols = dim / rows;
    if (g.stacked_rows() < g.kernel || g.cols < g.kernel) {
        fail(ErrorCode::InvalidArgument, "conve: " + std::to_string(g.stacked_rows()) + "x" + std::to_string(g.cols) +
                                             " input is smaller than the 3x3 kernel");
    }
    return g;
}

}  // namespace kbcx
