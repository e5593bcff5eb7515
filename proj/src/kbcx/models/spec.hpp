#pragma once

#include <cstddef>
#include <string>
#include <string_view>

namespace kbcx {

enum class ModelKind { Tucker, ConvE, FiveStar };
enum class EncoderKind { Table, Gru };

std::string_view to_string(ModelKind kind);
std::string_view to_string(EncoderKind kind);
ModelKind parse_model_kind(std::string_view name);
EncoderKind parse_encoder_kind(std::string_view name);

/// Architecture of a link-prediction model. `dim` is the nominal embedding
/// size d; 5★E stores 2d reals per entity and 8d per relation.
struct ModelSpec {
    ModelKind model = ModelKind::Tucker;
    EncoderKind encoder = EncoderKind::Table;
    std::size_t dim = 200;
    double dropout = 0.0;
    double n3_lambda = 0.0;
    // ConvE reshape rows; 0 picks the largest divisor of dim not above sqrt(dim).
    std::size_t conve_rows = 0;
    std::size_t word_dim = 300;
    bool train_word_embeddings = true;
};

std::size_t entity_width(const ModelSpec& spec);
std::size_t relation_width(const ModelSpec& spec);

/// Layout of the ConvE convolution for embedding size rows * cols.
struct ConveGeometry {
    std::size_t rows = 0, cols = 0;
    std::size_t channels = 32;
    std::size_t kernel = 3;

    std::size_t stacked_rows() const { return 2 * rows; }
    std::size_t out_rows() const { return stacked_rows() - kernel + 1; }
    std::size_t out_cols() const { return cols - kernel + 1; }
    std::size_t flat() const { return channels * out_rows() * out_cols(); }

    static ConveGeometry for_dim(std::size_t dim, std::size_t rows = 0);
};

}  // namespace kbcx
