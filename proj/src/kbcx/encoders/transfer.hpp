#pragma once

#include <cstdint>
#include <random>

#include "kbcx/models/link_model.hpp"

namespace kbcx {

/// Copies the recurrent parameters and the word rows of tokens both models
/// know. Target-only tokens keep their fresh rows.
template <typename T>
void transfer_gru_to_gru(const LinkModel<T>& pretrained, LinkModel<T>& target);

/// Sets every table row whose name has a known token to the pretrained
/// encoding of that name (unknown tokens omitted). Other rows keep their
/// fresh random values.
template <typename T>
void transfer_gru_to_table(const LinkModel<T>& pretrained, LinkModel<T>& target);

/// TuckER: core and batch-norm layers copied. ConvE: kernel, projection and
/// batch-norm layers copied; the tail bias is redrawn from N(0, 0.05^2).
/// 5★E has nothing to copy.
template <typename T>
void transfer_shared(const LinkModel<T>& pretrained, LinkModel<T>& target, std::mt19937_64& rng);

/// Encoder transfer matching the target's encoder kind, then transfer_shared.
template <typename T>
void initialize_from_pretrained(const LinkModel<T>& pretrained, LinkModel<T>& target, std::uint64_t seed);

/// Carries every parameter of `pretrained` over to a model of the same kind
/// and encoder whose name lists may differ: per-name rows (tables, fallback
/// rows, ConvE tail bias) are matched by name, everything else is copied.
/// Rows of names new to the target keep their fresh values.
template <typename T>
void extend_model(const LinkModel<T>& pretrained, LinkModel<T>& target);

}  // namespace kbcx
