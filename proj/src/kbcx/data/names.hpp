#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace kbcx {

/// Lowercases, turns every non-alphanumeric byte into a space, collapses
/// whitespace runs and trims. An empty result means the name carries no
/// usable text; callers decide how to handle it.
std::string normalize_name(std::string_view raw);

/// Splits a normalized name on single spaces.
std::vector<std::string> tokenize(std::string_view normalized);

/// True when `token` is non-empty and consists only of [a-z0-9].
bool is_valid_token(std::string_view token);

inline constexpr std::string_view kInversePrefix = "inverse of ";

}  // namespace kbcx
