#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "kbcx/autodiff/array.hpp"
#include "kbcx/models/spec.hpp"

namespace kbcx {

inline constexpr char kCheckpointMagic[8] = {'K', 'B', 'C', 'X', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointArray {
    std::string name;
    Shape shape;
    bool trainable = true;
    std::vector<double> data;
};

/// Self-describing model snapshot. `meta` carries the architecture, name
/// tables, vocabulary, config snapshot and best validation MRR; array values
/// are held in double precision and written with the width named by `dtype`
/// ("f32" or "f64").
struct Checkpoint {
    nlohmann::json meta = nlohmann::json::object();
    std::string dtype = "f32";
    std::vector<CheckpointArray> arrays;

    ModelKind model_kind() const;
    const CheckpointArray& array(const std::string& name) const;
};

std::string serialize_checkpoint(const Checkpoint& ckpt);
Checkpoint parse_checkpoint(const std::string& bytes, const std::string& origin = "checkpoint");

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);

/// Loads and, when `expected` is given, refuses checkpoints of another model kind.
Checkpoint load_checkpoint(const std::filesystem::path& path, std::optional<ModelKind> expected = std::nullopt);

/// FNV-1a over the serialized bytes.
std::uint64_t checkpoint_fingerprint(const Checkpoint& ckpt);

}  // namespace kbcx
