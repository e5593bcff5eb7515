#include "kbcx/trainer/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "kbcx/errors.hpp"

namespace kbcx {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

ModelKind Checkpoint::model_kind() const {
    if (!meta.contains("model") || !meta["model"].contains("kind")) {
        fail(ErrorCode::Parse, "checkpoint metadata lacks model.kind");
    }
    return parse_model_kind(meta["model"]["kind"].get<std::string>());
}

const CheckpointArray& Checkpoint::array(const std::string& name) const {
    for (const auto& a : arrays)
        if (a.name == name) return a;
    fail(ErrorCode::Parse, "checkpoint has no array '" + name + "'");
}

namespace {

template <typename U>
void put(std::string& out, U v) {
    char buf[sizeof(U)];
    std::memcpy(buf, &v, sizeof(U));
    out.append(buf, sizeof(U));
}

std::size_t element_size(const std::string& dtype) {
    if (dtype == "f32") return 4;
    if (dtype == "f64") return 8;
    fail(ErrorCode::Parse, "unsupported checkpoint dtype '" + dtype + "'");
}

class Reader {
   public:
    Reader(const std::string& bytes, const std::string& origin) : bytes_(bytes), origin_(origin) {}

    bool has(std::size_t n) const { return pos_ + n <= bytes_.size(); }

    template <typename U>
    U get(const std::string& what) {
        if (!has(sizeof(U))) fail(ErrorCode::Parse, origin_ + ": truncated " + what);
        U v;
        std::memcpy(&v, bytes_.data() + pos_, sizeof(U));
        pos_ += sizeof(U);
        return v;
    }

    const char* take(std::size_t n) {
        const char* p = bytes_.data() + pos_;
        pos_ += n;
        return p;
    }

    std::size_t remaining() const { return bytes_.size() - pos_; }

   private:
    const std::string& bytes_;
    const std::string& origin_;
    std::size_t pos_ = 0;
};

}  // namespace

std::string serialize_checkpoint(const Checkpoint& ckpt) {
    const std::size_t width = element_size(ckpt.dtype);
    nlohmann::json meta = ckpt.meta;
    meta["dtype"] = ckpt.dtype;
    nlohmann::json layout = nlohmann::json::array();
    for (const auto& a : ckpt.arrays) {
        if (numel(a.shape) != a.data.size()) {
            fail(ErrorCode::Internal, "checkpoint array '" + a.name + "' has inconsistent shape");
        }
        layout.push_back({{"name", a.name}, {"shape", a.shape}, {"trainable", a.trainable}});
    }
    meta["arrays"] = std::move(layout);
    const std::string text = meta.dump();

    std::string out(kCheckpointMagic, sizeof(kCheckpointMagic));
    put<std::uint32_t>(out, kCheckpointVersion);
    put<std::uint64_t>(out, text.size());
    out += text;
    for (const auto& a : ckpt.arrays) {
        put<std::uint64_t>(out, a.data.size() * width);
        if (width == 4) {
            for (double v : a.data) put<float>(out, static_cast<float>(v));
        } else {
            for (double v : a.data) put<double>(out, v);
        }
    }
    return out;
}

Checkpoint parse_checkpoint(const std::string& bytes, const std::string& origin) {
    Reader in(bytes, origin);
    if (!in.has(sizeof(kCheckpointMagic)) || std::memcmp(bytes.data(), kCheckpointMagic, sizeof(kCheckpointMagic)) != 0) {
        fail(ErrorCode::Parse, origin + ": not a checkpoint (bad magic)");
    }
    in.take(sizeof(kCheckpointMagic));
    const auto version = in.get<std::uint32_t>("header");
    if (version != kCheckpointVersion) {
        fail(ErrorCode::Mismatch, origin + ": checkpoint format version " + std::to_string(version) +
                                      " is not supported (expected " + std::to_string(kCheckpointVersion) + ")");
    }
    const auto meta_len = in.get<std::uint64_t>("header");
    if (!in.has(meta_len)) fail(ErrorCode::Parse, origin + ": truncated metadata");
    Checkpoint ckpt;
    try {
        ckpt.meta = nlohmann::json::parse(std::string(in.take(meta_len), meta_len));
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::Parse, origin + ": corrupt metadata: " + e.what());
    }
    if (!ckpt.meta.is_object() || !ckpt.meta.contains("arrays") || !ckpt.meta.contains("dtype")) {
        fail(ErrorCode::Parse, origin + ": corrupt metadata: missing arrays or dtype");
    }
    ckpt.dtype = ckpt.meta["dtype"].get<std::string>();
    const std::size_t width = element_size(ckpt.dtype);
    const nlohmann::json layout = ckpt.meta["arrays"];
    ckpt.meta.erase("arrays");
    ckpt.meta.erase("dtype");
    std::size_t k = 0;
    for (const auto& entry : layout) {
        CheckpointArray a;
        try {
            a.name = entry.at("name").get<std::string>();
            a.shape = entry.at("shape").get<Shape>();
            a.trainable = entry.at("trainable").get<bool>();
        } catch (const nlohmann::json::exception& e) {
            fail(ErrorCode::Parse, origin + ": corrupt metadata for array " + std::to_string(k) + ": " + e.what());
        }
        const std::string where = origin + ": truncated at array " + std::to_string(k) + " ('" + a.name + "')";
        if (!in.has(sizeof(std::uint64_t))) fail(ErrorCode::Parse, where);
        const auto nbytes = in.get<std::uint64_t>("array length");
        if (nbytes != numel(a.shape) * width) {
            fail(ErrorCode::Parse, origin + ": array " + std::to_string(k) + " ('" + a.name + "') length " +
                                       std::to_string(nbytes) + " does not match shape " + to_string(a.shape));
        }
        if (!in.has(nbytes)) fail(ErrorCode::Parse, where);
        const char* p = in.take(nbytes);
        a.data.resize(numel(a.shape));
        for (std::size_t i = 0; i < a.data.size(); ++i) {
            if (width == 4) {
                float f;
                std::memcpy(&f, p + 4 * i, 4);
                a.data[i] = f;
            } else {
                std::memcpy(&a.data[i], p + 8 * i, 8);
            }
        }
        ckpt.arrays.push_back(std::move(a));
        ++k;
    }
    if (in.remaining() != 0) fail(ErrorCode::Parse, origin + ": trailing bytes after the last array");
    return ckpt;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
    const std::string bytes = serialize_checkpoint(ckpt);
    std::ofstream out(path, std::ios::binary);
    if (!out) fail(ErrorCode::Io, "cannot write " + path.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) fail(ErrorCode::Io, "write failed for " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path, std::optional<ModelKind> expected) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorCode::Io, "cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    Checkpoint ckpt = parse_checkpoint(ss.str(), path.string());
    if (expected && ckpt.model_kind() != *expected) {
        fail(ErrorCode::Mismatch, path.string() + ": checkpoint holds a " + std::string(to_string(ckpt.model_kind())) +
                                      " model, expected " + std::string(to_string(*expected)));
    }
    return ckpt;
}

std::uint64_t checkpoint_fingerprint(const Checkpoint& ckpt) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : serialize_checkpoint(ckpt)) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

}  // namespace kbcx
