#include "kbcx/data/vocabulary.hpp"

#include <cctype>
#include <charconv>
#include <fstream>
#include <sstream>

#include "kbcx/data/names.hpp"
#include "kbcx/errors.hpp"
#include "kbcx/log.hpp"

namespace kbcx {

std::size_t TokenVocabulary::add(std::string_view token) {
    if (!is_valid_token(token)) fail(ErrorCode::InvalidArgument, "invalid token '" + std::string(token) + "'");
    auto it = index_.find(std::string(token));
    if (it != index_.end()) return it->second;
    tokens_.emplace_back(token);
    index_.emplace(tokens_.back(), tokens_.size() - 1);
    return tokens_.size() - 1;
}

std::optional<std::size_t> TokenVocabulary::find(std::string_view token) const {
    auto it = index_.find(std::string(token));
    if (it == index_.end()) return std::nullopt;
    return it->second;
}

std::vector<std::size_t> TokenVocabulary::known_ids(std::string_view normalized_name) const {
    std::vector<std::size_t> ids;
    for (const auto& tok : tokenize(normalized_name))
        if (auto id = find(tok)) ids.push_back(*id);
    return ids;
}

TokenVocabulary TokenVocabulary::from_names(const std::vector<std::string>& names) {
    TokenVocabulary v;
    for (const auto& name : names)
        for (const auto& tok : tokenize(name))
            if (is_valid_token(tok)) v.add(tok);
    return v;
}

WordVectors load_word_vectors(const std::filesystem::path& path, const WordVectorOptions& options) {
    std::ifstream in(path);
    if (!in) fail(ErrorCode::Io, "cannot open " + path.string());
    WordVectors wv;
    std::string line;
    std::size_t lineno = 0, skipped = 0, duplicates = 0;
    std::vector<float> values;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (options.vocab_limit && wv.vocab.size() >= *options.vocab_limit) break;
        const auto sp = line.find(' ');
        if (sp == std::string::npos) {
            fail(ErrorCode::Parse, path.string() + ":" + std::to_string(lineno) + ": missing vector values");
        }
        std::string token = line.substr(0, sp);
        for (auto& c : token) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
        values.clear();
        const char* p = line.data() + sp;
        const char* end = line.data() + line.size();
        while (p < end) {
            while (p < end && *p == ' ') ++p;
            if (p == end) break;
            float v = 0;
            auto [next, ec] = std::from_chars(p, end, v);
            if (ec != std::errc()) {
                fail(ErrorCode::Parse, path.string() + ":" + std::to_string(lineno) + ": malformed number");
            }
            values.push_back(v);
            p = next;
        }
        if (wv.dim == 0) wv.dim = values.size();
        if (values.size() != wv.dim || wv.dim == 0) {
            fail(ErrorCode::Parse, path.string() + ":" + std::to_string(lineno) + ": expected " +
                                       std::to_string(wv.dim) + " values, found " + std::to_string(values.size()));
        }
        if (!is_valid_token(token)) {
            ++skipped;
            continue;
        }
        if (wv.vocab.contains(token)) {
            ++duplicates;
            warn(path.string() + ":" + std::to_string(lineno) + ": duplicate token '" + token +
                 "' ignored (first occurrence kept)");
            continue;
        }
        wv.vocab.add(token);
        wv.rows.insert(wv.rows.end(), values.begin(), values.end());
    }
    if (skipped) warn(path.string() + ": skipped " + std::to_string(skipped) + " non-alphanumeric tokens");
    if (options.random_ablation) {
        std::mt19937_64 rng(options.seed);
        std::normal_distribution<double> n(0.0, kEmbeddingInitStd);
        for (auto& v : wv.rows) v = static_cast<float>(n(rng));
    }
    return wv;
}

}  // namespace kbcx
