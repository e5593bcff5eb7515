#include "cli_support.hpp"

#include <openssl/evp.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <memory>
#include <sstream>

namespace kbcx_cli {

std::string sha256_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw UsageError("cannot open " + path.string());
    std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), &EVP_MD_CTX_free);
    if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1)
        throw RuntimeError("internal", "SHA-256 unavailable");
    std::vector<char> buf(1 << 16);
    while (in) {
        in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
        if (in.gcount() > 0) EVP_DigestUpdate(ctx.get(), buf.data(), static_cast<std::size_t>(in.gcount()));
    }
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_DigestFinal_ex(ctx.get(), digest, &len);
    std::string hex;
    char byte[3];
    for (unsigned int i = 0; i < len; ++i) {
        std::snprintf(byte, sizeof byte, "%02x", digest[i]);
        hex += byte;
    }
    return hex;
}

std::vector<std::uint64_t> parse_seeds(const std::string& text) {
    auto number = [&](const std::string& s) {
        if (s.empty() || s.find_first_not_of("0123456789") != std::string::npos)
            throw UsageError("invalid seed list '" + text + "'");
        return std::stoull(s);
    };
    std::vector<std::uint64_t> seeds;
    if (text.find(',') == std::string::npos) {
        const auto n = number(text);
        if (n == 0) throw UsageError("seed count must be positive");
        for (std::uint64_t s = 1; s <= n; ++s) seeds.push_back(s);
        return seeds;
    }
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) seeds.push_back(number(item));
    return seeds;
}

std::map<std::string, MetricSummary> aggregate_metrics(const std::vector<std::map<std::string, double>>& rows) {
    if (rows.empty()) throw UsageError("nothing to aggregate");
    std::map<std::string, MetricSummary> out;
    for (const auto& [name, v] : rows.front()) out[name].n = 0;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i].size() != out.size())
            throw UsageError("metric schema mismatch in run " + std::to_string(i + 1));
        for (const auto& [name, v] : rows[i]) {
            auto it = out.find(name);
            if (it == out.end()) throw UsageError("metric schema mismatch: unexpected '" + name + "'");
            it->second.mean += v;
            ++it->second.n;
        }
    }
    for (auto& [name, s] : out) {
        s.mean /= static_cast<double>(s.n);
        if (s.n < 2) continue;
        double ss = 0;
        for (const auto& row : rows) ss += (row.at(name) - s.mean) * (row.at(name) - s.mean);
        s.stdev = std::sqrt(ss / static_cast<double>(s.n - 1));
    }
    return out;
}

std::string aggregate_tsv(const std::map<std::string, MetricSummary>& summary) {
    std::string out = "# stdev: sample (n-1)";
    if (!summary.empty() && summary.begin()->second.n == 1) out += "; single run, stdev reported as 0";
    out += "\nmetric\tmean\tstdev\tn\n";
    char line[256];
    for (const auto& [name, s] : summary) {
        std::snprintf(line, sizeof line, "%s\t%.6f\t%.6f\t%zu\n", name.c_str(), s.mean, s.stdev, s.n);
        out += line;
    }
    return out;
}

nlohmann::json aggregate_json(const std::map<std::string, MetricSummary>& summary) {
    nlohmann::json j = nlohmann::json::object();
    std::size_t n = 0;
    for (const auto& [name, s] : summary) {
        j["metrics"][name] = {{"mean", s.mean}, {"stdev", s.stdev}};
        n = s.n;
    }
    j["runs"] = n;
    j["stdev_normalization"] = "sample";
    j["single_run"] = n == 1;
    return j;
}

std::map<std::string, double> read_metrics_file(const std::filesystem::path& path) {
    const auto j = read_json_file(path);
    const auto& m = j.contains("metrics") ? j["metrics"] : j;
    if (!m.is_object()) throw UsageError(path.string() + ": expected an object of metrics");
    std::map<std::string, double> out;
    for (const auto& [k, v] : m.items()) {
        if (!v.is_number()) throw UsageError(path.string() + ": metric '" + k + "' is not a number");
        out[k] = v.get<double>();
    }
    return out;
}

nlohmann::json merge(nlohmann::json base, const nlohmann::json& overlay) {
    for (const auto& [k, v] : overlay.items()) {
        if (v.is_object() && base.contains(k) && base[k].is_object())
            base[k] = merge(base[k], v);
        else
            base[k] = v;
    }
    return base;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw RuntimeError("io", "cannot write " + path.string());
    out << text;
    if (!out) throw RuntimeError("io", "failed writing " + path.string());
}

nlohmann::json read_json_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw UsageError("cannot open " + path.string());
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw UsageError(path.string() + ": " + e.what());
    }
}

}  // namespace kbcx_cli
