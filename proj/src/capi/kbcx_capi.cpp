#include "kbcx/kbcx.h"

#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <mutex>
#include <new>
#include <string>

#include "json.hpp"
#include "kbcx/data/kb.hpp"
#include "kbcx/data/vocabulary.hpp"
#include "kbcx/diagnostics/doge.hpp"
#include "kbcx/diagnostics/protocols.hpp"
#include "kbcx/diagnostics/statistics.hpp"
#include "kbcx/diagnostics/synthetic.hpp"
#include "kbcx/errors.hpp"
#include "kbcx/evaluator/evaluate.hpp"
#include "kbcx/log.hpp"
#include "kbcx/trainer/checkpoint.hpp"
#include "kbcx/trainer/train.hpp"

using json = nlohmann::json;

struct kbcx_kb {
    kbcx::KnowledgeBase kb;
    kbcx::FilterIndex filter;
};

struct kbcx_model {
    kbcx::LinkModel<float> model;
    // config, best_valid_mrr, history, best_epoch
    json run = json::object();
};

struct kbcx_doge {
    kbcx::DiagnosticSet set;
};

namespace {

thread_local std::string g_last_error;

kbcx_status set_error(kbcx_status status, const std::string& message) {
    g_last_error = message;
    return status;
}

template <typename F>
kbcx_status guarded(F&& body) {
    g_last_error.clear();
    try {
        body();
        return KBCX_OK;
    } catch (const kbcx::Error& e) {
        return set_error(static_cast<kbcx_status>(e.code()), e.what());
    } catch (const json::exception& e) {
        return set_error(KBCX_ERR_PARSE, std::string("invalid JSON: ") + e.what());
    } catch (const std::bad_alloc&) {
        return set_error(KBCX_ERR_INTERNAL, "out of memory");
    } catch (const std::exception& e) {
        return set_error(KBCX_ERR_INTERNAL, e.what());
    }
}

void require(const void* p, const char* what) {
    if (!p) kbcx::fail(kbcx::ErrorCode::InvalidArgument, std::string(what) + " must not be null");
}

json parse_or_empty(const char* text) {
    if (!text || !*text) return json::object();
    json j = json::parse(text);
    if (!j.is_object()) kbcx::fail(kbcx::ErrorCode::InvalidArgument, "expected a JSON object");
    return j;
}

char* copy_out(const std::string& s) {
    char* p = static_cast<char*>(std::malloc(s.size() + 1));
    if (!p) throw std::bad_alloc();
    std::memcpy(p, s.data(), s.size() + 1);
    return p;
}

kbcx::TrainConfig config_from(const json& j, const kbcx::ModelSpec* spec = nullptr) {
    kbcx::TrainMode mode = kbcx::TrainMode::Finetune;
    if (j.contains("mode")) mode = kbcx::parse_train_mode(j["mode"].get<std::string>());
    kbcx::TrainConfig base = kbcx::TrainConfig::defaults(mode);
    if (spec) base.model = *spec;
    return kbcx::TrainConfig::from_json(j, base);
}

std::optional<kbcx::WordVectors> word_vectors_from(const json& options) {
    if (!options.contains("word_vectors") || options["word_vectors"].is_null()) return std::nullopt;
    kbcx::WordVectorOptions o;
    if (options.contains("vocab_limit")) o.vocab_limit = options["vocab_limit"].get<std::size_t>();
    o.random_ablation = options.value("random_word_vectors", false);
    o.seed = options.value("seed", std::uint64_t{0});
    return kbcx::load_word_vectors(options["word_vectors"].get<std::string>(), o);
}

json history_json(const std::vector<kbcx::EpochRecord>& history) {
    json h = json::array();
    for (const auto& r : history)
        h.push_back({{"epoch", r.epoch}, {"loss", r.loss}, {"valid_mrr", r.valid_mrr ? json(*r.valid_mrr) : json()}});
    return h;
}

kbcx::Checkpoint checkpoint_of(const kbcx_model& m) {
    std::optional<double> best;
    if (m.run.contains("best_valid_mrr") && m.run["best_valid_mrr"].is_number())
        best = m.run["best_valid_mrr"].get<double>();
    auto c = m.model.to_checkpoint(m.run.value("config", json::object()), best);
    if (m.run.contains("history")) c.meta["history"] = m.run["history"];
    if (m.run.contains("best_epoch")) c.meta["best_epoch"] = m.run["best_epoch"];
    return c;
}

std::vector<kbcx::RawTriple> facts_from(const json& options, const char* key) {
    if (!options.contains(key) || options[key].is_null()) return {};
    return kbcx::read_triple_file(options[key].get<std::string>());
}

std::mutex g_sink_mutex;

}  // namespace

extern "C" {

const char* kbcx_version(void) { return "1.0.0"; }

const char* kbcx_status_name(kbcx_status status) {
    switch (status) {
        case KBCX_OK: return "ok";
        case KBCX_ERR_INVALID_ARGUMENT: return "invalid-argument";
        case KBCX_ERR_IO: return "io";
        case KBCX_ERR_PARSE: return "parse";
        case KBCX_ERR_SHAPE: return "shape";
        case KBCX_ERR_MISMATCH: return "mismatch";
        case KBCX_ERR_NUMERIC: return "numeric";
        case KBCX_ERR_DEGENERATE: return "degenerate";
        case KBCX_ERR_INTERNAL: return "internal";
    }
    return "unknown";
}

const char* kbcx_last_error(void) { return g_last_error.c_str(); }

void kbcx_string_free(char* s) { std::free(s); }

void kbcx_set_warning_handler(kbcx_message_fn fn, void* user) {
    std::lock_guard<std::mutex> lock(g_sink_mutex);
    if (!fn) {
        kbcx::set_warning_sink([](const std::string& m) { std::fprintf(stderr, "warning: %s\n", m.c_str()); });
        return;
    }
    kbcx::set_warning_sink([fn, user](const std::string& m) { fn(m.c_str(), user); });
}

kbcx_status kbcx_kb_load(const char* paths_json, kbcx_kb** out) {
    return guarded([&] {
        require(paths_json, "paths");
        require(out, "out");
        *out = nullptr;
        const json j = parse_or_empty(paths_json);
        if (!j.contains("train")) kbcx::fail(kbcx::ErrorCode::InvalidArgument, "a train file is required");
        kbcx::KbPaths paths;
        paths.train = j["train"].get<std::string>();
        if (j.contains("valid") && !j["valid"].is_null()) paths.valid = j["valid"].get<std::string>();
        if (j.contains("test") && !j["test"].is_null()) paths.test = j["test"].get<std::string>();
        if (j.contains("clusters") && !j["clusters"].is_null()) paths.clusters = j["clusters"].get<std::string>();
        const auto format = kbcx::parse_kb_format(j.value("format", std::string("triple-tsv")));
        auto kb = kbcx::load_kb(paths, format);
        kbcx::FilterIndex filter(kb);
        *out = new kbcx_kb{std::move(kb), std::move(filter)};
    });
}

kbcx_status kbcx_kb_summary(const kbcx_kb* kb, char** out_json) {
    return guarded([&] {
        require(kb, "kb");
        require(out_json, "out");
        const json j{{"entities", kb->kb.num_entities()},
                     {"relations", kb->kb.num_relations()},
                     {"train", kb->kb.split(kbcx::Split::Train).size()},
                     {"valid", kb->kb.split(kbcx::Split::Valid).size()},
                     {"test", kb->kb.split(kbcx::Split::Test).size()},
                     {"clusters", kb->kb.clusters().has_value()}};
        *out_json = copy_out(j.dump());
    });
}

void kbcx_kb_free(kbcx_kb* kb) { delete kb; }

kbcx_status kbcx_model_create(const char* config_json, const kbcx_kb* kb, const kbcx_model* init,
                              const char* options_json, kbcx_model** out) {
    return guarded([&] {
        require(kb, "kb");
        require(out, "out");
        *out = nullptr;
        const auto cfg = config_from(parse_or_empty(config_json), init ? &init->model.spec() : nullptr);
        const auto vectors = word_vectors_from(parse_or_empty(options_json));
        auto model = kbcx::make_model<float>(cfg, kb->kb, vectors ? &*vectors : nullptr, init ? &init->model : nullptr);
        *out = new kbcx_model{std::move(model), json{{"config", cfg.to_json()}}};
    });
}

kbcx_status kbcx_model_load(const char* path, const char* expected_kind, kbcx_model** out) {
    return guarded([&] {
        require(path, "path");
        require(out, "out");
        *out = nullptr;
        std::optional<kbcx::ModelKind> kind;
        if (expected_kind) kind = kbcx::parse_model_kind(expected_kind);
        const auto ckpt = kbcx::load_checkpoint(path, kind);
        json run = json::object();
        for (const char* key : {"config", "best_valid_mrr", "history", "best_epoch"})
            if (ckpt.meta.contains(key)) run[key] = ckpt.meta[key];
        *out = new kbcx_model{kbcx::LinkModel<float>::from_checkpoint(ckpt), std::move(run)};
    });
}

kbcx_status kbcx_model_save(const kbcx_model* model, const char* path) {
    return guarded([&] {
        require(model, "model");
        require(path, "path");
        kbcx::save_checkpoint(checkpoint_of(*model), path);
    });
}

kbcx_status kbcx_model_info(const kbcx_model* model, char** out_json) {
    return guarded([&] {
        require(model, "model");
        require(out_json, "out");
        const auto ckpt = checkpoint_of(*model);
        std::size_t params = 0;
        for (const auto& a : ckpt.arrays)
            if (a.trainable) params += a.data.size();
        char fp[17];
        std::snprintf(fp, sizeof fp, "%016llx",
                      static_cast<unsigned long long>(kbcx::checkpoint_fingerprint(ckpt)));
        json j{{"model", ckpt.meta["model"]},
               {"entities", model->model.num_entities()},
               {"relations", model->model.num_relations()},
               {"vocabulary", model->model.vocabulary().size()},
               {"parameters", params},
               {"fingerprint", fp}};
        for (const char* key : {"config", "best_valid_mrr", "history", "best_epoch"})
            j[key] = model->run.contains(key) ? model->run[key] : json();
        *out_json = copy_out(j.dump());
    });
}

void kbcx_model_free(kbcx_model* model) { delete model; }

kbcx_status kbcx_train(const char* config_json, const kbcx_kb* kb, const kbcx_model* model, kbcx_epoch_fn on_epoch,
                       void* user, kbcx_model** out) {
    return guarded([&] {
        require(kb, "kb");
        require(model, "model");
        require(out, "out");
        *out = nullptr;
        const auto cfg = config_from(parse_or_empty(config_json), &model->model.spec());
        const auto& a = cfg.model;
        const auto& b = model->model.spec();
        if (a.model != b.model || a.encoder != b.encoder || a.dim != b.dim || a.word_dim != b.word_dim ||
            a.conve_rows != b.conve_rows)
            kbcx::fail(kbcx::ErrorCode::Mismatch, "training config describes a different architecture than the model");
        kbcx::EpochCallback cb;
        if (on_epoch)
            cb = [&](const kbcx::EpochRecord& r) {
                const json j{{"epoch", r.epoch},
                             {"loss", r.loss},
                             {"valid_mrr", r.valid_mrr ? json(*r.valid_mrr) : json()}};
                on_epoch(j.dump().c_str(), user);
            };
        auto start = model->model;
        if (a.dropout != b.dropout || a.n3_lambda != b.n3_lambda || a.train_word_embeddings != b.train_word_embeddings) {
            auto ckpt = start.to_checkpoint();
            ckpt.meta["model"] = kbcx::model_spec_to_json(cfg.model);
            start = kbcx::LinkModel<float>::from_checkpoint(ckpt);
        }
        auto result = kbcx::train(cfg, kb->kb, std::move(start), cb);
        json run{{"config", cfg.to_json()},
                 {"best_valid_mrr", result.best_valid_mrr ? json(*result.best_valid_mrr) : json()},
                 {"history", history_json(result.history)},
                 {"best_epoch", result.best_epoch}};
        *out = new kbcx_model{std::move(result.model), std::move(run)};
    });
}

kbcx_status kbcx_evaluate(const kbcx_model* model, const kbcx_kb* kb, const char* split, const char* options_json,
                          char** out_json) {
    return guarded([&] {
        require(model, "model");
        require(kb, "kb");
        require(split, "split");
        require(out_json, "out");
        const json o = parse_or_empty(options_json);
        kbcx::EvalOptions opts;
        opts.workers = o.value("workers", std::size_t{0});
        opts.use_clusters = o.value("clusters", true);
        if (o.contains("max_queries") && !o["max_queries"].is_null())
            opts.max_queries = o["max_queries"].get<std::size_t>();
        const auto s = kbcx::parse_split(split);
        const auto report = o.value("zero_shot", false)
                                ? kbcx::zero_shot_evaluate(model->model, kb->kb, s, kb->filter, opts)
                                : kbcx::evaluate(model->model, kb->kb, s, kb->filter, opts);
        json j = kbcx::to_json(report);
        j["tsv"] = kbcx::report_tsv({report});
        j["table"] = kbcx::report_table({report});
        if (o.value("ranks", false)) j["ranks"] = report.ranks;
        *out_json = copy_out(j.dump());
    });
}

kbcx_status kbcx_grid_search(const char* base_config_json, const char* grid_json, const kbcx_kb* kb,
                             const kbcx_model* init, const char* options_json, kbcx_model** best, char** out_json) {
    return guarded([&] {
        require(kb, "kb");
        require(grid_json, "grid");
        require(best, "best");
        require(out_json, "out");
        *best = nullptr;
        const auto base = config_from(parse_or_empty(base_config_json), init ? &init->model.spec() : nullptr);
        const auto grid = kbcx::GridSpec::from_json(json::parse(grid_json));
        const auto vectors = word_vectors_from(parse_or_empty(options_json));
        const kbcx::WordVectors* wv = vectors ? &*vectors : nullptr;
        const kbcx::LinkModel<float>* pre = init ? &init->model : nullptr;
        auto result = kbcx::grid_search<float>(grid.cells(base), kb->kb, [&](const kbcx::TrainConfig& c) {
            return kbcx::make_model<float>(c, kb->kb, wv, pre);
        });
        json rows = json::array();
        for (const auto& r : result.rows)
            rows.push_back({{"cell", r.cell},
                            {"config", r.config},
                            {"valid_MR", r.valid_mr},
                            {"valid_MRR", r.valid_mrr},
                            {"valid_H@10", r.valid_h10}});
        const json j{{"rows", rows},
                     {"table", kbcx::grid_table(result.rows)},
                     {"best_config", result.best_config.to_json()}};
        json run{{"config", result.best_config.to_json()},
                 {"best_valid_mrr", result.best.best_valid_mrr ? json(*result.best.best_valid_mrr) : json()},
                 {"history", history_json(result.best.history)},
                 {"best_epoch", result.best.best_epoch}};
        *best = new kbcx_model{std::move(result.best.model), std::move(run)};
        *out_json = copy_out(j.dump());
    });
}

kbcx_status kbcx_doge_load(const char* path, kbcx_doge** out) {
    return guarded([&] {
        require(path, "path");
        require(out, "out");
        *out = nullptr;
        *out = new kbcx_doge{kbcx::load_doge(path)};
    });
}

size_t kbcx_doge_size(const kbcx_doge* set) { return set ? set->set.size() : 0; }

void kbcx_doge_free(kbcx_doge* set) { delete set; }

kbcx_status kbcx_diagnose(const kbcx_model* model, const kbcx_doge* set, const char* suite, const char* options_json,
                          char** out_json) {
    return guarded([&] {
        require(model, "model");
        require(set, "diagnostic set");
        require(suite, "suite");
        require(out_json, "out");
        const json o = parse_or_empty(options_json);
        const std::string name = suite;
        json j;
        if (name == "general") {
            const auto r = kbcx::category_report(model->model, set->set);
            j = json::object();
            for (const auto& [cat, rep] : r) j["categories"][cat] = kbcx::to_json(rep);
            j["tsv"] = kbcx::diagnostic_tsv(r);
        } else if (name == "consistency") {
            const auto r = kbcx::consistency_report(model->model, set->set);
            j = kbcx::to_json(r);
            j["tsv"] = kbcx::diagnostic_tsv(r);
        } else if (name == "deductive" || name == "stereotype") {
            json ft = o.value("finetune", json::object());
            if (!ft.contains("mode")) ft["mode"] = "finetune";
            const auto cfg = config_from(ft, &model->model.spec());
            const auto added_train = facts_from(o, "added_train");
            const auto added_valid = facts_from(o, "added_valid");
            if (name == "deductive") {
                if (added_train.empty())
                    kbcx::fail(kbcx::ErrorCode::InvalidArgument, "the deductive suite needs added_train facts");
                const auto r = kbcx::deductive_protocol(model->model, set->set, added_train, added_valid, cfg);
                j = kbcx::to_json(r);
                j["tsv"] = kbcx::diagnostic_tsv(r);
            } else {
                const bool has_added = o.contains("added_train") && !o["added_train"].is_null();
                const auto r = kbcx::stereotype_report(model->model, set->set, has_added ? &added_train : nullptr,
                                                       has_added ? &added_valid : nullptr, cfg);
                j = kbcx::to_json(r);
                j["tsv"] = kbcx::diagnostic_tsv(r);
            }
        } else {
            kbcx::fail(kbcx::ErrorCode::InvalidArgument,
                       "unknown suite '" + name + "' (expected general, consistency, deductive or stereotype)");
        }
        *out_json = copy_out(j.dump());
    });
}

kbcx_status kbcx_generate_diagnostics(uint64_t seed, size_t size, const char* dir, char** out_json) {
    return guarded([&] {
        require(dir, "dir");
        require(out_json, "out");
        if (size == 0) kbcx::fail(kbcx::ErrorCode::InvalidArgument, "size must be at least 1");
        const auto paths = kbcx::write_synthetic_diagnostics(kbcx::generate_synthetic_diagnostics(seed, size), dir);
        json j = json::array();
        for (const auto& p : paths) j.push_back(p.string());
        *out_json = copy_out(j.dump());
    });
}

kbcx_status kbcx_wilcoxon(const double* diffs, size_t n, char** out_json) {
    return guarded([&] {
        require(out_json, "out");
        if (n > 0) require(diffs, "diffs");
        const auto r = kbcx::wilcoxon_signed_rank(std::vector<double>(diffs, diffs + n));
        const json j{{"w", r.w}, {"w_plus", r.w_plus}, {"w_minus", r.w_minus},
                     {"p", r.p}, {"n", r.n},           {"exact", r.exact}};
        *out_json = copy_out(j.dump());
    });
}

}  // extern "C"
