#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "cli_support.hpp"
#include "json.hpp"
#include "kbcx/kbcx.h"

using json = nlohmann::json;
namespace fs = std::filesystem;
using namespace kbcx_cli;

namespace {

struct KbDeleter {
    void operator()(kbcx_kb* p) const { kbcx_kb_free(p); }
};
struct ModelDeleter {
    void operator()(kbcx_model* p) const { kbcx_model_free(p); }
};
struct DogeDeleter {
    void operator()(kbcx_doge* p) const { kbcx_doge_free(p); }
};
using Kb = std::unique_ptr<kbcx_kb, KbDeleter>;
using Model = std::unique_ptr<kbcx_model, ModelDeleter>;
using Doge = std::unique_ptr<kbcx_doge, DogeDeleter>;

void check(kbcx_status st) {
    if (st == KBCX_OK) return;
    if (st == KBCX_ERR_INVALID_ARGUMENT) throw UsageError(kbcx_last_error());
    throw RuntimeError(kbcx_status_name(st), kbcx_last_error());
}

std::string take(char* s) {
    std::string out = s ? s : "";
    kbcx_string_free(s);
    return out;
}

json take_json(char* s) { return json::parse(take(s)); }

std::string utc_now() {
    const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

void require_file(const std::string& path, const std::string& what) {
    if (!fs::is_regular_file(path)) throw UsageError(what + " file not found: " + path);
}

// ---------------------------------------------------------------------------
// Shared flag groups

struct DataFlags {
    std::string kb_dir, train, valid, test, clusters, format = "triple-tsv";
    bool no_clusters = false;

    void add(CLI::App* app, bool clusters_flag = true) {
        app->add_option("--kb", kb_dir, "Directory with train.tsv, valid.tsv, test.tsv and optional clusters.tsv");
        app->add_option("--train", train, "Training triples");
        app->add_option("--valid", valid, "Validation triples");
        app->add_option("--test", test, "Test triples");
        app->add_option("--format", format, "Triple file format: triple-tsv or olpbench-tsv");
        if (clusters_flag) {
            app->add_option("--clusters", clusters, "Gold cluster file (name<TAB>cluster)");
            app->add_flag("--no-clusters", no_clusters, "Ignore gold clusters");
        }
    }

    json paths() const {
        json p = json::object();
        auto pick = [&](const std::string& flag, const std::string& file) -> std::string {
            if (!flag.empty()) return flag;
            if (kb_dir.empty()) return "";
            const auto candidate = fs::path(kb_dir) / file;
            return fs::exists(candidate) ? candidate.string() : "";
        };
        if (!kb_dir.empty() && !fs::is_directory(kb_dir)) throw UsageError("knowledge base directory not found: " + kb_dir);
        const auto tr = pick(train, "train.tsv");
        if (tr.empty()) throw UsageError("a training file is required (--train or --kb)");
        require_file(tr, "train");
        p["train"] = tr;
        if (const auto v = pick(valid, "valid.tsv"); !v.empty()) require_file(p["valid"] = v, "valid");
        if (const auto t = pick(test, "test.tsv"); !t.empty()) require_file(p["test"] = t, "test");
        if (!no_clusters)
            if (const auto c = pick(clusters, "clusters.tsv"); !c.empty()) require_file(p["clusters"] = c, "clusters");
        p["format"] = format;
        return p;
    }
};

struct ModelFlags {
    std::optional<std::string> model, encoder;
    std::optional<std::size_t> dim, word_dim, conve_rows, batch, epochs, validate_every, max_valid;
    std::optional<double> dropout, n3, lr;
    std::optional<bool> freeze_words;
    std::string config;

    void add(CLI::App* app, bool architecture = true) {
        if (architecture) {
            app->add_option("--model", model, "tucker, conve or 5star");
            app->add_option("--encoder", encoder, "none (lookup table) or gru");
            app->add_option("--dim", dim, "Embedding size");
            app->add_option("--word-dim", word_dim, "Word embedding size (GRU encoder)");
            app->add_option("--conve-rows", conve_rows, "Rows of the ConvE input image");
            app->add_flag("--freeze-words", freeze_words, "Keep word embeddings fixed");
        }
        app->add_option("--dropout", dropout, "Dropout rate");
        app->add_option("--n3", n3, "N3 regularization weight (5star)");
        app->add_option("--lr", lr, "Learning rate");
        app->add_option("--batch", batch, "Batch size");
        app->add_option("--epochs", epochs, "Training epochs");
        app->add_option("--validate-every", validate_every, "Validation cadence in epochs (0: only at the end)");
        app->add_option("--max-valid-queries", max_valid, "Cap on validation queries");
        app->add_option("--config", config, "JSON config file; flags override its entries");
    }

    json resolve(const std::string& mode) const {
        json cfg = json::object();
        if (!config.empty()) {
            require_file(config, "config");
            cfg = read_json_file(config);
            if (!cfg.is_object()) throw UsageError(config + ": expected a JSON object");
        }
        json flags = json::object();
        if (!mode.empty()) flags["mode"] = mode;
        json m = json::object();
        if (model) m["kind"] = *model;
        if (encoder) m["encoder"] = *encoder;
        if (dim) m["dim"] = *dim;
        if (word_dim) m["word_dim"] = *word_dim;
        if (conve_rows) m["conve_rows"] = *conve_rows;
        if (dropout) m["dropout"] = *dropout;
        if (n3) m["n3_lambda"] = *n3;
        if (freeze_words && *freeze_words) m["train_word_embeddings"] = false;
        if (!m.empty()) flags["model"] = m;
        if (lr) flags["learning_rate"] = *lr;
        if (batch) flags["batch_size"] = *batch;
        if (epochs) flags["epochs"] = *epochs;
        if (validate_every) flags["validate_every"] = *validate_every;
        if (max_valid) flags["max_valid_queries"] = *max_valid;
        return merge(cfg, flags);
    }
};

struct VectorFlags {
    std::string path;
    std::optional<std::size_t> limit;
    bool random = false;

    void add(CLI::App* app) {
        app->add_option("--word-vectors", path, "Pretrained word vectors (token f1 ... fD per line)");
        app->add_option("--vocab-limit", limit, "Read only the first N word vectors");
        app->add_flag("--random-vectors", random, "Replace word vectors by random draws of the same shape");
    }

    json options() const {
        json o = json::object();
        if (path.empty()) return o;
        require_file(path, "word vector");
        o["word_vectors"] = path;
        if (limit) o["vocab_limit"] = *limit;
        o["random_word_vectors"] = random;
        return o;
    }
};

// ---------------------------------------------------------------------------
// Manifest

struct Manifest {
    json doc = json::object();
    std::vector<std::string> outputs;
    std::string started = utc_now();

    Manifest(const std::string& command, const std::vector<std::string>& argv) {
        doc["command"] = command;
        doc["argv"] = argv;
        doc["kbcx_version"] = kbcx_version();
        doc["inputs"] = json::object();
    }

    void input(const std::string& role, const std::string& path) {
        doc["inputs"][role] = {{"path", path}, {"sha256", sha256_file(path)}};
    }
    void inputs_from(const json& paths) {
        for (const char* role : {"train", "valid", "test", "clusters"})
            if (paths.contains(role)) input(role, paths[role]);
    }

    fs::path write(const fs::path& path, const std::string& text) {
        write_text(path, text);
        outputs.push_back(path.string());
        return path;
    }

    void finish(const fs::path& dir) {
        const auto path = dir / "manifest.json";
        outputs.push_back(path.string());
        doc["outputs"] = outputs;
        doc["timestamps"] = {{"started", started}, {"finished", utc_now()}};
        write_text(path, doc.dump(2) + "\n");
        for (const auto& o : outputs) std::cout << o << '\n';
    }
};

fs::path prepare_out(const std::string& out) {
    fs::path dir(out);
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec || !fs::is_directory(dir)) throw RuntimeError("io", "cannot create output directory " + out);
    return dir;
}

Kb load_kb(const json& paths) {
    kbcx_kb* kb = nullptr;
    check(kbcx_kb_load(paths.dump().c_str(), &kb));
    return Kb(kb);
}

json kb_summary(const kbcx_kb* kb) {
    char* s = nullptr;
    check(kbcx_kb_summary(kb, &s));
    return take_json(s);
}

Model load_model(const std::string& path) {
    require_file(path, "checkpoint");
    kbcx_model* m = nullptr;
    check(kbcx_model_load(path.c_str(), nullptr, &m));
    return Model(m);
}

json model_info(const kbcx_model* m) {
    char* s = nullptr;
    check(kbcx_model_info(m, &s));
    return take_json(s);
}

json evaluate(const kbcx_model* m, const kbcx_kb* kb, const std::string& split, json options) {
    char* s = nullptr;
    check(kbcx_evaluate(m, kb, split.c_str(), options.dump().c_str(), &s));
    return take_json(s);
}

void add_metrics(std::map<std::string, double>& metrics, const json& report, const std::string& prefix) {
    for (const char* k : {"MR", "MRR", "H@1", "H@3", "H@10"}) metrics[prefix + k] = report[k].get<double>();
}

std::string curve_tsv(const json& history) {
    std::string out = "epoch\tvalid_MRR\n";
    char line[64];
    for (const auto& h : history) {
        if (h["valid_mrr"].is_null()) continue;
        std::snprintf(line, sizeof line, "%zu\t%.6f\n", h["epoch"].get<std::size_t>(), h["valid_mrr"].get<double>());
        out += line;
    }
    return out;
}

std::string reports_tsv(const std::vector<json>& reports) {
    std::string out;
    for (std::size_t i = 0; i < reports.size(); ++i) {
        const auto tsv = reports[i]["tsv"].get<std::string>();
        out += i == 0 ? tsv : tsv.substr(tsv.find('\n') + 1);
    }
    return out;
}

void epoch_printer(const char* record, void*) {
    const auto r = json::parse(record);
    if (r["valid_mrr"].is_null())
        std::fprintf(stderr, "epoch %zu loss %.5f\n", r["epoch"].get<std::size_t>(), r["loss"].get<double>());
    else
        std::fprintf(stderr, "epoch %zu loss %.5f valid_MRR %.4f\n", r["epoch"].get<std::size_t>(),
                     r["loss"].get<double>(), r["valid_mrr"].get<double>());
}

json without_seed(json cfg) {
    cfg.erase("seed");
    return cfg;
}

// ---------------------------------------------------------------------------
// Commands

struct TrainCommand {
    DataFlags data;
    ModelFlags model;
    VectorFlags vectors;
    std::string init, out = "out", seeds = "5";
    bool quiet = false;
};

void run_train(const std::string& mode, const TrainCommand& c, const std::vector<std::string>& argv) {
    const auto paths = c.data.paths();
    const auto cfg = c.model.resolve(mode);
    const auto vec = c.vectors.options();
    const auto seeds = parse_seeds(c.seeds);
    if (!c.init.empty()) require_file(c.init, "init checkpoint");
    const auto dir = prepare_out(c.out);

    Manifest man(mode, argv);
    man.inputs_from(paths);
    if (!c.init.empty()) man.input("init", c.init);
    if (vec.contains("word_vectors")) man.input("word_vectors", vec["word_vectors"]);
    if (!c.model.config.empty()) man.input("config", c.model.config);

    const auto kb = load_kb(paths);
    const auto summary = kb_summary(kb.get());
    Model init;
    if (!c.init.empty()) init = load_model(c.init);

    std::vector<std::map<std::string, double>> rows;
    json per_seed = json::array();
    json resolved;
    for (const auto seed : seeds) {
        json run_cfg = cfg;
        run_cfg["seed"] = seed;
        kbcx_model* fresh = nullptr;
        check(kbcx_model_create(run_cfg.dump().c_str(), kb.get(), init.get(), vec.dump().c_str(), &fresh));
        Model start(fresh);
        kbcx_model* trained = nullptr;
        if (!c.quiet) std::fprintf(stderr, "seed %llu\n", static_cast<unsigned long long>(seed));
        check(kbcx_train(run_cfg.dump().c_str(), kb.get(), start.get(), c.quiet ? nullptr : epoch_printer, nullptr,
                         &trained));
        Model model(trained);
        const auto stem = "seed" + std::to_string(seed);
        const auto ckpt = dir / (stem + ".ckpt");
        check(kbcx_model_save(model.get(), ckpt.string().c_str()));
        man.outputs.push_back(ckpt.string());
        const auto info = model_info(model.get());
        if (resolved.is_null()) resolved = without_seed(info["config"]);
        man.write(dir / (stem + ".curve.tsv"), curve_tsv(info["history"]));

        std::map<std::string, double> metrics;
        std::vector<json> reports;
        const json eval_opts{{"clusters", !c.data.no_clusters}};
        for (const char* split : {"valid", "test"}) {
            if (summary[split].get<std::size_t>() == 0) continue;
            reports.push_back(evaluate(model.get(), kb.get(), split, eval_opts));
            add_metrics(metrics, reports.back(), std::string(split) + "_");
        }
        if (!reports.empty()) man.write(dir / (stem + ".report.tsv"), reports_tsv(reports));
        json m = json::object();
        for (const auto& [k, v] : metrics) m[k] = v;
        man.write(dir / (stem + ".metrics.json"), json{{"seed", seed}, {"metrics", m}}.dump(2) + "\n");
        per_seed.push_back({{"seed", seed},
                            {"metrics", m},
                            {"best_epoch", info["best_epoch"]},
                            {"best_valid_mrr", info["best_valid_mrr"]},
                            {"fingerprint", info["fingerprint"]}});
        rows.push_back(std::move(metrics));
    }
    man.doc["config"] = resolved;
    man.doc["seeds"] = seeds;
    man.doc["kb"] = summary;
    man.doc["per_seed"] = per_seed;
    if (!rows.front().empty()) {
        const auto agg = aggregate_metrics(rows);
        man.doc["aggregate"] = aggregate_json(agg);
        man.write(dir / "aggregate.tsv", aggregate_tsv(agg));
    }
    man.finish(dir);
}

struct EvalCommand {
    DataFlags data;
    std::vector<std::string> ckpts;
    std::string split = "test", out = "out";
};

void run_eval(const std::string& command, const EvalCommand& c, const std::vector<std::string>& argv) {
    const bool zero_shot = command == "zeroshot";
    const auto paths = c.data.paths();
    for (const auto& p : c.ckpts) require_file(p, "checkpoint");
    if (c.split != "train" && c.split != "valid" && c.split != "test")
        throw UsageError("--split must be train, valid or test");
    const auto dir = prepare_out(c.out);
    Manifest man(command, argv);
    man.inputs_from(paths);
    for (std::size_t i = 0; i < c.ckpts.size(); ++i) man.input("checkpoint_" + std::to_string(i + 1), c.ckpts[i]);

    const auto kb = load_kb(paths);
    const auto summary = kb_summary(kb.get());
    if (summary[c.split].get<std::size_t>() == 0) throw UsageError("the " + c.split + " split is empty");
    const double random_mr = (summary["entities"].get<double>() + 1.0) / 2.0;

    std::vector<std::map<std::string, double>> rows;
    json per = json::array();
    std::string table;
    for (std::size_t i = 0; i < c.ckpts.size(); ++i) {
        const auto model = load_model(c.ckpts[i]);
        const json opts{{"clusters", !c.data.no_clusters}, {"zero_shot", zero_shot}};
        const auto rep = evaluate(model.get(), kb.get(), c.split, opts);
        const auto stem = c.ckpts.size() == 1 ? std::string("report") : "report" + std::to_string(i + 1);
        man.write(dir / (stem + ".tsv"), rep["tsv"].get<std::string>());
        table += c.ckpts[i] + "\n" + rep["table"].get<std::string>();
        std::map<std::string, double> metrics;
        add_metrics(metrics, rep, "");
        json m = json::object();
        for (const auto& [k, v] : metrics) m[k] = v;
        per.push_back({{"checkpoint", c.ckpts[i]}, {"metrics", m}, {"n_queries", rep["n_queries"]}});
        rows.push_back(std::move(metrics));
    }
    if (zero_shot) table += "random baseline MR " + std::to_string(random_mr) + "\n";
    std::cerr << table;
    man.write(dir / "report.txt", table);
    man.doc["split"] = c.split;
    man.doc["zero_shot"] = zero_shot;
    man.doc["kb"] = summary;
    man.doc["random_baseline_MR"] = random_mr;
    man.doc["per_checkpoint"] = per;
    const auto agg = aggregate_metrics(rows);
    man.doc["aggregate"] = aggregate_json(agg);
    man.write(dir / "aggregate.tsv", aggregate_tsv(agg));
    man.finish(dir);
}

struct DiagnoseCommand {
    ModelFlags finetune;
    std::string ckpt, doge, suite, added_train, added_valid, out = "out";
    std::optional<std::uint64_t> seed;
};

void run_diagnose(const DiagnoseCommand& c, const std::vector<std::string>& argv) {
    require_file(c.ckpt, "checkpoint");
    require_file(c.doge, "diagnostic set");
    if (!c.added_train.empty()) require_file(c.added_train, "added facts");
    if (!c.added_valid.empty()) require_file(c.added_valid, "added validation facts");
    const auto ft = c.finetune.resolve("finetune");
    json opts{{"finetune", ft}};
    if (c.seed) opts["finetune"]["seed"] = *c.seed;
    if (!c.added_train.empty()) opts["added_train"] = c.added_train;
    if (!c.added_valid.empty()) opts["added_valid"] = c.added_valid;
    const auto dir = prepare_out(c.out);
    Manifest man("diagnose", argv);
    man.input("checkpoint", c.ckpt);
    man.input("doge", c.doge);
    if (!c.added_train.empty()) man.input("added_train", c.added_train);
    if (!c.added_valid.empty()) man.input("added_valid", c.added_valid);

    const auto model = load_model(c.ckpt);
    kbcx_doge* d = nullptr;
    check(kbcx_doge_load(c.doge.c_str(), &d));
    Doge set(d);
    char* s = nullptr;
    check(kbcx_diagnose(model.get(), set.get(), c.suite.c_str(), opts.dump().c_str(), &s));
    auto report = take_json(s);
    const auto tsv = report["tsv"].get<std::string>();
    report.erase("tsv");
    std::cerr << tsv;
    man.write(dir / (c.suite + ".tsv"), tsv);
    man.write(dir / (c.suite + ".json"), report.dump(2) + "\n");
    man.doc["suite"] = c.suite;
    man.doc["instances"] = kbcx_doge_size(set.get());
    if (c.suite == "deductive" || c.suite == "stereotype") man.doc["config"] = opts["finetune"];
    man.doc["report"] = report;
    man.finish(dir);
}

struct GridCommand {
    DataFlags data;
    ModelFlags model;
    VectorFlags vectors;
    std::string grid, init, out = "out";
    std::uint64_t seed = 1;
};

void run_grid(const GridCommand& c, const std::vector<std::string>& argv) {
    const auto paths = c.data.paths();
    if (paths.find("valid") == paths.end()) throw UsageError("grid search needs a validation split");
    require_file(c.grid, "grid");
    const auto grid = read_json_file(c.grid);
    auto cfg = c.model.resolve("finetune");
    cfg["seed"] = c.seed;
    const auto vec = c.vectors.options();
    if (!c.init.empty()) require_file(c.init, "init checkpoint");
    const auto dir = prepare_out(c.out);
    Manifest man("gridsearch", argv);
    man.inputs_from(paths);
    man.input("grid", c.grid);
    if (!c.init.empty()) man.input("init", c.init);
    if (!c.model.config.empty()) man.input("config", c.model.config);

    const auto kb = load_kb(paths);
    Model init;
    if (!c.init.empty()) init = load_model(c.init);
    kbcx_model* best = nullptr;
    char* s = nullptr;
    check(kbcx_grid_search(cfg.dump().c_str(), grid.dump().c_str(), kb.get(), init.get(), vec.dump().c_str(), &best,
                           &s));
    Model model(best);
    const auto result = take_json(s);
    man.write(dir / "grid.tsv", result["table"].get<std::string>());
    man.write(dir / "best_config.json", without_seed(result["best_config"]).dump(2) + "\n");
    const auto ckpt = dir / "best.ckpt";
    check(kbcx_model_save(model.get(), ckpt.string().c_str()));
    man.outputs.push_back(ckpt.string());
    man.doc["config"] = cfg;
    man.doc["grid"] = grid;
    man.doc["rows"] = result["rows"];
    man.doc["best_config"] = result["best_config"];
    man.finish(dir);
}

void run_gen(std::uint64_t seed, std::size_t size, const std::string& out, const std::vector<std::string>& argv) {
    const auto dir = prepare_out(out);
    char* s = nullptr;
    check(kbcx_generate_diagnostics(seed, size, dir.string().c_str(), &s));
    Manifest man("gen-diagnostics", argv);
    for (const auto& p : take_json(s)) man.outputs.push_back(p.get<std::string>());
    man.doc["seed"] = seed;
    man.doc["size"] = size;
    man.finish(dir);
}

void run_aggregate(const std::vector<std::string>& files, const std::string& out, bool as_json) {
    std::vector<std::map<std::string, double>> rows;
    for (const auto& f : files) {
        require_file(f, "metrics");
        rows.push_back(read_metrics_file(f));
    }
    const auto agg = aggregate_metrics(rows);
    const auto text = as_json ? aggregate_json(agg).dump(2) + "\n" : aggregate_tsv(agg);
    if (out.empty()) {
        std::cout << text;
    } else {
        write_text(out, text);
        std::cout << out << '\n';
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Knowledge base completion with pretrained name encoders"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string(kbcx_version()));
    std::vector<std::string> args(argv + 1, argv + argc);

    TrainCommand pre, fine;
    for (auto [name, cmd, desc] : {std::tuple{"pretrain", &pre, "Pretrain on a large corpus (in-batch negatives)"},
                                   std::tuple{"finetune", &fine, "Train on a target knowledge base (1-N scoring)"}}) {
        auto* sub = app.add_subcommand(name, desc);
        cmd->data.add(sub);
        cmd->model.add(sub);
        cmd->vectors.add(sub);
        sub->add_option("--seeds", cmd->seeds, "Seed count N (seeds 1..N) or a comma list")->capture_default_str();
        sub->add_option("--out", cmd->out, "Output directory")->capture_default_str();
        sub->add_flag("--quiet", cmd->quiet, "No per-epoch progress");
        if (std::string(name) == "finetune") sub->add_option("--init", cmd->init, "Pretrained checkpoint");
    }

    EvalCommand ev, zs;
    for (auto [name, cmd, desc] : {std::tuple{"eval", &ev, "Filtered ranking evaluation"},
                                   std::tuple{"zeroshot", &zs, "Evaluate a GRU checkpoint on an unseen knowledge base"}}) {
        auto* sub = app.add_subcommand(name, desc);
        cmd->data.add(sub);
        sub->add_option("--ckpt", cmd->ckpts, "Checkpoint(s); several are aggregated")->required();
        sub->add_option("--split", cmd->split, "train, valid or test")->capture_default_str();
        sub->add_option("--out", cmd->out, "Output directory")->capture_default_str();
    }

    DiagnoseCommand dg;
    auto* diag = app.add_subcommand("diagnose", "Run a diagnostic suite on a checkpoint");
    diag->add_option("--ckpt", dg.ckpt, "Checkpoint")->required();
    diag->add_option("--doge", dg.doge, "Diagnostic set (JSON lines)")->required();
    diag->add_option("--suite", dg.suite, "general, consistency, deductive or stereotype")
        ->required()
        ->check(CLI::IsMember({"general", "consistency", "deductive", "stereotype"}));
    diag->add_option("--added-train", dg.added_train, "Added facts to fine-tune on");
    diag->add_option("--added-valid", dg.added_valid, "Added validation facts");
    diag->add_option("--seed", dg.seed, "Fine-tuning seed");
    diag->add_option("--out", dg.out, "Output directory")->capture_default_str();
    dg.finetune.add(diag, false);

    GridCommand gr;
    auto* grid = app.add_subcommand("gridsearch", "Grid search over fine-tuning hyperparameters");
    gr.data.add(grid);
    gr.model.add(grid);
    gr.vectors.add(grid);
    grid->add_option("--grid", gr.grid, "Grid JSON: {\"learning_rate\": [...], \"dropout\": [...], ...}")->required();
    grid->add_option("--init", gr.init, "Pretrained checkpoint");
    grid->add_option("--seed", gr.seed, "Seed for every cell")->capture_default_str();
    grid->add_option("--out", gr.out, "Output directory")->capture_default_str();

    std::uint64_t gen_seed = 1;
    std::size_t gen_size = 1;
    std::string gen_out = "out";
    auto* gen = app.add_subcommand("gen-diagnostics", "Write a synthetic world with diagnostic items");
    gen->add_option("--seed", gen_seed, "Generator seed")->capture_default_str();
    gen->add_option("--size", gen_size, "Scale factor")->capture_default_str()->check(CLI::PositiveNumber);
    gen->add_option("--out", gen_out, "Output directory")->capture_default_str();

    std::vector<std::string> agg_files;
    std::string agg_out;
    bool agg_json = false;
    auto* agg = app.add_subcommand("aggregate", "Mean and sample stdev over per-seed metric files");
    agg->add_option("files", agg_files, "Metric JSON files")->required();
    agg->add_option("--out", agg_out, "Write to a file instead of standard output");
    agg->add_flag("--json", agg_json, "JSON instead of TSV");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (*app.get_subcommand("pretrain")) run_train("pretrain", pre, args);
        else if (*app.get_subcommand("finetune")) run_train("finetune", fine, args);
        else if (*app.get_subcommand("eval")) run_eval("eval", ev, args);
        else if (*app.get_subcommand("zeroshot")) run_eval("zeroshot", zs, args);
        else if (*diag) run_diagnose(dg, args);
        else if (*grid) run_grid(gr, args);
        else if (*gen) run_gen(gen_seed, gen_size, gen_out, args);
        else if (*agg) run_aggregate(agg_files, agg_out, agg_json);
    } catch (const UsageError& e) {
        std::fprintf(stderr, "error[usage]: %s\n", e.what());
        return 2;
    } catch (const RuntimeError& e) {
        std::fprintf(stderr, "error[%s]: %s\n", e.category.c_str(), e.what());
        return 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error[internal]: %s\n", e.what());
        return 1;
    }
    return 0;
}
