#include "kbcx/trainer/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>
#include <unordered_map>

#include "kbcx/encoders/transfer.hpp"
#include "kbcx/errors.hpp"
#include "kbcx/log.hpp"
#include "kbcx/trainer/adam.hpp"

namespace kbcx {

std::string_view to_string(TrainMode mode) { return mode == TrainMode::Pretrain ? "pretrain" : "finetune"; }

TrainMode parse_train_mode(std::string_view name) {
    if (name == "pretrain") return TrainMode::Pretrain;
    if (name == "finetune") return TrainMode::Finetune;
    fail(ErrorCode::InvalidArgument, "unknown training mode '" + std::string(name) + "'");
}

TrainConfig TrainConfig::defaults(TrainMode mode) {
    TrainConfig c;
    c.mode = mode;
    if (mode == TrainMode::Pretrain) {
        c.epochs = 100;
        c.batch_size = 4096;
        c.validate_every = 20;
    }
    return c;
}

nlohmann::json TrainConfig::to_json() const {
    nlohmann::json j{{"mode", std::string(to_string(mode))},
                     {"model", model_spec_to_json(model)},
                     {"learning_rate", learning_rate},
                     {"batch_size", batch_size},
                     {"epochs", epochs},
                     {"validate_every", validate_every},
                     {"seed", seed}};
    j["max_valid_queries"] = max_valid_queries ? nlohmann::json(*max_valid_queries) : nlohmann::json(nullptr);
    return j;
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j, const TrainConfig& base) {
    if (!j.is_object()) fail(ErrorCode::InvalidArgument, "training config must be a JSON object");
    TrainConfig c = base;
    try {
        if (j.contains("mode")) c.mode = parse_train_mode(j["mode"].get<std::string>());
        if (j.contains("model")) c.model = model_spec_from_json(j["model"], c.model);
        if (j.contains("learning_rate")) c.learning_rate = j["learning_rate"].get<double>();
        if (j.contains("batch_size")) c.batch_size = j["batch_size"].get<std::size_t>();
        if (j.contains("epochs")) c.epochs = j["epochs"].get<std::size_t>();
        if (j.contains("validate_every")) c.validate_every = j["validate_every"].get<std::size_t>();
        if (j.contains("seed")) c.seed = j["seed"].get<std::uint64_t>();
        if (j.contains("max_valid_queries")) {
            if (j["max_valid_queries"].is_null())
                c.max_valid_queries.reset();
            else
                c.max_valid_queries = j["max_valid_queries"].get<std::size_t>();
        }
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::InvalidArgument, std::string("invalid training config: ") + e.what());
    }
    if (c.learning_rate < 0.0 || !std::isfinite(c.learning_rate))
        fail(ErrorCode::InvalidArgument, "learning rate must be a finite non-negative number");
    if (c.batch_size == 0) fail(ErrorCode::InvalidArgument, "batch size must be positive");
    return c;
}

template <typename T>
Checkpoint TrainResult<T>::checkpoint(const TrainConfig& cfg) const {
    Checkpoint c = model.to_checkpoint(cfg.to_json(), best_valid_mrr);
    nlohmann::json hist = nlohmann::json::array();
    for (const auto& h : history) {
        hist.push_back({{"epoch", h.epoch},
                        {"loss", h.loss},
                        {"valid_mrr", h.valid_mrr ? nlohmann::json(*h.valid_mrr) : nlohmann::json(nullptr)}});
    }
    c.meta["history"] = std::move(hist);
    c.meta["best_epoch"] = best_epoch;
    return c;
}

template <typename T>
Var<T> loss_1n(const LinkModel<T>& model, Binding<T>& b, const std::vector<Query>& batch, TrainMode mode,
               const ForwardContext& ctx) {
    using namespace ops;
    if (batch.empty()) fail(ErrorCode::InvalidArgument, "empty training batch");
    const bool conve = model.spec().model == ModelKind::ConvE;
    std::vector<std::size_t> head_ids, rel_ids, targets, gold_rows;
    for (const auto& q : batch) {
        head_ids.push_back(q.head);
        rel_ids.push_back(q.relation);
    }
    Var<T> rels = model.rows(b, Side::Relation, rel_ids);
    Var<T> heads, cands, gold;
    std::optional<Var<T>> bias;

    if (mode == TrainMode::Finetune) {
        Var<T> all = model.all_rows(b, Side::Entity);
        heads = gather_rows(all, head_ids);
        cands = all;
        for (const auto& q : batch) targets.push_back(q.tail);
        gold_rows = targets;
        gold = gather_rows(all, gold_rows);
        if (conve) bias = model.all_bias(b);
    } else {
        // Candidates are the distinct tails of the batch.
        std::vector<std::size_t> needed, tails;
        std::unordered_map<std::size_t, std::size_t> pos, tail_pos;
        auto slot = [&](std::size_t e) {
            auto [it, fresh] = pos.emplace(e, needed.size());
            if (fresh) needed.push_back(e);
            return it->second;
        };
        std::vector<std::size_t> head_slots, tail_slots;
        for (const auto& q : batch) head_slots.push_back(slot(q.head));
        for (const auto& q : batch) {
            auto [it, fresh] = tail_pos.emplace(q.tail, tails.size());
            if (fresh) {
                tails.push_back(q.tail);
                tail_slots.push_back(slot(q.tail));
            }
            targets.push_back(it->second);
        }
        Var<T> enc = model.rows(b, Side::Entity, needed);
        heads = gather_rows(enc, head_slots);
        cands = gather_rows(enc, tail_slots);
        gold = gather_rows(cands, targets);
        if (conve) bias = model.bias_rows(b, tails);
    }

    Var<T> logits = model.scores(b, heads, rels, cands, bias, ctx);
    Var<T> loss = softmax_cross_entropy(logits, targets);
    if (auto reg = model.regularizer({heads, rels, gold})) {
        loss = add(loss, scale(*reg, T{1} / static_cast<T>(batch.size())));
    }
    return loss;
}

namespace {

template <typename T>
std::string describe_batch(const LinkModel<T>& model, const std::vector<Query>& batch) {
    std::ostringstream os;
    const std::size_t shown = std::min<std::size_t>(batch.size(), 10);
    for (std::size_t i = 0; i < shown; ++i) {
        const auto& q = batch[i];
        os << "\n  (" << model.names(Side::Entity).at(q.head) << ", " << model.names(Side::Relation).at(q.relation)
           << ", " << model.names(Side::Entity).at(q.tail) << ")";
    }
    if (batch.size() > shown) os << "\n  ... " << batch.size() - shown << " more";
    return os.str();
}

void check_model_matches_kb(const ModelSpec&, std::size_t model_entities, std::size_t model_relations,
                            const KnowledgeBase& kb) {
    if (model_entities != kb.num_entities() || model_relations != kb.num_relations()) {
        fail(ErrorCode::Mismatch, "model covers " + std::to_string(model_entities) + " entities and " +
                                      std::to_string(model_relations) + " relations, knowledge base has " +
                                      std::to_string(kb.num_entities()) + " and " +
                                      std::to_string(kb.num_relations()));
    }
}

}  // namespace

template <typename T>
TrainResult<T> train(const TrainConfig& cfg, const KnowledgeBase& kb, LinkModel<T> model,
                     const EpochCallback& on_epoch) {
    check_model_matches_kb(model.spec(), model.num_entities(), model.num_relations(), kb);
    if (cfg.batch_size == 0) fail(ErrorCode::InvalidArgument, "batch size must be positive");
    std::vector<Query> queries = tail_query_view(kb, Split::Train);
    if (queries.empty()) fail(ErrorCode::InvalidArgument, "training split is empty");

    const bool has_valid = !kb.split(Split::Valid).empty();
    std::optional<FilterIndex> filter;
    if (has_valid) filter.emplace(kb);
    EvalOptions eval_opts;
    eval_opts.max_queries = cfg.max_valid_queries;

    std::mt19937_64 shuffle_rng(cfg.seed);
    std::mt19937_64 dropout_rng(cfg.seed ^ 0x9e3779b97f4a7c15ull);
    Adam<T> adam(cfg.learning_rate);

    TrainResult<T> result;
    result.model = model;
    std::vector<std::size_t> order(queries.size());
    std::iota(order.begin(), order.end(), 0);

    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), shuffle_rng);
        double loss_sum = 0;
        std::size_t batches = 0;
        for (std::size_t begin = 0; begin < order.size(); begin += cfg.batch_size) {
            const std::size_t end = std::min(order.size(), begin + cfg.batch_size);
            std::vector<Query> batch;
            batch.reserve(end - begin);
            for (std::size_t i = begin; i < end; ++i) batch.push_back(queries[order[i]]);

            Tape<T> tape;
            Binding<T> b(tape, model.params());
            ForwardContext ctx;
            ctx.training = true;
            ctx.rng = &dropout_rng;
            Var<T> loss = loss_1n(model, b, batch, cfg.mode, ctx);
            const double lv = static_cast<double>(loss.value()[0]);
            if (!std::isfinite(lv)) {
                fail(ErrorCode::Numeric, "non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                                             std::to_string(batches + 1) + "; offending batch:" +
                                             describe_batch(model, batch));
            }
            tape.backward(loss);
            adam.begin_step();
            for (const auto& [name, id] : b.bound_trainable()) {
                const Array<T>& g = tape.grad(id);
                for (std::size_t i = 0; i < g.size(); ++i) {
                    if (!std::isfinite(static_cast<double>(g[i]))) {
                        fail(ErrorCode::Numeric, "non-finite gradient for '" + name + "' at epoch " +
                                                     std::to_string(epoch) + ", batch " +
                                                     std::to_string(batches + 1) + "; offending batch:" +
                                                     describe_batch(model, batch));
                    }
                }
                adam.update(name, model.params().at(name), g);
            }
            loss_sum += lv;
            ++batches;
        }

        EpochRecord rec;
        rec.epoch = epoch;
        rec.loss = loss_sum / static_cast<double>(batches);
        const bool due = epoch == cfg.epochs || (cfg.validate_every > 0 && epoch % cfg.validate_every == 0);
        if (has_valid && due) {
            const RankingReport r = evaluate(model, kb, Split::Valid, *filter, eval_opts);
            rec.valid_mrr = r.mrr;
            if (!result.best_valid_mrr || r.mrr > *result.best_valid_mrr) {
                result.best_valid_mrr = r.mrr;
                result.best_epoch = epoch;
                result.model = model;
            }
        }
        result.history.push_back(rec);
        if (on_epoch) on_epoch(rec);
    }
    if (!has_valid) {
        result.model = std::move(model);
        result.best_epoch = cfg.epochs;
    }
    return result;
}

template <typename T>
LinkModel<T> make_model(const TrainConfig& cfg, const KnowledgeBase& kb, const WordVectors* word_vectors,
                        const LinkModel<T>* pretrained) {
    LinkModel<T> m = LinkModel<T>::create(cfg.model, kb.entity_names(), kb.relation_names(), cfg.seed, word_vectors);
    if (pretrained) initialize_from_pretrained(*pretrained, m, cfg.seed);
    return m;
}

std::vector<TrainConfig> GridSpec::cells(const TrainConfig& base) const {
    std::vector<TrainConfig> out{base};
    auto expand = [&out](const auto& values, auto apply) {
        if (values.empty()) return;
        std::vector<TrainConfig> next;
        for (const auto& c : out)
            for (const auto& v : values) {
                TrainConfig n = c;
                apply(n, v);
                next.push_back(std::move(n));
            }
        out = std::move(next);
    };
    expand(learning_rates, [](TrainConfig& c, double v) { c.learning_rate = v; });
    expand(dropouts, [](TrainConfig& c, double v) { c.model.dropout = v; });
    expand(n3_lambdas, [](TrainConfig& c, double v) { c.model.n3_lambda = v; });
    expand(batch_sizes, [](TrainConfig& c, std::size_t v) { c.batch_size = v; });
    expand(dims, [](TrainConfig& c, std::size_t v) { c.model.dim = v; });
    return out;
}

GridSpec GridSpec::from_json(const nlohmann::json& j) {
    if (!j.is_object()) fail(ErrorCode::InvalidArgument, "grid must be a JSON object");
    GridSpec g;
    try {
        for (const auto& [key, value] : j.items()) {
            if (!value.is_array()) fail(ErrorCode::InvalidArgument, "grid axis '" + key + "' must be a list");
            if (key == "learning_rate" || key == "lr")
                g.learning_rates = value.get<std::vector<double>>();
            else if (key == "dropout")
                g.dropouts = value.get<std::vector<double>>();
            else if (key == "n3_lambda" || key == "n3")
                g.n3_lambdas = value.get<std::vector<double>>();
            else if (key == "batch_size")
                g.batch_sizes = value.get<std::vector<std::size_t>>();
            else if (key == "dim")
                g.dims = value.get<std::vector<std::size_t>>();
            else
                fail(ErrorCode::InvalidArgument, "unknown grid axis '" + key + "'");
        }
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::InvalidArgument, std::string("invalid grid: ") + e.what());
    }
    return g;
}

template <typename T>
GridResult<T> grid_search(const std::vector<TrainConfig>& cells, const KnowledgeBase& kb,
                          const std::function<LinkModel<T>(const TrainConfig&)>& factory) {
    if (cells.empty()) fail(ErrorCode::InvalidArgument, "grid has no cells");
    if (kb.split(Split::Valid).empty()) fail(ErrorCode::InvalidArgument, "grid search needs validation triples");
    const FilterIndex filter(kb);
    std::optional<GridResult<T>> best;
    std::vector<GridRow> rows;
    for (std::size_t i = 0; i < cells.size(); ++i) {
        TrainResult<T> r = train(cells[i], kb, factory(cells[i]));
        const RankingReport rep = evaluate(r.model, kb, Split::Valid, filter);
        GridRow row;
        row.cell = i;
        row.config = cells[i].to_json();
        row.valid_mr = rep.mr;
        row.valid_mrr = rep.mrr;
        row.valid_h10 = rep.hits10;
        rows.push_back(row);
        if (!best || rep.mrr > best->rows.front().valid_mrr) {
            best = GridResult<T>{std::move(r), cells[i], {row}};
        }
    }
    best->rows = std::move(rows);
    return std::move(*best);
}

std::string grid_table(const std::vector<GridRow>& rows) {
    std::ostringstream os;
    os << "cell\tconfig\tvalid_MR\tvalid_MRR\tvalid_H@10\n";
    char buf[96];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof buf, "\t%.4f\t%.6f\t%.6f\n", r.valid_mr, r.valid_mrr, r.valid_h10);
        os << r.cell << '\t' << r.config.dump() << buf;
    }
    return os.str();
}

template struct TrainResult<float>;
template struct TrainResult<double>;
template Var<float> loss_1n<float>(const LinkModel<float>&, Binding<float>&, const std::vector<Query>&, TrainMode,
                                   const ForwardContext&);
template Var<double> loss_1n<double>(const LinkModel<double>&, Binding<double>&, const std::vector<Query>&,
                                     TrainMode, const ForwardContext&);
template TrainResult<float> train<float>(const TrainConfig&, const KnowledgeBase&, LinkModel<float>,
                                         const EpochCallback&);
template TrainResult<double> train<double>(const TrainConfig&, const KnowledgeBase&, LinkModel<double>,
                                           const EpochCallback&);
template LinkModel<float> make_model<float>(const TrainConfig&, const KnowledgeBase&, const WordVectors*,
                                            const LinkModel<float>*);
template LinkModel<double> make_model<double>(const TrainConfig&, const KnowledgeBase&, const WordVectors*,
                                              const LinkModel<double>*);
template GridResult<float> grid_search<float>(const std::vector<TrainConfig>&, const KnowledgeBase&,
                                              const std::function<LinkModel<float>(const TrainConfig&)>&);
template GridResult<double> grid_search<double>(const std::vector<TrainConfig>&, const KnowledgeBase&,
                                                const std::function<LinkModel<double>(const TrainConfig&)>&);

}  // namespace kbcx
