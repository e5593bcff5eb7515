#include "kbcx/diagnostics/protocols.hpp"

#include <cstdio>
#include <set>
#include <sstream>
#include <thread>

#include "kbcx/data/names.hpp"
#include "kbcx/encoders/transfer.hpp"
#include "kbcx/errors.hpp"
#include "kbcx/evaluator/evaluate.hpp"

namespace kbcx {

namespace {

constexpr std::string_view kInversePrefix = "inverse of ";

std::string strip_inverse(const std::string& r) {
    return r.rfind(kInversePrefix, 0) == 0 ? r.substr(kInversePrefix.size()) : r;
}

std::string reciprocal(const std::string& r) {
    return r.rfind(kInversePrefix, 0) == 0 ? r.substr(kInversePrefix.size()) : std::string(kInversePrefix) + r;
}

std::string fmt(double v, const char* spec = "%.4f") {
    char buf[64];
    std::snprintf(buf, sizeof buf, spec, v);
    return buf;
}

void ranking_row(std::ostringstream& os, const std::string& section, const std::string& row, const RankingReport& r) {
    os << section << '\t' << row << '\t' << fmt(r.mr) << '\t' << fmt(r.mrr) << '\t' << fmt(r.hits1) << '\t'
       << r.n_queries() << '\n';
}

constexpr const char* kRankingHeader = "section\trow\tMR\tMRR\tH@1\tn\n";

const char* kGroupOrder[] = {"st-masc", "st-fem", "anti-masc", "anti-fem"};

}  // namespace

template <typename T>
std::vector<double> candidate_scores(const LinkModel<T>& model, const DiagnosticInstance& inst) {
    validate_instance(inst);
    const std::string rel = normalize_name(inst.relation);
    std::string query_entity, query_relation;
    if (inst.head_missing()) {
        query_entity = normalize_name(inst.tail);
        query_relation = reciprocal(rel);
    } else {
        query_entity = normalize_name(inst.head);
        query_relation = rel;
    }
    std::vector<std::string> cands;
    for (const auto& c : inst.candidates) cands.push_back(normalize_name(c));
    const Array<T> h = model.encode(Side::Entity, {query_entity});
    const Array<T> r = model.encode(Side::Relation, {query_relation});
    const Array<T> c = model.encode(Side::Entity, cands);
    std::optional<Array<T>> bias;
    if (model.spec().model == ModelKind::ConvE) bias = model.tail_bias(cands);
    const Array<T> s = model.score_rows(h, r, c, bias ? &*bias : nullptr);
    return std::vector<double>(s.data.begin(), s.data.end());
}

template <typename T>
double rank_candidates(const LinkModel<T>& model, const DiagnosticInstance& inst) {
    const auto scores = candidate_scores(model, inst);
    return rank_query(std::span<const double>(scores), inst.gold);
}

template <typename T>
std::vector<double> rank_instances(const LinkModel<T>& model, const DiagnosticSet& set,
                                   const std::vector<std::size_t>& which, std::size_t workers) {
    std::vector<std::size_t> idx = which;
    if (idx.empty()) {
        idx.resize(set.size());
        std::iota(idx.begin(), idx.end(), 0);
    }
    std::vector<double> ranks(idx.size());
    const std::size_t w = std::min(resolve_workers(workers), std::max<std::size_t>(1, idx.size()));
    auto work = [&](std::size_t start) {
        for (std::size_t i = start; i < idx.size(); i += w) ranks[i] = rank_candidates(model, set.instances()[idx[i]]);
    };
    if (w <= 1) {
        work(0);
        return ranks;
    }
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(w);
    for (std::size_t t = 0; t < w; ++t)
        pool.emplace_back([&, t] {
            try {
                work(t);
            } catch (...) {
                errors[t] = std::current_exception();
            }
        });
    for (auto& th : pool) th.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
    return ranks;
}

template <typename T>
ConsistencyReport consistency_report(const LinkModel<T>& model, const DiagnosticSet& set) {
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    std::vector<std::string> kinds;
    for (auto kind : {InstanceKind::EntitySynonymTwin, InstanceKind::RelationSynonymTwin, InstanceKind::InverseTwin}) {
        for (const auto& p : set.twin_pairs(kind)) {
            pairs.push_back(p);
            kinds.emplace_back(to_string(kind));
        }
    }
    if (pairs.empty()) fail(ErrorCode::InvalidArgument, "no synonym or inverse twins in the diagnostic set");
    std::vector<std::size_t> which;
    for (const auto& [a, b] : pairs) {
        which.push_back(a);
        which.push_back(b);
    }
    const auto ranks = rank_instances(model, set, which);
    std::map<std::string, std::vector<double>> kind_diffs, cat_diffs;
    std::vector<double> all;
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        const double d = ranks[2 * i] - ranks[2 * i + 1];
        all.push_back(d);
        kind_diffs[kinds[i]].push_back(d);
        cat_diffs[set.instances()[pairs[i].first].category].push_back(d);
    }
    ConsistencyReport r;
    r.overall = consistency_stats(all);
    for (const auto& [k, v] : kind_diffs) r.by_kind[k] = consistency_stats(v);
    for (const auto& [k, v] : cat_diffs) r.by_category[k] = consistency_stats(v);
    return r;
}

template <typename T>
std::map<std::string, RankingReport> category_report(const LinkModel<T>& model, const DiagnosticSet& set) {
    const auto general = set.of_kind(InstanceKind::General);
    if (general.empty()) fail(ErrorCode::InvalidArgument, "no general-knowledge items in the diagnostic set");
    const auto ranks = rank_instances(model, set, general);
    std::map<std::string, std::vector<double>> by_cat;
    for (std::size_t i = 0; i < general.size(); ++i) by_cat[set.instances()[general[i]].category].push_back(ranks[i]);
    std::map<std::string, RankingReport> out;
    for (auto& [cat, v] : by_cat) out[cat] = summarize(std::move(v), cat);
    out["all"] = summarize(ranks, "all");
    return out;
}

std::vector<DeductiveCase> deductive_cases(const DiagnosticSet& set) {
    std::vector<DeductiveCase> out;
    for (std::size_t i : set.of_kind(InstanceKind::Deductive)) {
        const auto& inst = set.instances()[i];
        if (!inst.twin_of) fail(ErrorCode::InvalidArgument, "deductive item '" + inst.id + "' has no background link");
        out.push_back({*set.index_of(*inst.twin_of), i});
    }
    if (out.empty()) fail(ErrorCode::InvalidArgument, "no deductive items in the diagnostic set");
    return out;
}

template <typename T>
LinkModel<T> finetune_on_facts(const LinkModel<T>& model, const std::vector<RawTriple>& train_facts,
                               const std::vector<RawTriple>& valid_facts, const std::vector<DiagnosticInstance>& scope,
                               const TrainConfig& cfg) {
    if (train_facts.empty()) fail(ErrorCode::InvalidArgument, "no added training facts");
    KbBuilder b;
    if (model.spec().encoder == EncoderKind::Table) {
        for (const auto& e : model.names(Side::Entity)) b.entity(e);
        for (std::size_t r = 0; r < model.num_relations() / 2; ++r) b.relation(model.names(Side::Relation)[r]);
    }
    for (const auto& inst : scope) {
        if (!inst.head_missing()) b.entity(inst.head);
        if (inst.tail != kMissingSlot) b.entity(inst.tail);
        for (const auto& c : inst.candidates) b.entity(c);
        b.relation(strip_inverse(normalize_name(inst.relation)));
    }
    for (const auto& f : train_facts) b.add(Split::Train, f.head, strip_inverse(normalize_name(f.relation)), f.tail);
    for (const auto& f : valid_facts) b.add(Split::Valid, f.head, strip_inverse(normalize_name(f.relation)), f.tail);
    const KnowledgeBase kb = std::move(b).build();

    TrainConfig c = cfg;
    c.mode = TrainMode::Finetune;
    ModelSpec spec = model.spec();
    spec.dropout = cfg.model.dropout;
    spec.n3_lambda = cfg.model.n3_lambda;
    c.model = spec;
    LinkModel<T> fresh = LinkModel<T>::create(spec, kb.entity_names(), kb.relation_names(), c.seed);
    extend_model(model, fresh);
    return train(c, kb, std::move(fresh)).model;
}

template <typename T>
DeductiveReport deductive_protocol(const LinkModel<T>& model, const DiagnosticSet& set,
                                   const std::vector<RawTriple>& added_train, const std::vector<RawTriple>& added_valid,
                                   const TrainConfig& cfg) {
    const auto cases = deductive_cases(set);
    std::vector<std::size_t> bg, probes;
    std::vector<DiagnosticInstance> scope;
    for (const auto& c : cases) {
        bg.push_back(c.background);
        probes.push_back(c.probe);
        scope.push_back(set.instances()[c.background]);
        scope.push_back(set.instances()[c.probe]);
    }
    DeductiveReport r;
    r.background = summarize(rank_instances(model, set, bg), "background");
    r.no_added = summarize(rank_instances(model, set, probes), "no-added-facts");
    const LinkModel<T> tuned = finetune_on_facts(model, added_train, added_valid, scope, cfg);
    r.with_added = summarize(rank_instances(tuned, set, probes), "with-added-facts");
    return r;
}

std::vector<std::pair<std::size_t, std::size_t>> stereotype_pairs(const DiagnosticSet& set) {
    std::vector<std::pair<std::size_t, std::size_t>> out;
    std::set<std::size_t> used;
    for (const auto& [orig, twin] : set.twin_pairs(InstanceKind::Stereotype)) {
        const auto& a = set.instances()[orig];
        const auto& b = set.instances()[twin];
        if (a.kind != InstanceKind::Stereotype || !a.group || !b.group) {
            fail(ErrorCode::InvalidArgument, "unbalanced pair links: '" + b.id + "' and '" + a.id +
                                                 "' must both be grouped stereotype items");
        }
        if (!used.insert(orig).second || !used.insert(twin).second) {
            fail(ErrorCode::InvalidArgument, "unbalanced pair links: '" + b.id + "' or '" + a.id +
                                                 "' appears in more than one pair");
        }
        out.emplace_back(orig, twin);
    }
    return out;
}

namespace {

template <typename T>
GroupedRanks grouped_ranks(const LinkModel<T>& model, const DiagnosticSet& set, const std::vector<std::size_t>& names,
                           const std::vector<std::pair<std::size_t, std::size_t>>& pairs, const std::string& label) {
    const auto ranks = rank_instances(model, set, names);
    std::map<std::size_t, double> rank_of;
    std::map<std::string, std::vector<double>> by_group;
    for (std::size_t i = 0; i < names.size(); ++i) {
        rank_of[names[i]] = ranks[i];
        by_group[std::string(to_string(*set.instances()[names[i]].group))].push_back(ranks[i]);
    }
    GroupedRanks g;
    for (auto& [k, v] : by_group) g.groups[k] = summarize(std::move(v), label);
    std::vector<double> diffs;
    for (const auto& [a, b] : pairs) diffs.push_back(rank_of.at(a) - rank_of.at(b));
    if (diffs.empty()) {
        g.note = "no name-swap pairs";
    } else {
        try {
            g.wilcoxon = wilcoxon_signed_rank(diffs);
        } catch (const Error& e) {
            if (e.code() != ErrorCode::Degenerate) throw;
            g.note = "no detectable effect (all paired ranks identical)";
        }
    }
    return g;
}

}  // namespace

template <typename T>
StereotypeReport stereotype_report(const LinkModel<T>& model, const DiagnosticSet& set,
                                   const std::vector<RawTriple>* added_train,
                                   const std::vector<RawTriple>* added_valid, const TrainConfig& cfg) {
    std::vector<std::size_t> names, background;
    std::vector<DiagnosticInstance> scope;
    for (std::size_t i : set.of_kind(InstanceKind::Stereotype)) {
        (set.instances()[i].group ? names : background).push_back(i);
        scope.push_back(set.instances()[i]);
    }
    if (names.empty()) fail(ErrorCode::InvalidArgument, "no grouped stereotype items in the diagnostic set");
    const auto pairs = stereotype_pairs(set);
    StereotypeReport r;
    r.no_added = grouped_ranks(model, set, names, pairs, "no-added-facts");
    r.background = summarize(background.empty() ? std::vector<double>{} : rank_instances(model, set, background),
                             "background");
    if (added_train) {
        static const std::vector<RawTriple> none;
        const LinkModel<T> tuned = finetune_on_facts(model, *added_train, added_valid ? *added_valid : none, scope, cfg);
        r.with_added = grouped_ranks(tuned, set, names, pairs, "with-added-facts");
    }
    return r;
}

std::string diagnostic_tsv(const DeductiveReport& r) {
    std::ostringstream os;
    os << kRankingHeader;
    ranking_row(os, "deductive", "Background Knowledge", r.background);
    ranking_row(os, "deductive", "No Added Facts", r.no_added);
    ranking_row(os, "deductive", "With Added Facts", r.with_added);
    return os.str();
}

std::string diagnostic_tsv(const StereotypeReport& r) {
    std::ostringstream os;
    os << kRankingHeader;
    auto grouped = [&](const std::string& section, const GroupedRanks& g) {
        for (const char* name : kGroupOrder) {
            auto it = g.groups.find(name);
            if (it != g.groups.end()) ranking_row(os, section, name, it->second);
        }
        os << section << "\twilcoxon_p\t" << (g.wilcoxon ? fmt(g.wilcoxon->p, "%.6g") : std::string("NA"))
           << "\t\t\t" << (g.wilcoxon ? g.wilcoxon->n : 0) << '\n';
    };
    grouped("No Added Facts", r.no_added);
    ranking_row(os, "Background Knowledge", "all", r.background);
    if (r.with_added) grouped("With Added Facts", *r.with_added);
    return os.str();
}

std::string diagnostic_tsv(const std::map<std::string, RankingReport>& categories) {
    std::ostringstream os;
    os << kRankingHeader;
    for (const auto& [cat, rep] : categories)
        if (cat != "all") ranking_row(os, "general", cat, rep);
    if (auto it = categories.find("all"); it != categories.end()) ranking_row(os, "general", "all", it->second);
    return os.str();
}

std::string diagnostic_tsv(const ConsistencyReport& r) {
    std::ostringstream os;
    os << "kind\tname\tpairs\tmean\tstdev\n";
    auto row = [&](const std::string& kind, const std::string& name, const ConsistencyStats& s) {
        os << kind << '\t' << name << '\t' << s.pairs << '\t' << fmt(s.mean) << '\t' << fmt(s.stdev) << '\n';
    };
    for (const auto& [k, s] : r.by_kind) row("twin", k, s);
    for (const auto& [k, s] : r.by_category) row("category", k, s);
    row("overall", "all", r.overall);
    return os.str();
}

nlohmann::json to_json(const RankingReport& r) {
    return {{"split", r.split}, {"MR", r.mr}, {"MRR", r.mrr}, {"H@1", r.hits1},
            {"H@3", r.hits3},   {"H@10", r.hits10}, {"n_queries", r.n_queries()}};
}

nlohmann::json to_json(const DeductiveReport& r) {
    return {{"background_knowledge", to_json(r.background)},
            {"no_added_facts", to_json(r.no_added)},
            {"with_added_facts", to_json(r.with_added)}};
}

namespace {

nlohmann::json grouped_json(const GroupedRanks& g) {
    nlohmann::json j;
    for (const auto& [k, v] : g.groups) j["groups"][k] = to_json(v);
    if (g.wilcoxon) {
        j["wilcoxon"] = {{"W", g.wilcoxon->w},         {"W_plus", g.wilcoxon->w_plus}, {"W_minus", g.wilcoxon->w_minus},
                         {"p", g.wilcoxon->p},         {"n", g.wilcoxon->n},           {"exact", g.wilcoxon->exact}};
    } else {
        j["wilcoxon"] = nullptr;
    }
    if (!g.note.empty()) j["note"] = g.note;
    return j;
}

nlohmann::json stats_json(const ConsistencyStats& s) {
    return {{"pairs", s.pairs}, {"mean", s.mean}, {"stdev", s.stdev}};
}

}  // namespace

nlohmann::json to_json(const StereotypeReport& r) {
    nlohmann::json j{{"no_added_facts", grouped_json(r.no_added)}, {"background_knowledge", to_json(r.background)}};
    j["with_added_facts"] = r.with_added ? grouped_json(*r.with_added) : nlohmann::json(nullptr);
    return j;
}

nlohmann::json to_json(const ConsistencyReport& r) {
    nlohmann::json j{{"overall", stats_json(r.overall)}, {"stdev_normalization", "population"}};
    for (const auto& [k, s] : r.by_kind) j["by_kind"][k] = stats_json(s);
    for (const auto& [k, s] : r.by_category) j["by_category"][k] = stats_json(s);
    return j;
}

#define KBCX_INSTANTIATE(T)                                                                                          \
    template std::vector<double> candidate_scores<T>(const LinkModel<T>&, const DiagnosticInstance&);               \
    template double rank_candidates<T>(const LinkModel<T>&, const DiagnosticInstance&);                              \
    template std::vector<double> rank_instances<T>(const LinkModel<T>&, const DiagnosticSet&,                        \
                                                   const std::vector<std::size_t>&, std::size_t);                    \
    template ConsistencyReport consistency_report<T>(const LinkModel<T>&, const DiagnosticSet&);                     \
    template std::map<std::string, RankingReport> category_report<T>(const LinkModel<T>&, const DiagnosticSet&);     \
    template LinkModel<T> finetune_on_facts<T>(const LinkModel<T>&, const std::vector<RawTriple>&,                   \
                                               const std::vector<RawTriple>&, const std::vector<DiagnosticInstance>&, \
                                               const TrainConfig&);                                                   \
    template DeductiveReport deductive_protocol<T>(const LinkModel<T>&, const DiagnosticSet&,                        \
                                                   const std::vector<RawTriple>&, const std::vector<RawTriple>&,     \
                                                   const TrainConfig&);                                               \
    template StereotypeReport stereotype_report<T>(const LinkModel<T>&, const DiagnosticSet&,                        \
                                                   const std::vector<RawTriple>*, const std::vector<RawTriple>*,     \
                                                   const TrainConfig&);
KBCX_INSTANTIATE(float)
KBCX_INSTANTIATE(double)
#undef KBCX_INSTANTIATE

}  // namespace kbcx
