#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "doctest.h"
#include "kbcx/evaluator/evaluate.hpp"
#include "kbcx/evaluator/ranking.hpp"
#include "kbcx/trainer/checkpoint.hpp"
#include "support/gradcheck.hpp"
#include "support/model_checks.hpp"
#include "support/ranking_oracle.hpp"
#include "support/toy_kb.hpp"

using namespace kbcx;
using namespace kbcx::testing;

TEST_CASE("rank_query examples") {
    const std::vector<double> a{9, 5, 7};
    CHECK(rank_query(a, 2) == 2.0);
    const std::vector<double> flat{5, 5, 5};
    CHECK(rank_query(flat, 0) == 2.0);
    const std::vector<std::size_t> clusters{0, 1, 0};
    const std::vector<double> c{9, 8, 10};
    CHECK(rank_query(c, 0, {}, &clusters) == 1.0);
    CHECK(rank_query(c, 0) == 2.0);
    CHECK_THROWS_AS(rank_query(a, 3), Error);
    const std::vector<EntityId> bad{2};
    CHECK_THROWS_AS(rank_query(a, 2, bad), Error);
}

TEST_CASE("rank_query agrees with the sorting oracle on 1000 random configurations") {
    std::mt19937_64 rng(2024);
    std::size_t mismatches = 0;
    for (int trial = 0; trial < 1000; ++trial) {
        const auto cfg = random_rank_config(rng);
        const double engine = rank_query(cfg.scores, cfg.gold, cfg.filter, cfg.clusters ? &*cfg.clusters : nullptr);
        if (engine != oracle_rank(cfg)) ++mismatches;
    }
    CHECK(mismatches == 0);
}

TEST_CASE("filtering never worsens the rank") {
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 200; ++trial) {
        auto cfg = random_rank_config(rng);
        const auto* cl = cfg.clusters ? &*cfg.clusters : nullptr;
        double prev = rank_query(cfg.scores, cfg.gold, cfg.filter, cl);
        for (EntityId e = 0; e < cfg.scores.size(); ++e) {
            if (e == cfg.gold || std::binary_search(cfg.filter.begin(), cfg.filter.end(), e)) continue;
            cfg.filter.insert(std::upper_bound(cfg.filter.begin(), cfg.filter.end(), e), e);
            const double now = rank_query(cfg.scores, cfg.gold, cfg.filter, cl);
            CHECK(now <= prev);
            prev = now;
        }
    }
}

TEST_CASE("singleton clusters equal plain ranking") {
    std::mt19937_64 rng(6);
    for (int trial = 0; trial < 200; ++trial) {
        auto cfg = random_rank_config(rng);
        std::vector<std::size_t> singletons(cfg.scores.size());
        std::iota(singletons.begin(), singletons.end(), 0);
        CHECK(rank_query(cfg.scores, cfg.gold, cfg.filter, &singletons) == rank_query(cfg.scores, cfg.gold, cfg.filter));
    }
}

TEST_CASE("summarize matches a one-pass recomputation") {
    std::mt19937_64 rng(3);
    std::uniform_int_distribution<int> r(2, 60);
    std::vector<double> ranks;
    for (int i = 0; i < 333; ++i) ranks.push_back(r(rng) / 2.0);
    const auto rep = summarize(ranks, "test");
    double mr = 0, mrr = 0, h1 = 0, h3 = 0, h10 = 0;
    for (double k : ranks) {
        mr += k;
        mrr += 1.0 / k;
        h1 += k <= 1;
        h3 += k <= 3;
        h10 += k <= 10;
    }
    const double n = ranks.size();
    CHECK(rep.mr == mr / n);
    CHECK(rep.mrr == mrr / n);
    CHECK(rep.hits1 == h1 / n);
    CHECK(rep.hits3 == h3 / n);
    CHECK(rep.hits10 == h10 / n);
    CHECK(rep.ranks == ranks);
    CHECK(rep.n_queries() == 333);
    const auto tsv = report_tsv({rep});
    CHECK(tsv.rfind("split\tMR\tMRR\tH@1\tH@10\tn_queries\n", 0) == 0);
    CHECK(tsv.find("test\t") != std::string::npos);
    CHECK(!report_table({rep}).empty());
    CHECK(summarize({}).n_queries() == 0);
}

TEST_CASE("evaluate: constant scorer gets the average-tie rank") {
    const auto kb = toy_kb({.entities = 15, .relations = 2, .train = 30, .valid = 0, .test = 10, .seed = 12});
    ModelSpec spec;
    spec.model = ModelKind::Tucker;
    spec.dim = 4;
    auto model = LinkModel<double>::create(spec, kb.entity_names(), kb.relation_names(), 1);
    for (auto& v : model.params().at("tucker.core").data) v = 0;
    const FilterIndex filter(kb);
    const auto rep = evaluate(model, kb, Split::Test, filter);
    const auto queries = tail_query_view(kb, Split::Test);
    REQUIRE(rep.ranks.size() == queries.size());
    for (std::size_t i = 0; i < queries.size(); ++i) {
        const double open = kb.num_entities() - (filter.known_tails(queries[i].head, queries[i].relation).size() - 1);
        CHECK(rep.ranks[i] == (open + 1) / 2);
    }
}

TEST_CASE("evaluate: equals a brute-force reimplementation on a random knowledge base") {
    const auto kb = toy_kb({.entities = 20, .relations = 3, .train = 60, .valid = 15, .test = 15, .seed = 13});
    for (auto kind : {ModelKind::Tucker, ModelKind::ConvE, ModelKind::FiveStar}) {
        CAPTURE(to_string(kind));
        auto model = LinkModel<double>::create(small_spec(kind, EncoderKind::Table), kb.entity_names(),
                                               kb.relation_names(), 21);
        std::mt19937_64 rng(21);
        for (auto& e : model.params().entries())
            if (e.trainable) e.value = random_array(e.value.shape, rng, -0.5, 0.5);
        const FilterIndex filter(kb);
        EvalOptions opts;
        opts.batch_size = 7;
        const auto rep = evaluate(model, kb, Split::Test, filter, opts);

        // Oracle: true tails collected from raw triples, scores one query at a time.
        std::map<std::pair<EntityId, RelationId>, std::set<EntityId>> truth;
        for (auto s : {Split::Train, Split::Valid, Split::Test})
            for (const auto& t : kb.split(s)) {
                truth[{t.head, t.relation}].insert(t.tail);
                truth[{t.tail, kb.inverse(t.relation)}].insert(t.head);
            }
        const auto E = model.encode(Side::Entity, kb.entity_names());
        const auto R = model.encode(Side::Relation, kb.relation_names());
        const auto bias = kind == ModelKind::ConvE ? std::optional(model.tail_bias(kb.entity_names())) : std::nullopt;
        std::vector<double> expected;
        for (const auto& t : kb.split(Split::Test)) {
            for (auto [h, r, g] : {std::tuple{t.head, t.relation, t.tail}, std::tuple{t.tail, kb.inverse(t.relation), t.head}}) {
                Array<double> hv(Shape{1, E.shape[1]}), rv(Shape{1, R.shape[1]});
                std::copy_n(E.row(h).begin(), E.shape[1], hv.data.begin());
                std::copy_n(R.row(r).begin(), R.shape[1], rv.data.begin());
                const auto s = model.score_rows(hv, rv, E, bias ? &*bias : nullptr);
                RankConfig cfg;
                cfg.scores = s.data;
                cfg.gold = g;
                for (EntityId e : truth[{h, r}])
                    if (e != g) cfg.filter.push_back(e);
                expected.push_back(oracle_rank(cfg));
            }
        }
        CHECK(rep.ranks == expected);
        EvalOptions par = opts;
        par.workers = 3;
        CHECK(evaluate(model, kb, Split::Test, filter, par).ranks == rep.ranks);
    }
}

TEST_CASE("evaluate: cluster-aware ranking") {
    KbBuilder b;
    b.add(Split::Train, "alpha", "rel", "beta");
    b.add(Split::Train, "gamma", "rel", "delta");
    b.add(Split::Test, "alpha", "rel", "gamma");
    auto kb = std::move(b).build();
    ModelSpec spec;
    spec.model = ModelKind::Tucker;
    spec.dim = 2;
    auto model = LinkModel<double>::create(spec, kb.entity_names(), kb.relation_names(), 3);
    std::mt19937_64 rng(3);
    for (auto& e : model.params().entries())
        if (e.trainable) e.value = random_array(e.value.shape, rng);
    const FilterIndex filter(kb);
    const auto plain = evaluate(model, kb, Split::Test, filter);
    kb.set_clusters({{"gamma", "c1"}, {"beta", "c1"}, {"delta", "c1"}, {"alpha", "c1"}});
    const auto clustered = evaluate(model, kb, Split::Test, filter);
    for (double r : clustered.ranks) CHECK(r == 1.0);
    EvalOptions off;
    off.use_clusters = false;
    CHECK(evaluate(model, kb, Split::Test, filter, off).ranks == plain.ranks);
}

TEST_CASE("evaluate: table model refuses unseen names") {
    const auto kb = toy_kb({.entities = 8, .relations = 2, .train = 20, .test = 5});
    const auto other = toy_kb({.entities = 8, .relations = 2, .train = 20, .test = 5, .entity_stem = "city"});
    auto model = LinkModel<double>::create(small_spec(ModelKind::Tucker, EncoderKind::Table), kb.entity_names(),
                                           kb.relation_names(), 1);
    const FilterIndex filter(other);
    CHECK_THROWS_WITH_AS(evaluate(model, other, Split::Test, filter), doctest::Contains("GRU"), Error);
    CHECK_THROWS_AS(zero_shot_evaluate(model, kb, Split::Test, FilterIndex(kb)), Error);
}

TEST_CASE("zero-shot: untrained model is close to the random baseline") {
    const auto source = toy_kb({.entities = 30, .relations = 4, .train = 80, .seed = 31});
    const auto target = toy_kb({.entities = 150,
                                .relations = 5,
                                .train = 600,
                                .test = 600,
                                .entity_stem = "place",
                                .relation_stem = "link",
                                .seed = 32});
    ModelSpec spec = small_spec(ModelKind::Tucker, EncoderKind::Gru);
    spec.dim = 8;
    auto model = LinkModel<float>::create(spec, source.entity_names(), source.relation_names(), 33);
    const FilterIndex filter(target);
    const auto rep = zero_shot_evaluate(model, target, Split::Test, filter);
    REQUIRE(rep.n_queries() >= 1000);
    double baseline = 0;
    const auto queries = tail_query_view(target, Split::Test);
    for (const auto& q : queries)
        baseline += (target.num_entities() - (filter.known_tails(q.head, q.relation).size() - 1) + 1) / 2.0;
    baseline /= queries.size();
    CHECK(std::abs(rep.mr - baseline) / baseline < 0.05);
    CHECK(std::isfinite(rep.mrr));
}

TEST_CASE("zero-shot: all-unknown vocabulary still yields a finite report") {
    const auto source = toy_kb({.entities = 10, .relations = 2, .train = 20, .seed = 41});
    KbBuilder b;
    b.add(Split::Train, "zyx", "qwv", "xxq");
    b.add(Split::Test, "xxq", "qwv", "vvz");
    b.add(Split::Test, "zyx", "plk", "vvz");
    const auto target = std::move(b).build();
    for (auto kind : {ModelKind::Tucker, ModelKind::ConvE, ModelKind::FiveStar}) {
        auto model = LinkModel<float>::create(small_spec(kind, EncoderKind::Gru), source.entity_names(),
                                              source.relation_names(), 42);
        const auto rep = zero_shot_evaluate(model, target, Split::Test, FilterIndex(target));
        CHECK(rep.n_queries() == 4);
        CHECK(std::isfinite(rep.mr));
        CHECK(rep.mr >= 1.0);
    }
}
