#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "doctest.h"
#include "kbcx/data/names.hpp"
#include "kbcx/diagnostics/doge.hpp"
#include "kbcx/diagnostics/protocols.hpp"
#include "kbcx/diagnostics/statistics.hpp"
#include "kbcx/diagnostics/synthetic.hpp"
#include "support/closure_oracle.hpp"
#include "support/model_checks.hpp"
#include "support/ranking_oracle.hpp"
#include "support/tempdir.hpp"

using namespace kbcx;
using namespace kbcx::testing;

namespace {

DiagnosticInstance item(const std::string& id, std::size_t k = 10) {
    DiagnosticInstance d;
    d.id = id;
    d.head = "alpha corp";
    d.relation = "located in";
    d.tail = "?";
    for (std::size_t i = 0; i < k; ++i) d.candidates.push_back("town " + std::to_string(i));
    d.gold = 3;
    d.category = "location";
    return d;
}

/// Exact two-sided p from all 2^n sign assignments of the average ranks.
double enumerate_p(const std::vector<double>& diffs) {
    std::vector<double> nz;
    for (double d : diffs)
        if (d != 0) nz.push_back(d);
    std::vector<double> mags;
    for (double d : nz) mags.push_back(std::abs(d));
    const auto ranks = average_ranks(mags);
    double wp = 0, wm = 0;
    for (std::size_t i = 0; i < nz.size(); ++i) (nz[i] > 0 ? wp : wm) += ranks[i];
    const double w = std::min(wp, wm);
    unsigned long long below = 0;
    const std::size_t n = nz.size();
    for (unsigned long long mask = 0; mask < (1ull << n); ++mask) {
        double s = 0;
        for (std::size_t i = 0; i < n; ++i)
            if (mask >> i & 1) s += ranks[i];
        if (s <= w + 1e-9) ++below;
    }
    return std::min(1.0, 2.0 * static_cast<double>(below) / std::ldexp(1.0, static_cast<int>(n)));
}

LinkModel<double> untrained_gru(const SyntheticDiagnostics& world, ModelKind kind, std::uint64_t seed) {
    KbBuilder b;
    for (const auto& t : world.train) b.add(Split::Train, t.head, t.relation, t.tail);
    const auto kb = std::move(b).build();
    ModelSpec spec = small_spec(kind, EncoderKind::Gru);
    spec.dim = kind == ModelKind::ConvE ? 8 : 6;
    return LinkModel<double>::create(spec, kb.entity_names(), kb.relation_names(), seed);
}

}  // namespace

TEST_CASE("doge: JSON lines round trip") {
    std::vector<DiagnosticInstance> v{item("a"), item("b", 50)};
    v[1].kind = InstanceKind::Stereotype;
    v[1].group = StereotypeGroup::AntiFem;
    v[1].head = "?";
    v[1].tail = "gizmos";
    std::istringstream in(serialize_doge(v));
    const auto set = parse_doge(in);
    REQUIRE(set.size() == 2);
    CHECK(serialize_doge(set.instances()) == serialize_doge(v));
    CHECK(set.at("b").head_missing());
    CHECK(set.at("b").group == StereotypeGroup::AntiFem);
    CHECK(set.at("a").gold_name() == "town 3");
}

TEST_CASE("doge: malformed instances are rejected") {
    auto bad = [](DiagnosticInstance d) { CHECK_THROWS_AS(validate_instance(d), Error); };
    auto d = item("x");
    d.candidates.pop_back();
    bad(d);
    d = item("x");
    d.gold = 10;
    bad(d);
    d = item("x");
    d.candidates[5] = "Town 3";
    bad(d);
    d = item("x");
    d.head = "?";
    bad(d);
    d = item("x");
    d.tail = "somewhere";
    bad(d);

    std::istringstream in(serialize_doge({item("a")}) + "{\"id\": \"b\", \"head\": 3}\n");
    CHECK_THROWS_WITH_AS(parse_doge(in, "f.jsonl"), doctest::Contains("f.jsonl:2"), Error);

    auto twin = item("t");
    twin.kind = InstanceKind::EntitySynonymTwin;
    twin.twin_of = "a";
    twin.gold = 4;
    CHECK_THROWS_AS(DiagnosticSet({item("a"), twin}), Error);
    twin.gold = 3;
    twin.twin_of = "missing";
    CHECK_THROWS_AS(DiagnosticSet({item("a"), twin}), Error);
    CHECK_THROWS_AS(DiagnosticSet({item("a"), item("a")}), Error);
}

TEST_CASE("rank_candidates: constant scorer and permutation invariance") {
    const auto world = generate_synthetic_diagnostics(3);
    auto model = untrained_gru(world, ModelKind::Tucker, 5);
    const DiagnosticSet set(world.instances);
    const auto& inst = set.instances()[0];

    auto flat = model;
    for (auto& v : flat.params().at("tucker.core").data) v = 0;
    CHECK(rank_candidates(flat, inst) == 5.5);

    const auto scores = candidate_scores(model, inst);
    RankConfig cfg;
    cfg.scores = scores;
    cfg.gold = inst.gold;
    CHECK(rank_candidates(model, inst) == oracle_rank(cfg));

    auto shuffled = inst;
    std::mt19937_64 rng(2);
    std::vector<std::size_t> perm(inst.candidates.size());
    std::iota(perm.begin(), perm.end(), 0);
    for (int trial = 0; trial < 5; ++trial) {
        std::shuffle(perm.begin(), perm.end(), rng);
        for (std::size_t i = 0; i < perm.size(); ++i) {
            shuffled.candidates[i] = inst.candidates[perm[i]];
            if (perm[i] == inst.gold) shuffled.gold = i;
        }
        CHECK(rank_candidates(model, shuffled) == rank_candidates(model, inst));
    }
}

TEST_CASE("rank_candidates: gold scored highest ranks first") {
    const auto world = generate_synthetic_diagnostics(4);
    auto model = untrained_gru(world, ModelKind::FiveStar, 6);
    const DiagnosticSet set(world.instances);
    const auto& inst = set.instances()[0];
    const auto scores = candidate_scores(model, inst);
    const auto best = std::max_element(scores.begin(), scores.end()) - scores.begin();
    auto rigged = inst;
    rigged.gold = static_cast<std::size_t>(best);
    CHECK(rank_candidates(model, rigged) == 1.0);
}

TEST_CASE("consistency statistics") {
    const auto s = consistency_stats({1, -1});
    CHECK(s.mean == 0.0);
    CHECK(s.stdev == 1.0);
    CHECK(s.pairs == 2);
    CHECK_THROWS_AS(consistency_stats({}), Error);
    std::mt19937_64 rng(8);
    std::uniform_int_distribution<int> r(-9, 9);
    std::vector<double> diffs;
    for (int i = 0; i < 50; ++i) diffs.push_back(r(rng) / 2.0);
    double mean = 0;
    for (double d : diffs) mean += d;
    mean /= 50;
    double var = 0;
    for (double d : diffs) var += (d - mean) * (d - mean);
    const auto got = consistency_stats(diffs);
    CHECK(std::abs(got.mean - mean) < 1e-12);
    CHECK(std::abs(got.stdev - std::sqrt(var / 50)) < 1e-12);
}

TEST_CASE("consistency report on self pairs is exactly zero") {
    const auto world = generate_synthetic_diagnostics(5);
    auto model = untrained_gru(world, ModelKind::ConvE, 7);
    std::vector<DiagnosticInstance> items;
    for (const auto& inst : world.instances) {
        if (inst.kind != InstanceKind::General) continue;
        items.push_back(inst);
        auto self = inst;
        self.id += "-self";
        self.kind = InstanceKind::EntitySynonymTwin;
        self.twin_of = inst.id;
        items.push_back(self);
    }
    const auto r = consistency_report(model, DiagnosticSet(items));
    CHECK(r.overall.mean == 0.0);
    CHECK(r.overall.stdev == 0.0);
    const auto real = consistency_report(model, DiagnosticSet(world.instances));
    CHECK(real.by_kind.size() == 3);
    CHECK(diagnostic_tsv(real).rfind("kind\tname\tpairs\tmean\tstdev\n", 0) == 0);
    CHECK(to_json(real)["stdev_normalization"] == "population");
}

TEST_CASE("wilcoxon examples") {
    const auto a = wilcoxon_signed_rank({1, 2, 3, 4, 5});
    CHECK(a.w == 0.0);
    CHECK(a.p == 0.0625);
    CHECK(a.exact);
    const auto b = wilcoxon_signed_rank({1, -1});
    CHECK(b.w == 1.5);
    CHECK(b.p == 1.0);
    CHECK(wilcoxon_signed_rank({-3, -1, 0, 1, 3, 2, -2}).p >= 0.5);
    CHECK(wilcoxon_signed_rank({0, 0, 4}).n == 1);
    CHECK_THROWS_WITH_AS(wilcoxon_signed_rank({0, 0}), doctest::Contains("degenerate sample"), Error);
}

TEST_CASE("wilcoxon exact branch equals sign enumeration") {
    std::mt19937_64 rng(77);
    std::uniform_int_distribution<int> n_dist(1, 10), v(-6, 6);
    int mismatches = 0;
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<double> diffs;
        const int n = n_dist(rng);
        for (int i = 0; i < n; ++i) diffs.push_back(v(rng));
        if (std::all_of(diffs.begin(), diffs.end(), [](double d) { return d == 0; })) diffs.push_back(1);
        if (wilcoxon_signed_rank(diffs).p != enumerate_p(diffs)) ++mismatches;
    }
    CHECK(mismatches == 0);
}

TEST_CASE("wilcoxon normal approximation tracks the exact branch at n = 25") {
    std::mt19937_64 rng(78);
    std::normal_distribution<double> n(0.3, 1.0);
    double worst = 0;
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<double> diffs;
        for (int i = 0; i < 25; ++i) diffs.push_back(n(rng));
        worst = std::max(worst, std::abs(wilcoxon_exact(diffs).p - wilcoxon_normal(diffs).p));
    }
    CHECK(worst < 0.02);
    std::vector<double> big;
    for (int i = 0; i < 40; ++i) big.push_back(n(rng));
    CHECK(!wilcoxon_signed_rank(big).exact);
}

TEST_CASE("synthetic generator is deterministic and consistent") {
    TempDir a, b;
    const auto files = write_synthetic_diagnostics(generate_synthetic_diagnostics(11), a.path());
    write_synthetic_diagnostics(generate_synthetic_diagnostics(11), b.path());
    for (const auto& f : files) {
        std::ifstream fa(f, std::ios::binary), fb(b.path() / f.filename(), std::ios::binary);
        std::string sa((std::istreambuf_iterator<char>(fa)), {}), sb((std::istreambuf_iterator<char>(fb)), {});
        CHECK(sa == sb);
        CHECK(!sa.empty());
    }
    CHECK(serialize_doge(generate_synthetic_diagnostics(12).instances) !=
          serialize_doge(generate_synthetic_diagnostics(11).instances));

    const auto world = generate_synthetic_diagnostics(11, 2);
    const auto set = load_doge(a.path() / "doge.jsonl");
    CHECK(set.size() == generate_synthetic_diagnostics(11).instances.size());
    const DiagnosticSet big(world.instances);
    for (auto kind : {InstanceKind::EntitySynonymTwin, InstanceKind::RelationSynonymTwin, InstanceKind::InverseTwin}) {
        const auto pairs = big.twin_pairs(kind);
        CHECK(!pairs.empty());
        for (const auto& [o, t] : pairs) {
            auto x = big.instances()[o].candidates, y = big.instances()[t].candidates;
            std::sort(x.begin(), x.end());
            std::sort(y.begin(), y.end());
            CHECK(x == y);
            CHECK(big.instances()[o].gold_name() == big.instances()[t].gold_name());
        }
    }
    CHECK(stereotype_pairs(big).size() == 20);
    const auto kb = load_kb({a.path() / "train.tsv", a.path() / "valid.tsv", a.path() / "test.tsv",
                             a.path() / "clusters.tsv"});
    CHECK(kb.clusters());
    CHECK(rules_from_json(nlohmann::json::parse(std::ifstream(a.path() / "rules.json"))).size() == 1);
}

TEST_CASE("synthetic deductive cases satisfy the implication closure") {
    const auto world = generate_synthetic_diagnostics(13, 2);
    std::vector<RawTriple> background = world.train;
    background.insert(background.end(), world.valid.begin(), world.valid.end());
    background.insert(background.end(), world.test.begin(), world.test.end());
    std::vector<RawTriple> with_added = background;
    with_added.insert(with_added.end(), world.deductive_train.begin(), world.deductive_train.end());
    const auto before = closure(background, world.rules);
    const auto after = closure(with_added, world.rules);
    const DiagnosticSet set(world.instances);
    const auto cases = deductive_cases(set);
    CHECK(cases.size() == 20);
    for (const auto& c : cases) {
        const auto& bg = set.instances()[c.background];
        const auto& probe = set.instances()[c.probe];
        const Fact bg_fact{normalize_name(bg.head), normalize_name(bg.relation), normalize_name(bg.gold_name())};
        const Fact probe_fact{normalize_name(probe.head), normalize_name(probe.relation),
                              normalize_name(probe.gold_name())};
        CHECK(before.count(bg_fact) == 1);
        CHECK(before.count(probe_fact) == 0);
        CHECK(after.count(probe_fact) == 1);
    }
    // Every world "based in" fact follows from the rule.
    std::vector<RawTriple> no_based;
    for (const auto& t : background)
        if (t.relation != "based in") no_based.push_back(t);
    const auto derived = closure(no_based, world.rules);
    for (const auto& t : background)
        if (t.relation == "based in")
            CHECK(derived.count({normalize_name(t.head), "based in", normalize_name(t.tail)}) == 1);
}

TEST_CASE("deductive protocol on an untrained model sits at the random baseline") {
    const auto world = generate_synthetic_diagnostics(21, 5);
    auto model = untrained_gru(world, ModelKind::Tucker, 9);
    const DiagnosticSet set(world.instances);
    TrainConfig cfg;
    cfg.learning_rate = 0;
    cfg.epochs = 1;
    cfg.batch_size = 64;
    const auto r = deductive_protocol(model, set, world.deductive_train, world.deductive_valid, cfg);
    double baseline = 0;
    for (int k = 1; k <= 10; ++k) baseline += 1.0 / k;
    baseline /= 10;
    CHECK(r.background.n_queries() == 50);
    for (const auto* rep : {&r.background, &r.no_added, &r.with_added}) CHECK(std::abs(rep->mrr - baseline) < 0.12);
    CHECK(r.no_added.ranks == rank_instances(model, set, [&] {
              std::vector<std::size_t> p;
              for (const auto& c : deductive_cases(set)) p.push_back(c.probe);
              return p;
          }()));
    const auto other = deductive_protocol(model, set, {{"someone new", "works for", "nowhere"}}, {}, cfg);
    CHECK(other.no_added.ranks == r.no_added.ranks);
    const auto tsv = diagnostic_tsv(r);
    CHECK(tsv.find("Background Knowledge") < tsv.find("No Added Facts"));
    CHECK(tsv.find("No Added Facts") < tsv.find("With Added Facts"));
}

TEST_CASE("stereotype report") {
    const auto world = generate_synthetic_diagnostics(31, 5);
    const DiagnosticSet set(world.instances);
    auto model = untrained_gru(world, ModelKind::Tucker, 10);
    TrainConfig cfg;
    cfg.learning_rate = 0;
    cfg.epochs = 1;
    cfg.batch_size = 64;

    auto flat = model;
    for (auto& v : flat.params().at("tucker.core").data) v = 0;
    const auto blind = stereotype_report(flat, set, nullptr, nullptr, cfg);
    CHECK(!blind.no_added.wilcoxon);
    CHECK(blind.no_added.note.find("no detectable effect") != std::string::npos);
    for (const auto& [g, rep] : blind.no_added.groups) CHECK(rep.mr == 25.5);

    const auto r = stereotype_report(model, set, &world.stereotype_train, &world.stereotype_valid, cfg);
    CHECK(r.no_added.groups.size() == 4);
    double total = 0, n = 0;
    for (const auto& [g, rep] : r.no_added.groups) {
        CHECK(std::abs(rep.mr - 25.5) < 10);
        total += rep.mr * rep.n_queries();
        n += rep.n_queries();
    }
    CHECK(std::abs(total / n - 25.5) < 4);
    CHECK(r.background.n_queries() == 200);
    REQUIRE(r.with_added);
    CHECK(r.with_added->groups.size() == 4);
    const auto tsv = diagnostic_tsv(r);
    CHECK(tsv.find("No Added Facts") < tsv.find("Background Knowledge"));
    CHECK(tsv.find("Background Knowledge") < tsv.find("With Added Facts"));
    CHECK(to_json(r).contains("with_added_facts"));

    auto items = world.instances;
    for (const auto& inst : world.instances)
        if (inst.twin_of && inst.kind == InstanceKind::Stereotype) {
            auto dup = inst;
            dup.id += "-dup";
            items.push_back(dup);
            break;
        }
    CHECK_THROWS_WITH_AS(stereotype_pairs(DiagnosticSet(items)), doctest::Contains("unbalanced"), Error);
}
