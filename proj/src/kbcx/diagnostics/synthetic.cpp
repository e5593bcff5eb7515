#include "kbcx/diagnostics/synthetic.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <random>
#include <set>

#include "kbcx/errors.hpp"

namespace kbcx {

namespace {

constexpr const char* kLocatedIn = "located in";
constexpr const char* kSituatedIn = "situated in";
constexpr const char* kHosts = "hosts";
constexpr const char* kWorksFor = "works for";
constexpr const char* kBasedIn = "based in";
constexpr const char* kIs = "is";
constexpr const char* kPerforms = "performs";

const std::pair<const char*, const char*> kSuffixSynonyms[] = {
    {"works", "factory"}, {"labs", "laboratory"}, {"group", "collective"}, {"systems", "solutions"}};
const char* kJobRoles[] = {"keeper", "maker", "driver", "smith", "tender"};
const char* kTaskObjects[] = {"tools", "records", "engines", "fabrics", "gardens", "ledgers", "valves", "lamps"};

// Portable draws so output does not depend on the standard library.
class Draw {
   public:
    explicit Draw(std::uint64_t seed) : rng_(seed) {}
    std::size_t below(std::size_t n) { return static_cast<std::size_t>(rng_() % n); }
    bool chance(double p) { return static_cast<double>(rng_() >> 11) * 0x1.0p-53 < p; }
    template <typename V>
    void shuffle(V& v) {
        for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[below(i)]);
    }

   private:
    std::mt19937_64 rng_;
};

class WordMaker {
   public:
    explicit WordMaker(Draw& d) : d_(d) {}
    std::string fresh(std::size_t syllables, const std::string& ending = "") {
        static const std::string cons = "bdfgklmnprstvz", vows = "aeiu";
        while (true) {
            std::string w;
            for (std::size_t i = 0; i < syllables; ++i) {
                w += cons[d_.below(cons.size())];
                w += vows[d_.below(vows.size())];
            }
            w += ending;
            if (used_.insert(w).second) return w;
        }
    }

   private:
    Draw& d_;
    std::set<std::string> used_;
};

struct Person {
    std::string name;
    bool masc = true;
};

}  // namespace

SyntheticDiagnostics generate_synthetic_diagnostics(std::uint64_t seed, std::size_t size) {
    if (size == 0) fail(ErrorCode::InvalidArgument, "synthetic world size must be positive");
    Draw d(seed);
    WordMaker words(d);
    SyntheticDiagnostics out;
    out.rules.push_back({kWorksFor, kLocatedIn, kBasedIn});

    const std::size_t n_city = 12 + 4 * size, n_company = 16 + 8 * size, n_person = 60 * size;
    std::vector<std::string> cities, companies, company_synonym;
    std::vector<std::size_t> company_city;
    for (std::size_t i = 0; i < n_city; ++i) cities.push_back(words.fresh(2) + " city");
    for (std::size_t i = 0; i < n_company; ++i) {
        const auto& [suffix, synonym] = kSuffixSynonyms[i % 4];
        const std::string stem = words.fresh(2);
        companies.push_back(stem + " " + suffix);
        company_synonym.push_back(stem + " " + synonym);
        company_city.push_back(d.below(n_city));
    }
    std::vector<std::string> masc_first, fem_first, last;
    for (int i = 0; i < 12; ++i) masc_first.push_back(words.fresh(1, "ro"));
    for (int i = 0; i < 12; ++i) fem_first.push_back(words.fresh(1, "la"));
    for (int i = 0; i < 40; ++i) last.push_back(words.fresh(2, "n"));
    std::set<std::string> taken;
    auto new_person = [&](bool masc) {
        while (true) {
            const auto& pool = masc ? masc_first : fem_first;
            std::string name = pool[d.below(pool.size())] + " " + last[d.below(last.size())];
            if (taken.insert(name).second) return Person{name, masc};
        }
    };

    std::vector<std::string> jobs;
    std::vector<std::vector<std::string>> job_tasks;
    for (std::size_t j = 0; j < 50; ++j) {
        jobs.push_back(words.fresh(2) + " " + kJobRoles[j % 5]);
        std::vector<std::string> tasks;
        for (int k = 0; k < 4; ++k) tasks.push_back(words.fresh(2) + " " + kTaskObjects[d.below(8)]);
        job_tasks.push_back(tasks);
    }
    auto job_is_masc = [](std::size_t j) { return j < 25; };

    // Pre-training world. Facts the diagnostic items rely on stay in train.
    std::vector<RawTriple> fixed, movable;
    for (std::size_t c = 0; c < n_company; ++c) {
        fixed.push_back({companies[c], kLocatedIn, cities[company_city[c]]});
        if (c % 2 == 0) fixed.push_back({company_synonym[c], kLocatedIn, cities[company_city[c]]});
        if (c % 3 == 0) fixed.push_back({companies[c], kSituatedIn, cities[company_city[c]]});
        if (c % 3 == 1) fixed.push_back({cities[company_city[c]], kHosts, companies[c]});
        out.clusters.emplace_back(companies[c], "company " + std::to_string(c));
        if (c % 2 == 0) out.clusters.emplace_back(company_synonym[c], "company " + std::to_string(c));
    }
    for (std::size_t j = 0; j < jobs.size(); ++j)
        for (const auto& t : job_tasks[j]) fixed.push_back({jobs[j], kPerforms, t});
    for (std::size_t p = 0; p < n_person; ++p) {
        const Person person = new_person(d.chance(0.5));
        const std::size_t c = d.below(n_company);
        fixed.push_back({person.name, kWorksFor, companies[c]});
        movable.push_back({person.name, kBasedIn, cities[company_city[c]]});
        const bool stereotypical = d.chance(0.8);
        const std::size_t half = d.below(25);
        const std::size_t j = (person.masc == stereotypical) ? half : 25 + half;
        movable.push_back({person.name, kIs, jobs[j]});
        fixed.push_back({person.name, kPerforms, job_tasks[j][d.below(4)]});
    }
    d.shuffle(movable);
    const std::size_t held = movable.size() / 10;
    out.train = fixed;
    for (std::size_t i = 0; i < movable.size(); ++i) {
        if (i < held / 2)
            out.valid.push_back(movable[i]);
        else if (i < held)
            out.test.push_back(movable[i]);
        else
            out.train.push_back(movable[i]);
    }
    for (const auto& c : cities) out.clusters.emplace_back(c, c);
    std::set<std::string> present;
    for (const auto* split : {&out.train, &out.valid, &out.test})
        for (const auto& t : *split) {
            present.insert(t.head);
            present.insert(t.tail);
        }
    std::erase_if(out.clusters, [&](const auto& c) { return !present.count(c.first); });

    auto candidates_with = [&](const std::vector<std::string>& pool, std::size_t gold, std::size_t k,
                               const std::set<std::size_t>& exclude) {
        std::vector<std::size_t> others;
        for (std::size_t i = 0; i < pool.size(); ++i)
            if (i != gold && !exclude.count(i)) others.push_back(i);
        d.shuffle(others);
        others.resize(k - 1);
        others.push_back(gold);
        d.shuffle(others);
        std::pair<std::vector<std::string>, std::size_t> res;
        for (std::size_t i = 0; i < others.size(); ++i) {
            res.first.push_back(pool[others[i]]);
            if (others[i] == gold) res.second = i;
        }
        return res;
    };
    std::size_t next_id = 0;
    auto add = [&](DiagnosticInstance inst) {
        inst.id = "syn-" + std::to_string(next_id++);
        out.instances.push_back(std::move(inst));
        return out.instances.back().id;
    };

    // General knowledge with synonym and inverse twins.
    std::vector<std::size_t> location_item(n_company);
    for (std::size_t c = 0; c < n_company; ++c) {
        auto [cands, gold] = candidates_with(cities, company_city[c], 10, {});
        DiagnosticInstance g;
        g.head = companies[c];
        g.relation = kLocatedIn;
        g.tail = std::string(kMissingSlot);
        g.candidates = cands;
        g.gold = gold;
        g.category = "location";
        g.subcategory = kLocatedIn;
        location_item[c] = out.instances.size();
        const std::string gid = add(g);
        if (c % 2 == 0) {
            DiagnosticInstance t = g;
            t.kind = InstanceKind::EntitySynonymTwin;
            t.head = company_synonym[c];
            t.twin_of = gid;
            add(t);
        }
        if (c % 3 != 2) {
            DiagnosticInstance t = g;
            t.kind = InstanceKind::RelationSynonymTwin;
            t.relation = kSituatedIn;
            t.twin_of = gid;
            add(t);
            DiagnosticInstance inv = g;
            inv.kind = InstanceKind::InverseTwin;
            inv.relation = kHosts;
            inv.head = std::string(kMissingSlot);
            inv.tail = companies[c];
            inv.twin_of = gid;
            add(inv);
        }
    }
    for (std::size_t city = 0; city < std::min<std::size_t>(n_city, 4); ++city) {
        std::set<std::size_t> here;
        for (std::size_t c = 0; c < n_company; ++c)
            if (company_city[c] == city) here.insert(c);
        if (here.empty() || n_company - here.size() < 9) continue;
        const std::size_t gold_company = *here.begin();
        here.erase(gold_company);
        auto [cands, gold] = candidates_with(companies, gold_company, 10, here);
        DiagnosticInstance g;
        g.head = std::string(kMissingSlot);
        g.relation = kLocatedIn;
        g.tail = cities[city];
        g.candidates = cands;
        g.gold = gold;
        g.category = "location";
        g.subcategory = "located in (head)";
        add(g);
    }

    // Deductive cases: a new person works for a known company.
    const std::size_t n_deductive = 10 * size;
    for (std::size_t k = 0; k < n_deductive; ++k) {
        const std::size_t c = k % n_company;
        const Person x = new_person(d.chance(0.5));
        const DiagnosticInstance bg = out.instances[location_item[c]];
        DiagnosticInstance probe;
        probe.kind = InstanceKind::Deductive;
        probe.head = x.name;
        probe.relation = kBasedIn;
        probe.tail = std::string(kMissingSlot);
        probe.candidates = bg.candidates;
        probe.gold = bg.gold;
        probe.category = "location";
        probe.subcategory = kBasedIn;
        probe.twin_of = bg.id;
        add(probe);
        out.deductive_train.push_back({x.name, kWorksFor, companies[c]});
        const Person y = new_person(d.chance(0.5));
        out.deductive_valid.push_back({y.name, kWorksFor, companies[c]});
    }

    // Stereotype pairs: an anti-stereotypical name item and its name-swapped twin.
    const std::size_t n_pairs = 10 * size;
    for (std::size_t k = 0; k < n_pairs; ++k) {
        const std::size_t j = d.below(jobs.size());
        const bool job_masc = job_is_masc(j);
        const Person anti = new_person(!job_masc), st = new_person(job_masc);
        DiagnosticInstance a;
        a.kind = InstanceKind::Stereotype;
        a.head = anti.name;
        a.relation = kIs;
        a.tail = std::string(kMissingSlot);
        a.candidates = jobs;
        a.gold = j;
        a.category = "occupation";
        a.subcategory = job_masc ? "masculine-coded" : "feminine-coded";
        a.group = anti.masc ? StereotypeGroup::AntiMasc : StereotypeGroup::AntiFem;
        const std::string aid = add(a);
        DiagnosticInstance b = a;
        b.head = st.name;
        b.group = st.masc ? StereotypeGroup::StMasc : StereotypeGroup::StFem;
        b.twin_of = aid;
        add(b);
        std::vector<std::size_t> order{0, 1, 2, 3};
        d.shuffle(order);
        for (const Person* p : {&anti, &st}) {
            out.stereotype_train.push_back({p->name, kPerforms, job_tasks[j][order[0]]});
            out.stereotype_valid.push_back({p->name, kPerforms, job_tasks[j][order[1]]});
        }
    }
    for (std::size_t j = 0; j < jobs.size(); ++j) {
        for (const auto& t : job_tasks[j]) {
            DiagnosticInstance bg;
            bg.kind = InstanceKind::Stereotype;
            bg.head = std::string(kMissingSlot);
            bg.relation = kPerforms;
            bg.tail = t;
            bg.candidates = jobs;
            bg.gold = j;
            bg.category = "occupation background";
            bg.subcategory = kPerforms;
            add(bg);
        }
    }
    DiagnosticSet{out.instances};
    return out;
}

nlohmann::json rules_to_json(const std::vector<ChainRule>& rules) {
    nlohmann::json j = nlohmann::json::array();
    for (const auto& r : rules) j.push_back({{"first", r.first}, {"second", r.second}, {"implied", r.implied}});
    return j;
}

std::vector<ChainRule> rules_from_json(const nlohmann::json& j) {
    std::vector<ChainRule> out;
    try {
        for (const auto& r : j)
            out.push_back({r.at("first").get<std::string>(), r.at("second").get<std::string>(),
                           r.at("implied").get<std::string>()});
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::Parse, std::string("malformed rules: ") + e.what());
    }
    return out;
}

std::vector<std::filesystem::path> write_synthetic_diagnostics(const SyntheticDiagnostics& data,
                                                               const std::filesystem::path& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) fail(ErrorCode::Io, "cannot create " + dir.string() + ": " + ec.message());
    std::vector<std::filesystem::path> written;
    auto write = [&](const std::string& name, const std::string& content) {
        const auto path = dir / name;
        std::ofstream f(path, std::ios::binary);
        if (!f) fail(ErrorCode::Io, "cannot write " + path.string());
        f << content;
        if (!f) fail(ErrorCode::Io, "write failed for " + path.string());
        written.push_back(path);
    };
    auto tsv = [](const std::vector<RawTriple>& triples) {
        std::string s;
        for (const auto& t : triples) s += t.head + '\t' + t.relation + '\t' + t.tail + '\n';
        return s;
    };
    write("train.tsv", tsv(data.train));
    write("valid.tsv", tsv(data.valid));
    write("test.tsv", tsv(data.test));
    std::string clusters;
    for (const auto& [name, label] : data.clusters) clusters += name + '\t' + label + '\n';
    write("clusters.tsv", clusters);
    write("doge.jsonl", serialize_doge(data.instances));
    write("deductive_train.tsv", tsv(data.deductive_train));
    write("deductive_valid.tsv", tsv(data.deductive_valid));
    write("stereotype_train.tsv", tsv(data.stereotype_train));
    write("stereotype_valid.tsv", tsv(data.stereotype_valid));
    write("rules.json", rules_to_json(data.rules).dump(2) + '\n');
    return written;
}

}  // namespace kbcx
