#pragma once

#include <random>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include "kbcx/data/kb.hpp"

namespace kbcx::testing {

struct ToyKbSpec {
    std::size_t entities = 20;
    std::size_t relations = 3;
    std::size_t train = 50;
    std::size_t valid = 0;
    std::size_t test = 0;
    std::string entity_stem = "node";
    std::string relation_stem = "rel";
    std::uint64_t seed = 1;
};

/// Distinct random triples over numbered names, split in order. Every entity
/// appears in train when there are enough triples.
inline KnowledgeBase toy_kb(const ToyKbSpec& s) {
    std::mt19937_64 rng(s.seed);
    std::uniform_int_distribution<std::size_t> ent(0, s.entities - 1), rel(0, s.relations - 1);
    std::set<std::tuple<std::size_t, std::size_t, std::size_t>> seen;
    std::vector<std::tuple<std::size_t, std::size_t, std::size_t>> triples;
    const std::size_t total = s.train + s.valid + s.test;
    std::size_t next_fresh = 0;
    while (triples.size() < total) {
        std::size_t h = ent(rng), r = rel(rng), t = ent(rng);
        if (next_fresh < s.entities && triples.size() < s.train) h = next_fresh++;
        if (h == t) continue;
        if (seen.emplace(h, r, t).second) triples.emplace_back(h, r, t);
    }
    KbBuilder b;
    auto ename = [&](std::size_t i) { return s.entity_stem + " " + std::to_string(i); };
    auto rname = [&](std::size_t i) { return s.relation_stem + " " + std::to_string(i); };
    for (std::size_t i = 0; i < triples.size(); ++i) {
        const auto& [h, r, t] = triples[i];
        const Split sp = i < s.train ? Split::Train : (i < s.train + s.valid ? Split::Valid : Split::Test);
        b.add(sp, ename(h), rname(r), ename(t));
    }
    return std::move(b).build();
}

}  // namespace kbcx::testing
