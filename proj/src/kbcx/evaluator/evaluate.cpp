#include "kbcx/evaluator/evaluate.hpp"

#include <cstdlib>
#include <thread>

#include "kbcx/errors.hpp"

namespace kbcx {

std::size_t resolve_workers(std::size_t requested) {
    if (requested > 0) return requested;
    if (const char* env = std::getenv("KBCX_WORKERS")) {
        const long v = std::strtol(env, nullptr, 10);
        if (v > 0) return static_cast<std::size_t>(v);
    }
    return 1;
}

template <typename T>
RankingReport evaluate(const LinkModel<T>& model, const KnowledgeBase& kb, Split split, const FilterIndex& filter,
                       const EvalOptions& options) {
    std::vector<Query> queries = tail_query_view(kb, split);
    if (options.max_queries && queries.size() > *options.max_queries) queries.resize(*options.max_queries);
    const Array<T> E = model.encode(Side::Entity, kb.entity_names());
    const Array<T> R = model.encode(Side::Relation, kb.relation_names());
    std::optional<Array<T>> bias;
    if (model.spec().model == ModelKind::ConvE) bias = model.tail_bias(kb.entity_names());
    const std::vector<std::size_t>* clusters =
        options.use_clusters && kb.clusters() ? &*kb.clusters() : nullptr;

    const std::size_t n = kb.num_entities();
    const std::size_t bs = std::max<std::size_t>(1, options.batch_size);
    const std::size_t num_batches = (queries.size() + bs - 1) / bs;
    std::vector<double> ranks(queries.size());
    auto run_batch = [&](std::size_t k) {
        const std::size_t begin = k * bs, end = std::min(queries.size(), begin + bs);
        const std::size_t we = E.shape[1], wr = R.shape[1];
        Array<T> heads(Shape{end - begin, we}), rels(Shape{end - begin, wr});
        for (std::size_t i = begin; i < end; ++i) {
            std::copy_n(E.data.begin() + queries[i].head * we, we, heads.data.begin() + (i - begin) * we);
            std::copy_n(R.data.begin() + queries[i].relation * wr, wr, rels.data.begin() + (i - begin) * wr);
        }
        const Array<T> scores = model.score_rows(heads, rels, E, bias ? &*bias : nullptr);
        std::vector<EntityId> filt;
        for (std::size_t i = begin; i < end; ++i) {
            const auto& known = filter.known_tails(queries[i].head, queries[i].relation);
            filt.clear();
            for (EntityId e : known)
                if (e != queries[i].tail) filt.push_back(e);
            ranks[i] = rank_query(std::span<const T>(scores.data.data() + (i - begin) * n, n), queries[i].tail, filt,
                                  clusters);
        }
    };
    const std::size_t workers = std::min(resolve_workers(options.workers), std::max<std::size_t>(1, num_batches));
    if (workers <= 1) {
        for (std::size_t k = 0; k < num_batches; ++k) run_batch(k);
    } else {
        std::vector<std::thread> pool;
        std::vector<std::exception_ptr> errors(workers);
        for (std::size_t w = 0; w < workers; ++w) {
            pool.emplace_back([&, w] {
                try {
                    for (std::size_t k = w; k < num_batches; k += workers) run_batch(k);
                } catch (...) {
                    errors[w] = std::current_exception();
                }
            });
        }
        for (auto& t : pool) t.join();
        for (auto& e : errors)
            if (e) std::rethrow_exception(e);
    }
    return summarize(std::move(ranks), std::string(to_string(split)));
}

template <typename T>
RankingReport zero_shot_evaluate(const LinkModel<T>& model, const KnowledgeBase& kb, Split split,
                                 const FilterIndex& filter, const EvalOptions& options) {
    if (model.spec().encoder != EncoderKind::Gru) {
        fail(ErrorCode::InvalidArgument, "zero-shot evaluation needs a checkpoint with GRU encoders");
    }
    return evaluate(model, kb, split, filter, options);
}

template RankingReport evaluate<float>(const LinkModel<float>&, const KnowledgeBase&, Split, const FilterIndex&,
                                       const EvalOptions&);
template RankingReport evaluate<double>(const LinkModel<double>&, const KnowledgeBase&, Split, const FilterIndex&,
                                        const EvalOptions&);
template RankingReport zero_shot_evaluate<float>(const LinkModel<float>&, const KnowledgeBase&, Split,
                                                 const FilterIndex&, const EvalOptions&);
template RankingReport zero_shot_evaluate<double>(const LinkModel<double>&, const KnowledgeBase&, Split,
                                                  const FilterIndex&, const EvalOptions&);

}  // namespace kbcx
