#include "benchmark.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <unordered_map>
#include <unordered_set>

#include "rng.hpp"
#include "tensor.hpp"

namespace mrckg {

BaseKG BaseKG::from_triples(std::vector<Triple> triples) {
    if (triples.empty()) throw Fault("base KG is empty");
    std::sort(triples.begin(), triples.end());
    triples.erase(std::unique(triples.begin(), triples.end()), triples.end());
    BaseKG base;
    std::unordered_set<EntityId> ents;
    std::unordered_set<RelationId> rels;
    EntityId max_e = -1;
    RelationId max_r = -1;
    for (const Triple& t : triples) {
        if (t.head < 0 || t.tail < 0 || t.relation < 0)
            throw Fault("base KG: negative id in triple");
        ents.insert(t.head);
        ents.insert(t.tail);
        rels.insert(t.relation);
        max_e = std::max({max_e, t.head, t.tail});
        max_r = std::max(max_r, t.relation);
    }
    if (static_cast<int64_t>(ents.size()) != max_e + 1)
        throw Fault("base KG: entity ids are not dense 0.." + std::to_string(max_e));
    if (static_cast<int64_t>(rels.size()) != max_r + 1)
        throw Fault("base KG: relation ids are not dense 0.." + std::to_string(max_r));
    base.triples = std::move(triples);
    base.entity_count = max_e + 1;
    base.relation_count = max_r + 1;
    return base;
}

Strategy strategy_from_string(const std::string& s) {
    if (s == "entity") return Strategy::entity;
    if (s == "higher") return Strategy::higher;
    if (s == "equal") return Strategy::equal;
    throw Fault("unknown strategy: " + s);
}

std::string strategy_name(Strategy s) {
    switch (s) {
        case Strategy::entity: return "entity";
        case Strategy::higher: return "higher";
        case Strategy::equal: return "equal";
    }
    return "?";
}

std::vector<EntityId> bfs_arrival_order(const BaseKG& base, uint64_t seed) {
    const int64_t n = base.entity_count;
    std::vector<int64_t> deg(static_cast<size_t>(n), 0);
    std::vector<std::vector<EntityId>> adj(static_cast<size_t>(n));
    {
        std::vector<std::unordered_set<EntityId>> nbr(static_cast<size_t>(n));
        for (const Triple& t : base.triples) {
            deg[static_cast<size_t>(t.head)] += 1;
            deg[static_cast<size_t>(t.tail)] += 1;
            if (t.head != t.tail) {
                nbr[static_cast<size_t>(t.head)].insert(t.tail);
                nbr[static_cast<size_t>(t.tail)].insert(t.head);
            }
        }
        for (int64_t v = 0; v < n; ++v) {
            adj[static_cast<size_t>(v)].assign(nbr[static_cast<size_t>(v)].begin(),
                                               nbr[static_cast<size_t>(v)].end());
            std::sort(adj[static_cast<size_t>(v)].begin(), adj[static_cast<size_t>(v)].end());
        }
    }

    auto rng = make_rng(derive_seed(seed, "bfs"));

    // Root: random pick among the top-degree decile.
    std::vector<EntityId> by_degree(static_cast<size_t>(n));
    std::iota(by_degree.begin(), by_degree.end(), 0);
    std::sort(by_degree.begin(), by_degree.end(), [&](EntityId a, EntityId b) {
        if (deg[static_cast<size_t>(a)] != deg[static_cast<size_t>(b)])
            return deg[static_cast<size_t>(a)] > deg[static_cast<size_t>(b)];
        return a < b;
    });
    const size_t top = std::max<size_t>(1, static_cast<size_t>(n) / 10);
    std::uniform_int_distribution<size_t> pick(0, top - 1);
    const EntityId root = by_degree[pick(rng)];

    std::vector<EntityId> order;
    order.reserve(static_cast<size_t>(n));
    std::vector<uint8_t> seen(static_cast<size_t>(n), 0);
    std::vector<EntityId> queue;
    size_t qhead = 0;
    auto start_from = [&](EntityId v) {
        seen[static_cast<size_t>(v)] = 1;
        queue.push_back(v);
    };
    start_from(root);
    size_t next_unseen_rank = 0;  // cursor into by_degree for new components
    while (order.size() < static_cast<size_t>(n)) {
        if (qhead == queue.size()) {
            while (seen[static_cast<size_t>(by_degree[next_unseen_rank])]) ++next_unseen_rank;
            start_from(by_degree[next_unseen_rank]);
        }
        const EntityId v = queue[qhead++];
        order.push_back(v);
        std::vector<EntityId> nexts;
        for (EntityId w : adj[static_cast<size_t>(v)])
            if (!seen[static_cast<size_t>(w)]) nexts.push_back(w);
        std::shuffle(nexts.begin(), nexts.end(), rng);
        for (EntityId w : nexts) {
            seen[static_cast<size_t>(w)] = 1;
            queue.push_back(w);
        }
    }
    return order;
}

namespace {

// Relabels entities by arrival rank and relations by first appearance across
// the snapshot assignment, then packs everything into a PartitionResult.
PartitionResult assemble_partition(const BaseKG& base, const std::vector<EntityId>& arrival,
                                   const std::vector<int64_t>& entity_counts,
                                   const std::vector<size_t>& triple_bucket) {
    const int T = static_cast<int>(entity_counts.size());
    PartitionResult out;
    out.entity_map = arrival;
    out.entity_counts = entity_counts;
    std::vector<EntityId> rank(static_cast<size_t>(base.entity_count));
    for (size_t i = 0; i < arrival.size(); ++i) rank[static_cast<size_t>(arrival[i])] =
        static_cast<EntityId>(i);

    out.delta_triples.resize(static_cast<size_t>(T));
    for (size_t k = 0; k < base.triples.size(); ++k) {
        const Triple& t = base.triples[k];
        Triple relabeled{rank[static_cast<size_t>(t.head)], t.relation,
                         rank[static_cast<size_t>(t.tail)]};
        out.delta_triples[triple_bucket[k]].push_back(relabeled);
    }

    std::unordered_map<RelationId, RelationId> rel_rank;
    out.relation_counts.assign(static_cast<size_t>(T), 0);
    for (int i = 0; i < T; ++i) {
        auto& dt = out.delta_triples[static_cast<size_t>(i)];
        std::sort(dt.begin(), dt.end());
        for (Triple& t : dt) {
            auto it = rel_rank.find(t.relation);
            if (it == rel_rank.end()) {
                const RelationId fresh = static_cast<RelationId>(out.relation_map.size());
                out.relation_map.push_back(t.relation);
                it = rel_rank.emplace(t.relation, fresh).first;
            }
            t.relation = it->second;
        }
        std::sort(dt.begin(), dt.end());
        out.relation_counts[static_cast<size_t>(i)] =
            static_cast<int64_t>(out.relation_map.size());
    }
    return out;
}

std::vector<size_t> buckets_from_counts(const BaseKG& base, const std::vector<EntityId>& arrival,
                                        const std::vector<int64_t>& entity_counts) {
    std::vector<EntityId> rank(static_cast<size_t>(base.entity_count));
    for (size_t i = 0; i < arrival.size(); ++i)
        rank[static_cast<size_t>(arrival[i])] = static_cast<EntityId>(i);
    std::vector<size_t> bucket(base.triples.size());
    for (size_t k = 0; k < base.triples.size(); ++k) {
        const Triple& t = base.triples[k];
        const int64_t mr = std::max(rank[static_cast<size_t>(t.head)],
                                    rank[static_cast<size_t>(t.tail)]);
        // earliest snapshot whose entity prefix covers both endpoints
        const auto it = std::upper_bound(entity_counts.begin(), entity_counts.end(), mr);
        bucket[k] = static_cast<size_t>(it - entity_counts.begin());
    }
    return bucket;
}

}  // namespace

PartitionResult partition_entity(const BaseKG& base, const std::vector<double>& growth_fractions,
                                 uint64_t seed) {
    const int T = static_cast<int>(growth_fractions.size());
    if (T < 1) throw Fault("partition_entity: need at least one fraction");
    for (int i = 0; i < T; ++i) {
        if (growth_fractions[static_cast<size_t>(i)] <= 0.0 ||
            growth_fractions[static_cast<size_t>(i)] > 1.0 ||
            (i > 0 && growth_fractions[static_cast<size_t>(i)] <=
                          growth_fractions[static_cast<size_t>(i - 1)]))
            throw Fault("partition_entity: fractions must be increasing in (0,1]");
    }
    if (std::fabs(growth_fractions.back() - 1.0) > 1e-9)
        throw Fault("partition_entity: final fraction must be 1.0");
    if (base.entity_count < T)
        throw Fault("base too small for " + std::to_string(T) + " snapshots");

    std::vector<EntityId> arrival = bfs_arrival_order(base, seed);
    std::vector<int64_t> counts(static_cast<size_t>(T));
    for (int i = 0; i < T; ++i)
        counts[static_cast<size_t>(i)] = static_cast<int64_t>(
            std::llround(growth_fractions[static_cast<size_t>(i)] *
                         static_cast<double>(base.entity_count)));
    counts.back() = base.entity_count;
    for (int i = 0; i < T; ++i) {
        const int64_t lo = (i == 0 ? 1 : counts[static_cast<size_t>(i - 1)] + 1);
        counts[static_cast<size_t>(i)] = std::max(counts[static_cast<size_t>(i)], lo);
        if (counts[static_cast<size_t>(i)] > base.entity_count - (T - 1 - i))
            counts[static_cast<size_t>(i)] = base.entity_count - (T - 1 - i);
        if (i > 0 && counts[static_cast<size_t>(i)] <= counts[static_cast<size_t>(i - 1)])
            throw Fault("base too small for " + std::to_string(T) + " snapshots");
    }
    return assemble_partition(base, arrival, counts, buckets_from_counts(base, arrival, counts));
}

PartitionResult partition_higher(const BaseKG& base, const std::vector<double>& triple_fractions,
                                 uint64_t seed) {
    const int T = static_cast<int>(triple_fractions.size());
    if (T < 1) throw Fault("partition_higher: need at least one fraction");
    double total = 0.0;
    for (double f : triple_fractions) {
        if (f <= 0.0) throw Fault("partition_higher: fractions must be positive");
        total += f;
    }
    if (base.entity_count < T)
        throw Fault("base too small for " + std::to_string(T) + " snapshots");

    std::vector<EntityId> arrival = bfs_arrival_order(base, seed);
    std::vector<EntityId> rank(static_cast<size_t>(base.entity_count));
    for (size_t i = 0; i < arrival.size(); ++i)
        rank[static_cast<size_t>(arrival[i])] = static_cast<EntityId>(i);

    // c[p] = triples fully contained in the first p arrivals.
    const int64_t n = base.entity_count;
    std::vector<int64_t> c(static_cast<size_t>(n) + 1, 0);
    for (const Triple& t : base.triples) {
        const int64_t mr = std::max(rank[static_cast<size_t>(t.head)],
                                    rank[static_cast<size_t>(t.tail)]);
        c[static_cast<size_t>(mr) + 1] += 1;
    }
    for (size_t p = 1; p <= static_cast<size_t>(n); ++p) c[p] += c[p - 1];

    std::vector<int64_t> counts(static_cast<size_t>(T));
    int64_t prev = 0;
    double cum_share = 0.0;
    for (int i = 0; i < T; ++i) {
        cum_share += triple_fractions[static_cast<size_t>(i)] / total;
        if (i == T - 1) {
            counts[static_cast<size_t>(i)] = n;
            break;
        }
        const double target = cum_share * static_cast<double>(base.triples.size());
        const int64_t lo = prev + 1, hi = n - (T - 1 - i);
        if (lo > hi) throw Fault("base too small for " + std::to_string(T) + " snapshots");
        int64_t best = lo;
        double best_err = std::fabs(static_cast<double>(c[static_cast<size_t>(lo)]) - target);
        for (int64_t p = lo + 1; p <= hi; ++p) {
            const double err = std::fabs(static_cast<double>(c[static_cast<size_t>(p)]) - target);
            if (err < best_err) {
                best = p;
                best_err = err;
            }
        }
        counts[static_cast<size_t>(i)] = best;
        prev = best;
    }
    return assemble_partition(base, arrival, counts, buckets_from_counts(base, arrival, counts));
}

PartitionResult partition_equal(const BaseKG& base, int T, uint64_t seed) {
    if (T < 1) throw Fault("partition_equal: T must be >= 1");
    return partition_higher(base, std::vector<double>(static_cast<size_t>(T), 1.0), seed);
}

std::vector<std::vector<Triple>> inject_bridges(const PartitionResult& part, double bridge_ratio,
                                                uint64_t seed,
                                                std::vector<std::string>* warnings) {
    if (bridge_ratio < 0.0 || bridge_ratio >= 1.0)
        throw Fault("bridge_ratio must be in [0,1)");
    const int T = static_cast<int>(part.delta_triples.size());
    std::vector<std::vector<Triple>> bridges(static_cast<size_t>(T));
    if (bridge_ratio == 0.0) return bridges;
    for (int i = 1; i < T; ++i) {
        const int64_t prev_count = part.entity_counts[static_cast<size_t>(i - 1)];
        const auto& delta = part.delta_triples[static_cast<size_t>(i)];
        const int64_t want =
            static_cast<int64_t>(std::floor(bridge_ratio * static_cast<double>(delta.size())));
        if (want == 0) continue;

        // Old entities adjacent to the incoming entities through ΔT_i.
        std::unordered_set<EntityId> frontier;
        for (const Triple& t : delta) {
            const bool new_h = t.head >= prev_count, new_t = t.tail >= prev_count;
            if (new_h && !new_t) frontier.insert(t.tail);
            if (new_t && !new_h) frontier.insert(t.head);
        }
        std::vector<Triple> candidates;
        for (int j = 0; j < i; ++j)
            for (const Triple& t : part.delta_triples[static_cast<size_t>(j)])
                if (frontier.count(t.head) || frontier.count(t.tail)) candidates.push_back(t);

        if (static_cast<int64_t>(candidates.size()) < want && warnings)
            warnings->push_back("s" + std::to_string(i) + ": only " +
                                std::to_string(candidates.size()) + " bridge candidates for " +
                                std::to_string(want) + " requested");
        auto rng = make_rng(derive_seed(seed, "bridges", static_cast<uint64_t>(i)));
        std::shuffle(candidates.begin(), candidates.end(), rng);
        const int64_t take = std::min<int64_t>(want, static_cast<int64_t>(candidates.size()));
        candidates.resize(static_cast<size_t>(take));
        std::sort(candidates.begin(), candidates.end());
        bridges[static_cast<size_t>(i)] = std::move(candidates);
    }
    return bridges;
}

SplitResult split_snapshot(const std::vector<Triple>& fresh, const std::vector<Triple>& bridges,
                           const std::array<int, 3>& ratio, uint64_t seed,
                           std::vector<int64_t>& cum_train_rel_count,
                           std::vector<std::string>* warnings) {
    if (ratio[0] <= 0 || ratio[1] <= 0 || ratio[2] <= 0)
        throw Fault("split ratio parts must be positive integers");
    SplitResult out;
    std::vector<Triple> shuffled = fresh;
    auto rng = make_rng(derive_seed(seed, "split"));
    std::shuffle(shuffled.begin(), shuffled.end(), rng);

    const int64_t n = static_cast<int64_t>(shuffled.size());
    const int64_t tot = ratio[0] + ratio[1] + ratio[2];
    int64_t sizes[3];
    for (int k = 0; k < 3; ++k) sizes[k] = n * ratio[static_cast<size_t>(k)] / tot;
    int64_t rem = n - (sizes[0] + sizes[1] + sizes[2]);
    for (int k = 0; rem > 0; k = (k + 1) % 3, --rem) sizes[k] += 1;  // train first

    out.train.assign(shuffled.begin(), shuffled.begin() + sizes[0]);
    out.valid.assign(shuffled.begin() + sizes[0], shuffled.begin() + sizes[0] + sizes[1]);
    out.test.assign(shuffled.begin() + sizes[0] + sizes[1], shuffled.end());
    const size_t fresh_train_count = out.train.size();
    out.train.insert(out.train.end(), bridges.begin(), bridges.end());

    auto grow = [&](RelationId r) {
        if (r >= static_cast<RelationId>(cum_train_rel_count.size()))
            cum_train_rel_count.resize(static_cast<size_t>(r) + 1, 0);
    };
    for (const Triple& t : out.train) {
        grow(t.relation);
        cum_train_rel_count[static_cast<size_t>(t.relation)] += 1;
    }

    // Relation-closure repair: every valid/test relation must already be in the
    // cumulative train. Violators swap with a train triple whose relation can
    // spare a copy; with no swap partner they move into train outright.
    size_t swappable_scan = 0;
    auto repair = [&](std::vector<Triple>& split, const char* name) {
        size_t idx = 0;
        while (idx < split.size()) {
            const Triple v = split[idx];
            grow(v.relation);
            if (cum_train_rel_count[static_cast<size_t>(v.relation)] > 0) {
                ++idx;
                continue;
            }
            bool swapped = false;
            for (size_t pi = swappable_scan; pi < fresh_train_count; ++pi) {
                const Triple cand = out.train[pi];
                if (cum_train_rel_count[static_cast<size_t>(cand.relation)] >= 2) {
                    out.train[pi] = v;
                    split[idx] = cand;
                    cum_train_rel_count[static_cast<size_t>(v.relation)] += 1;
                    cum_train_rel_count[static_cast<size_t>(cand.relation)] -= 1;
                    swapped = true;
                    break;
                }
            }
            if (!swapped) {
                out.train.push_back(v);
                cum_train_rel_count[static_cast<size_t>(v.relation)] += 1;
                split.erase(split.begin() + static_cast<std::ptrdiff_t>(idx));
                if (warnings)
                    warnings->push_back(std::string("relation-closure: moved a ") + name +
                                        " triple into train without swap");
                continue;  // idx now points at the next element
            }
            ++idx;
        }
    };
    repair(out.valid, "valid");
    repair(out.test, "test");
    return out;
}

ModalityStore synth_features(int64_t n_entities, const BuildConfig& cfg, uint64_t seed) {
    ModalityStore store(cfg.d_v, cfg.d_w);
    if (cfg.coverage_visual < 0 || cfg.coverage_visual > 1 || cfg.coverage_text < 0 ||
        cfg.coverage_text > 1)
        throw Fault("synth_features: coverage must be in [0,1]");
    const int block = std::max(1, cfg.community_block);
    std::map<int64_t, Tensor> mu_v, mu_w;
    auto community_mean = [&](std::map<int64_t, Tensor>& cache, const char* tag, int64_t comm,
                              int dim) -> const Tensor& {
        auto it = cache.find(comm);
        if (it == cache.end())
            it = cache.emplace(comm, Tensor::gaussian({dim}, 1.0,
                                                      derive_seed(seed, tag,
                                                                  static_cast<uint64_t>(comm))))
                     .first;
        return it->second;
    };
    for (int64_t e = 0; e < n_entities; ++e) {
        const int64_t comm = e / block;
        {
            auto rng = make_rng(derive_seed(seed, "cov-v", static_cast<uint64_t>(e)));
            std::uniform_real_distribution<double> uni(0.0, 1.0);
            if (uni(rng) < cfg.coverage_visual) {
                const Tensor& mu = community_mean(mu_v, "mu-v", comm, cfg.d_v);
                Tensor noise = Tensor::gaussian({cfg.m_tokens, cfg.d_v}, cfg.community_noise,
                                                derive_seed(seed, "tok-v",
                                                            static_cast<uint64_t>(e)));
                for (int i = 0; i < cfg.m_tokens; ++i)
                    for (int j = 0; j < cfg.d_v; ++j) noise.at(i, j) += mu.at(j);
                store.set_visual(e, std::move(noise));
            }
        }
        {
            auto rng = make_rng(derive_seed(seed, "cov-t", static_cast<uint64_t>(e)));
            std::uniform_real_distribution<double> uni(0.0, 1.0);
            if (uni(rng) < cfg.coverage_text) {
                const Tensor& mu = community_mean(mu_w, "mu-t", comm, cfg.d_w);
                Tensor noise = Tensor::gaussian({cfg.n_tokens, cfg.d_w}, cfg.community_noise,
                                                derive_seed(seed, "tok-t",
                                                            static_cast<uint64_t>(e)));
                for (int i = 0; i < cfg.n_tokens; ++i)
                    for (int j = 0; j < cfg.d_w; ++j) noise.at(i, j) += mu.at(j);
                store.set_text(e, std::move(noise));
            }
        }
    }
    return store;
}

ModalityStore relabel_store(const ModalityStore& base_store,
                            const std::vector<EntityId>& entity_map) {
    ModalityStore out(base_store.visual_dim(), base_store.text_dim());
    for (size_t bench_id = 0; bench_id < entity_map.size(); ++bench_id) {
        const EntityId base_id = entity_map[bench_id];
        if (base_store.has_visual(base_id))
            out.set_visual(static_cast<EntityId>(bench_id), base_store.visual_tokens(base_id),
                           base_store.visual_pooled(base_id));
        if (base_store.has_text(base_id))
            out.set_text(static_cast<EntityId>(bench_id), base_store.text_tokens(base_id),
                         base_store.text_pooled(base_id));
    }
    return out;
}

BuildResult build_sequence(const BaseKG& base, const BuildConfig& cfg,
                           const ModalityStore* base_store) {
    if (cfg.T < 1) throw Fault("build_sequence: T must be >= 1");
    BuildResult out;

    PartitionResult part;
    switch (cfg.strategy) {
        case Strategy::entity: {
            std::vector<double> fr = cfg.entity_fractions;
            if (static_cast<int>(fr.size()) != cfg.T) {
                fr.resize(static_cast<size_t>(cfg.T));
                for (int i = 0; i < cfg.T; ++i)
                    fr[static_cast<size_t>(i)] =
                        static_cast<double>(i + 1) / static_cast<double>(cfg.T);
            }
            part = partition_entity(base, fr, cfg.seed);
            break;
        }
        case Strategy::higher: {
            std::vector<double> fr = cfg.triple_fractions;
            if (static_cast<int>(fr.size()) != cfg.T)
                throw Fault("build_sequence: triple_fractions size must equal T");
            part = partition_higher(base, fr, cfg.seed);
            break;
        }
        case Strategy::equal:
            part = partition_equal(base, cfg.T, cfg.seed);
            break;
    }

    auto bridges = inject_bridges(part, cfg.bridge_ratio, cfg.seed, &out.warnings);

    std::vector<int64_t> cum_rel(static_cast<size_t>(part.relation_counts.back()), 0);
    int64_t prev_ents = 0;
    for (int i = 0; i < cfg.T; ++i) {
        Snapshot s;
        s.index = i;
        s.entity_count = part.entity_counts[static_cast<size_t>(i)];
        s.relation_count = part.relation_counts[static_cast<size_t>(i)];
        for (EntityId e = prev_ents; e < s.entity_count; ++e) s.delta_entities.push_back(e);
        SplitResult split = split_snapshot(part.delta_triples[static_cast<size_t>(i)],
                                           bridges[static_cast<size_t>(i)], cfg.split_ratio,
                                           derive_seed(cfg.seed, "split", static_cast<uint64_t>(i)),
                                           cum_rel, &out.warnings);
        s.train = std::move(split.train);
        s.valid = std::move(split.valid);
        s.test = std::move(split.test);
        s.bridge_triples = bridges[static_cast<size_t>(i)];
        s.delta_triples = part.delta_triples[static_cast<size_t>(i)];
        out.seq.snapshots.push_back(std::move(s));
        prev_ents = part.entity_counts[static_cast<size_t>(i)];
    }

    if (cfg.synth) {
        out.store = synth_features(base.entity_count, cfg, derive_seed(cfg.seed, "synth"));
    } else if (base_store) {
        out.store = relabel_store(*base_store, part.entity_map);
    } else {
        out.store = ModalityStore(cfg.d_v, cfg.d_w);
    }
    out.entity_map = std::move(part.entity_map);
    out.relation_map = std::move(part.relation_map);

    ValidationReport rep = validate_sequence(out.seq);
    if (!rep.ok())
        throw Fault("build_sequence produced an invalid benchmark:\n" + rep.to_string());
    return out;
}

}  // namespace mrckg
