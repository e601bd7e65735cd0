#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <random>
#include <set>

#include "graph.hpp"
#include "modality.hpp"
#include "stats.hpp"
#include "tensor.hpp"

using namespace mrckg;

namespace {

Snapshot make_snapshot(int idx, int64_t ents, int64_t rels, int64_t prev_ents,
                       std::vector<Triple> train, std::vector<Triple> valid = {},
                       std::vector<Triple> test = {}) {
    Snapshot s;
    s.index = idx;
    s.entity_count = ents;
    s.relation_count = rels;
    s.train = std::move(train);
    s.valid = std::move(valid);
    s.test = std::move(test);
    for (EntityId e = prev_ents; e < ents; ++e) s.delta_entities.push_back(e);
    return s;
}

// Three snapshots growing 4 -> 6 -> 7 entities over 2 relations.
SnapshotSequence toy_sequence() {
    SnapshotSequence seq;
    seq.snapshots.push_back(
        make_snapshot(0, 4, 2, 0, {{0, 0, 1}, {1, 1, 2}}, {{2, 0, 3}}, {{0, 1, 3}}));
    seq.snapshots.push_back(make_snapshot(1, 6, 2, 4, {{4, 0, 0}}, {}, {{5, 1, 1}}));
    seq.snapshots.push_back(make_snapshot(2, 7, 2, 6, {{6, 0, 4}}, {{6, 1, 0}}, {}));
    return seq;
}

}  // namespace

TEST_CASE("validate_sequence accepts growing sequences") {
    SUBCASE("DB15K-Entity cumulative entity counts") {
        SnapshotSequence seq;
        const int64_t counts[] = {4494, 8501, 10504, 11839, 12842};
        int64_t prev = 0;
        for (int i = 0; i < 5; ++i) {
            // one training triple between two early entities keeps splits nonempty
            seq.snapshots.push_back(make_snapshot(i, counts[i], 10, prev, {{0, 0, 1}}));
            prev = counts[i];
        }
        // the repeated training triple is a duplicate across snapshots: warning only
        ValidationReport rep = validate_sequence(seq);
        CHECK(rep.ok());
        CHECK(!rep.warnings.empty());
    }
    SUBCASE("single snapshot is valid") {
        SnapshotSequence seq;
        seq.snapshots.push_back(make_snapshot(0, 3, 1, 0, {{0, 0, 1}, {1, 0, 2}}));
        CHECK(validate_sequence(seq).ok());
    }
    SUBCASE("entity shrinkage is a violation") {
        SnapshotSequence seq = toy_sequence();
        seq.snapshots[2].entity_count = 5;  // drops an entity id
        seq.snapshots[2].delta_entities.clear();
        ValidationReport rep = validate_sequence(seq);
        CHECK(!rep.ok());
        bool found = false;
        for (const auto& v : rep.violations)
            if (v.kind == "entity_shrinkage" && v.snapshot == 2) found = true;
        CHECK(found);
    }
    SUBCASE("out-of-range ids are violations") {
        SnapshotSequence seq = toy_sequence();
        seq.snapshots[0].train.push_back({99, 0, 1});
        CHECK(!validate_sequence(seq).ok());
    }
    SUBCASE("empty sequence faults") {
        SnapshotSequence seq;
        CHECK_THROWS_AS(validate_sequence(seq), Fault);
    }
}

TEST_CASE("compute_deltas") {
    SnapshotSequence seq = toy_sequence();
    SUBCASE("requires validation first") {
        CHECK_THROWS_AS(compute_deltas(seq), Fault);
    }
    REQUIRE(validate_sequence(seq).ok());
    auto deltas = compute_deltas(seq);
    REQUIRE(deltas.size() == 3);

    SUBCASE("delta 0 equals the full first snapshot") {
        CHECK(deltas[0].triples.size() == 4);
        CHECK(deltas[0].entities == std::vector<EntityId>{0, 1, 2, 3});
    }
    SUBCASE("three snapshots with 2 new triples each after the first") {
        CHECK(deltas[1].triples.size() == 2);
        CHECK(deltas[2].triples.size() == 2);
    }
    SUBCASE("set-difference oracle") {
        // brute force: cumulative sets, then difference
        std::set<Triple> prev, cur;
        for (int i = 0; i < seq.T(); ++i) {
            const Snapshot& s = seq.at(i);
            for (const auto& v : {s.train, s.valid, s.test})
                for (const Triple& t : v) cur.insert(t);
            std::vector<Triple> diff;
            std::set_difference(cur.begin(), cur.end(), prev.begin(), prev.end(),
                                std::back_inserter(diff));
            CHECK(diff == deltas[static_cast<size_t>(i)].triples);
            prev = cur;
        }
    }
    SUBCASE("identical cumulative sets give empty delta") {
        SnapshotSequence dup;
        dup.snapshots.push_back(make_snapshot(0, 3, 1, 0, {{0, 0, 1}}));
        dup.snapshots.push_back(make_snapshot(1, 3, 1, 3, {{0, 0, 1}}));
        REQUIRE(validate_sequence(dup).ok());
        auto d = compute_deltas(dup);
        CHECK(d[1].triples.empty());
    }
    SUBCASE("rebuild from deltas then recompute is the identity") {
        // cumulative rebuild
        TripleSet cum;
        for (size_t i = 0; i < deltas.size(); ++i) {
            for (const Triple& t : deltas[i].triples) cum.insert(t);
            TripleSet direct = cumulative_triples(seq, static_cast<int>(i));
            CHECK(cum == direct);
        }
    }
}

TEST_CASE("old_entity_set") {
    SnapshotSequence seq = toy_sequence();
    CHECK(old_entity_set(seq, 0).count == 0);
    CHECK(old_entity_set(seq, 1).count == 4);
    CHECK(old_entity_set(seq, 2).count == 6);
    CHECK(old_entity_set(seq, 1).contains(3));
    CHECK(!old_entity_set(seq, 1).contains(4));
    CHECK_THROWS_AS(old_entity_set(seq, 3), Fault);
    CHECK_THROWS_AS(old_entity_set(seq, -1), Fault);
}

TEST_CASE("graph stats") {
    SUBCASE("path graph betweenness: middle node is 1") {
        SnapshotSequence seq;
        seq.snapshots.push_back(make_snapshot(0, 3, 1, 0, {{0, 0, 1}, {1, 0, 2}}));
        ModalityStore store(4, 4);
        ModalityView view(&store);
        GraphStats st = compute_graph_stats(seq, 0, view, 4, 8);
        CHECK(st.betweenness[1] == doctest::Approx(1.0));
        CHECK(st.betweenness[0] == doctest::Approx(0.0));
        CHECK(st.betweenness[2] == doctest::Approx(0.0));
    }
    SUBCASE("star center has normalized degree 1") {
        SnapshotSequence seq;
        seq.snapshots.push_back(
            make_snapshot(0, 5, 1, 0, {{0, 0, 1}, {0, 0, 2}, {0, 0, 3}, {0, 0, 4}}));
        ModalityStore store(4, 4);
        ModalityView view(&store);
        GraphStats st = compute_graph_stats(seq, 0, view, 4, 8);
        CHECK(st.norm_degree[0] == doctest::Approx(1.0));
        CHECK(st.norm_degree[1] == doctest::Approx(0.25));
        CHECK(st.degree[0] == 4);
    }
    SUBCASE("richness arms") {
        SnapshotSequence seq;
        seq.snapshots.push_back(make_snapshot(0, 2, 1, 0, {{0, 0, 1}}));
        ModalityStore store(4, 4);
        store.set_visual(0, Tensor::gaussian({4, 4}, 1.0, 1));  // m_e = m_ref = 4
        ModalityView view(&store);
        GraphStats st = compute_graph_stats(seq, 0, view, 4, 8);
        CHECK(st.richness[0] == doctest::Approx(0.5));
        CHECK(st.richness[1] == doctest::Approx(0.0));
    }
    SUBCASE("fewer than 3 entities: betweenness all zeros") {
        SnapshotSequence seq;
        seq.snapshots.push_back(make_snapshot(0, 2, 1, 0, {{0, 0, 1}}));
        ModalityStore store(4, 4);
        ModalityView view(&store);
        GraphStats st = compute_graph_stats(seq, 0, view, 4, 8);
        CHECK(st.betweenness[0] == 0.0);
        CHECK(st.betweenness[1] == 0.0);
    }
}

TEST_CASE("brandes equals brute force on random graphs") {
    // brute force: enumerate all shortest paths via BFS counting per pair
    auto brute = [](const std::vector<std::vector<int>>& adj) {
        const int n = static_cast<int>(adj.size());
        std::vector<double> cb(static_cast<size_t>(n), 0.0);
        for (int s = 0; s < n; ++s) {
            // BFS from s: sigma counts, dist
            std::vector<int> dist(static_cast<size_t>(n), -1);
            std::vector<double> sigma(static_cast<size_t>(n), 0.0);
            std::vector<int> order;
            dist[static_cast<size_t>(s)] = 0;
            sigma[static_cast<size_t>(s)] = 1;
            std::vector<int> q{s};
            for (size_t qi = 0; qi < q.size(); ++qi) {
                int v = q[qi];
                order.push_back(v);
                for (int w : adj[static_cast<size_t>(v)]) {
                    if (dist[static_cast<size_t>(w)] < 0) {
                        dist[static_cast<size_t>(w)] = dist[static_cast<size_t>(v)] + 1;
                        q.push_back(w);
                    }
                }
            }
            for (int v : q)
                for (int w : adj[static_cast<size_t>(v)])
                    if (dist[static_cast<size_t>(w)] == dist[static_cast<size_t>(v)] + 1)
                        sigma[static_cast<size_t>(w)] += sigma[static_cast<size_t>(v)];
            // dependency accumulation per target t: count paths through v
            for (int t = 0; t < n; ++t) {
                if (t == s || dist[static_cast<size_t>(t)] < 0) continue;
                // sigma_st(v): paths s->v->t where dist adds up
                std::vector<double> sigma_to_t(static_cast<size_t>(n), 0.0);
                sigma_to_t[static_cast<size_t>(t)] = 1;
                // process nodes in decreasing distance
                std::vector<int> by_dist = order;
                std::sort(by_dist.begin(), by_dist.end(), [&](int a, int b) {
                    return dist[static_cast<size_t>(a)] > dist[static_cast<size_t>(b)];
                });
                for (int v : by_dist) {
                    for (int w : adj[static_cast<size_t>(v)])
                        if (dist[static_cast<size_t>(w)] == dist[static_cast<size_t>(v)] + 1)
                            sigma_to_t[static_cast<size_t>(v)] +=
                                sigma_to_t[static_cast<size_t>(w)];
                }
                for (int v = 0; v < n; ++v) {
                    if (v == s || v == t) continue;
                    if (dist[static_cast<size_t>(v)] < 0) continue;
                    cb[static_cast<size_t>(v)] += sigma[static_cast<size_t>(v)] *
                                                  sigma_to_t[static_cast<size_t>(v)] /
                                                  sigma[static_cast<size_t>(t)];
                }
            }
        }
        return cb;
    };

    std::mt19937_64 rng(2024);
    for (int trial = 0; trial < 6; ++trial) {
        const int n = 5 + static_cast<int>(rng() % 20);
        std::vector<std::set<int>> edges(static_cast<size_t>(n));
        const int m = n + static_cast<int>(rng() % (2 * n));
        for (int k = 0; k < m; ++k) {
            int a = static_cast<int>(rng() % n), b = static_cast<int>(rng() % n);
            if (a == b) continue;
            edges[static_cast<size_t>(a)].insert(b);
            edges[static_cast<size_t>(b)].insert(a);
        }
        std::vector<std::vector<int>> adj(static_cast<size_t>(n));
        for (int v = 0; v < n; ++v)
            adj[static_cast<size_t>(v)].assign(edges[static_cast<size_t>(v)].begin(),
                                               edges[static_cast<size_t>(v)].end());
        auto fast = brandes_betweenness(adj);
        auto slow = brute(adj);
        for (int v = 0; v < n; ++v)
            CHECK(fast[static_cast<size_t>(v)] ==
                  doctest::Approx(slow[static_cast<size_t>(v)]).epsilon(1e-9));
    }
}

TEST_CASE("stat ranges on a random sequence") {
    SnapshotSequence seq = toy_sequence();
    ModalityStore store(4, 4);
    store.set_visual(0, Tensor::gaussian({2, 4}, 1.0, 3));
    store.set_text(0, Tensor::gaussian({8, 4}, 1.0, 4));
    store.set_text(3, Tensor::gaussian({3, 4}, 1.0, 5));
    ModalityView view(&store);
    for (int i = 0; i < seq.T(); ++i) {
        GraphStats st = compute_graph_stats(seq, i, view, 4, 8);
        for (int64_t e = 0; e < st.entity_count(); ++e) {
            CHECK(st.norm_degree[static_cast<size_t>(e)] >= 0.0);
            CHECK(st.norm_degree[static_cast<size_t>(e)] <= 1.0);
            CHECK(st.betweenness[static_cast<size_t>(e)] >= 0.0);
            CHECK(st.betweenness[static_cast<size_t>(e)] <= 1.0);
            CHECK(st.richness[static_cast<size_t>(e)] >= 0.0);
            CHECK(st.richness[static_cast<size_t>(e)] <= 1.0);
        }
    }
}

TEST_CASE("modality store and view") {
    ModalityStore store(4, 3);
    store.set_visual(1, Tensor::matrix(2, 4, {1, 2, 3, 4, 5, 6, 7, 8}));
    CHECK(store.has_visual(1));
    CHECK(!store.has_text(1));
    CHECK(store.visual_pooled(1) == Tensor::vector({3, 4, 5, 6}));

    store.set_text(1, Tensor::matrix(1, 3, {1, 1, 1}));
    CHECK(store.dual_modality_entities(10) == std::vector<EntityId>{1});
    CHECK(store.dual_modality_entities(1).empty());

    ModalityView zeroed(&store, true, true);
    CHECK(zeroed.has_visual(1));  // presence unchanged
    CHECK(zeroed.visual_tokens(1) == Tensor::zeros({2, 4}));
    CHECK(zeroed.visual_pooled(1) == Tensor::zeros({4}));

    SUBCASE("non-finite data rejected") {
        Tensor bad = Tensor::zeros({1, 4});
        bad.data()[0] = std::numeric_limits<double>::infinity();
        CHECK_THROWS_AS(store.set_visual(2, bad), Fault);
    }
}
