#pragma once

#include <array>
#include <string>
#include <vector>

#include "graph.hpp"
#include "modality.hpp"

namespace mrckg {

struct BaseKG {
    std::vector<Triple> triples;  // deduplicated, sorted
    int64_t entity_count = 0;
    int64_t relation_count = 0;

    // Faults unless entity/relation ids form dense 0..n-1 ranges.
    static BaseKG from_triples(std::vector<Triple> triples);
};

enum class Strategy { entity, higher, equal };
Strategy strategy_from_string(const std::string& s);
std::string strategy_name(Strategy s);

struct BuildConfig {
    int T = 5;
    Strategy strategy = Strategy::entity;
    double bridge_ratio = 0.15;
    std::array<int, 3> split_ratio{3, 1, 1};
    uint64_t seed = 0;
    // Cumulative entity-growth fractions (entity strategy); Table-1 MKG-W ratios.
    std::vector<double> entity_fractions{0.35, 0.66, 0.82, 0.92, 1.0};
    // Per-snapshot new-triple shares (higher strategy), normalized MKG-W counts.
    std::vector<double> triple_fractions{0.075, 0.13, 0.175, 0.26, 0.36};
    // Synthetic feature provisioning.
    bool synth = false;
    int d_v = 16, d_w = 16;
    int m_tokens = 4, n_tokens = 8;
    double coverage_visual = 0.9, coverage_text = 0.9;
    int community_block = 25;
    double community_noise = 0.35;
};

// Per-snapshot new triples and cumulative counts, with ids relabeled to
// arrival order (entities) and first-appearance order (relations).
struct PartitionResult {
    std::vector<std::vector<Triple>> delta_triples;
    std::vector<int64_t> entity_counts;
    std::vector<int64_t> relation_counts;
    std::vector<EntityId> entity_map;      // bench id -> base id
    std::vector<RelationId> relation_map;  // bench id -> base id
};

// Seeded BFS from a random high-degree root; unvisited components continue
// from the highest-degree remaining vertex.
std::vector<EntityId> bfs_arrival_order(const BaseKG& base, uint64_t seed);

PartitionResult partition_entity(const BaseKG& base, const std::vector<double>& growth_fractions,
                                 uint64_t seed);
PartitionResult partition_higher(const BaseKG& base, const std::vector<double>& triple_fractions,
                                 uint64_t seed);
PartitionResult partition_equal(const BaseKG& base, int T, uint64_t seed);

// Duplicates historical triples incident to the new entities' old neighbors
// into snapshot i's pool (train-only). Returns per-snapshot bridge lists.
std::vector<std::vector<Triple>> inject_bridges(const PartitionResult& part, double bridge_ratio,
                                                uint64_t seed, std::vector<std::string>* warnings);

struct SplitResult {
    std::vector<Triple> train, valid, test;
};

// Seeded shuffle + ratio split of the fresh triples; bridges append to train;
// valid/test relations missing from the cumulative train are swapped in.
SplitResult split_snapshot(const std::vector<Triple>& fresh, const std::vector<Triple>& bridges,
                           const std::array<int, 3>& ratio, uint64_t seed,
                           std::vector<int64_t>& cum_train_rel_count,
                           std::vector<std::string>* warnings);

// Community-correlated Gaussian tokens; entities in the same contiguous
// id block share a mean. Pooled vectors are token means.
ModalityStore synth_features(int64_t n_entities, const BuildConfig& cfg, uint64_t seed);

// Remaps a base-id-keyed store onto bench ids.
ModalityStore relabel_store(const ModalityStore& base_store,
                            const std::vector<EntityId>& entity_map);

struct BuildResult {
    SnapshotSequence seq;
    ModalityStore store;
    std::vector<EntityId> entity_map;
    std::vector<RelationId> relation_map;
    std::vector<std::string> warnings;
};

// base_store may be null (synth or no features).
BuildResult build_sequence(const BaseKG& base, const BuildConfig& cfg,
                           const ModalityStore* base_store = nullptr);

}  // namespace mrckg
