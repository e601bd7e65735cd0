#pragma once

#include <cstdint>
#include <vector>

#include "backbone.hpp"
#include "graph.hpp"
#include "modality.hpp"
#include "preservation.hpp"

namespace mrckg {

struct ReplayConfig {
    double capacity_fraction = 0.2;  // B as a share of cumulative historical triples
    int64_t capacity_cap = 5000;
    int64_t capacity_override = 0;   // > 0 pins B directly
    double tau = 0.1;                // InfoNCE temperature
    double rho = 0.25;               // replay share of each training batch
};

struct ReplayItem {
    Triple triple;
    int provenance = 0;   // historical snapshot j
    double weight = 0.0;  // importance at sampling time
    double frozen_score = 0.0;
};

struct ReplayBuffer {
    std::vector<std::vector<ReplayItem>> slots;  // indexed by provenance j
    size_t size() const;
    std::vector<const ReplayItem*> all() const;
    bool empty() const { return size() == 0; }
};

// w = ((deg(h)+deg(t))/2) * (1 + 1[v_h] + 1[v_t] + 1[txt_h] + 1[txt_t])
double triple_importance(const Triple& t, const std::vector<int64_t>& degrees,
                         const ModalityView& view);

// Eq-exact ideal shares (j+1)/Σ(k+1)·B, floored with the remainder assigned to
// the most recent snapshots first. Sums to B, non-decreasing in j.
std::vector<int64_t> allocate_capacity(int i, int64_t B);

int64_t resolve_buffer_capacity(const SnapshotSequence& seq, int i, const ReplayConfig& cfg);

// Weighted reservoir sampling (key = u^(1/w)) without replacement per slot,
// from the non-bridge train triples of each historical snapshot.
ReplayBuffer fill_buffer(const SnapshotSequence& seq, int i, const ModalityView& view,
                         const ReplayConfig& cfg, uint64_t seed);

// InfoNCE over the unique entities of the replay batch; current encodings are
// queries, frozen encodings of the same set are keys.
Val replay_embedding_loss(Tape& t, const EncodedGraph& cur, const FrozenReference& frozen,
                          const std::vector<EntityId>& unique_entities, double tau);

// Mean Smooth L1 between live and frozen scores over all replay triples.
Val replay_score_loss(Tape& t, const std::vector<Val>& current_scores,
                      const std::vector<double>& frozen_scores, double beta);

std::vector<EntityId> unique_batch_entities(const std::vector<const ReplayItem*>& batch);

}  // namespace mrckg
