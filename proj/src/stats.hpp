#pragma once

#include <vector>

#include "graph.hpp"
#include "modality.hpp"

namespace mrckg {

// Per-entity statistics over the cumulative train graph at one snapshot.
// degree counts multigraph endpoints; the normalized centralities use the
// simple undirected graph (distinct neighbors, self-loops dropped).
struct GraphStats {
    std::vector<int64_t> degree;
    std::vector<double> norm_degree;   // deg_simple / (|E|-1), in [0,1]
    std::vector<double> betweenness;   // Brandes, pair-normalized to [0,1]
    std::vector<double> richness;      // M(e)
    int64_t entity_count() const { return static_cast<int64_t>(degree.size()); }
};

GraphStats compute_graph_stats(const SnapshotSequence& seq, int i, const ModalityView& view,
                               int m_ref, int n_ref, bool with_betweenness = true);

// Multigraph endpoint degrees over cumulative train triples at snapshot i.
std::vector<int64_t> cumulative_train_degrees(const SnapshotSequence& seq, int i);

// Exact Brandes on a simple undirected graph given as adjacency lists.
// Returns raw ordered-pair dependencies; normalization is the caller's.
std::vector<double> brandes_betweenness(const std::vector<std::vector<int>>& adj);

}  // namespace mrckg
