#include "stats.hpp"

#include <algorithm>
#include <queue>
#include <unordered_set>

namespace mrckg {

std::vector<int64_t> cumulative_train_degrees(const SnapshotSequence& seq, int i) {
    const int64_t n = seq.at(i).entity_count;
    std::vector<int64_t> deg(static_cast<size_t>(n), 0);
    for (const Triple& t : cumulative_train(seq, i)) {
        deg[static_cast<size_t>(t.head)] += 1;
        deg[static_cast<size_t>(t.tail)] += 1;
    }
    return deg;
}

std::vector<double> brandes_betweenness(const std::vector<std::vector<int>>& adj) {
    const int n = static_cast<int>(adj.size());
    std::vector<double> cb(static_cast<size_t>(n), 0.0);
    std::vector<int> stack_order;
    std::vector<std::vector<int>> pred(static_cast<size_t>(n));
    std::vector<int64_t> sigma(static_cast<size_t>(n));
    std::vector<int> dist(static_cast<size_t>(n));
    std::vector<double> delta(static_cast<size_t>(n));
    for (int s = 0; s < n; ++s) {
        stack_order.clear();
        for (int v = 0; v < n; ++v) {
            pred[static_cast<size_t>(v)].clear();
            sigma[static_cast<size_t>(v)] = 0;
            dist[static_cast<size_t>(v)] = -1;
            delta[static_cast<size_t>(v)] = 0.0;
        }
        sigma[static_cast<size_t>(s)] = 1;
        dist[static_cast<size_t>(s)] = 0;
        std::queue<int> q;
        q.push(s);
        while (!q.empty()) {
            const int v = q.front();
            q.pop();
            stack_order.push_back(v);
            for (int w : adj[static_cast<size_t>(v)]) {
                if (dist[static_cast<size_t>(w)] < 0) {
                    dist[static_cast<size_t>(w)] = dist[static_cast<size_t>(v)] + 1;
                    q.push(w);
                }
                if (dist[static_cast<size_t>(w)] == dist[static_cast<size_t>(v)] + 1) {
                    sigma[static_cast<size_t>(w)] += sigma[static_cast<size_t>(v)];
                    pred[static_cast<size_t>(w)].push_back(v);
                }
            }
        }
        for (auto it = stack_order.rbegin(); it != stack_order.rend(); ++it) {
            const int w = *it;
            for (int v : pred[static_cast<size_t>(w)]) {
                delta[static_cast<size_t>(v)] +=
                    (static_cast<double>(sigma[static_cast<size_t>(v)]) /
                     static_cast<double>(sigma[static_cast<size_t>(w)])) *
                    (1.0 + delta[static_cast<size_t>(w)]);
            }
            if (w != s) cb[static_cast<size_t>(w)] += delta[static_cast<size_t>(w)];
        }
    }
    return cb;
}

GraphStats compute_graph_stats(const SnapshotSequence& seq, int i, const ModalityView& view,
                               int m_ref, int n_ref, bool with_betweenness) {
    const int64_t n = seq.at(i).entity_count;
    GraphStats out;
    out.degree = cumulative_train_degrees(seq, i);
    out.norm_degree.assign(static_cast<size_t>(n), 0.0);
    out.betweenness.assign(static_cast<size_t>(n), 0.0);
    out.richness.assign(static_cast<size_t>(n), 0.0);

    // Simple undirected graph: distinct neighbors, self-loops dropped.
    std::vector<std::unordered_set<int>> nbr(static_cast<size_t>(n));
    for (const Triple& t : cumulative_train(seq, i)) {
        if (t.head == t.tail) continue;
        nbr[static_cast<size_t>(t.head)].insert(static_cast<int>(t.tail));
        nbr[static_cast<size_t>(t.tail)].insert(static_cast<int>(t.head));
    }
    if (n > 1) {
        for (int64_t e = 0; e < n; ++e)
            out.norm_degree[static_cast<size_t>(e)] =
                static_cast<double>(nbr[static_cast<size_t>(e)].size()) /
                static_cast<double>(n - 1);
    }

    if (with_betweenness && n >= 3) {
        std::vector<std::vector<int>> adj(static_cast<size_t>(n));
        for (int64_t e = 0; e < n; ++e) {
            adj[static_cast<size_t>(e)].assign(nbr[static_cast<size_t>(e)].begin(),
                                               nbr[static_cast<size_t>(e)].end());
            std::sort(adj[static_cast<size_t>(e)].begin(), adj[static_cast<size_t>(e)].end());
        }
        std::vector<double> raw = brandes_betweenness(adj);
        // raw counts ordered pairs; halve for unordered, then divide by the
        // (|E|-1)(|E|-2)/2 pair count.
        const double norm = static_cast<double>(n - 1) * static_cast<double>(n - 2);
        for (int64_t e = 0; e < n; ++e)
            out.betweenness[static_cast<size_t>(e)] = raw[static_cast<size_t>(e)] / norm;
    }

    for (int64_t e = 0; e < n; ++e)
        out.richness[static_cast<size_t>(e)] = modality_richness(view, e, m_ref, n_ref);
    return out;
}

}  // namespace mrckg
