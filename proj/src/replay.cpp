#include "replay.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "rng.hpp"

namespace mrckg {

size_t ReplayBuffer::size() const {
    size_t n = 0;
    for (const auto& s : slots) n += s.size();
    return n;
}

std::vector<const ReplayItem*> ReplayBuffer::all() const {
    std::vector<const ReplayItem*> out;
    out.reserve(size());
    for (const auto& s : slots)
        for (const auto& it : s) out.push_back(&it);
    return out;
}

double triple_importance(const Triple& t, const std::vector<int64_t>& degrees,
                         const ModalityView& view) {
    const auto deg = [&](EntityId e) {
        if (e < 0 || e >= static_cast<EntityId>(degrees.size()))
            throw Fault("triple_importance: degree missing for entity " + std::to_string(e));
        return static_cast<double>(degrees[static_cast<size_t>(e)]);
    };
    double indicators = 1.0;
    if (view.has_visual(t.head)) indicators += 1.0;
    if (view.has_visual(t.tail)) indicators += 1.0;
    if (view.has_text(t.head)) indicators += 1.0;
    if (view.has_text(t.tail)) indicators += 1.0;
    return 0.5 * (deg(t.head) + deg(t.tail)) * indicators;
}

std::vector<int64_t> allocate_capacity(int i, int64_t B) {
    if (i < 0 || B < 0) throw Fault("allocate_capacity: bad arguments");
    if (i == 0) return {};
    const double denom = static_cast<double>(i) * static_cast<double>(i + 1) / 2.0;
    std::vector<int64_t> alloc(static_cast<size_t>(i), 0);
    int64_t assigned = 0;
    for (int j = 0; j < i; ++j) {
        const double ideal = static_cast<double>(j + 1) * static_cast<double>(B) / denom;
        alloc[static_cast<size_t>(j)] = static_cast<int64_t>(std::floor(ideal));
        assigned += alloc[static_cast<size_t>(j)];
    }
    for (int j = i - 1; assigned < B; --j) {
        alloc[static_cast<size_t>(j)] += 1;
        assigned += 1;
        if (j == 0) j = i;  // wrap, though remainder < i makes this unreachable
    }
    return alloc;
}

int64_t resolve_buffer_capacity(const SnapshotSequence& seq, int i, const ReplayConfig& cfg) {
    if (cfg.capacity_override > 0) return cfg.capacity_override;
    int64_t hist = 0;
    for (int j = 0; j < i; ++j) hist += static_cast<int64_t>(seq.at(j).delta_triples.size());
    const int64_t b = static_cast<int64_t>(std::floor(cfg.capacity_fraction * hist));
    return std::min(b, cfg.capacity_cap);
}

ReplayBuffer fill_buffer(const SnapshotSequence& seq, int i, const ModalityView& view,
                         const ReplayConfig& cfg, uint64_t seed) {
    if (i < 1) throw Fault("fill_buffer: need at least one historical snapshot");
    const int64_t B = resolve_buffer_capacity(seq, i, cfg);
    std::vector<int64_t> alloc = allocate_capacity(i, B);
    ReplayBuffer buf;
    buf.slots.resize(static_cast<size_t>(i));
    for (int j = 0; j < i; ++j) {
        const Snapshot& s = seq.at(j);
        TripleSet bridges(s.bridge_triples.begin(), s.bridge_triples.end());
        std::vector<Triple> pool;
        for (const Triple& t : s.train)
            if (!bridges.count(t)) pool.push_back(t);
        std::sort(pool.begin(), pool.end());
        pool.erase(std::unique(pool.begin(), pool.end()), pool.end());

        std::vector<int64_t> degrees = cumulative_train_degrees(seq, j);
        const int64_t want = std::min<int64_t>(alloc[static_cast<size_t>(j)],
                                               static_cast<int64_t>(pool.size()));
        if (want == 0) continue;

        // A-Res weighted reservoir: take the `want` largest u^(1/w) keys.
        auto rng = make_rng(derive_seed(seed, "replay-slot", static_cast<uint64_t>(j)));
        std::uniform_real_distribution<double> uni(0.0, 1.0);
        struct Keyed {
            double key;
            size_t idx;
            double weight;
        };
        std::vector<Keyed> keyed;
        keyed.reserve(pool.size());
        for (size_t k = 0; k < pool.size(); ++k) {
            const double w = triple_importance(pool[k], degrees, view);
            const double u = uni(rng);
            const double key = w > 0.0 ? std::pow(u, 1.0 / w) : 0.0;
            keyed.push_back({key, k, w});
        }
        std::sort(keyed.begin(), keyed.end(), [](const Keyed& a, const Keyed& b) {
            if (a.key != b.key) return a.key > b.key;
            return a.idx < b.idx;
        });
        auto& slot = buf.slots[static_cast<size_t>(j)];
        for (int64_t k = 0; k < want; ++k) {
            const Keyed& kk = keyed[static_cast<size_t>(k)];
            slot.push_back({pool[kk.idx], j, kk.weight, 0.0});
        }
        std::sort(slot.begin(), slot.end(),
                  [](const ReplayItem& a, const ReplayItem& b) { return a.triple < b.triple; });
    }
    return buf;
}

Val replay_embedding_loss(Tape& t, const EncodedGraph& cur, const FrozenReference& frozen,
                          const std::vector<EntityId>& unique_entities, double tau) {
    if (unique_entities.empty()) return t.constant(Tensor::scalar(0.0));
    if (tau <= 0.0) throw Fault("replay_embedding_loss: tau must be positive");
    const int d = frozen.encodings().ent.dim(1);
    const int64_t n_old = frozen.old_entity_count();

    // Keys: frozen encodings of U, L2-normalized so a dot realizes cosine.
    const size_t u = unique_entities.size();
    Tensor keys = Tensor::zeros({static_cast<int>(u), d});
    for (size_t k = 0; k < u; ++k) {
        const EntityId e = unique_entities[k];
        if (e < 0 || e >= n_old)
            throw Fault("replay_embedding_loss: entity outside E_{i-1}: " + std::to_string(e));
        double norm = 0.0;
        for (int j = 0; j < d; ++j) {
            const double x = frozen.encodings().ent.at(static_cast<int>(e), j);
            norm += x * x;
        }
        norm = std::sqrt(norm);
        if (norm >= 1e-12)
            for (int j = 0; j < d; ++j)
                keys.at(static_cast<int>(k), j) =
                    frozen.encodings().ent.at(static_cast<int>(e), j) / norm;
    }
    Val key_mat = t.constant(std::move(keys));

    std::vector<Val> terms;
    terms.reserve(u);
    for (size_t k = 0; k < u; ++k) {
        Val q = t.l2_normalize(t.row(cur.ent, static_cast<int>(unique_entities[k])));
        Val logits = t.scale(t.matvec(key_mat, q), 1.0 / tau);
        terms.push_back(t.softmax_cross_entropy(logits, static_cast<int>(k)));
    }
    Val sum = terms.size() == 1 ? terms[0] : t.add_n(terms);
    return t.scale(sum, 1.0 / static_cast<double>(u));
}

Val replay_score_loss(Tape& t, const std::vector<Val>& current_scores,
                      const std::vector<double>& frozen_scores, double beta) {
    if (current_scores.empty()) return t.constant(Tensor::scalar(0.0));
    if (current_scores.size() != frozen_scores.size())
        throw Fault("replay_score_loss: score count mismatch");
    std::vector<Val> terms;
    terms.reserve(current_scores.size());
    for (size_t k = 0; k < current_scores.size(); ++k)
        terms.push_back(t.smooth_l1(current_scores[k],
                                    t.constant(Tensor::scalar(frozen_scores[k])), beta));
    Val sum = terms.size() == 1 ? terms[0] : t.add_n(terms);
    return t.scale(sum, 1.0 / static_cast<double>(terms.size()));
}

std::vector<EntityId> unique_batch_entities(const std::vector<const ReplayItem*>& batch) {
    std::vector<EntityId> out;
    for (const ReplayItem* it : batch) {
        out.push_back(it->triple.head);
        out.push_back(it->triple.tail);
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

}  // namespace mrckg
