#include "preservation.hpp"

namespace mrckg {

double importance_weight(EntityId e, const GraphStats& stats, double lambda0, double delta) {
    if (e < 0 || e >= stats.entity_count())
        throw Fault("importance_weight: no stats for entity " + std::to_string(e));
    const size_t i = static_cast<size_t>(e);
    return lambda0 * (stats.norm_degree[i] + stats.betweenness[i] + delta * stats.richness[i]);
}

FrozenReference FrozenReference::build(Model frozen_model, const ModalityView& view) {
    FrozenReference fr;
    fr.model_ = std::move(frozen_model);
    fr.enc_ = encode_all_values(fr.model_, view);

    const int64_t n = fr.model_.entity_count();
    const ModelConfig& cfg = fr.model_.config;

    // Anchors: frozen encoder over a zeroed structural slot plus modality tokens.
    {
        Tape t;
        ParamRefs refs = register_params(t, fr.model_.params);
        std::vector<Val> rows;
        rows.reserve(static_cast<size_t>(n));
        for (EntityId e = 0; e < n; ++e)
            rows.push_back(encode_entity(t, refs, cfg, view, e, /*zero_structural=*/true).ent);
        Val anchors = t.concat_rows(rows);
        Val projected = t.matmul(anchors, refs.at("Q"));
        fr.anchors_ = t.value(anchors);
        fr.q_anchors_ = t.value(projected);
    }

    fr.evt_ = view.dual_modality_entities(n);
    fr.cos_vw_.reserve(fr.evt_.size());
    for (EntityId e : fr.evt_) {
        Tensor v = Tensor::zeros({cfg.d}), w = Tensor::zeros({cfg.d});
        for (int j = 0; j < cfg.d; ++j) {
            v.at(j) = fr.enc_.vbar.at(static_cast<int>(e), j);
            w.at(j) = fr.enc_.wbar.at(static_cast<int>(e), j);
        }
        fr.cos_vw_.push_back(cosine_value(v, w));
    }
    return fr;
}

std::vector<double> FrozenReference::scores(const std::vector<Triple>& triples) const {
    Tape t;
    ParamRefs refs = register_params(t, model_.params);
    EncodedGraph g;
    g.n = model_.entity_count();
    g.ent = t.constant(enc_.ent);
    g.vbar = t.constant(enc_.vbar);
    g.wbar = t.constant(enc_.wbar);
    std::vector<double> out;
    out.reserve(triples.size());
    for (const Triple& tr : triples)
        out.push_back(t.value(score_triple(t, refs, model_.config, g, tr)).item());
    return out;
}

namespace {

// First n_old rows of a live |E|×d matrix.
Val old_rows(Tape& t, Val matrix, int64_t n_old) {
    std::vector<int> idx(static_cast<size_t>(n_old));
    for (int64_t e = 0; e < n_old; ++e) idx[static_cast<size_t>(e)] = static_cast<int>(e);
    return t.rows(matrix, std::move(idx));
}

}  // namespace

Val entity_stability_loss(Tape& t, const EncodedGraph& cur, const FrozenReference& frozen,
                          const std::vector<double>& lambda_e, double beta) {
    const int64_t n_old = frozen.old_entity_count();
    if (n_old == 0) return t.constant(Tensor::scalar(0.0));
    if (static_cast<int64_t>(lambda_e.size()) != n_old)
        throw Fault("entity_stability_loss: weight count mismatch");
    return t.weighted_smooth_l1_rows(old_rows(t, cur.ent, n_old),
                                     t.constant(frozen.encodings().ent), lambda_e, beta);
}

Val modality_drift_loss(Tape& t, const EncodedGraph& cur, const FrozenReference& frozen) {
    const int64_t n_old = frozen.old_entity_count();
    if (n_old == 0) return t.constant(Tensor::scalar(0.0));
    Val v = t.sq_diff_sum(old_rows(t, cur.vbar, n_old), t.constant(frozen.encodings().vbar));
    Val w = t.sq_diff_sum(old_rows(t, cur.wbar, n_old), t.constant(frozen.encodings().wbar));
    return t.add(v, w);
}

Val alignment_consistency_loss(Tape& t, const EncodedGraph& cur, const FrozenReference& frozen,
                               double beta) {
    const auto& evt = frozen.dual_modality_old();
    if (evt.empty()) return t.constant(Tensor::scalar(0.0));
    std::vector<Val> terms;
    terms.reserve(evt.size());
    for (size_t k = 0; k < evt.size(); ++k) {
        const int e = static_cast<int>(evt[k]);
        Val cos_now = t.cosine(t.row(cur.vbar, e), t.row(cur.wbar, e));
        Val cos_ref = t.constant(Tensor::scalar(frozen.frozen_alignment()[k]));
        terms.push_back(t.smooth_l1(cos_now, cos_ref, beta));
    }
    return terms.size() == 1 ? terms[0] : t.add_n(terms);
}

Val relation_embedding_loss(Tape& t, const ParamRefs& refs, const FrozenReference& frozen,
                            double beta) {
    const int64_t n_old = frozen.old_relation_count();
    if (n_old == 0) return t.constant(Tensor::scalar(0.0));
    std::vector<double> w(static_cast<size_t>(n_old), 1.0 / static_cast<double>(n_old));
    return t.weighted_smooth_l1_rows(old_rows(t, refs.at("R"), n_old),
                                     t.constant(frozen.model().params.at("R")), std::move(w),
                                     beta);
}

Val relation_pattern_loss(Tape& t, const std::vector<Val>& current_scores,
                          const std::vector<double>& frozen_scores, double beta) {
    if (current_scores.empty()) return t.constant(Tensor::scalar(0.0));
    if (current_scores.size() != frozen_scores.size())
        throw Fault("relation_pattern_loss: score count mismatch");
    std::vector<Val> terms;
    terms.reserve(current_scores.size());
    for (size_t k = 0; k < current_scores.size(); ++k)
        terms.push_back(t.smooth_l1(current_scores[k],
                                    t.constant(Tensor::scalar(frozen_scores[k])), beta));
    Val sum = terms.size() == 1 ? terms[0] : t.add_n(terms);
    return t.scale(sum, 1.0 / static_cast<double>(terms.size()));
}

Val anchor_loss(Tape& t, const ParamRefs& refs, const EncodedGraph& cur,
                const FrozenReference& frozen, double beta) {
    const int64_t n_old = frozen.old_entity_count();
    if (n_old == 0) return t.constant(Tensor::scalar(0.0));
    Val projected = t.matmul(old_rows(t, cur.ent, n_old), refs.at("P"));
    std::vector<double> w(static_cast<size_t>(n_old), 1.0);
    return t.weighted_smooth_l1_rows(projected, t.constant(frozen.projected_anchors()),
                                     std::move(w), beta);
}

}  // namespace mrckg
