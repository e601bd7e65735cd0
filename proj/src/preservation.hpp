#pragma once

#include <vector>

#include "backbone.hpp"
#include "graph.hpp"
#include "modality.hpp"
#include "stats.hpp"

namespace mrckg {

struct PreservationConfig {
    double lambda0 = 1.0;
    double delta = 0.5;
    double beta = 1.0;  // Smooth L1 transition point
};

// λ_e = λ0 * (f̃_nc + f̃_bc + δ·M(e))
double importance_weight(EntityId e, const GraphStats& stats, double lambda0, double delta);

// Immutable snapshot-(i-1) reference: the frozen model plus caches that agree
// with recomputation from it.
class FrozenReference {
public:
    static FrozenReference build(Model frozen_model, const ModalityView& view);

    const Model& model() const { return model_; }
    int64_t old_entity_count() const { return model_.entity_count(); }
    int64_t old_relation_count() const { return model_.relation_count(); }

    const EncodedGraphValues& encodings() const { return enc_; }
    const Tensor& anchors() const { return anchors_; }
    const Tensor& projected_anchors() const { return q_anchors_; }  // Q^(i-1)(a_e)
    const std::vector<EntityId>& dual_modality_old() const { return evt_; }
    const std::vector<double>& frozen_alignment() const { return cos_vw_; }

    // Triple scores under the frozen model, same op sequence as the live path.
    std::vector<double> scores(const std::vector<Triple>& triples) const;

private:
    Model model_;
    EncodedGraphValues enc_;
    Tensor anchors_;    // |E_old| x d
    Tensor q_anchors_;  // |E_old| x d_p
    std::vector<EntityId> evt_;
    std::vector<double> cos_vw_;
};

// CMKP terms. Current-side values are differentiable tape nodes; the frozen
// side enters as constants (equivalently stop-gradient).
Val entity_stability_loss(Tape& t, const EncodedGraph& cur, const FrozenReference& frozen,
                          const std::vector<double>& lambda_e, double beta);
Val modality_drift_loss(Tape& t, const EncodedGraph& cur, const FrozenReference& frozen);
Val alignment_consistency_loss(Tape& t, const EncodedGraph& cur, const FrozenReference& frozen,
                               double beta);
Val relation_embedding_loss(Tape& t, const ParamRefs& refs, const FrozenReference& frozen,
                            double beta);
// current_scores[k] scores old_relation_triples[k] under the live model.
Val relation_pattern_loss(Tape& t, const std::vector<Val>& current_scores,
                          const std::vector<double>& frozen_scores, double beta);
Val anchor_loss(Tape& t, const ParamRefs& refs, const EncodedGraph& cur,
                const FrozenReference& frozen, double beta);

struct CmkpTerms {
    Val str, mod, align, remb, rpat, anc;
    Val total;
};

}  // namespace mrckg
