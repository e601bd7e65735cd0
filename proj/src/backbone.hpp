#pragma once

#include <string>

#include "graph.hpp"
#include "modality.hpp"
#include "optim.hpp"
#include "tape.hpp"

namespace mrckg {

struct ModelConfig {
    int d = 32;   // shared width
    int d_v = 16; // raw visual feature dim
    int d_w = 16; // raw text feature dim
    int d_p = 16; // projection head dim
    int layers = 1;
    int heads = 2;
    int ffn_hidden = 0;  // 0 -> 2*d
    double init_std = 0.02;

    int resolved_ffn() const { return ffn_hidden > 0 ? ffn_hidden : 2 * d; }
};

// Structural/relation embeddings, modality projections, the entity and
// contextual encoders, the TuckER core, and the projection heads P and Q.
class Model {
public:
    Model() = default;
    Model(ModelConfig cfg, int64_t n_entities, int64_t n_relations, uint64_t seed);

    int64_t entity_count() const { return params.at("S").dim(0); }
    int64_t relation_count() const { return params.at("R").dim(0); }

    // Appends seeded-Gaussian rows; existing rows and shared parameters stay
    // bit-identical.
    void register_new_entities(int64_t new_entities, int64_t new_relations, uint64_t seed);

    // Stage 1 freezes old structural/relation rows; stage 2 is empty.
    FreezeMask freeze_masks(int stage, const OldEntitySet& e_old, int64_t r_old_count) const;

    ModelConfig config;
    ParamStore params;
};

// Tape handles for one encoder stack.
struct EncoderRefs {
    struct Layer {
        Val wq, wk, wv, wo, ln1g, ln1b, ffn1, ffn2, ln2g, ln2b;
    };
    std::vector<Layer> layers;
    Val lnfg, lnfb;
};

EncoderRefs encoder_refs(const ParamRefs& refs, const std::string& prefix, int n_layers);
Val transformer_forward(Tape& tape, const EncoderRefs& enc, Val x, int heads);

struct EncodedEntity {
    Val ent;   // output at the [ENT] position
    Val vbar;  // mean of the projected visual block (zero vector if absent)
    Val wbar;  // mean of the projected text block
};

// Builds [ENT] ⊕ s_e ⊕ v-tokens·W_v ⊕ w-tokens·W_w and encodes it. Absent
// modalities contribute no tokens. zero_structural replaces s_e with zeros
// (anchor construction).
EncodedEntity encode_entity(Tape& tape, const ParamRefs& refs, const ModelConfig& cfg,
                            const ModalityView& view, EntityId e, bool zero_structural = false);

struct EncodedGraph {
    Val ent;   // |E| x d
    Val vbar;  // |E| x d, zero rows where absent
    Val wbar;  // |E| x d
    int64_t n = 0;
};

EncodedGraph encode_all_entities(Tape& tape, const ParamRefs& refs, const ModelConfig& cfg,
                                 const ModalityView& view, int64_t n_entities);

// Contextual refinement of (entity, relation) as a two-token sequence.
struct RefinedPair {
    Val first, second;
};
RefinedPair contextual_refine(Tape& tape, const ParamRefs& refs, const ModelConfig& cfg,
                              Val entity_vec, Val relation_vec);

// TuckER query vector for (h, r, ?): scores(t) = dot(q_tail, e_t).
Val tail_query_vector(Tape& tape, const ParamRefs& refs, const ModelConfig& cfg, Val e_h,
                      Val rel);
// TuckER query vector for (?, r, t): scores(h) = dot(q_head, e_h).
Val head_query_vector(Tape& tape, const ParamRefs& refs, const ModelConfig& cfg, Val e_t,
                      Val rel);

Val score_triple(Tape& tape, const ParamRefs& refs, const ModelConfig& cfg,
                 const EncodedGraph& g, const Triple& t);
Val score_all_tails(Tape& tape, const ParamRefs& refs, const ModelConfig& cfg,
                    const EncodedGraph& g, EntityId h, RelationId r);
Val score_all_heads(Tape& tape, const ParamRefs& refs, const ModelConfig& cfg,
                    const EncodedGraph& g, RelationId r, EntityId t);

// Value-level (no gradient) encodings of all entities under fixed params.
struct EncodedGraphValues {
    Tensor ent, vbar, wbar;
};
EncodedGraphValues encode_all_values(const Model& model, const ModalityView& view);

}  // namespace mrckg
