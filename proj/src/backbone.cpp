#include "backbone.hpp"

#include <cmath>

#include "rng.hpp"

namespace mrckg {

namespace {

void init_encoder(ParamStore& p, const ModelConfig& cfg, const std::string& prefix,
                  int n_layers, uint64_t seed) {
    const int d = cfg.d, f = cfg.resolved_ffn();
    for (int l = 0; l < n_layers; ++l) {
        const std::string pre = prefix + std::to_string(l) + ".";
        uint64_t s = derive_seed(seed, pre);
        p.put(pre + "wq", Tensor::gaussian({d, d}, cfg.init_std, derive_seed(s, 1)));
        p.put(pre + "wk", Tensor::gaussian({d, d}, cfg.init_std, derive_seed(s, 2)));
        p.put(pre + "wv", Tensor::gaussian({d, d}, cfg.init_std, derive_seed(s, 3)));
        p.put(pre + "wo", Tensor::gaussian({d, d}, cfg.init_std, derive_seed(s, 4)));
        p.put(pre + "ln1.g", Tensor::full({d}, 1.0));
        p.put(pre + "ln1.b", Tensor::zeros({d}));
        p.put(pre + "ffn1", Tensor::gaussian({d, f}, cfg.init_std, derive_seed(s, 5)));
        p.put(pre + "ffn2", Tensor::gaussian({f, d}, cfg.init_std, derive_seed(s, 6)));
        p.put(pre + "ln2.g", Tensor::full({d}, 1.0));
        p.put(pre + "ln2.b", Tensor::zeros({d}));
    }
    p.put(prefix + "lnf.g", Tensor::full({d}, 1.0));
    p.put(prefix + "lnf.b", Tensor::zeros({d}));
}

}  // namespace

Model::Model(ModelConfig cfg, int64_t n_entities, int64_t n_relations, uint64_t seed)
    : config(cfg) {
    if (cfg.d % cfg.heads != 0) throw Fault("model width must be divisible by head count");
    if (cfg.d_p > cfg.d) throw Fault("projection dim must not exceed width");
    const int d = cfg.d;
    params.put("S", Tensor::gaussian({static_cast<int>(n_entities), d}, cfg.init_std,
                                     derive_seed(seed, "S")));
    params.put("R", Tensor::gaussian({static_cast<int>(n_relations), d}, cfg.init_std,
                                     derive_seed(seed, "R")));
    params.put("ent", Tensor::gaussian({d}, cfg.init_std, derive_seed(seed, "ent")));
    params.put("W_v", Tensor::gaussian({cfg.d_v, d}, cfg.init_std, derive_seed(seed, "W_v")));
    params.put("W_w", Tensor::gaussian({cfg.d_w, d}, cfg.init_std, derive_seed(seed, "W_w")));
    init_encoder(params, cfg, "enc", cfg.layers, derive_seed(seed, "enc"));
    init_encoder(params, cfg, "ctx", 1, derive_seed(seed, "ctx"));
    params.put("core", Tensor::gaussian({d, d, d}, cfg.init_std, derive_seed(seed, "core")));
    params.put("P", Tensor::gaussian({d, cfg.d_p}, cfg.init_std, derive_seed(seed, "P")));
    params.put("Q", Tensor::gaussian({d, cfg.d_p}, cfg.init_std, derive_seed(seed, "Q")));
}

void Model::register_new_entities(int64_t new_entities, int64_t new_relations, uint64_t seed) {
    if (new_entities < 0 || new_relations < 0)
        throw Fault("register_new_entities: negative counts");
    auto grow = [&](const std::string& name, int64_t add, uint64_t s) {
        if (add == 0) return;
        const Tensor& old = params.at(name);
        const int rows = old.dim(0), d = old.dim(1);
        Tensor fresh = Tensor::gaussian({static_cast<int>(add), d}, config.init_std, s);
        Tensor grown = Tensor::zeros({rows + static_cast<int>(add), d});
        for (int i = 0; i < rows; ++i)
            for (int j = 0; j < d; ++j) grown.at(i, j) = old.at(i, j);
        for (int i = 0; i < static_cast<int>(add); ++i)
            for (int j = 0; j < d; ++j) grown.at(rows + i, j) = fresh.at(i, j);
        params.put(name, std::move(grown));
    };
    grow("S", new_entities, derive_seed(seed, "S.new"));
    grow("R", new_relations, derive_seed(seed, "R.new"));
}

FreezeMask Model::freeze_masks(int stage, const OldEntitySet& e_old, int64_t r_old_count) const {
    if (stage != 1 && stage != 2) throw Fault("freeze_masks: stage must be 1 or 2");
    FreezeMask mask;
    if (stage == 2) return mask;
    if (e_old.count > 0) {
        std::vector<uint8_t> m(static_cast<size_t>(entity_count()), 0);
        for (int64_t e = 0; e < e_old.count && e < entity_count(); ++e)
            m[static_cast<size_t>(e)] = 1;
        mask.rows["S"] = std::move(m);
    }
    if (r_old_count > 0) {
        std::vector<uint8_t> m(static_cast<size_t>(relation_count()), 0);
        for (int64_t r = 0; r < r_old_count && r < relation_count(); ++r)
            m[static_cast<size_t>(r)] = 1;
        mask.rows["R"] = std::move(m);
    }
    return mask;
}

EncoderRefs encoder_refs(const ParamRefs& refs, const std::string& prefix, int n_layers) {
    EncoderRefs enc;
    for (int l = 0; l < n_layers; ++l) {
        const std::string pre = prefix + std::to_string(l) + ".";
        EncoderRefs::Layer lr;
        lr.wq = refs.at(pre + "wq");
        lr.wk = refs.at(pre + "wk");
        lr.wv = refs.at(pre + "wv");
        lr.wo = refs.at(pre + "wo");
        lr.ln1g = refs.at(pre + "ln1.g");
        lr.ln1b = refs.at(pre + "ln1.b");
        lr.ffn1 = refs.at(pre + "ffn1");
        lr.ffn2 = refs.at(pre + "ffn2");
        lr.ln2g = refs.at(pre + "ln2.g");
        lr.ln2b = refs.at(pre + "ln2.b");
        enc.layers.push_back(lr);
    }
    enc.lnfg = refs.at(prefix + "lnf.g");
    enc.lnfb = refs.at(prefix + "lnf.b");
    return enc;
}

static Val attention(Tape& t, const EncoderRefs::Layer& lr, Val x, int heads) {
    const int d = t.value(x).dim(1);
    const int dh = d / heads;
    Val q = t.matmul(x, lr.wq);
    Val k = t.matmul(x, lr.wk);
    Val v = t.matmul(x, lr.wv);
    std::vector<Val> outs;
    for (int h = 0; h < heads; ++h) {
        Val qh = t.cols(q, h * dh, (h + 1) * dh);
        Val kh = t.cols(k, h * dh, (h + 1) * dh);
        Val vh = t.cols(v, h * dh, (h + 1) * dh);
        Val scores = t.scale(t.matmul_nt(qh, kh), 1.0 / std::sqrt(static_cast<double>(dh)));
        outs.push_back(t.matmul(t.softmax_rows(scores), vh));
    }
    return t.matmul(outs.size() == 1 ? outs[0] : t.concat_cols(outs), lr.wo);
}

Val transformer_forward(Tape& t, const EncoderRefs& enc, Val x, int heads) {
    for (const auto& lr : enc.layers) {
        x = t.add(x, attention(t, lr, t.layer_norm(x, lr.ln1g, lr.ln1b), heads));
        Val ff = t.matmul(t.gelu(t.matmul(t.layer_norm(x, lr.ln2g, lr.ln2b), lr.ffn1)), lr.ffn2);
        x = t.add(x, ff);
    }
    return t.layer_norm(x, enc.lnfg, enc.lnfb);
}

EncodedEntity encode_entity(Tape& t, const ParamRefs& refs, const ModelConfig& cfg,
                            const ModalityView& view, EntityId e, bool zero_structural) {
    Val S = refs.at("S");
    if (e < 0 || e >= t.value(S).dim(0))
        throw Fault("encode_entity: unregistered entity " + std::to_string(e));

    std::vector<Val> parts;
    parts.push_back(refs.at("ent"));
    parts.push_back(zero_structural ? t.constant(Tensor::zeros({cfg.d})) : t.row(S, static_cast<int>(e)));

    EncodedEntity out;
    if (view.has_visual(e)) {
        Val proj = t.matmul(t.constant(view.visual_tokens(e)), refs.at("W_v"));
        out.vbar = t.mean_rows(proj);
        parts.push_back(proj);
    } else {
        out.vbar = t.constant(Tensor::zeros({cfg.d}));
    }
    if (view.has_text(e)) {
        Val proj = t.matmul(t.constant(view.text_tokens(e)), refs.at("W_w"));
        out.wbar = t.mean_rows(proj);
        parts.push_back(proj);
    } else {
        out.wbar = t.constant(Tensor::zeros({cfg.d}));
    }

    EncoderRefs enc = encoder_refs(refs, "enc", cfg.layers);
    Val y = transformer_forward(t, enc, t.concat_rows(parts), cfg.heads);
    out.ent = t.row(y, 0);
    return out;
}

EncodedGraph encode_all_entities(Tape& t, const ParamRefs& refs, const ModelConfig& cfg,
                                 const ModalityView& view, int64_t n_entities) {
    std::vector<Val> ents, vbars, wbars;
    ents.reserve(static_cast<size_t>(n_entities));
    for (EntityId e = 0; e < n_entities; ++e) {
        EncodedEntity enc = encode_entity(t, refs, cfg, view, e);
        ents.push_back(enc.ent);
        vbars.push_back(enc.vbar);
        wbars.push_back(enc.wbar);
    }
    EncodedGraph g;
    g.n = n_entities;
    g.ent = t.concat_rows(ents);
    g.vbar = t.concat_rows(vbars);
    g.wbar = t.concat_rows(wbars);
    return g;
}

RefinedPair contextual_refine(Tape& t, const ParamRefs& refs, const ModelConfig& cfg,
                              Val entity_vec, Val relation_vec) {
    EncoderRefs ctx = encoder_refs(refs, "ctx", 1);
    Val y = transformer_forward(t, ctx, t.concat_rows({entity_vec, relation_vec}), cfg.heads);
    return {t.row(y, 0), t.row(y, 1)};
}

Val tail_query_vector(Tape& t, const ParamRefs& refs, const ModelConfig& cfg, Val e_h, Val rel) {
    RefinedPair p = contextual_refine(t, refs, cfg, e_h, rel);
    return t.tucker_query_tail(refs.at("core"), p.first, p.second);
}

Val head_query_vector(Tape& t, const ParamRefs& refs, const ModelConfig& cfg, Val e_t, Val rel) {
    RefinedPair p = contextual_refine(t, refs, cfg, e_t, rel);
    return t.tucker_query_head(refs.at("core"), p.second, p.first);
}

static void check_triple_ids(const EncodedGraph& g, const Tensor& rel_table, EntityId h,
                             RelationId r, EntityId t) {
    if (h < 0 || h >= g.n || t < 0 || t >= g.n)
        throw Fault("score: entity id out of range");
    if (r < 0 || r >= rel_table.dim(0)) throw Fault("score: relation id out of range");
}

Val score_triple(Tape& t, const ParamRefs& refs, const ModelConfig& cfg, const EncodedGraph& g,
                 const Triple& triple) {
    check_triple_ids(g, t.value(refs.at("R")), triple.head, triple.relation, triple.tail);
    Val q = tail_query_vector(t, refs, cfg, t.row(g.ent, static_cast<int>(triple.head)),
                              t.row(refs.at("R"), static_cast<int>(triple.relation)));
    return t.dot(t.row(g.ent, static_cast<int>(triple.tail)), q);
}

Val score_all_tails(Tape& t, const ParamRefs& refs, const ModelConfig& cfg,
                    const EncodedGraph& g, EntityId h, RelationId r) {
    check_triple_ids(g, t.value(refs.at("R")), h, r, 0);
    Val q = tail_query_vector(t, refs, cfg, t.row(g.ent, static_cast<int>(h)),
                              t.row(refs.at("R"), static_cast<int>(r)));
    return t.matvec(g.ent, q);
}

Val score_all_heads(Tape& t, const ParamRefs& refs, const ModelConfig& cfg,
                    const EncodedGraph& g, RelationId r, EntityId tail) {
    check_triple_ids(g, t.value(refs.at("R")), 0, r, tail);
    Val q = head_query_vector(t, refs, cfg, t.row(g.ent, static_cast<int>(tail)),
                              t.row(refs.at("R"), static_cast<int>(r)));
    return t.matvec(g.ent, q);
}

EncodedGraphValues encode_all_values(const Model& model, const ModalityView& view) {
    Tape t;
    ParamRefs refs = register_params(t, model.params);
    EncodedGraph g = encode_all_entities(t, refs, model.config, view, model.entity_count());
    return {t.value(g.ent), t.value(g.vbar), t.value(g.wbar)};
}

}  // namespace mrckg
