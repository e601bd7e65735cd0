#include "selfcheck.hpp"

#include <algorithm>

#include "rng.hpp"

namespace mrckg {

namespace {

std::vector<Triple> random_base_triples(int entities, int relations, int count, uint64_t seed) {
    auto rng = make_rng(seed);
    std::uniform_int_distribution<EntityId> ent(0, entities - 1);
    std::uniform_int_distribution<RelationId> rel(0, relations - 1);
    TripleSet seen;
    std::vector<Triple> out;
    // ensure the graph is connected enough for a BFS partition
    for (EntityId e = 1; e < entities; ++e) {
        Triple t{ent(rng) % e, rel(rng), e};
        if (seen.insert(t).second) out.push_back(t);
    }
    while (static_cast<int>(out.size()) < count) {
        Triple t{ent(rng), rel(rng), ent(rng)};
        if (t.head == t.tail) continue;
        if (seen.insert(t).second) out.push_back(t);
    }
    return out;
}

}  // namespace

ToyWorld make_toy_world(uint64_t seed, int entities, int d) {
    BuildConfig bcfg;
    bcfg.T = 2;
    bcfg.strategy = Strategy::equal;
    bcfg.bridge_ratio = 0.15;
    bcfg.seed = derive_seed(seed, "toy-bench");
    bcfg.synth = true;
    bcfg.d_v = 6;
    bcfg.d_w = 6;
    bcfg.m_tokens = 2;
    bcfg.n_tokens = 3;
    bcfg.coverage_visual = 0.8;
    bcfg.coverage_text = 0.8;
    bcfg.community_block = 4;

    BaseKG base = BaseKG::from_triples(
        random_base_triples(entities, 3, entities * 3, derive_seed(seed, "toy-base")));
    BuildResult built = build_sequence(base, bcfg);

    ToyWorld w;
    w.seq = std::move(built.seq);
    w.store = std::move(built.store);
    w.mcfg.d = d;
    w.mcfg.d_v = bcfg.d_v;
    w.mcfg.d_w = bcfg.d_w;
    w.mcfg.d_p = d / 2;
    w.mcfg.layers = 1;
    w.mcfg.heads = 2;

    const Snapshot& s0 = w.seq.at(0);
    const Snapshot& s1 = w.seq.at(1);
    ModalityView view(&w.store);

    w.frozen_model = Model(w.mcfg, s0.entity_count, s0.relation_count, derive_seed(seed, "m0"));
    w.current = w.frozen_model;
    w.current.register_new_entities(s1.entity_count - s0.entity_count,
                                    s1.relation_count - s0.relation_count,
                                    derive_seed(seed, "grow"));
    // push the live model away from the frozen one
    uint64_t k = 0;
    for (const auto& name : w.current.params.names()) {
        Tensor& t = w.current.params.at(name);
        Tensor noise = Tensor::gaussian(t.shape(), 0.05, derive_seed(seed, "perturb", k++));
        for (size_t x = 0; x < t.size(); ++x) t.data()[x] += noise.data()[x];
    }

    w.frozen = FrozenReference::build(w.frozen_model, view);

    ReplayConfig rcfg;
    rcfg.capacity_override = 6;
    rcfg.tau = w.tau;
    w.buffer = fill_buffer(w.seq, 1, view, rcfg, derive_seed(seed, "buffer"));
    for (auto& slot : w.buffer.slots) {
        std::vector<Triple> ts;
        for (const ReplayItem& it : slot) ts.push_back(it.triple);
        const std::vector<double> fs = w.frozen.scores(ts);
        for (size_t x = 0; x < slot.size(); ++x) slot[x].frozen_score = fs[x];
    }

    GraphStats stats = compute_graph_stats(w.seq, 0, view, 2, 3, true);
    for (EntityId e = 0; e < s0.entity_count; ++e)
        w.lambda_e.push_back(importance_weight(e, stats, 1.0, 0.5));

    auto frng = make_rng(derive_seed(seed, "fisher"));
    std::uniform_real_distribution<double> uni(0.05, 1.0);
    for (const auto& name : w.frozen_model.params.names()) {
        Tensor f = Tensor::zeros(w.frozen_model.params.at(name).shape());
        for (size_t x = 0; x < f.size(); ++x) f.data()[x] = uni(frng);
        w.fisher.emplace(name, std::move(f));
    }
    return w;
}

SelfCheckResult selfcheck_grad(uint64_t seed) {
    ToyWorld w = make_toy_world(seed);
    ModalityView view(&w.store);
    const std::vector<const ReplayItem*> replay = w.buffer.all();
    std::vector<Triple> batch = w.seq.at(1).train;
    if (batch.size() > 6) batch.resize(6);
    const int64_t r_old = w.seq.at(0).relation_count;

    auto encode = [&](Tape& t, const ParamRefs& refs) {
        return encode_all_entities(t, refs, w.mcfg, view, w.current.entity_count());
    };
    auto kgr_of = [&](Tape& t, const ParamRefs& refs, const EncodedGraph& g) {
        std::vector<Val> terms;
        for (const Triple& tr : batch) {
            Val qt = tail_query_vector(t, refs, w.mcfg, t.row(g.ent, static_cast<int>(tr.head)),
                                       t.row(refs.at("R"), static_cast<int>(tr.relation)));
            terms.push_back(
                t.softmax_cross_entropy(t.matvec(g.ent, qt), static_cast<int>(tr.tail)));
            Val qh = head_query_vector(t, refs, w.mcfg, t.row(g.ent, static_cast<int>(tr.tail)),
                                       t.row(refs.at("R"), static_cast<int>(tr.relation)));
            terms.push_back(
                t.softmax_cross_entropy(t.matvec(g.ent, qh), static_cast<int>(tr.head)));
        }
        return t.scale(t.add_n(terms), 1.0 / static_cast<double>(terms.size()));
    };
    auto replay_scores = [&](Tape& t, const ParamRefs& refs, const EncodedGraph& g,
                             bool old_rel_only, std::vector<double>& frozen_out) {
        std::vector<Val> cur;
        for (const ReplayItem* it : replay) {
            if (old_rel_only && it->triple.relation >= r_old) continue;
            cur.push_back(score_triple(t, refs, w.mcfg, g, it->triple));
            frozen_out.push_back(it->frozen_score);
        }
        return cur;
    };

    std::vector<std::pair<std::string, LossFn>> terms;
    terms.emplace_back("L_kgr", [&](Tape& t, const ParamRefs& refs) {
        return kgr_of(t, refs, encode(t, refs));
    });
    terms.emplace_back("L_str", [&](Tape& t, const ParamRefs& refs) {
        return entity_stability_loss(t, encode(t, refs), w.frozen, w.lambda_e, w.beta);
    });
    terms.emplace_back("L_mod", [&](Tape& t, const ParamRefs& refs) {
        return modality_drift_loss(t, encode(t, refs), w.frozen);
    });
    terms.emplace_back("L_align", [&](Tape& t, const ParamRefs& refs) {
        return alignment_consistency_loss(t, encode(t, refs), w.frozen, w.beta);
    });
    terms.emplace_back("L_remb", [&](Tape& t, const ParamRefs& refs) {
        return relation_embedding_loss(t, refs, w.frozen, w.beta);
    });
    terms.emplace_back("L_rpat", [&](Tape& t, const ParamRefs& refs) {
        std::vector<double> fr;
        EncodedGraph g = encode(t, refs);
        std::vector<Val> cur = replay_scores(t, refs, g, true, fr);
        return relation_pattern_loss(t, cur, fr, w.beta);
    });
    terms.emplace_back("L_anc", [&](Tape& t, const ParamRefs& refs) {
        return anchor_loss(t, refs, encode(t, refs), w.frozen, w.beta);
    });
    terms.emplace_back("L_rep_emb", [&](Tape& t, const ParamRefs& refs) {
        return replay_embedding_loss(t, encode(t, refs), w.frozen,
                                     unique_batch_entities(replay), w.tau);
    });
    terms.emplace_back("L_rep_score", [&](Tape& t, const ParamRefs& refs) {
        std::vector<double> fr;
        EncodedGraph g = encode(t, refs);
        std::vector<Val> cur = replay_scores(t, refs, g, false, fr);
        return replay_score_loss(t, cur, fr, w.beta);
    });
    terms.emplace_back("L_ewc", [&](Tape& t, const ParamRefs& refs) {
        std::vector<Val> quads;
        for (const auto& name : w.frozen_model.params.names()) {
            const Tensor& anchor = w.frozen_model.params.at(name);
            Val p = refs.at(name);
            if (!t.value(p).same_shape(anchor)) {
                std::vector<int> idx(static_cast<size_t>(anchor.dim(0)));
                for (int r = 0; r < anchor.dim(0); ++r) idx[static_cast<size_t>(r)] = r;
                p = t.rows(p, std::move(idx));
            }
            quads.push_back(t.ewc_quad(p, w.fisher.at(name), anchor));
        }
        return t.add_n(quads);
    });
    terms.emplace_back("total", [&](Tape& t, const ParamRefs& refs) {
        EncodedGraph g = encode(t, refs);
        std::vector<Val> parts{kgr_of(t, refs, g)};
        std::vector<Val> cmkp{
            entity_stability_loss(t, g, w.frozen, w.lambda_e, w.beta),
            modality_drift_loss(t, g, w.frozen),
            alignment_consistency_loss(t, g, w.frozen, w.beta),
            relation_embedding_loss(t, refs, w.frozen, w.beta),
            anchor_loss(t, refs, g, w.frozen, w.beta)};
        std::vector<double> fr_old, fr_all;
        std::vector<Val> cur_old = replay_scores(t, refs, g, true, fr_old);
        cmkp.push_back(relation_pattern_loss(t, cur_old, fr_old, w.beta));
        parts.push_back(t.scale(t.add_n(cmkp), 1.0));
        std::vector<Val> cur_all = replay_scores(t, refs, g, false, fr_all);
        Val mmcr = t.add(replay_embedding_loss(t, g, w.frozen, unique_batch_entities(replay),
                                               w.tau),
                         replay_score_loss(t, cur_all, fr_all, w.beta));
        parts.push_back(t.scale(mmcr, 0.5));
        return t.add_n(parts);
    });

    SelfCheckResult res;
    for (const auto& [name, fn] : terms) {
        const double err = grad_check(fn, w.current.params, 1e-5, 2,
                                      derive_seed(seed, "coords-" + name));
        res.per_term.emplace_back(name, err);
        res.max_rel_error = std::max(res.max_rel_error, err);
    }
    return res;
}

}  // namespace mrckg
