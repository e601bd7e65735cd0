#include "trainer.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <sstream>

#include "rng.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace mrckg {

Mode mode_from_string(const std::string& s) {
    if (s == "mrckg") return Mode::mrckg;
    if (s == "finetune") return Mode::finetune;
    if (s == "ewc") return Mode::ewc;
    if (s == "replay_only" || s == "replay-only") return Mode::replay_only;
    if (s == "structure_cl" || s == "structure-cl") return Mode::structure_cl;
    throw Fault("unknown mode: " + s);
}

std::string mode_name(Mode m) {
    switch (m) {
        case Mode::mrckg: return "mrckg";
        case Mode::finetune: return "finetune";
        case Mode::ewc: return "ewc";
        case Mode::replay_only: return "replay_only";
        case Mode::structure_cl: return "structure_cl";
    }
    return "?";
}

void TrainConfig::validate() const {
    static const std::set<std::string> known{"no_cmkp", "no_mmcr", "no_mscl",
                                             "no_prog",  "no_visual", "no_text"};
    for (const auto& a : ablations)
        if (!known.count(a)) throw Fault("unknown ablation: " + a);
    if (!ablations.empty() && mode != Mode::mrckg)
        throw Fault("ablations are only valid with mode=mrckg");
    if (has("no_mscl") && has("no_prog"))
        throw Fault("no_mscl and no_prog are incompatible (no_mscl subsumes no_prog)");
    if (stage1_fraction < 0.0 || stage1_fraction > 1.0)
        throw Fault("stage1_fraction must be in [0,1]");
    if (lambda_cmkp < 0 || lambda_rep < 0 || lambda_ewc < 0)
        throw Fault("loss weights must be nonnegative");
    if (epochs < 1) throw Fault("epochs must be >= 1");
    if (batch_size < 1) throw Fault("batch_size must be >= 1");
    if (replay.rho < 0.0 || replay.rho > 1.0) throw Fault("replay fraction must be in [0,1]");
    if (replay.tau <= 0.0) throw Fault("replay temperature must be positive");
}

ModalityView TrainConfig::make_view(const ModalityStore& store) const {
    const bool zero_all = mode == Mode::structure_cl;
    return ModalityView(&store, zero_all || has("no_visual"), zero_all || has("no_text"));
}

void LossBreakdown::accumulate(const LossBreakdown& o, double w) {
    kgr += w * o.kgr;
    str += w * o.str;
    mod += w * o.mod;
    align += w * o.align;
    remb += w * o.remb;
    rpat += w * o.rpat;
    anc += w * o.anc;
    rep_emb += w * o.rep_emb;
    rep_score += w * o.rep_score;
    ewc += w * o.ewc;
    total += w * o.total;
}

std::string train_config_to_json(const TrainConfig& cfg, const std::string& bench_dir) {
    json j;
    j["bench"] = bench_dir;
    j["mode"] = mode_name(cfg.mode);
    j["ablations"] = cfg.ablations;
    j["epochs"] = cfg.epochs;
    j["stage1_fraction"] = cfg.stage1_fraction;
    j["lr"] = cfg.lr;
    j["batch_size"] = cfg.batch_size;
    j["lambda_cmkp"] = cfg.lambda_cmkp;
    j["lambda_rep"] = cfg.lambda_rep;
    j["lambda_ewc"] = cfg.lambda_ewc;
    j["patience"] = cfg.patience;
    j["seed"] = cfg.seed;
    j["smooth_l1_beta"] = cfg.smooth_l1_beta;
    j["model"] = {{"d", cfg.model.d},       {"d_v", cfg.model.d_v},
                  {"d_w", cfg.model.d_w},   {"d_p", cfg.model.d_p},
                  {"layers", cfg.model.layers}, {"heads", cfg.model.heads},
                  {"ffn_hidden", cfg.model.ffn_hidden}, {"init_std", cfg.model.init_std}};
    j["curriculum"] = {{"alpha", cfg.curriculum.alpha},
                       {"beta", cfg.curriculum.beta},
                       {"gamma", cfg.curriculum.gamma},
                       {"eta_v", cfg.curriculum.eta_v},
                       {"eta_t", cfg.curriculum.eta_t},
                       {"K", cfg.curriculum.K},
                       {"m_ref", cfg.curriculum.m_ref},
                       {"n_ref", cfg.curriculum.n_ref},
                       {"mm_candidate_cap", cfg.curriculum.mm_candidate_cap}};
    j["replay"] = {{"capacity_fraction", cfg.replay.capacity_fraction},
                   {"capacity_cap", cfg.replay.capacity_cap},
                   {"capacity_override", cfg.replay.capacity_override},
                   {"tau", cfg.replay.tau},
                   {"rho", cfg.replay.rho}};
    j["preservation"] = {{"lambda0", cfg.preservation.lambda0},
                         {"delta", cfg.preservation.delta}};
    j["eval"] = {{"cold_start_degree_max", cfg.eval.cold_start_degree_max},
                 {"ambiguity_threshold", cfg.eval.ambiguity_threshold},
                 {"eta_v", cfg.eval.eta_v},
                 {"eta_t", cfg.eval.eta_t}};
    return j.dump(2) + "\n";
}

TrainConfig train_config_overrides(const TrainConfig& base, const std::string& json_text) {
    TrainConfig cfg = base;
    const json j = json::parse(json_text);
    auto get = [&](const json& o, const char* key, auto& slot) {
        if (o.contains(key)) slot = o.at(key).get<std::decay_t<decltype(slot)>>();
    };
    if (j.contains("mode")) cfg.mode = mode_from_string(j.at("mode").get<std::string>());
    if (j.contains("ablations")) {
        cfg.ablations.clear();
        for (const auto& a : j.at("ablations")) cfg.ablations.insert(a.get<std::string>());
    }
    get(j, "epochs", cfg.epochs);
    get(j, "stage1_fraction", cfg.stage1_fraction);
    get(j, "lr", cfg.lr);
    get(j, "batch_size", cfg.batch_size);
    get(j, "lambda_cmkp", cfg.lambda_cmkp);
    get(j, "lambda_rep", cfg.lambda_rep);
    get(j, "lambda_ewc", cfg.lambda_ewc);
    get(j, "patience", cfg.patience);
    get(j, "seed", cfg.seed);
    get(j, "smooth_l1_beta", cfg.smooth_l1_beta);
    if (j.contains("model")) {
        const json& m = j.at("model");
        get(m, "d", cfg.model.d);
        get(m, "d_v", cfg.model.d_v);
        get(m, "d_w", cfg.model.d_w);
        get(m, "d_p", cfg.model.d_p);
        get(m, "layers", cfg.model.layers);
        get(m, "heads", cfg.model.heads);
        get(m, "ffn_hidden", cfg.model.ffn_hidden);
        get(m, "init_std", cfg.model.init_std);
    }
    if (j.contains("curriculum")) {
        const json& c = j.at("curriculum");
        get(c, "alpha", cfg.curriculum.alpha);
        get(c, "beta", cfg.curriculum.beta);
        get(c, "gamma", cfg.curriculum.gamma);
        get(c, "eta_v", cfg.curriculum.eta_v);
        get(c, "eta_t", cfg.curriculum.eta_t);
        get(c, "K", cfg.curriculum.K);
        get(c, "m_ref", cfg.curriculum.m_ref);
        get(c, "n_ref", cfg.curriculum.n_ref);
        get(c, "mm_candidate_cap", cfg.curriculum.mm_candidate_cap);
    }
    if (j.contains("replay")) {
        const json& r = j.at("replay");
        get(r, "capacity_fraction", cfg.replay.capacity_fraction);
        get(r, "capacity_cap", cfg.replay.capacity_cap);
        get(r, "capacity_override", cfg.replay.capacity_override);
        get(r, "tau", cfg.replay.tau);
        get(r, "rho", cfg.replay.rho);
    }
    if (j.contains("preservation")) {
        const json& p = j.at("preservation");
        get(p, "lambda0", cfg.preservation.lambda0);
        get(p, "delta", cfg.preservation.delta);
    }
    if (j.contains("eval")) {
        const json& e = j.at("eval");
        get(e, "cold_start_degree_max", cfg.eval.cold_start_degree_max);
        get(e, "ambiguity_threshold", cfg.eval.ambiguity_threshold);
        get(e, "eta_v", cfg.eval.eta_v);
        get(e, "eta_t", cfg.eval.eta_t);
    }
    return cfg;
}

namespace {

struct Batch {
    std::vector<Triple> fresh;
    std::vector<const ReplayItem*> replay;
};

struct EwcState {
    GradMap fisher;       // shapes of θ_{i-1}
    ParamStore anchor;    // θ* = θ_{i-1}
    bool ready = false;
};

// Per-snapshot training context.
struct SnapshotRuntime {
    int snapshot = 0;
    OldEntitySet e_old;
    int64_t r_old = 0;
    std::optional<FrozenReference> frozen;
    ReplayBuffer buffer;
    std::vector<double> lambda_e;
    EwcState ewc;
};

class Trainer {
public:
    Trainer(const SnapshotSequence& seq, const ModalityStore& store, TrainConfig cfg,
            RunOptions opts)
        : seq_(seq), store_(store), cfg_(std::move(cfg)), opts_(std::move(opts)),
          view_(cfg_.make_view(store_)) {
        cfg_.validate();
    }

    RunResult run();

private:
    void train_snapshot(Model& model, SnapshotRuntime& rt);
    LossBreakdown step(Model& model, Adam& opt, const Batch& batch, const SnapshotRuntime& rt,
                       int stage, const FreezeMask& mask);
    double validation_mrr(const Model& model, int i) const;
    std::vector<Triple> eligible_pool(const std::optional<CurriculumPlan>& plan, int i) const;

    void dump_curriculum(const CurriculumPlan& plan, int snapshot) const;
    void dump_buffer(const ReplayBuffer& buffer, int snapshot) const;
    void append_losses(int snapshot, int epoch, int stage, const LossBreakdown& bd) const;

    const SnapshotSequence& seq_;
    const ModalityStore& store_;
    TrainConfig cfg_;
    RunOptions opts_;
    ModalityView view_;
};

std::vector<Triple> Trainer::eligible_pool(const std::optional<CurriculumPlan>& plan,
                                           int i) const {
    if (!plan) return seq_.at(i).train;
    std::vector<Triple> pool;
    const int upto = std::min(plan->completed, plan->total_stages() - 1);
    for (int s = 0; s <= upto; ++s)
        for (const ScoredTriple& st : plan->stages[static_cast<size_t>(s)])
            pool.push_back(st.triple);
    return pool;
}

LossBreakdown Trainer::step(Model& model, Adam& opt, const Batch& batch,
                            const SnapshotRuntime& rt, int stage, const FreezeMask& mask) {
    const double beta = cfg_.smooth_l1_beta;
    Tape tape;
    ParamRefs refs = register_params(tape, model.params);
    EncodedGraph graph =
        encode_all_entities(tape, refs, model.config, view_, model.entity_count());
    Val rel_table = refs.at("R");

    // L_kgr: 1-vs-all cross-entropy over tails and heads for every batch triple.
    std::vector<Val> ce_terms;
    auto add_kgr = [&](const Triple& t) {
        Val qt = tail_query_vector(tape, refs, model.config,
                                   tape.row(graph.ent, static_cast<int>(t.head)),
                                   tape.row(rel_table, static_cast<int>(t.relation)));
        ce_terms.push_back(tape.softmax_cross_entropy(tape.matvec(graph.ent, qt),
                                                      static_cast<int>(t.tail)));
        Val qh = head_query_vector(tape, refs, model.config,
                                   tape.row(graph.ent, static_cast<int>(t.tail)),
                                   tape.row(rel_table, static_cast<int>(t.relation)));
        ce_terms.push_back(tape.softmax_cross_entropy(tape.matvec(graph.ent, qh),
                                                      static_cast<int>(t.head)));
    };
    for (const Triple& t : batch.fresh) add_kgr(t);
    for (const ReplayItem* it : batch.replay) add_kgr(it->triple);
    if (ce_terms.empty()) throw Fault("training step: empty batch");
    Val kgr = tape.scale(ce_terms.size() == 1 ? ce_terms[0] : tape.add_n(ce_terms),
                         1.0 / static_cast<double>(ce_terms.size()));

    LossBreakdown bd;
    bd.kgr = tape.value(kgr).item();
    std::vector<Val> weighted{kgr};

    const bool have_frozen = rt.frozen.has_value();
    CmkpTerms cmkp{};
    if (have_frozen && cfg_.cmkp_enabled()) {
        const FrozenReference& fr = *rt.frozen;
        std::vector<Val> parts;
        cmkp.mod = modality_drift_loss(tape, graph, fr);
        cmkp.align = alignment_consistency_loss(tape, graph, fr, beta);
        parts.push_back(cmkp.mod);
        parts.push_back(cmkp.align);
        bd.mod = tape.value(cmkp.mod).item();
        bd.align = tape.value(cmkp.align).item();
        if (stage == 2) {
            cmkp.str = entity_stability_loss(tape, graph, fr, rt.lambda_e, beta);
            cmkp.remb = relation_embedding_loss(tape, refs, fr, beta);
            // Scoring-pattern consistency over old-relation replay triples.
            std::vector<Val> cur_scores;
            std::vector<double> frozen_scores;
            for (const ReplayItem* it : batch.replay) {
                if (it->triple.relation < rt.r_old) {
                    cur_scores.push_back(
                        score_triple(tape, refs, model.config, graph, it->triple));
                    frozen_scores.push_back(it->frozen_score);
                }
            }
            cmkp.rpat = relation_pattern_loss(tape, cur_scores, frozen_scores, beta);
            cmkp.anc = anchor_loss(tape, refs, graph, fr, beta);
            parts.push_back(cmkp.str);
            parts.push_back(cmkp.remb);
            parts.push_back(cmkp.rpat);
            parts.push_back(cmkp.anc);
            bd.str = tape.value(cmkp.str).item();
            bd.remb = tape.value(cmkp.remb).item();
            bd.rpat = tape.value(cmkp.rpat).item();
            bd.anc = tape.value(cmkp.anc).item();
        }
        weighted.push_back(tape.scale(tape.add_n(parts), cfg_.lambda_cmkp));
    }

    if (have_frozen && cfg_.mmcr_enabled() && stage == 2 && !batch.replay.empty()) {
        const FrozenReference& fr = *rt.frozen;
        Val emb = replay_embedding_loss(tape, graph, fr, unique_batch_entities(batch.replay),
                                        cfg_.replay.tau);
        std::vector<Val> cur_scores;
        std::vector<double> frozen_scores;
        for (const ReplayItem* it : batch.replay) {
            cur_scores.push_back(score_triple(tape, refs, model.config, graph, it->triple));
            frozen_scores.push_back(it->frozen_score);
        }
        Val score = replay_score_loss(tape, cur_scores, frozen_scores, beta);
        bd.rep_emb = tape.value(emb).item();
        bd.rep_score = tape.value(score).item();
        weighted.push_back(tape.scale(tape.add(emb, score), cfg_.lambda_rep));
    }

    if (cfg_.mode == Mode::ewc && rt.ewc.ready) {
        std::vector<Val> quads;
        for (const auto& name : rt.ewc.anchor.names()) {
            if (!model.params.has(name)) continue;
            const Tensor& anchor = rt.ewc.anchor.at(name);
            const Tensor& fisher = rt.ewc.fisher.at(name);
            Val p = refs.at(name);
            if (!tape.value(p).same_shape(anchor)) {
                // grown embedding tables: penalize the shared old rows only
                std::vector<int> idx(static_cast<size_t>(anchor.dim(0)));
                for (int r = 0; r < anchor.dim(0); ++r) idx[static_cast<size_t>(r)] = r;
                p = tape.rows(p, std::move(idx));
            }
            quads.push_back(tape.ewc_quad(p, fisher, anchor));
        }
        if (!quads.empty()) {
            Val pen = quads.size() == 1 ? quads[0] : tape.add_n(quads);
            bd.ewc = tape.value(pen).item();
            weighted.push_back(tape.scale(pen, cfg_.lambda_ewc));
        }
    }

    Val total = weighted.size() == 1 ? weighted[0] : tape.add_n(weighted);
    bd.total = tape.value(total).item();
    if (!std::isfinite(bd.total)) {
        std::ostringstream os;
        os << "non-finite training loss: kgr=" << bd.kgr << " str=" << bd.str
           << " mod=" << bd.mod << " align=" << bd.align << " remb=" << bd.remb
           << " rpat=" << bd.rpat << " anc=" << bd.anc << " rep_emb=" << bd.rep_emb
           << " rep_score=" << bd.rep_score << " ewc=" << bd.ewc;
        throw Fault(os.str());
    }
    tape.backward(total);
    GradMap grads = collect_grads(tape, refs);
    AdamConfig ac;
    ac.lr = cfg_.lr;
    opt.step(model.params, grads, mask, ac);
    return bd;
}

double Trainer::validation_mrr(const Model& model, int i) const {
    const std::vector<Triple>& valid = seq_.at(i).valid;
    if (valid.empty()) return 0.0;
    const TripleSet filter = cumulative_triples(seq_, i);
    ModelScorer scorer(model, view_);
    return metrics_from_outcomes(evaluate_split(scorer, filter, valid, i)).mrr;
}

void Trainer::train_snapshot(Model& model, SnapshotRuntime& rt) {
    const int i = rt.snapshot;
    const Snapshot& snap = seq_.at(i);
    const int epochs = cfg_.epochs;
    const int stage1_epochs =
        cfg_.two_stage() ? static_cast<int>(std::ceil(cfg_.stage1_fraction * epochs)) : 0;

    // Curriculum plan over the snapshot's train pool.
    std::optional<CurriculumPlan> plan;
    std::vector<int> stage_of_epoch(static_cast<size_t>(epochs), 0);
    if (cfg_.mscl_enabled()) {
        GraphStats stats = compute_graph_stats(seq_, i, view_, cfg_.curriculum.m_ref,
                                               cfg_.curriculum.n_ref, false);
        CurriculumConfig ccfg = cfg_.curriculum;
        if (!cfg_.progressive()) ccfg.K = 1;
        plan = build_plan(snap.train, rt.e_old, stats, view_, ccfg,
                          derive_seed(cfg_.seed, "plan", static_cast<uint64_t>(i)));
        if (opts_.out_dir.size()) dump_curriculum(*plan, i);
        // Epochs are split over curriculum stages the same way stages split
        // triples: near-equal, earlier stages take the remainder.
        const int k = plan->total_stages();
        const int base = epochs / k, rem = epochs % k;
        int e = 0;
        for (int s = 0; s < k; ++s) {
            const int take = base + (s < rem ? 1 : 0);
            for (int n = 0; n < take && e < epochs; ++n) stage_of_epoch[static_cast<size_t>(e++)] = s;
        }
        while (e < epochs) stage_of_epoch[static_cast<size_t>(e++)] = k - 1;
    }

    Adam opt;  // fresh optimizer state per snapshot
    double best_mrr = -1.0;
    std::optional<ParamStore> best_params;
    int stale = 0;

    const int64_t replay_per_batch =
        cfg_.replay_mixing() && !rt.buffer.empty()
            ? static_cast<int64_t>(std::llround(cfg_.replay.rho * cfg_.batch_size))
            : 0;
    const int64_t fresh_per_batch = std::max<int64_t>(1, cfg_.batch_size - replay_per_batch);
    std::vector<const ReplayItem*> replay_all = rt.buffer.all();

    CurriculumConfig ccfg = cfg_.curriculum;
    for (int epoch = 0; epoch < epochs; ++epoch) {
        const int stage = epoch < stage1_epochs ? 1 : 2;
        FreezeMask mask;
        if (stage == 1 && i > 0) mask = model.freeze_masks(1, rt.e_old, rt.r_old);

        if (plan && plan->completed < stage_of_epoch[static_cast<size_t>(epoch)])
            advance(*plan, plan->completed, ccfg);

        std::vector<Triple> pool = eligible_pool(plan, i);
        auto rng = make_rng(derive_seed(cfg_.seed, "epoch", (static_cast<uint64_t>(i) << 20) ^
                                                               static_cast<uint64_t>(epoch)));
        const bool ordered = cfg_.mscl_enabled() && !cfg_.progressive();
        if (!ordered) std::shuffle(pool.begin(), pool.end(), rng);

        std::vector<const ReplayItem*> replay_stream = replay_all;
        std::shuffle(replay_stream.begin(), replay_stream.end(), rng);
        size_t replay_at = 0;
        auto draw_replay = [&](int64_t n) {
            std::vector<const ReplayItem*> out;
            while (static_cast<int64_t>(out.size()) < n && !replay_stream.empty()) {
                if (replay_at == replay_stream.size()) {
                    std::shuffle(replay_stream.begin(), replay_stream.end(), rng);
                    replay_at = 0;
                }
                out.push_back(replay_stream[replay_at++]);
            }
            return out;
        };

        LossBreakdown epoch_bd;
        int batches = 0;
        for (size_t at = 0; at < pool.size(); at += static_cast<size_t>(fresh_per_batch)) {
            Batch batch;
            const size_t hi = std::min(pool.size(), at + static_cast<size_t>(fresh_per_batch));
            batch.fresh.assign(pool.begin() + static_cast<std::ptrdiff_t>(at),
                               pool.begin() + static_cast<std::ptrdiff_t>(hi));
            if (stage == 2 && replay_per_batch > 0) batch.replay = draw_replay(replay_per_batch);
            epoch_bd.accumulate(step(model, opt, batch, rt, stage, mask), 1.0);
            ++batches;
        }
        if (batches > 0) {
            LossBreakdown mean;
            mean.accumulate(epoch_bd, 1.0 / batches);
            epoch_bd = mean;
        }
        if (opts_.out_dir.size()) append_losses(i, epoch, stage, epoch_bd);

        // Early stopping on current-snapshot validation MRR; never before the
        // curriculum has introduced every stage.
        if (!snap.valid.empty()) {
            const double mrr = validation_mrr(model, i);
            if (mrr > best_mrr) {
                best_mrr = mrr;
                best_params = model.params;
                stale = 0;
            } else {
                ++stale;
            }
            const bool curriculum_done = !plan || plan->completed >= plan->total_stages() - 1;
            if (cfg_.patience > 0 && stale >= cfg_.patience && curriculum_done) break;
        }
    }
    if (best_params) model.params = std::move(*best_params);
}

void Trainer::dump_curriculum(const CurriculumPlan& plan, int snapshot) const {
    std::ofstream out(opts_.out_dir + "/curriculum.jsonl", std::ios::app);
    for (size_t s = 0; s < plan.stages.size(); ++s) {
        for (const ScoredTriple& st : plan.stages[s]) {
            json j;
            j["snapshot"] = snapshot;
            j["stage"] = static_cast<int>(s) + 1;
            j["head"] = st.triple.head;
            j["relation"] = st.triple.relation;
            j["tail"] = st.triple.tail;
            j["phi"] = st.phi;
            j["c_str"] = st.c_str;
            j["c_mm"] = st.c_mm;
            j["c_rich"] = st.c_rich;
            out << j.dump() << '\n';
        }
    }
}

void Trainer::dump_buffer(const ReplayBuffer& buffer, int snapshot) const {
    std::ostringstream os;
    for (const auto& slot : buffer.slots)
        for (const ReplayItem& it : slot)
            os << it.provenance << '\t' << it.triple.head << '\t' << it.triple.relation << '\t'
               << it.triple.tail << '\t' << format_double(it.weight) << '\n';
    const std::string body = os.str();
    write_text_file(opts_.out_dir + "/s" + std::to_string(snapshot) + "/replay_buffer.tsv", body);
    write_text_file(opts_.out_dir + "/replay_buffer.tsv", body);
}

void Trainer::append_losses(int snapshot, int epoch, int stage, const LossBreakdown& bd) const {
    const std::string path = opts_.out_dir + "/s" + std::to_string(snapshot) + "/losses.csv";
    const bool fresh = !fs::exists(path);
    fs::create_directories(fs::path(path).parent_path());
    std::ofstream out(path, std::ios::app);
    if (fresh)
        out << "epoch,stage,L_kgr,L_str,L_mod,L_align,L_remb,L_rpat,L_anc,L_rep_emb,"
               "L_rep_score,total\n";
    out << epoch << ',' << stage << ',' << format_double(bd.kgr) << ',' << format_double(bd.str)
        << ',' << format_double(bd.mod) << ',' << format_double(bd.align) << ','
        << format_double(bd.remb) << ',' << format_double(bd.rpat) << ','
        << format_double(bd.anc) << ',' << format_double(bd.rep_emb) << ','
        << format_double(bd.rep_score) << ',' << format_double(bd.total) << '\n';
}

// Diagonal Fisher: mean squared L_kgr gradient over the snapshot's train
// batches under the given (previous) parameters.
EwcState estimate_fisher_impl(const Model& prev, const SnapshotSequence& seq, int prev_snapshot,
                              const ModalityView& view, const TrainConfig& cfg) {
    EwcState st;
    st.anchor = prev.params;
    GradMap acc;
    for (const auto& name : prev.params.names())
        acc.emplace(name, Tensor::zeros(prev.params.at(name).shape()));
    const std::vector<Triple>& train = seq.at(prev_snapshot).train;
    int batches = 0;
    for (size_t at = 0; at < train.size(); at += static_cast<size_t>(cfg.batch_size)) {
        const size_t hi = std::min(train.size(), at + static_cast<size_t>(cfg.batch_size));
        Tape tape;
        ParamRefs refs = register_params(tape, prev.params);
        EncodedGraph graph =
            encode_all_entities(tape, refs, prev.config, view, prev.entity_count());
        std::vector<Val> terms;
        for (size_t k = at; k < hi; ++k) {
            const Triple& t = train[k];
            Val qt = tail_query_vector(tape, refs, prev.config,
                                       tape.row(graph.ent, static_cast<int>(t.head)),
                                       tape.row(refs.at("R"), static_cast<int>(t.relation)));
            terms.push_back(tape.softmax_cross_entropy(tape.matvec(graph.ent, qt),
                                                       static_cast<int>(t.tail)));
            Val qh = head_query_vector(tape, refs, prev.config,
                                       tape.row(graph.ent, static_cast<int>(t.tail)),
                                       tape.row(refs.at("R"), static_cast<int>(t.relation)));
            terms.push_back(tape.softmax_cross_entropy(tape.matvec(graph.ent, qh),
                                                       static_cast<int>(t.head)));
        }
        if (terms.empty()) continue;
        Val loss = tape.scale(terms.size() == 1 ? terms[0] : tape.add_n(terms),
                              1.0 / static_cast<double>(terms.size()));
        tape.backward(loss);
        for (const auto& [name, val] : refs.refs) {
            const Tensor g = tape.grad(val);
            Tensor& a = acc.at(name);
            for (size_t x = 0; x < a.size(); ++x) a.data()[x] += g.data()[x] * g.data()[x];
        }
        ++batches;
    }
    if (batches > 0)
        for (auto& [name, t] : acc)
            for (size_t x = 0; x < t.size(); ++x) t.data()[x] /= batches;
    st.fisher = std::move(acc);
    st.ready = true;
    return st;
}

RunResult Trainer::run() {
    RunResult result;
    const int T = seq_.T();
    if (opts_.out_dir.size()) {
        fs::create_directories(opts_.out_dir);
        write_text_file(opts_.out_dir + "/config.json",
                        train_config_to_json(cfg_, opts_.bench_dir));
        // fresh run: clear any appended artifacts from a previous attempt
        std::error_code ec;
        fs::remove(opts_.out_dir + "/curriculum.jsonl", ec);
    }

    Model model(cfg_.model, seq_.at(0).entity_count, seq_.at(0).relation_count,
                derive_seed(cfg_.seed, "init"));
    std::optional<Model> previous;  // θ_{i-1}, frozen at the end of each snapshot

    for (int i = 0; i < T; ++i) {
        SnapshotRuntime rt;
        rt.snapshot = i;
        rt.e_old = old_entity_set(seq_, i);
        rt.r_old = i > 0 ? seq_.at(i - 1).relation_count : 0;

        if (i > 0) {
            const bool need_frozen = cfg_.cmkp_enabled() || cfg_.mmcr_enabled();
            if (need_frozen) rt.frozen = FrozenReference::build(*previous, view_);
            if (cfg_.replay_mixing()) {
                rt.buffer = fill_buffer(seq_, i, view_, cfg_.replay,
                                        derive_seed(cfg_.seed, "buffer",
                                                    static_cast<uint64_t>(i)));
                if (rt.frozen) {
                    // cache frozen scores once per buffer
                    for (auto& slot : rt.buffer.slots) {
                        std::vector<Triple> ts;
                        ts.reserve(slot.size());
                        for (const ReplayItem& it : slot) ts.push_back(it.triple);
                        const std::vector<double> fs_scores = rt.frozen->scores(ts);
                        for (size_t k = 0; k < slot.size(); ++k)
                            slot[k].frozen_score = fs_scores[k];
                    }
                }
                if (opts_.out_dir.size()) dump_buffer(rt.buffer, i);
            }
            if (cfg_.cmkp_enabled()) {
                GraphStats prev_stats =
                    compute_graph_stats(seq_, i - 1, view_, cfg_.curriculum.m_ref,
                                        cfg_.curriculum.n_ref, true);
                rt.lambda_e.resize(static_cast<size_t>(rt.e_old.count));
                for (EntityId e = 0; e < rt.e_old.count; ++e)
                    rt.lambda_e[static_cast<size_t>(e)] = importance_weight(
                        e, prev_stats, cfg_.preservation.lambda0, cfg_.preservation.delta);
            }
            if (cfg_.mode == Mode::ewc)
                rt.ewc = estimate_fisher_impl(*previous, seq_, i - 1, view_, cfg_);

            const Snapshot& snap = seq_.at(i);
            const int64_t new_entities = snap.entity_count - seq_.at(i - 1).entity_count;
            const int64_t new_relations = snap.relation_count - seq_.at(i - 1).relation_count;
            model.register_new_entities(new_entities, new_relations,
                                        derive_seed(cfg_.seed, "grow",
                                                    static_cast<uint64_t>(i)));
            // P continues from the frozen head so the anchor penalty starts small.
            if (cfg_.cmkp_enabled())
                model.params.put("P", previous->params.at("Q"));
        }

        train_snapshot(model, rt);

        if (opts_.out_dir.size())
            save_checkpoint(opts_.out_dir + "/s" + std::to_string(i) + "/checkpoint", model,
                            cfg_.seed, i);
        result.matrix.rows.push_back(evaluate_model(model, seq_, i, view_));
        if (opts_.out_dir.size())
            write_text_file(opts_.out_dir + "/metrics.json",
                            metric_matrix_to_json(result.matrix));

        previous = model;  // deep copy becomes θ_i
        if (i >= 1 && cfg_.cmkp_enabled())
            previous->params.put("Q", model.params.at("P"));  // freeze the trained head as Q^(i)
    }
    return result;
}

}  // namespace

RunResult run_sequence(const SnapshotSequence& seq, const ModalityStore& store,
                       const TrainConfig& cfg, const RunOptions& opts) {
    cfg.validate();
    if (!seq.validated) {
        ValidationReport rep = validate_sequence(seq);
        if (!rep.ok()) throw Fault("run_sequence: benchmark failed validation:\n" + rep.to_string());
    }
    Trainer trainer(seq, store, cfg, opts);
    return trainer.run();
}

MetricMatrix evaluate_run(const std::string& run_dir, int upto) {
    const json cfg_json = json::parse(read_text_file(run_dir + "/config.json"));
    const std::string bench_dir = cfg_json.at("bench").get<std::string>();
    Benchmark bench = load_benchmark(bench_dir);
    if (!bench.report.ok())
        throw Fault("evaluate_run: benchmark failed validation:\n" + bench.report.to_string());
    TrainConfig cfg = train_config_overrides(TrainConfig{}, read_text_file(run_dir + "/config.json"));
    const ModalityView view = cfg.make_view(bench.store);

    MetricMatrix mm;
    const int T = bench.seq.T();
    const int last = upto < 0 ? T - 1 : std::min(upto, T - 1);
    for (int i = 0; i <= last; ++i) {
        const std::string ckpt = run_dir + "/s" + std::to_string(i) + "/checkpoint";
        if (!fs::exists(ckpt + "/manifest.json")) break;
        Model model = load_checkpoint(ckpt);
        mm.rows.push_back(evaluate_model(model, bench.seq, i, view));
    }
    if (mm.T() == 0) throw Fault("evaluate_run: no checkpoints under " + run_dir);
    write_text_file(run_dir + "/metrics.json", metric_matrix_to_json(mm));
    return mm;
}

void report_run(const std::string& run_dir) {
    const MetricMatrix mm = metric_matrix_from_json(read_text_file(run_dir + "/metrics.json"));
    const json cfg_json = json::parse(read_text_file(run_dir + "/config.json"));
    const std::string bench_dir = cfg_json.at("bench").get<std::string>();

    ErrorHistogram hist;
    bool have_errors = false;
    bool complete = mm.T() > 0;
    try {
        Benchmark bench = load_benchmark(bench_dir);
        TrainConfig cfg =
            train_config_overrides(TrainConfig{}, read_text_file(run_dir + "/config.json"));
        const ModalityView view = cfg.make_view(bench.store);
        const int last = mm.T() - 1;
        complete = complete && mm.T() == bench.seq.T();
        const std::string ckpt = run_dir + "/s" + std::to_string(last) + "/checkpoint";
        if (fs::exists(ckpt + "/manifest.json")) {
            Model current = load_checkpoint(ckpt);
            std::vector<std::optional<Model>> cache(static_cast<size_t>(last) + 1);
            auto loader = [&](int j) -> const Model* {
                const std::string p = run_dir + "/s" + std::to_string(j) + "/checkpoint";
                if (!fs::exists(p + "/manifest.json")) return nullptr;
                auto& slot = cache[static_cast<size_t>(j)];
                if (!slot) slot = load_checkpoint(p);
                return &*slot;
            };
            hist = classify_errors(current, last, loader, bench.seq, view, cfg.eval);
            have_errors = true;
        }
    } catch (const std::exception&) {
        complete = false;  // report what exists
    }
    emit_report(run_dir, mm, have_errors ? &hist : nullptr, complete);
}

}  // namespace mrckg
