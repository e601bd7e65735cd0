#include "curriculum.hpp"

#include <algorithm>

#include "rng.hpp"

namespace mrckg {

const std::vector<ScoredTriple>& CurriculumPlan::active() const {
    if (finished()) throw Fault("curriculum plan: no active stage");
    return stages[static_cast<size_t>(completed)];
}

int structural_connectivity(const Triple& t, const KnownEntities& known) {
    return (known.contains(t.head) || known.contains(t.tail)) ? 1 : 0;
}

double mm_similarity(EntityId u, EntityId other, const ModalityView& view, double eta_v,
                     double eta_t) {
    double s = 0.0;
    if (view.has_visual(u) && view.has_visual(other))
        s += eta_v * cosine_value(view.visual_pooled(u), view.visual_pooled(other));
    if (view.has_text(u) && view.has_text(other))
        s += eta_t * cosine_value(view.text_pooled(u), view.text_pooled(other));
    return s;
}

double compatibility(const Triple& t, const OldEntitySet& e_old, const ModalityView& view,
                     const CurriculumConfig& cfg, uint64_t seed) {
    if (e_old.empty()) return 0.0;
    std::vector<EntityId> fresh;
    if (!e_old.contains(t.head)) fresh.push_back(t.head);
    if (!e_old.contains(t.tail) && t.tail != t.head) fresh.push_back(t.tail);
    if (fresh.empty()) return 0.0;

    std::vector<EntityId> candidates;
    if (cfg.mm_candidate_cap > 0 && e_old.count > cfg.mm_candidate_cap) {
        auto rng = make_rng(derive_seed(seed, "mm-cap"));
        std::uniform_int_distribution<EntityId> pick(0, e_old.count - 1);
        std::unordered_set<EntityId> chosen;
        while (static_cast<int>(chosen.size()) < cfg.mm_candidate_cap)
            chosen.insert(pick(rng));
        candidates.assign(chosen.begin(), chosen.end());
        std::sort(candidates.begin(), candidates.end());
    } else {
        candidates.resize(static_cast<size_t>(e_old.count));
        for (EntityId e = 0; e < e_old.count; ++e) candidates[static_cast<size_t>(e)] = e;
    }

    double best = 0.0;
    bool any = false;
    for (EntityId u : fresh) {
        for (EntityId e : candidates) {
            const double s = mm_similarity(u, e, view, cfg.eta_v, cfg.eta_t);
            if (!any || s > best) {
                best = s;
                any = true;
            }
        }
    }
    return any ? best : 0.0;
}

ScoredTriple curriculum_score(const Triple& t, const OldEntitySet& e_old, const GraphStats& stats,
                              const ModalityView& view, const CurriculumConfig& cfg,
                              uint64_t seed) {
    if (t.head >= stats.entity_count() || t.tail >= stats.entity_count())
        throw Fault("curriculum_score: stats do not cover triple endpoints");
    ScoredTriple out;
    out.triple = t;
    KnownEntities known{e_old.count, {}};
    out.c_str = structural_connectivity(t, known);
    out.c_mm = compatibility(t, e_old, view, cfg, seed);
    out.c_rich = 0.5 * (stats.richness[static_cast<size_t>(t.head)] +
                        stats.richness[static_cast<size_t>(t.tail)]);
    out.phi = cfg.alpha * out.c_str + cfg.beta * out.c_mm + cfg.gamma * out.c_rich;
    return out;
}

namespace {

void sort_by_phi(std::vector<ScoredTriple>& ts) {
    std::sort(ts.begin(), ts.end(), [](const ScoredTriple& a, const ScoredTriple& b) {
        if (a.phi != b.phi) return a.phi > b.phi;
        return a.triple < b.triple;
    });
}

// Contiguous near-equal split; earlier stages absorb the remainder.
std::vector<std::vector<ScoredTriple>> partition_stages(std::vector<ScoredTriple> sorted,
                                                        int k) {
    std::vector<std::vector<ScoredTriple>> stages;
    const int n = static_cast<int>(sorted.size());
    k = std::max(1, std::min(k, std::max(1, n)));
    const int base = n / k, rem = n % k;
    int at = 0;
    for (int s = 0; s < k; ++s) {
        const int take = base + (s < rem ? 1 : 0);
        stages.emplace_back(sorted.begin() + at, sorted.begin() + at + take);
        at += take;
    }
    return stages;
}

}  // namespace

CurriculumPlan build_plan(const std::vector<Triple>& delta, const OldEntitySet& e_old,
                          const GraphStats& stats, const ModalityView& view,
                          const CurriculumConfig& cfg, uint64_t seed) {
    if (cfg.K < 1) throw Fault("build_plan: K must be >= 1");
    CurriculumPlan plan;
    plan.known = KnownEntities{e_old.count, {}};
    if (delta.empty()) {
        plan.stages.emplace_back();
        plan.empty_delta = true;
        return plan;
    }
    std::vector<ScoredTriple> scored;
    scored.reserve(delta.size());
    for (const Triple& t : delta) scored.push_back(curriculum_score(t, e_old, stats, view, cfg, seed));
    sort_by_phi(scored);
    plan.stages = partition_stages(std::move(scored), cfg.K);
    return plan;
}

void advance(CurriculumPlan& plan, int completed_stage_index, const CurriculumConfig& cfg) {
    if (completed_stage_index != plan.completed || plan.finished())
        throw Fault("advance: stage " + std::to_string(completed_stage_index) +
                    " is not the active stage");
    for (const ScoredTriple& st : plan.active()) {
        plan.known.add(st.triple.head);
        plan.known.add(st.triple.tail);
    }
    plan.completed += 1;
    if (plan.finished()) return;

    std::vector<ScoredTriple> remainder;
    for (size_t s = static_cast<size_t>(plan.completed); s < plan.stages.size(); ++s)
        for (const ScoredTriple& st : plan.stages[s]) remainder.push_back(st);
    const int remaining_stages = plan.total_stages() - plan.completed;

    // Only c_str is refreshed; cached c_mm and c_rich never change.
    for (ScoredTriple& st : remainder) {
        st.c_str = structural_connectivity(st.triple, plan.known);
        st.phi = cfg.alpha * st.c_str + cfg.beta * st.c_mm + cfg.gamma * st.c_rich;
    }
    sort_by_phi(remainder);
    auto reparted = partition_stages(std::move(remainder), remaining_stages);
    plan.stages.resize(static_cast<size_t>(plan.completed));
    for (auto& s : reparted) plan.stages.push_back(std::move(s));
}

}  // namespace mrckg
