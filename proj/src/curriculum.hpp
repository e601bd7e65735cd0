#pragma once

#include <unordered_set>
#include <vector>

#include "graph.hpp"
#include "modality.hpp"
#include "stats.hpp"

namespace mrckg {

struct CurriculumConfig {
    double alpha = 0.4;  // structural connectivity weight
    double beta = 0.4;   // multimodal compatibility weight
    double gamma = 0.2;  // richness weight
    double eta_v = 0.5;
    double eta_t = 0.5;
    int K = 3;
    int m_ref = 4;
    int n_ref = 8;
    int mm_candidate_cap = 0;  // 0 = exhaustive max over E_old
};

// E_old plus entities introduced by completed curriculum stages.
struct KnownEntities {
    int64_t prefix = 0;  // dense old-entity prefix
    std::unordered_set<EntityId> extra;
    bool contains(EntityId e) const { return e < prefix || extra.count(e) > 0; }
    void add(EntityId e) {
        if (e >= prefix) extra.insert(e);
    }
};

struct ScoredTriple {
    Triple triple;
    double phi = 0.0;
    double c_str = 0.0;
    double c_mm = 0.0;    // fixed at plan creation
    double c_rich = 0.0;  // fixed at plan creation
};

struct CurriculumPlan {
    std::vector<std::vector<ScoredTriple>> stages;
    int completed = 0;  // stages already trained; stages[completed] is active
    KnownEntities known;
    bool empty_delta = false;

    int total_stages() const { return static_cast<int>(stages.size()); }
    const std::vector<ScoredTriple>& active() const;
    bool finished() const { return completed >= total_stages(); }
};

int structural_connectivity(const Triple& t, const KnownEntities& known);
double mm_similarity(EntityId u, EntityId other, const ModalityView& view, double eta_v,
                     double eta_t);
// Max multimodal similarity of the triple's new endpoints against E_old; 0 when
// both endpoints are old or E_old is empty.
double compatibility(const Triple& t, const OldEntitySet& e_old, const ModalityView& view,
                     const CurriculumConfig& cfg, uint64_t seed = 0);
ScoredTriple curriculum_score(const Triple& t, const OldEntitySet& e_old, const GraphStats& stats,
                              const ModalityView& view, const CurriculumConfig& cfg,
                              uint64_t seed = 0);

// Sorts ΔT by descending φ (ties: ascending id tuple) and splits it into K
// contiguous near-equal stages, larger stages first.
CurriculumPlan build_plan(const std::vector<Triple>& delta, const OldEntitySet& e_old,
                          const GraphStats& stats, const ModalityView& view,
                          const CurriculumConfig& cfg, uint64_t seed = 0);

// Marks the active stage complete: its entities join the known set, c_str is
// recomputed for the remainder (c_mm/c_rich carried over), and the remainder
// is re-sorted and re-partitioned into the remaining stage count.
void advance(CurriculumPlan& plan, int completed_stage_index, const CurriculumConfig& cfg);

}  // namespace mrckg
