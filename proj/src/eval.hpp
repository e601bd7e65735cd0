#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "backbone.hpp"
#include "graph.hpp"
#include "modality.hpp"

namespace mrckg {

struct EvalConfig {
    int cold_start_degree_max = 2;
    double ambiguity_threshold = 0.8;
    double eta_v = 0.5;
    double eta_t = 0.5;
};

// Mean-tie rank among kept candidates: 1 + |better| + |tied|/2.
double rank_from_scores(const std::vector<double>& scores, EntityId gold,
                        const std::function<bool(EntityId)>& keep);
// Highest-scoring kept candidate, ties broken by lowest id.
EntityId top1_from_scores(const std::vector<double>& scores,
                          const std::function<bool(EntityId)>& keep);

struct MetricCell {
    double mrr = 0.0, h1 = 0.0, h3 = 0.0, h10 = 0.0;
    int64_t queries = 0;
};

// M[i][j] for j <= i: metrics of the model after snapshot i on test_j.
struct MetricMatrix {
    std::vector<std::vector<MetricCell>> rows;  // rows[i] has i+1 cells
    int T() const { return static_cast<int>(rows.size()); }
    const MetricCell& at(int i, int j) const;
    bool has(int i, int j) const;
};

struct QueryOutcome {
    Triple triple;
    bool tail_query = true;
    double rank = 0.0;
    EntityId top1 = -1;
    int source_snapshot = 0;
};

// Encodes all entities once under fixed parameters and answers 1-vs-all
// queries against them.
class ModelScorer {
public:
    ModelScorer(const Model& model, const ModalityView& view);
    std::vector<double> tail_scores(EntityId h, RelationId r) const;
    std::vector<double> head_scores(RelationId r, EntityId t) const;
    int64_t entity_count() const { return graph_.n; }

private:
    const Model& model_;
    mutable Tape tape_;
    ParamRefs refs_;
    EncodedGraph graph_;
};

// Both-direction outcomes over one test split with filtered ranking.
std::vector<QueryOutcome> evaluate_split(const ModelScorer& scorer, const TripleSet& filter,
                                         const std::vector<Triple>& split, int source_snapshot);
MetricCell metrics_from_outcomes(const std::vector<QueryOutcome>& outcomes);

// Row M[i][0..i]: test sets of all observed snapshots, filtered against every
// triple observed through snapshot i.
std::vector<MetricCell> evaluate_model(const Model& model, const SnapshotSequence& seq, int i,
                                       const ModalityView& view);

MetricCell avg_metrics(const std::vector<MetricCell>& row);
std::optional<double> bwt(const MetricMatrix& m);
std::vector<double> forgetting_curve(const MetricMatrix& m, int j);
struct NewVsOld {
    double mrr_new = 0.0;
    std::optional<double> mrr_old;
};
NewVsOld new_vs_old(const MetricMatrix& m, int i);

struct ErrorHistogram {
    int64_t forgetting = 0;
    int64_t cross_modal_ambiguity = 0;
    int64_t cold_start = 0;
    int64_t other = 0;
    bool forgetting_available = true;
    int64_t total() const { return forgetting + cross_modal_ambiguity + cold_start + other; }
};

// Precedence: forgetting (was top-1-correct under θ_j, j < i), cold_start
// (new entity with degree <= threshold), cross-modal ambiguity
// (mm_similarity(predicted, gold) >= threshold), other.
ErrorHistogram classify_errors(const Model& current, int i,
                               const std::function<const Model*(int)>& checkpoint_of,
                               const SnapshotSequence& seq, const ModalityView& view,
                               const EvalConfig& cfg);

std::string metric_matrix_to_json(const MetricMatrix& m);
MetricMatrix metric_matrix_from_json(const std::string& text);

// Writes report.csv, report.json and plots/*.csv under run_dir.
void emit_report(const std::string& run_dir, const MetricMatrix& m,
                 const ErrorHistogram* errors, bool complete);

}  // namespace mrckg
