#pragma once

#include <optional>
#include <set>
#include <string>

#include "backbone.hpp"
#include "curriculum.hpp"
#include "eval.hpp"
#include "graph.hpp"
#include "io.hpp"
#include "modality.hpp"
#include "preservation.hpp"
#include "replay.hpp"

namespace mrckg {

enum class Mode { mrckg, finetune, ewc, replay_only, structure_cl };
Mode mode_from_string(const std::string& s);
std::string mode_name(Mode m);

struct TrainConfig {
    Mode mode = Mode::mrckg;
    std::set<std::string> ablations;  // no_cmkp,no_mmcr,no_mscl,no_prog,no_visual,no_text
    int epochs = 50;
    double stage1_fraction = 0.3;
    double lr = 5e-4;
    int batch_size = 128;
    double lambda_cmkp = 1.0;
    double lambda_rep = 0.5;
    double lambda_ewc = 100.0;
    int patience = 10;  // <= 0 disables early stopping
    uint64_t seed = 0;
    double smooth_l1_beta = 1.0;
    ModelConfig model;
    CurriculumConfig curriculum;
    ReplayConfig replay;
    PreservationConfig preservation;
    EvalConfig eval;

    void validate() const;
    bool has(const std::string& ablation) const { return ablations.count(ablation) > 0; }
    bool two_stage() const { return mode == Mode::mrckg || mode == Mode::structure_cl; }
    bool cmkp_enabled() const { return two_stage() && !has("no_cmkp"); }
    bool mmcr_enabled() const { return two_stage() && !has("no_mmcr"); }
    bool mscl_enabled() const { return two_stage() && !has("no_mscl"); }
    bool progressive() const { return mscl_enabled() && !has("no_prog"); }
    bool replay_mixing() const { return mmcr_enabled() || mode == Mode::replay_only; }
    ModalityView make_view(const ModalityStore& store) const;
};

std::string train_config_to_json(const TrainConfig& cfg, const std::string& bench_dir);
// Applies the JSON object's fields over the given defaults.
TrainConfig train_config_overrides(const TrainConfig& base, const std::string& json_text);

struct LossBreakdown {
    double kgr = 0, str = 0, mod = 0, align = 0, remb = 0, rpat = 0, anc = 0;
    double rep_emb = 0, rep_score = 0, ewc = 0, total = 0;
    void accumulate(const LossBreakdown& o, double w);
};

struct RunOptions {
    std::string out_dir;    // empty: no files are written
    std::string bench_dir;  // echoed into config.json
};

struct RunResult {
    MetricMatrix matrix;
};

RunResult run_sequence(const SnapshotSequence& seq, const ModalityStore& store,
                       const TrainConfig& cfg, const RunOptions& opts);

// Re-evaluates stored checkpoints of a finished/partial run directory.
MetricMatrix evaluate_run(const std::string& run_dir, int upto);
// Emits report files (metrics must exist); classifies errors when checkpoints allow.
void report_run(const std::string& run_dir);

}  // namespace mrckg
