/* MRCKG C API: continual multimodal knowledge-graph reasoning engine.
 *
 * All functions return a status code; on failure an error message is copied
 * into the caller-provided buffer (always NUL-terminated when errcap > 0).
 * Opaque handles are created/destroyed by the library.
 */
#ifndef MRCKG_H
#define MRCKG_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum mrckg_status {
    MRCKG_OK = 0,
    MRCKG_VALIDATION_FAILED = 1, /* benchmark invariants violated */
    MRCKG_FAULT = 2,             /* contract violation or internal failure */
    MRCKG_BAD_ARGUMENT = 3,
    MRCKG_IO_ERROR = 4
} mrckg_status;

const char* mrckg_status_name(mrckg_status s);
const char* mrckg_version(void);

/* ---- benchmark construction and inspection ---- */

typedef struct mrckg_benchmark mrckg_benchmark;

typedef struct mrckg_bench_options {
    const char* base_tsv;        /* required: head\trelation\ttail per line */
    const char* out_dir;         /* required */
    const char* strategy;        /* "entity" | "higher" | "equal" */
    int snapshots;               /* T, default 5 */
    double bridge_ratio;         /* default 0.15 */
    const char* split;           /* "3:1:1" */
    uint64_t seed;
    const char* visual_features; /* NULL unless ingesting */
    const char* text_features;   /* NULL unless ingesting */
    int synth_features;          /* nonzero: synthesize community-correlated features */
    double synth_coverage_visual; /* <=0 defaults to 0.9 */
    double synth_coverage_text;
} mrckg_bench_options;

mrckg_status mrckg_bench_build(const mrckg_bench_options* opts, char* err, size_t errcap);
mrckg_status mrckg_bench_open(const char* dir, mrckg_benchmark** out, char* err, size_t errcap);
void mrckg_bench_close(mrckg_benchmark* bench);
/* violation count is 0 for a valid benchmark; the first violations are
 * described in the error buffer. */
mrckg_status mrckg_bench_validate(const mrckg_benchmark* bench, size_t* violations, char* err,
                                  size_t errcap);
mrckg_status mrckg_bench_snapshot_count(const mrckg_benchmark* bench, int* out);
mrckg_status mrckg_bench_entity_count(const mrckg_benchmark* bench, int snapshot, int64_t* out);
mrckg_status mrckg_bench_relation_count(const mrckg_benchmark* bench, int snapshot,
                                        int64_t* out);

/* ---- training, evaluation, reporting ---- */

typedef struct mrckg_train_options {
    const char* bench_dir;  /* required */
    const char* out_dir;    /* required: run directory */
    const char* mode;       /* mrckg|finetune|ewc|replay_only|structure_cl */
    const char* ablations;  /* comma-separated subset of
                               no_cmkp,no_mmcr,no_mscl,no_prog,no_visual,no_text */
    const char* config_file; /* optional JSON overriding defaults */
    uint64_t seed;
} mrckg_train_options;

mrckg_status mrckg_train(const mrckg_train_options* opts, char* err, size_t errcap);
/* upto < 0 evaluates every stored checkpoint. Rewrites metrics.json. */
mrckg_status mrckg_evaluate(const char* run_dir, int upto, char* err, size_t errcap);
/* Writes report.csv, report.json and plots/ under the run directory. */
mrckg_status mrckg_report(const char* run_dir, char* err, size_t errcap);

/* Gradient self-check on a toy model; *max_rel_error receives the worst
 * relative error across all loss terms. */
mrckg_status mrckg_selfcheck_grad(uint64_t seed, double* max_rel_error, char* err,
                                  size_t errcap);

#ifdef __cplusplus
} /* extern "C" */
#endif

#endif /* MRCKG_H */
