#include "mrckg/mrckg.h"

#include <algorithm>
#include <array>
#include <cstdio>
#include <cstring>
#include <string>

#include "benchmark.hpp"
#include "io.hpp"
#include "selfcheck.hpp"
#include "trainer.hpp"

#include <json.hpp>

using namespace mrckg;

namespace {

void set_err(char* err, size_t errcap, const std::string& msg) {
    if (!err || errcap == 0) return;
    const size_t n = std::min(errcap - 1, msg.size());
    std::memcpy(err, msg.data(), n);
    err[n] = '\0';
}

template <typename Fn>
mrckg_status guarded(char* err, size_t errcap, Fn&& fn) {
    try {
        return fn();
    } catch (const Fault& f) {
        set_err(err, errcap, f.what());
        return MRCKG_FAULT;
    } catch (const std::exception& e) {
        set_err(err, errcap, e.what());
        return MRCKG_FAULT;
    }
}

std::array<int, 3> parse_split(const char* split) {
    std::array<int, 3> ratio{3, 1, 1};
    if (!split || !*split) return ratio;
    if (std::sscanf(split, "%d:%d:%d", &ratio[0], &ratio[1], &ratio[2]) != 3)
        throw Fault(std::string("bad split ratio: ") + split);
    return ratio;
}

}  // namespace

struct mrckg_benchmark {
    Benchmark bench;
};

extern "C" {

const char* mrckg_status_name(mrckg_status s) {
    switch (s) {
        case MRCKG_OK: return "ok";
        case MRCKG_VALIDATION_FAILED: return "validation_failed";
        case MRCKG_FAULT: return "fault";
        case MRCKG_BAD_ARGUMENT: return "bad_argument";
        case MRCKG_IO_ERROR: return "io_error";
    }
    return "unknown";
}

const char* mrckg_version(void) { return "0.1.0"; }

mrckg_status mrckg_bench_build(const mrckg_bench_options* opts, char* err, size_t errcap) {
    if (!opts || !opts->base_tsv || !opts->out_dir) {
        set_err(err, errcap, "base_tsv and out_dir are required");
        return MRCKG_BAD_ARGUMENT;
    }
    return guarded(err, errcap, [&]() -> mrckg_status {
        BuildConfig cfg;
        cfg.T = opts->snapshots > 0 ? opts->snapshots : 5;
        cfg.strategy = strategy_from_string(opts->strategy ? opts->strategy : "entity");
        cfg.bridge_ratio = opts->bridge_ratio >= 0 ? opts->bridge_ratio : 0.15;
        cfg.split_ratio = parse_split(opts->split);
        cfg.seed = opts->seed;
        cfg.synth = opts->synth_features != 0;
        if (opts->synth_coverage_visual > 0) cfg.coverage_visual = opts->synth_coverage_visual;
        if (opts->synth_coverage_text > 0) cfg.coverage_text = opts->synth_coverage_text;

        BaseKG base = BaseKG::from_triples(read_triples_tsv(opts->base_tsv));

        ModalityStore ingested;
        const ModalityStore* base_store = nullptr;
        const bool has_vis = opts->visual_features && *opts->visual_features;
        const bool has_txt = opts->text_features && *opts->text_features;
        if (cfg.synth && (has_vis || has_txt))
            throw Fault("choose either --synth or feature files, not both");
        if (has_vis || has_txt) {
            ingested = ingest_features(has_vis ? opts->visual_features : "",
                                       has_txt ? opts->text_features : "");
            base_store = &ingested;
        }

        BuildResult built = build_sequence(base, cfg, base_store);

        nlohmann::json bc;
        bc["T"] = cfg.T;
        bc["strategy"] = strategy_name(cfg.strategy);
        bc["bridge_ratio"] = cfg.bridge_ratio;
        bc["split"] = {cfg.split_ratio[0], cfg.split_ratio[1], cfg.split_ratio[2]};
        bc["seed"] = cfg.seed;
        bc["synth"] = cfg.synth;
        bc["base"] = opts->base_tsv;
        bc["warnings"] = built.warnings;
        save_benchmark(opts->out_dir, built.seq, built.store, bc.dump(2) + "\n");

        nlohmann::json idm;
        idm["entities"] = built.entity_map;
        idm["relations"] = built.relation_map;
        write_text_file(std::string(opts->out_dir) + "/id_map.json", idm.dump(2) + "\n");
        return MRCKG_OK;
    });
}

mrckg_status mrckg_bench_open(const char* dir, mrckg_benchmark** out, char* err, size_t errcap) {
    if (!dir || !out) {
        set_err(err, errcap, "dir and out are required");
        return MRCKG_BAD_ARGUMENT;
    }
    return guarded(err, errcap, [&]() -> mrckg_status {
        auto* handle = new mrckg_benchmark{load_benchmark(dir)};
        *out = handle;
        return MRCKG_OK;
    });
}

void mrckg_bench_close(mrckg_benchmark* bench) { delete bench; }

mrckg_status mrckg_bench_validate(const mrckg_benchmark* bench, size_t* violations, char* err,
                                  size_t errcap) {
    if (!bench) return MRCKG_BAD_ARGUMENT;
    const ValidationReport& rep = bench->bench.report;
    if (violations) *violations = rep.violations.size();
    if (!rep.ok()) {
        set_err(err, errcap, rep.to_string());
        return MRCKG_VALIDATION_FAILED;
    }
    return MRCKG_OK;
}

mrckg_status mrckg_bench_snapshot_count(const mrckg_benchmark* bench, int* out) {
    if (!bench || !out) return MRCKG_BAD_ARGUMENT;
    *out = bench->bench.seq.T();
    return MRCKG_OK;
}

mrckg_status mrckg_bench_entity_count(const mrckg_benchmark* bench, int snapshot, int64_t* out) {
    if (!bench || !out) return MRCKG_BAD_ARGUMENT;
    if (snapshot < 0 || snapshot >= bench->bench.seq.T()) return MRCKG_BAD_ARGUMENT;
    *out = bench->bench.seq.at(snapshot).entity_count;
    return MRCKG_OK;
}

mrckg_status mrckg_bench_relation_count(const mrckg_benchmark* bench, int snapshot,
                                        int64_t* out) {
    if (!bench || !out) return MRCKG_BAD_ARGUMENT;
    if (snapshot < 0 || snapshot >= bench->bench.seq.T()) return MRCKG_BAD_ARGUMENT;
    *out = bench->bench.seq.at(snapshot).relation_count;
    return MRCKG_OK;
}

mrckg_status mrckg_train(const mrckg_train_options* opts, char* err, size_t errcap) {
    if (!opts || !opts->bench_dir || !opts->out_dir) {
        set_err(err, errcap, "bench_dir and out_dir are required");
        return MRCKG_BAD_ARGUMENT;
    }
    return guarded(err, errcap, [&]() -> mrckg_status {
        Benchmark bench = load_benchmark(opts->bench_dir);
        if (!bench.report.ok()) {
            set_err(err, errcap, bench.report.to_string());
            return MRCKG_VALIDATION_FAILED;
        }
        TrainConfig cfg;
        if (opts->config_file && *opts->config_file)
            cfg = train_config_overrides(cfg, read_text_file(opts->config_file));
        if (opts->mode && *opts->mode) cfg.mode = mode_from_string(opts->mode);
        if (opts->ablations && *opts->ablations) {
            cfg.ablations.clear();
            std::string list = opts->ablations;
            size_t at = 0;
            while (at != std::string::npos) {
                const size_t comma = list.find(',', at);
                const std::string item = list.substr(
                    at, comma == std::string::npos ? std::string::npos : comma - at);
                if (!item.empty()) cfg.ablations.insert(item);
                at = comma == std::string::npos ? std::string::npos : comma + 1;
            }
        }
        cfg.seed = opts->seed;
        cfg.validate();
        RunOptions ro;
        ro.out_dir = opts->out_dir;
        ro.bench_dir = opts->bench_dir;
        run_sequence(bench.seq, bench.store, cfg, ro);
        return MRCKG_OK;
    });
}

mrckg_status mrckg_evaluate(const char* run_dir, int upto, char* err, size_t errcap) {
    if (!run_dir) return MRCKG_BAD_ARGUMENT;
    return guarded(err, errcap, [&]() -> mrckg_status {
        evaluate_run(run_dir, upto);
        return MRCKG_OK;
    });
}

mrckg_status mrckg_report(const char* run_dir, char* err, size_t errcap) {
    if (!run_dir) return MRCKG_BAD_ARGUMENT;
    return guarded(err, errcap, [&]() -> mrckg_status {
        report_run(run_dir);
        return MRCKG_OK;
    });
}

mrckg_status mrckg_selfcheck_grad(uint64_t seed, double* max_rel_error, char* err,
                                  size_t errcap) {
    return guarded(err, errcap, [&]() -> mrckg_status {
        const SelfCheckResult res = selfcheck_grad(seed);
        if (max_rel_error) *max_rel_error = res.max_rel_error;
        std::string detail;
        for (const auto& [name, e] : res.per_term)
            detail += name + "=" + format_double(e) + " ";
        set_err(err, errcap, detail);
        return MRCKG_OK;
    });
}

}  // extern "C"
