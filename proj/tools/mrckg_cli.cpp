// mrckg command-line front end. Talks to the engine exclusively through the
// C API in mrckg/mrckg.h; exit codes: 0 success, 1 validation failure,
// 2 fault/usage error.
#include <CLI11.hpp>
#include <cstdio>
#include <string>

#include "mrckg/mrckg.h"

namespace {

constexpr size_t kErrCap = 8192;

int status_to_exit(mrckg_status s) {
    switch (s) {
        case MRCKG_OK: return 0;
        case MRCKG_VALIDATION_FAILED: return 1;
        default: return 2;
    }
}

int finish(mrckg_status s, const char* err) {
    if (s != MRCKG_OK) std::fprintf(stderr, "error (%s): %s\n", mrckg_status_name(s), err);
    return status_to_exit(s);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"mrckg: continual multimodal knowledge-graph reasoning engine"};
    app.require_subcommand(1);
    char err[kErrCap] = {0};

    // ---- bench ----
    auto* bench = app.add_subcommand("bench", "benchmark construction and checks");
    bench->require_subcommand(1);

    auto* build = bench->add_subcommand("build", "build a snapshot benchmark from a base KG");
    std::string base_tsv, out_dir, strategy = "entity", split = "3:1:1";
    std::string features_visual, features_text;
    bool synth = false;
    int snapshots = 5;
    double bridge_ratio = 0.15, cov_v = 0.9, cov_t = 0.9;
    uint64_t seed = 0;
    build->add_option("--base", base_tsv, "base triples TSV")->required();
    build->add_option("--out", out_dir, "output benchmark directory")->required();
    build->add_option("--strategy", strategy, "entity|higher|equal");
    build->add_option("--snapshots", snapshots, "number of snapshots T");
    build->add_option("--bridge-ratio", bridge_ratio, "bridge share of each delta");
    build->add_option("--split", split, "train:valid:test ratio");
    build->add_option("--seed", seed, "build seed");
    build->add_option("--features-visual", features_visual, "visual token feature file");
    build->add_option("--features-text", features_text, "text token feature file");
    build->add_flag("--synth", synth, "synthesize community-correlated features");
    build->add_option("--synth-coverage-visual", cov_v, "visual coverage in [0,1]");
    build->add_option("--synth-coverage-text", cov_t, "text coverage in [0,1]");
    build->callback([&]() {
        mrckg_bench_options o{};
        o.base_tsv = base_tsv.c_str();
        o.out_dir = out_dir.c_str();
        o.strategy = strategy.c_str();
        o.snapshots = snapshots;
        o.bridge_ratio = bridge_ratio;
        o.split = split.c_str();
        o.seed = seed;
        o.visual_features = features_visual.empty() ? nullptr : features_visual.c_str();
        o.text_features = features_text.empty() ? nullptr : features_text.c_str();
        o.synth_features = synth ? 1 : 0;
        o.synth_coverage_visual = cov_v;
        o.synth_coverage_text = cov_t;
        mrckg_status s = mrckg_bench_build(&o, err, kErrCap);
        if (s == MRCKG_OK) {
            mrckg_benchmark* b = nullptr;
            s = mrckg_bench_open(out_dir.c_str(), &b, err, kErrCap);
            if (s == MRCKG_OK) {
                size_t violations = 0;
                s = mrckg_bench_validate(b, &violations, err, kErrCap);
                if (s == MRCKG_OK) {
                    int t = 0;
                    mrckg_bench_snapshot_count(b, &t);
                    int64_t ents = 0;
                    mrckg_bench_entity_count(b, t - 1, &ents);
                    std::printf("built %s: %d snapshots, %lld entities, valid\n",
                                out_dir.c_str(), t, static_cast<long long>(ents));
                }
                mrckg_bench_close(b);
            }
        }
        std::exit(finish(s, err));
    });

    auto* validate = bench->add_subcommand("validate", "validate a benchmark directory");
    std::string vdir;
    validate->add_option("--bench", vdir, "benchmark directory")->required();
    validate->callback([&]() {
        mrckg_benchmark* b = nullptr;
        mrckg_status s = mrckg_bench_open(vdir.c_str(), &b, err, kErrCap);
        if (s == MRCKG_OK) {
            size_t violations = 0;
            s = mrckg_bench_validate(b, &violations, err, kErrCap);
            std::printf("%s: %zu violations\n", vdir.c_str(), violations);
            mrckg_bench_close(b);
        }
        std::exit(finish(s, err));
    });

    // ---- train ----
    auto* train = app.add_subcommand("train", "train a model over a benchmark");
    std::string bench_dir, run_dir, mode = "mrckg", ablate, config_file;
    uint64_t train_seed = 0;
    train->add_option("--bench", bench_dir, "benchmark directory")->required();
    train->add_option("--out", run_dir, "run output directory")->required();
    train->add_option("--mode", mode, "mrckg|finetune|ewc|replay-only|structure-cl");
    train->add_option("--ablate", ablate,
                      "comma list: no_cmkp,no_mmcr,no_mscl,no_prog,no_visual,no_text");
    train->add_option("--config", config_file, "JSON config overriding defaults");
    train->add_option("--seed", train_seed, "training seed");
    train->callback([&]() {
        mrckg_train_options o{};
        o.bench_dir = bench_dir.c_str();
        o.out_dir = run_dir.c_str();
        o.mode = mode.c_str();
        o.ablations = ablate.empty() ? nullptr : ablate.c_str();
        o.config_file = config_file.empty() ? nullptr : config_file.c_str();
        o.seed = train_seed;
        const mrckg_status s = mrckg_train(&o, err, kErrCap);
        if (s == MRCKG_OK) std::printf("run complete: %s\n", run_dir.c_str());
        std::exit(finish(s, err));
    });

    // ---- eval ----
    auto* eval = app.add_subcommand("eval", "re-evaluate stored checkpoints");
    std::string eval_run;
    int upto = -1;
    eval->add_option("--run", eval_run, "run directory")->required();
    eval->add_option("--upto", upto, "last snapshot index to evaluate");
    eval->callback([&]() {
        const mrckg_status s = mrckg_evaluate(eval_run.c_str(), upto, err, kErrCap);
        if (s == MRCKG_OK) std::printf("metrics written: %s/metrics.json\n", eval_run.c_str());
        std::exit(finish(s, err));
    });

    // ---- report ----
    auto* report = app.add_subcommand("report", "emit report files for a run");
    std::string report_run_dir, format = "json";
    report->add_option("--run", report_run_dir, "run directory")->required();
    report->add_option("--format", format, "csv|json")->check(CLI::IsMember({"csv", "json"}));
    report->callback([&]() {
        const mrckg_status s = mrckg_report(report_run_dir.c_str(), err, kErrCap);
        if (s == MRCKG_OK)
            std::printf("report written: %s/report.%s\n", report_run_dir.c_str(),
                        format.c_str());
        std::exit(finish(s, err));
    });

    // ---- selfcheck ----
    auto* selfcheck = app.add_subcommand("selfcheck", "internal consistency checks");
    auto* grad = selfcheck->add_subcommand("grad", "gradient check on a toy model");
    uint64_t check_seed = 7;
    grad->add_option("--seed", check_seed, "toy model seed");
    grad->callback([&]() {
        double max_err = 0.0;
        const mrckg_status s = mrckg_selfcheck_grad(check_seed, &max_err, err, kErrCap);
        if (s == MRCKG_OK) {
            std::printf("max relative gradient error: %.3e\n%s\n", max_err, err);
            std::exit(max_err < 1e-4 ? 0 : 1);
        }
        std::exit(finish(s, err));
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return 0;  // --help
        std::fprintf(stderr, "%s\n", app.help().c_str());
        return 2;
    }
    return 0;
}
