#pragma once

#include <optional>
#include <string>

#include "backbone.hpp"
#include "graph.hpp"
#include "modality.hpp"

namespace mrckg {

std::vector<Triple> read_triples_tsv(const std::string& path);
void write_triples_tsv(const std::string& path, const std::vector<Triple>& triples);

std::string format_double(double v);  // shortest round-trip decimal

// Feature files: header "#dims <dim> <tokens>", then "<id>\tv1,v2,..." rows
// (tokens*dim values, row-major). Pooled files use the same layout with one
// vector per entity.
void write_token_features(const std::string& path, const ModalityStore& store, bool visual);
// Applies one token file onto a store side; pooled defaults to the token mean.
void read_token_features(const std::string& path, ModalityStore& store, bool visual);
void read_pooled_features(const std::string& path, ModalityStore& store, bool visual);

// visual_file/text_file may be empty strings (that side stays absent).
ModalityStore ingest_features(const std::string& visual_file, const std::string& text_file);

struct Benchmark {
    SnapshotSequence seq;
    ModalityStore store;
    ValidationReport report;
};

// Layout: meta.json, s{i}/{train,valid,test}.tsv, s{i}/delta_entities.txt,
// features/{visual,text}.tsv (+ optional *_pooled.tsv), build_config.json.
void save_benchmark(const std::string& dir, const SnapshotSequence& seq,
                    const ModalityStore& store, const std::string& build_config_json);
Benchmark load_benchmark(const std::string& dir);

// Checkpoints: params.bin (length-prefixed named tensors, little-endian f64)
// plus manifest.json (shapes, counts, seed, snapshot index).
void save_checkpoint(const std::string& dir, const Model& model, uint64_t seed,
                     int snapshot_index);
Model load_checkpoint(const std::string& dir);

void write_text_file(const std::string& path, const std::string& content);
std::string read_text_file(const std::string& path);

}  // namespace mrckg
