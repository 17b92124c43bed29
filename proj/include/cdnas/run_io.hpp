#pragma once

#include <string>

#include "cdnas/data.hpp"
#include "cdnas/evolve.hpp"

namespace cdnas {

inline constexpr const char* kToolVersion = "0.1.0";

// What a search run leaves on disk:
//   config.json   full SearchConfig + dataset manifest
//   manifest.json run manifest (config echo, dataset fingerprint, version,
//                 wall-clock per phase, status)
//   history.csv   generation,best_f1,front_size,archive_size
//   split.json    split seed/ratios and per-split row indices
//   archive.jsonl one {key, f1, f2} object per line
//   front/        ind_NNN.json + ind_NNN.dot per non-dominated individual

struct RunPhaseClock {
    double init_seconds = 0;
    double search_seconds = 0;
    double total_seconds = 0;
};

// Written atomically (temp file + rename). status: "running" or "complete".
void write_manifest(const std::string& dir, const std::string& config_echo_json,
                    const std::string& dataset_fingerprint, const std::string& status,
                    const RunPhaseClock& clock);

// Returns the manifest "status" field, or "" when there is no manifest.
std::string read_manifest_status(const std::string& dir);

void write_history_csv(const std::string& path, const std::vector<GenRecord>& history);

void write_archive_jsonl(const std::string& path, const Archive& archive);

// ind_000.json carries the tree, objectives and tree metrics; ind_000.dot the
// Graphviz rendering. Files are numbered in the front's sort order.
void write_front_dir(const std::string& dir, const std::vector<Individual>& front);

// FNV-1a over the raw bytes of both CSV inputs, hex-encoded.
std::string fingerprint_files(const std::string& logs_path, const std::string& q_path);
std::string fingerprint_text(const std::string& text);

}  // namespace cdnas
