#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "cdnas/rng.hpp"

namespace cdnas {

// One response event: student answered exercise, right (1) or wrong (0).
struct ResponseLog {
    int student = 0;
    int exercise = 0;
    int score = 0;
};

// M x K binary exercise-concept tagging matrix.
struct QMatrix {
    int exercises = 0;
    int concepts = 0;
    std::vector<uint8_t> cells;  // row-major

    uint8_t at(int exercise, int concept_id) const {
        return cells[size_t(exercise) * concepts + concept_id];
    }
    // Q row as doubles, usable directly as the h_C input.
    std::vector<double> row(int exercise) const;
};

enum class Split { Train, Val, Test };

struct ResponseDataset {
    int num_students = 0;   // N
    int num_exercises = 0;  // M
    int num_concepts = 0;   // K
    QMatrix q;
    std::vector<ResponseLog> train, val, test;

    std::vector<std::string> student_ids;   // dense -> raw
    std::vector<std::string> exercise_ids;  // dense -> raw

    // Row indices into the pre-split log order, kept for the split manifest.
    std::vector<size_t> train_rows, val_rows, test_rows;

    const std::vector<ResponseLog>& split(Split s) const {
        switch (s) {
            case Split::Train: return train;
            case Split::Val: return val;
            default: return test;
        }
    }
    size_t total_logs() const { return train.size() + val.size() + test.size(); }
};

struct RawData {
    std::vector<ResponseLog> logs;
    QMatrix q;
    std::vector<std::string> student_ids;
    std::vector<std::string> exercise_ids;
};

// logs CSV: header student_id,exercise_id,score. Q CSV: either the dense
// header exercise_id,concept_1..concept_K with 0/1 cells, or sparse pairs
// exercise_id,concept_id. Raw ids are remapped to dense 0-based indices;
// errors carry the offending line number.
RawData load_dataset(const std::string& logs_path, const std::string& q_path);

// Drops students with fewer than min_logs events and re-densifies student
// indices. Throws DataError when nothing survives.
void filter_students(RawData& data, int min_logs = 15);

struct SplitRatios {
    double train = 0.7, val = 0.1, test = 0.2;
};

// Per-student shuffle + cut at round(train*n) / round((train+val)*n).
ResponseDataset split_per_student(const RawData& data, SplitRatios ratios, uint64_t seed);

// Shuffled index batches over a split; the tail batch may be short. The
// permutation is keyed by (seed, epoch).
std::vector<std::vector<int>> batches(size_t n, int batch_size, uint64_t seed, int epoch);

struct SyntheticSpec {
    int students = 200;
    int exercises = 100;
    int concepts = 8;
    int logs_per_student = 40;
    uint64_t seed = 0;
    double signal_scale = 1.0;  // stddev of the planted embedding entries
};

// Planted matrix-factorization generator: p = sigmoid(<w_s, w_e>) with
// Gaussian planted embeddings, Bernoulli scores, random Q rows.
RawData make_synthetic(const SyntheticSpec& spec);

// CSV writers matching load_dataset's formats.
void write_logs_csv(const RawData& data, const std::string& path);
void write_q_csv(const RawData& data, const std::string& path);

// Split manifest: seed, ratios and per-split log row order, as JSON text.
std::string split_manifest_json(const ResponseDataset& ds, SplitRatios ratios, uint64_t seed);

}  // namespace cdnas
