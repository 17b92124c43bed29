#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "cdnas/data.hpp"
#include "cdnas/fc_head.hpp"
#include "cdnas/genome.hpp"
#include "cdnas/metrics.hpp"
#include "cdnas/params.hpp"
#include "cdnas/tape.hpp"

namespace cdnas {

enum class OutputMode { ScalarDirect, VectorFCHead };

struct Dims {
    int students = 0;   // N
    int exercises = 0;  // M
    int concepts = 0;   // K; the embedding dimension D equals K
};

struct TrainConfig {
    int epochs = 30;
    double lr = 0.001;
    int batch_size = 128;
    int patience = 5;
    uint64_t seed = 0;
};

struct EpochRecord {
    int epoch = 0;  // 1-based
    double train_loss = 0;
    double val_auc = 0;
};

struct TrainResult {
    double best_val_auc = 0.5;
    int best_epoch = 0;
    bool overflowed = false;
    std::vector<EpochRecord> trace;
};

// A GenomeTree bound to trainable parameters: embedding matrices, per-node
// operator weights, and the FC head when the root is vector-shaped.
class CandidateModel {
public:
    // Initializes a fresh ParamStore from the seed. The tree must be
    // feasible; infeasible trees raise ShapeError naming the bad nodes.
    CandidateModel(GenomeTree tree, Dims dims, uint64_t seed);

    const GenomeTree& tree() const { return tree_; }
    OutputMode output_mode() const { return mode_; }
    Dims dims() const { return dims_; }
    ParamStore& store() { return store_; }
    const ParamStore& store() const { return store_; }

    // Per-item probabilities in [1e-7, 1-1e-7]. Scalar-rooted trees get a
    // final sigmoid unless the root operator is already Sigmoid.
    std::vector<double> predict(const QMatrix& q, const std::vector<ResponseLog>& items);

    // Probability for a given tree output vector (VectorFCHead models only).
    double predict_from_tree_output(const std::vector<double>& y);

    // Cross-entropy + Adam on the train split, early-stopped on validation
    // AUC; restores the best-epoch parameters before returning.
    TrainResult train(const ResponseDataset& ds, const TrainConfig& cfg);

private:
    struct ForwardCtx;

    void bind_tape(Tape& tape, std::vector<int>& node_slot) const;
    int forward_item(Tape& tape, const std::vector<int>& node_slot,
                     const std::vector<double>& q_rows, int student, int exercise,
                     std::vector<int>& node_tape_id) const;

    GenomeTree tree_;
    Dims dims_;
    OutputMode mode_;
    bool sigmoid_root_;
    ParamStore store_;
    std::unique_ptr<FcHead> head_;
};

inline CandidateModel assemble(GenomeTree tree, Dims dims, uint64_t seed) {
    return CandidateModel(std::move(tree), dims, seed);
}

// JSON manifest + raw little-endian parameter blob + epoch trace CSV,
// written as <dir>/model.json, <dir>/params.bin and <dir>/trace.csv.
void save_checkpoint(const CandidateModel& model, const TrainConfig& cfg,
                     const TrainResult& result, const EvalReport& test_report,
                     const std::string& dir);

inline constexpr double kProbClamp = 1e-7;

}  // namespace cdnas
