#include "cdnas/model.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "cdnas/errors.hpp"

namespace cdnas {

namespace {

std::string node_param_name(int node_id) { return "n" + std::to_string(node_id) + ".W"; }

double clamp_prob(double p) { return std::clamp(p, kProbClamp, 1.0 - kProbClamp); }

double bce(double p, int r) {
    p = clamp_prob(p);
    return r ? -std::log(p) : -std::log(1.0 - p);
}

}  // namespace

CandidateModel::CandidateModel(GenomeTree tree, Dims dims, uint64_t seed)
    : tree_(std::move(tree)), dims_(dims) {
    ShapeInfo shapes = infer_shapes(tree_);
    if (!shapes.feasible()) {
        std::string ids;
        for (int id : shapes.infeasible) ids += " " + std::to_string(id);
        throw ShapeError("tree has infeasible nodes:" + ids);
    }
    mode_ = shapes.shape[tree_.root()] == ValShape::Vector ? OutputMode::VectorFCHead
                                                           : OutputMode::ScalarDirect;
    sigmoid_root_ = tree_.at(tree_.root()).op == OpKind::Sigmoid;

    int d = dims_.concepts;
    Rng rng(seed);
    xavier_fill(store_.add("W_S", dims_.students, d), dims_.students, d, rng);
    xavier_fill(store_.add("W_E", dims_.exercises, d), dims_.exercises, d, rng);
    for (int i = 0; i < tree_.num_nodes(); ++i) {
        const TreeNode& n = tree_.at(i);
        if (n.is_leaf || !has_params(n.op)) continue;
        switch (n.op) {
            case OpKind::FFN:
                xavier_fill(store_.add(node_param_name(i), d, 1), d, 1, rng);
                break;
            case OpKind::FFN_D:
                xavier_fill(store_.add(node_param_name(i), d, d), d, d, rng);
                break;
            default:  // Concat
                xavier_fill(store_.add(node_param_name(i), 2 * d, d), 2 * d, d, rng);
                break;
        }
    }
    if (mode_ == OutputMode::VectorFCHead) {
        head_ = std::make_unique<FcHead>(d);
        head_->register_params(store_, rng);
    }
}

void CandidateModel::bind_tape(Tape& tape, std::vector<int>& node_slot) const {
    node_slot.assign(tree_.num_nodes(), -1);
    for (int i = 0; i < tree_.num_nodes(); ++i) {
        const TreeNode& n = tree_.at(i);
        if (n.is_leaf || !has_params(n.op)) continue;
        const Tensor& t = store_.at(node_param_name(i));
        node_slot[i] = tape.add_param(t.data.data(), t.rows, t.cols);
    }
}

int CandidateModel::forward_item(Tape& tape, const std::vector<int>& node_slot,
                                 const std::vector<double>& q_rows, int student, int exercise,
                                 std::vector<int>& node_tape_id) const {
    int d = dims_.concepts;
    node_tape_id.assign(tree_.num_nodes(), -1);
    // Children carry higher pre-order ids, so a reverse sweep evaluates them
    // before their parents.
    for (int i = tree_.num_nodes() - 1; i >= 0; --i) {
        const TreeNode& n = tree_.at(i);
        if (n.is_leaf) {
            const double* src = nullptr;
            switch (n.leaf) {
                case LeafKind::HS: src = store_.at("W_S").row(student); break;
                case LeafKind::HE: src = store_.at("W_E").row(exercise); break;
                case LeafKind::HC: src = q_rows.data() + size_t(exercise) * d; break;
            }
            node_tape_id[i] = tape.input(ValShape::Vector, src, d);
        } else {
            int a = node_tape_id[n.child0];
            int b = n.child1 >= 0 ? node_tape_id[n.child1] : -1;
            node_tape_id[i] = tape.apply(n.op, a, b, node_slot[i]);
        }
    }
    return node_tape_id[tree_.root()];
}

std::vector<double> CandidateModel::predict(const QMatrix& q,
                                            const std::vector<ResponseLog>& items) {
    int d = dims_.concepts;
    std::vector<double> q_rows(size_t(q.exercises) * d);
    for (int e = 0; e < q.exercises; ++e)
        for (int k = 0; k < d; ++k) q_rows[size_t(e) * d + k] = q.at(e, k);

    Tape tape;
    std::vector<int> node_slot, node_tape_id;
    bind_tape(tape, node_slot);

    std::vector<double> probs(items.size());
    if (mode_ == OutputMode::ScalarDirect) {
        for (size_t i = 0; i < items.size(); ++i) {
            tape.clear();
            int root = forward_item(tape, node_slot, q_rows, items[i].student, items[i].exercise,
                                    node_tape_id);
            double y = tape.data(root)[0];
            probs[i] = clamp_prob(sigmoid_root_ ? y : stable_sigmoid(y));
        }
    } else {
        const int chunk = 128;
        std::vector<double> y_block(size_t(chunk) * d), z3;
        for (size_t start = 0; start < items.size(); start += chunk) {
            int b = int(std::min(items.size() - start, size_t(chunk)));
            for (int i = 0; i < b; ++i) {
                tape.clear();
                int root = forward_item(tape, node_slot, q_rows, items[start + i].student,
                                        items[start + i].exercise, node_tape_id);
                std::copy(tape.data(root), tape.data(root) + d, y_block.begin() + size_t(i) * d);
            }
            head_->forward(store_, y_block.data(), b, z3);
            for (int i = 0; i < b; ++i) probs[start + i] = clamp_prob(stable_sigmoid(z3[i]));
        }
    }
    return probs;
}

double CandidateModel::predict_from_tree_output(const std::vector<double>& y) {
    if (mode_ != OutputMode::VectorFCHead)
        throw std::logic_error("predict_from_tree_output requires a vector-rooted model");
    std::vector<double> z3;
    head_->forward(store_, y.data(), 1, z3);
    return clamp_prob(stable_sigmoid(z3[0]));
}

TrainResult CandidateModel::train(const ResponseDataset& ds, const TrainConfig& cfg) {
    if (ds.train.empty() || ds.val.empty()) throw DataError("train/val split is empty");

    int d = dims_.concepts;
    std::vector<double> q_rows(size_t(ds.q.exercises) * d);
    for (int e = 0; e < ds.q.exercises; ++e)
        for (int k = 0; k < d; ++k) q_rows[size_t(e) * d + k] = ds.q.at(e, k);

    Tape tape;
    std::vector<int> node_slot, node_tape_id;
    bind_tape(tape, node_slot);

    // Which tree nodes read trainable embedding rows.
    struct LeafRef {
        int tree_node;
        LeafKind kind;
    };
    std::vector<LeafRef> leaf_refs;
    for (int i = 0; i < tree_.num_nodes(); ++i)
        if (tree_.at(i).is_leaf && tree_.at(i).leaf != LeafKind::HC)
            leaf_refs.push_back({i, tree_.at(i).leaf});

    GradMap grads;
    grads["W_S"].assign(store_.at("W_S").size(), 0.0);
    grads["W_E"].assign(store_.at("W_E").size(), 0.0);
    for (int i = 0; i < tree_.num_nodes(); ++i)
        if (!tree_.at(i).is_leaf && has_params(tree_.at(i).op))
            grads[node_param_name(i)].assign(store_.at(node_param_name(i)).size(), 0.0);

    TrainResult result;
    result.best_val_auc = -1.0;
    auto best_snap = store_.snapshot();

    std::vector<double> y_block, z3, dz3, dy;
    std::vector<int> labels_scratch;

    auto run_epoch = [&](int epoch) -> double {
        double loss_sum = 0;
        size_t loss_n = 0;
        for (const auto& batch : batches(ds.train.size(), cfg.batch_size, cfg.seed, epoch)) {
            int b = int(batch.size());
            for (auto& [name, buf] : grads) std::fill(buf.begin(), buf.end(), 0.0);
            tape.zero_param_grads();
            double* g_ws = grads["W_S"].data();
            double* g_we = grads["W_E"].data();

            if (mode_ == OutputMode::ScalarDirect) {
                for (int i = 0; i < b; ++i) {
                    const ResponseLog& log = ds.train[batch[i]];
                    tape.clear();
                    int root = forward_item(tape, node_slot, q_rows, log.student, log.exercise,
                                            node_tape_id);
                    double y = tape.data(root)[0];
                    double p = sigmoid_root_ ? y : stable_sigmoid(y);
                    loss_sum += bce(p, log.score);

                    // d(mean BCE)/d(pre-sigmoid) = (p - r)/b; when the root is
                    // already Sigmoid, seed its input node instead.
                    double seed = (p - log.score) / b;
                    int seed_node = sigmoid_root_ ? node_tape_id[tree_.at(tree_.root()).child0]
                                                  : root;
                    tape.backward(seed_node, &seed, 1);
                    for (const auto& ref : leaf_refs) {
                        const double* adj = tape.adjoint(node_tape_id[ref.tree_node]);
                        double* dst = (ref.kind == LeafKind::HS ? g_ws : g_we) +
                                      size_t(ref.kind == LeafKind::HS ? log.student
                                                                      : log.exercise) *
                                          d;
                        for (int k = 0; k < d; ++k) dst[k] += adj[k];
                    }
                }
            } else {
                y_block.assign(size_t(b) * d, 0.0);
                dz3.assign(b, 0.0);
                for (int i = 0; i < b; ++i) {
                    const ResponseLog& log = ds.train[batch[i]];
                    tape.clear();
                    int root = forward_item(tape, node_slot, q_rows, log.student, log.exercise,
                                            node_tape_id);
                    std::copy(tape.data(root), tape.data(root) + d,
                              y_block.begin() + size_t(i) * d);
                }
                head_->forward(store_, y_block.data(), b, z3);
                for (int i = 0; i < b; ++i) {
                    double p = stable_sigmoid(z3[i]);
                    loss_sum += bce(p, ds.train[batch[i]].score);
                    dz3[i] = (p - ds.train[batch[i]].score) / b;
                }
                head_->backward(store_, y_block.data(), b, dz3, grads, dy);
                // Second tree pass: replay each item and push its head
                // gradient through the tape.
                for (int i = 0; i < b; ++i) {
                    const ResponseLog& log = ds.train[batch[i]];
                    tape.clear();
                    int root = forward_item(tape, node_slot, q_rows, log.student, log.exercise,
                                            node_tape_id);
                    tape.backward(root, dy.data() + size_t(i) * d, d);
                    for (const auto& ref : leaf_refs) {
                        const double* adj = tape.adjoint(node_tape_id[ref.tree_node]);
                        double* dst = (ref.kind == LeafKind::HS ? g_ws : g_we) +
                                      size_t(ref.kind == LeafKind::HS ? log.student
                                                                      : log.exercise) *
                                          d;
                        for (int k = 0; k < d; ++k) dst[k] += adj[k];
                    }
                }
            }
            loss_n += b;

            for (int i = 0; i < tree_.num_nodes(); ++i) {
                if (node_slot[i] < 0) continue;
                const auto& g = tape.param_grad(node_slot[i]);
                auto& dst = grads[node_param_name(i)];
                for (size_t k = 0; k < g.size(); ++k) dst[k] += g[k];
            }
            adam_step(store_, grads, cfg.lr);
            tape.zero_param_grads();
        }
        return loss_sum / double(loss_n);
    };

    std::vector<int> val_labels(ds.val.size());
    for (size_t i = 0; i < ds.val.size(); ++i) val_labels[i] = ds.val[i].score;

    int stall = 0;
    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        double train_loss;
        try {
            train_loss = run_epoch(epoch);
        } catch (const NumericOverflow&) {
            result.overflowed = true;
            break;
        }
        double val_auc;
        try {
            val_auc = auc_or_half(predict(ds.q, ds.val), val_labels);
        } catch (const NumericOverflow&) {
            result.overflowed = true;
            break;
        }
        result.trace.push_back({epoch, train_loss, val_auc});
        if (val_auc > result.best_val_auc) {
            result.best_val_auc = val_auc;
            result.best_epoch = epoch;
            best_snap = store_.snapshot();
            stall = 0;
        } else if (++stall >= cfg.patience) {
            break;
        }
    }

    store_.restore(best_snap);
    if (result.best_val_auc < 0) result.best_val_auc = 0.5;  // overflow before any epoch
    return result;
}

void save_checkpoint(const CandidateModel& model, const TrainConfig& cfg,
                     const TrainResult& result, const EvalReport& test_report,
                     const std::string& dir) {
    std::filesystem::create_directories(dir);

    nlohmann::json manifest;
    manifest["tree_key"] = canonical_key(model.tree());
    manifest["tree"] = nlohmann::json::parse(to_json(model.tree()));
    Dims dims = model.dims();
    manifest["dims"] = {{"students", dims.students},
                        {"exercises", dims.exercises},
                        {"concepts", dims.concepts}};
    manifest["config"] = {{"epochs", cfg.epochs},
                          {"lr", cfg.lr},
                          {"batch_size", cfg.batch_size},
                          {"patience", cfg.patience},
                          {"seed", cfg.seed}};
    manifest["best_val_auc"] = result.best_val_auc;
    manifest["best_epoch"] = result.best_epoch;
    manifest["test"] = {{"acc", test_report.acc},
                        {"rmse", test_report.rmse},
                        {"n", test_report.n}};
    if (test_report.auc)
        manifest["test"]["auc"] = *test_report.auc;
    else
        manifest["test"]["auc"] = nullptr;

    nlohmann::json tensors = nlohmann::json::array();
    size_t offset = 0;
    std::ofstream blob(dir + "/params.bin", std::ios::binary);
    for (const auto& [name, t] : model.store().tensors) {
        tensors.push_back({{"name", name},
                           {"rows", t.rows},
                           {"cols", t.cols},
                           {"offset_bytes", offset}});
        blob.write(reinterpret_cast<const char*>(t.data.data()), t.data.size() * sizeof(double));
        offset += t.data.size() * sizeof(double);
    }
    manifest["tensors"] = std::move(tensors);

    std::ofstream mf(dir + "/model.json");
    mf << manifest.dump(2) << "\n";

    std::ofstream trace(dir + "/trace.csv");
    trace << "epoch,train_loss,val_auc\n";
    for (const auto& row : result.trace)
        trace << row.epoch << "," << row.train_loss << "," << row.val_auc << "\n";
}

}  // namespace cdnas
