#pragma once

// Test-only oracles and fixtures. These stay independent of the library code
// paths they check: brute-force AUC, naive non-dominated sorting, a finite
// difference gradient checker and a small DOT syntax checker.

#include <cctype>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "cdnas/data.hpp"
#include "cdnas/operators.hpp"
#include "cdnas/rng.hpp"
#include "cdnas/tape.hpp"
#include "cdnas/value.hpp"

namespace testkit {

// O(n_pos * n_neg) pairwise AUC with 0.5 for ties.
inline double brute_auc(const std::vector<double>& preds, const std::vector<int>& labels) {
    double wins = 0;
    size_t pairs = 0;
    for (size_t i = 0; i < preds.size(); ++i) {
        if (labels[i] != 1) continue;
        for (size_t j = 0; j < preds.size(); ++j) {
            if (labels[j] != 0) continue;
            ++pairs;
            if (preds[i] > preds[j])
                wins += 1.0;
            else if (preds[i] == preds[j])
                wins += 0.5;
        }
    }
    return wins / double(pairs);
}

// Peeling-based non-dominated sort, O(n^2) per front.
inline std::vector<int> brute_nondominated_sort(
    const std::vector<std::pair<double, double>>& pts) {
    auto dom = [](const std::pair<double, double>& a, const std::pair<double, double>& b) {
        return a.first >= b.first && a.second >= b.second &&
               (a.first > b.first || a.second > b.second);
    };
    std::vector<int> rank(pts.size(), -1);
    int level = 0;
    size_t assigned = 0;
    while (assigned < pts.size()) {
        std::vector<size_t> layer;
        for (size_t p = 0; p < pts.size(); ++p) {
            if (rank[p] != -1) continue;
            bool dominated = false;
            for (size_t q = 0; q < pts.size(); ++q) {
                if (q == p || rank[q] != -1) continue;
                if (dom(pts[q], pts[p])) {
                    dominated = true;
                    break;
                }
            }
            if (!dominated) layer.push_back(p);
        }
        for (size_t p : layer) rank[p] = level;
        assigned += layer.size();
        ++level;
    }
    return rank;
}

// Direct-formula crowding: for each point scan the front for its sorted
// neighbors per objective.
inline std::vector<double> brute_crowding(const std::vector<std::pair<double, double>>& front) {
    size_t n = front.size();
    constexpr double inf = std::numeric_limits<double>::infinity();
    std::vector<double> dist(n, 0.0);
    if (n <= 2) return std::vector<double>(n, inf);
    for (int obj = 0; obj < 2; ++obj) {
        auto val = [&](size_t i) { return obj == 0 ? front[i].first : front[i].second; };
        std::vector<size_t> order(n);
        for (size_t i = 0; i < n; ++i) order[i] = i;
        std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
            if (val(a) != val(b)) return val(a) < val(b);
            return a < b;
        });
        dist[order.front()] = dist[order.back()] = inf;
        double range = val(order.back()) - val(order.front());
        if (range <= 0) continue;
        for (size_t i = 1; i + 1 < n; ++i)
            if (dist[order[i]] != inf)
                dist[order[i]] += (val(order[i + 1]) - val(order[i - 1])) / range;
    }
    return dist;
}

// --- finite-difference gradient checking ------------------------------------

struct OpProbe {
    cdnas::OpKind op;
    std::vector<cdnas::Value> inputs;
    std::vector<double> weights;  // empty unless the operator carries one
    int wrows = 0, wcols = 0;
};

inline std::vector<double> probe_forward(const OpProbe& p) {
    cdnas::Tape tape;
    int slot = -1;
    if (!p.weights.empty()) slot = tape.add_param(p.weights.data(), p.wrows, p.wcols);
    int a = tape.input(p.inputs[0]);
    int b = p.inputs.size() > 1 ? tape.input(p.inputs[1]) : -1;
    int out = tape.apply(p.op, a, b, slot);
    return tape.value(out).v;
}

struct GradCheckStats {
    double max_rel_err = 0;
    int checks = 0;
};

// Compares reverse-mode gradients of one primitive against central
// differences, over inputs and (when present) weights.
inline GradCheckStats grad_check_op(OpProbe p, double h = 1e-5) {
    GradCheckStats stats;
    std::vector<double> base = probe_forward(p);
    int out_len = int(base.size());

    auto record = [&](double analytic, double numeric) {
        double denom = std::max({std::fabs(analytic), std::fabs(numeric), 1e-6});
        double rel = std::fabs(analytic - numeric) / denom;
        // near-zero derivatives: fall back to an absolute comparison
        if (std::fabs(analytic) < 1e-6 && std::fabs(numeric) < 1e-6) rel = 0;
        stats.max_rel_err = std::max(stats.max_rel_err, rel);
        stats.checks++;
    };

    for (int j = 0; j < out_len; ++j) {
        cdnas::Tape tape;
        int slot = -1;
        if (!p.weights.empty()) slot = tape.add_param(p.weights.data(), p.wrows, p.wcols);
        int a = tape.input(p.inputs[0]);
        int b = p.inputs.size() > 1 ? tape.input(p.inputs[1]) : -1;
        int out = tape.apply(p.op, a, b, slot);
        std::vector<double> seed(out_len, 0.0);
        seed[j] = 1.0;
        tape.backward(out, seed.data(), out_len);

        for (size_t which = 0; which < p.inputs.size(); ++which) {
            int node = which == 0 ? a : b;
            const double* adj = tape.adjoint(node);
            for (int i = 0; i < p.inputs[which].dim(); ++i) {
                OpProbe plus = p, minus = p;
                plus.inputs[which].v[i] += h;
                minus.inputs[which].v[i] -= h;
                double numeric = (probe_forward(plus)[j] - probe_forward(minus)[j]) / (2 * h);
                record(adj[i], numeric);
            }
        }
        if (slot >= 0) {
            const auto& gw = tape.param_grad(slot);
            for (size_t i = 0; i < p.weights.size(); ++i) {
                OpProbe plus = p, minus = p;
                plus.weights[i] += h;
                minus.weights[i] -= h;
                double numeric = (probe_forward(plus)[j] - probe_forward(minus)[j]) / (2 * h);
                record(gw[i], numeric);
            }
        }
    }
    return stats;
}

// Random magnitudes bounded away from the Abs/Sqrt kinks and the Inv pole.
inline double safe_draw(cdnas::Rng& rng) {
    double mag = 0.2 + 1.8 * rng.real();
    return rng.coin() ? mag : -mag;
}

inline OpProbe make_probe(cdnas::OpKind op, cdnas::Rng& rng, int d = 5) {
    OpProbe p;
    p.op = op;
    auto vec = [&](int len) {
        std::vector<double> xs(len);
        for (double& x : xs) x = safe_draw(rng);
        return cdnas::Value::vector(std::move(xs));
    };
    using cdnas::OpKind;
    bool vector_only = cdnas::requires_vector_input(op);
    auto operand = [&]() {
        if (vector_only || rng.coin()) return vec(d);
        return cdnas::Value::scalar(safe_draw(rng));
    };
    p.inputs.push_back(operand());
    if (cdnas::arity(op) == 2) {
        p.inputs.push_back(operand());
        // Add/Mul vectors must agree in length; operand() already uses d.
    }
    if (op == OpKind::FFN) {
        p.wrows = d;
        p.wcols = 1;
    } else if (op == OpKind::FFN_D) {
        p.wrows = d;
        p.wcols = d;
    } else if (op == OpKind::Concat) {
        p.wrows = 2 * d;
        p.wcols = d;
    }
    if (p.wrows > 0) {
        p.weights.resize(size_t(p.wrows) * p.wcols);
        for (double& w : p.weights) w = safe_draw(rng);
    }
    return p;
}

// --- misc --------------------------------------------------------------------

// Minimal DOT well-formedness check: "digraph <id> {" then node statements
// `id [attrs];`, edge statements `id -> id;` or `key=value;`, closed brace.
inline bool dot_well_formed(const std::string& text) {
    size_t pos = 0;
    auto skip_ws = [&]() {
        while (pos < text.size() && std::isspace((unsigned char)text[pos])) ++pos;
    };
    auto word = [&]() {
        skip_ws();
        size_t start = pos;
        while (pos < text.size() &&
               (std::isalnum((unsigned char)text[pos]) || text[pos] == '_'))
            ++pos;
        return text.substr(start, pos - start);
    };
    if (word() != "digraph") return false;
    if (word().empty()) return false;
    skip_ws();
    if (pos >= text.size() || text[pos] != '{') return false;
    ++pos;
    while (true) {
        skip_ws();
        if (pos >= text.size()) return false;
        if (text[pos] == '}') {
            ++pos;
            break;
        }
        if (word().empty()) return false;
        skip_ws();
        if (pos < text.size() && text[pos] == '[') {  // attribute list
            size_t close = text.find(']', pos);
            if (close == std::string::npos) return false;
            pos = close + 1;
        } else if (pos + 1 < text.size() && text[pos] == '-' && text[pos + 1] == '>') {
            pos += 2;
            if (word().empty()) return false;
        } else if (pos < text.size() && text[pos] == '=') {
            ++pos;
            if (word().empty()) return false;
        }
        skip_ws();
        if (pos >= text.size() || text[pos] != ';') return false;
        ++pos;
    }
    skip_ws();
    return pos == text.size();
}

// Small planted dataset for fast training tests.
inline cdnas::ResponseDataset tiny_dataset(uint64_t seed = 7, int students = 30,
                                           int exercises = 20, int concepts = 4,
                                           int logs_per_student = 20) {
    cdnas::SyntheticSpec spec;
    spec.students = students;
    spec.exercises = exercises;
    spec.concepts = concepts;
    spec.logs_per_student = logs_per_student;
    spec.seed = seed;
    cdnas::RawData raw = cdnas::make_synthetic(spec);
    cdnas::filter_students(raw);
    return cdnas::split_per_student(raw, {}, seed + 1);
}

}  // namespace testkit
