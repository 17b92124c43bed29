#include "cdnas/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace cdnas {

EvalReport evaluate(const std::vector<double>& preds, const std::vector<int>& labels) {
    if (preds.size() != labels.size())
        throw std::invalid_argument("prediction/label length mismatch");
    if (preds.empty()) throw std::invalid_argument("empty prediction list");

    EvalReport r;
    r.n = preds.size();

    size_t correct = 0;
    double sq = 0;
    size_t n_pos = 0;
    for (size_t i = 0; i < preds.size(); ++i) {
        int hard = preds[i] >= 0.5 ? 1 : 0;
        correct += hard == labels[i];
        double d = preds[i] - labels[i];
        sq += d * d;
        n_pos += labels[i] == 1;
    }
    r.acc = double(correct) / double(r.n);
    r.rmse = std::sqrt(sq / double(r.n));

    size_t n_neg = r.n - n_pos;
    if (n_pos == 0 || n_neg == 0) return r;  // AUC undefined

    // Mann-Whitney via average ranks; ties share their rank, which credits
    // tied positive-negative pairs 0.5 each.
    std::vector<size_t> order(r.n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](size_t a, size_t b) { return preds[a] < preds[b]; });

    double rank_sum_pos = 0;
    size_t i = 0;
    while (i < r.n) {
        size_t j = i;
        while (j + 1 < r.n && preds[order[j + 1]] == preds[order[i]]) ++j;
        double avg_rank = 0.5 * double(i + j) + 1.0;  // ranks are 1-based
        for (size_t t = i; t <= j; ++t)
            if (labels[order[t]] == 1) rank_sum_pos += avg_rank;
        i = j + 1;
    }
    double u = rank_sum_pos - double(n_pos) * double(n_pos + 1) / 2.0;
    r.auc = u / (double(n_pos) * double(n_neg));
    return r;
}

double auc_or_half(const std::vector<double>& preds, const std::vector<int>& labels) {
    EvalReport r = evaluate(preds, labels);
    return r.auc.value_or(0.5);
}

}  // namespace cdnas
