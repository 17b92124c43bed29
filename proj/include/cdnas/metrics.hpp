#pragma once

#include <optional>
#include <vector>

namespace cdnas {

struct EvalReport {
    double acc = 0;
    double rmse = 0;
    std::optional<double> auc;  // empty when labels are single-class
    size_t n = 0;
};

// ACC at threshold 0.5, RMSE of probabilities against binary labels, and AUC
// as the Mann-Whitney statistic with ties credited 0.5.
EvalReport evaluate(const std::vector<double>& preds, const std::vector<int>& labels);

// AUC alone; 0.5 fallback when undefined (used as the fitness of a candidate
// whose validation labels are single-class).
double auc_or_half(const std::vector<double>& preds, const std::vector<int>& labels);

}  // namespace cdnas
