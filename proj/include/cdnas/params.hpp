#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "cdnas/rng.hpp"

namespace cdnas {

// Row-major rows x cols parameter matrix with its Adam moment buffers.
struct Tensor {
    int rows = 0, cols = 0;
    std::vector<double> data;
    std::vector<double> m, v;
    bool monotonic = false;  // projected entrywise to >= 0 after every step

    size_t size() const { return data.size(); }
    const double* row(int r) const { return data.data() + size_t(r) * cols; }
    double* row(int r) { return data.data() + size_t(r) * cols; }
};

// Gradient buffers keyed by tensor name; each buffer matches the tensor's
// layout. std::map keeps iteration order deterministic.
using GradMap = std::map<std::string, std::vector<double>>;

struct ParamStore {
    std::map<std::string, Tensor> tensors;
    int64_t step = 0;

    Tensor& add(const std::string& name, int rows, int cols, bool monotonic = false);
    Tensor& at(const std::string& name);
    const Tensor& at(const std::string& name) const;
    bool has(const std::string& name) const { return tensors.count(name) != 0; }

    // Deep copy / restore of parameter values only (not moments).
    std::map<std::string, std::vector<double>> snapshot() const;
    void restore(const std::map<std::string, std::vector<double>>& snap);
};

// Xavier-uniform fill: +-sqrt(6 / (fan_in + fan_out)).
void xavier_fill(Tensor& t, int fan_in, int fan_out, Rng& rng);

// One Adam update (beta1=0.9, beta2=0.999, eps=1e-8) over the tensors named
// in grads, followed by the nonnegativity projection on monotonic tensors.
// Tensors absent from grads are untouched.
void adam_step(ParamStore& store, const GradMap& grads, double lr);

}  // namespace cdnas
