#include "cdnas/params.hpp"

#include <cmath>
#include <stdexcept>

namespace cdnas {

Tensor& ParamStore::add(const std::string& name, int rows, int cols, bool monotonic) {
    Tensor t;
    t.rows = rows;
    t.cols = cols;
    t.data.assign(size_t(rows) * cols, 0.0);
    t.m.assign(t.data.size(), 0.0);
    t.v.assign(t.data.size(), 0.0);
    t.monotonic = monotonic;
    auto [it, fresh] = tensors.emplace(name, std::move(t));
    if (!fresh) throw std::logic_error("duplicate parameter tensor: " + name);
    return it->second;
}

Tensor& ParamStore::at(const std::string& name) {
    auto it = tensors.find(name);
    if (it == tensors.end()) throw std::logic_error("no parameter tensor: " + name);
    return it->second;
}

const Tensor& ParamStore::at(const std::string& name) const {
    auto it = tensors.find(name);
    if (it == tensors.end()) throw std::logic_error("no parameter tensor: " + name);
    return it->second;
}

std::map<std::string, std::vector<double>> ParamStore::snapshot() const {
    std::map<std::string, std::vector<double>> snap;
    for (const auto& [name, t] : tensors) snap[name] = t.data;
    return snap;
}

void ParamStore::restore(const std::map<std::string, std::vector<double>>& snap) {
    for (const auto& [name, data] : snap) at(name).data = data;
}

void xavier_fill(Tensor& t, int fan_in, int fan_out, Rng& rng) {
    double bound = std::sqrt(6.0 / (fan_in + fan_out));
    for (double& x : t.data) x = rng.uniform(-bound, bound);
}

void adam_step(ParamStore& store, const GradMap& grads, double lr) {
    constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    store.step += 1;
    double bc1 = 1.0 - std::pow(beta1, double(store.step));
    double bc2 = 1.0 - std::pow(beta2, double(store.step));

    for (const auto& [name, g] : grads) {
        Tensor& t = store.at(name);
        if (g.size() != t.data.size())
            throw std::logic_error("gradient size mismatch for " + name);
        for (size_t i = 0; i < g.size(); ++i) {
            t.m[i] = beta1 * t.m[i] + (1.0 - beta1) * g[i];
            t.v[i] = beta2 * t.v[i] + (1.0 - beta2) * g[i] * g[i];
            double mhat = t.m[i] / bc1;
            double vhat = t.v[i] / bc2;
            t.data[i] -= lr * mhat / (std::sqrt(vhat) + eps);
        }
        if (t.monotonic)
            for (double& x : t.data) x = std::max(x, 0.0);
    }
}

}  // namespace cdnas
