#include "cdnas/fc_head.hpp"

#include <cmath>
#include <cstring>

#include "cdnas/errors.hpp"
#include "cdnas/tape.hpp"

namespace cdnas {

namespace {

void guard_all(const double* p, size_t n, const char* where) {
    for (size_t i = 0; i < n; ++i)
        if (!std::isfinite(p[i]) || std::fabs(p[i]) > kValueGuard)
            throw NumericOverflow(std::string("value out of range in ") + where);
}

}  // namespace

FcHead::FcHead(int in_dim, int h1, int h2) : in_(in_dim), h1_(h1), h2_(h2) {}

void FcHead::register_params(ParamStore& store, Rng& rng) const {
    xavier_fill(store.add("fc1.W", in_, h1_, true), in_, h1_, rng);
    store.add("fc1.b", 1, h1_);
    xavier_fill(store.add("fc2.W", h1_, h2_, true), h1_, h2_, rng);
    store.add("fc2.b", 1, h2_);
    xavier_fill(store.add("fc3.W", h2_, 1, true), h2_, 1, rng);
    store.add("fc3.b", 1, 1);
}

void FcHead::forward(const ParamStore& store, const double* y, int batch,
                     std::vector<double>& z3) {
    const Tensor& w1 = store.at("fc1.W");
    const Tensor& b1 = store.at("fc1.b");
    const Tensor& w2 = store.at("fc2.W");
    const Tensor& b2 = store.at("fc2.b");
    const Tensor& w3 = store.at("fc3.W");
    const Tensor& b3 = store.at("fc3.b");

    z1_.assign(size_t(batch) * h1_, 0.0);
    z2_.assign(size_t(batch) * h2_, 0.0);
    z3.assign(batch, 0.0);

    for (int i = 0; i < batch; ++i) {
        double* a1 = z1_.data() + size_t(i) * h1_;
        std::memcpy(a1, b1.data.data(), h1_ * sizeof(double));
        const double* yi = y + size_t(i) * in_;
        for (int k = 0; k < in_; ++k) {
            double yv = yi[k];
            const double* wrow = w1.row(k);
            for (int j = 0; j < h1_; ++j) a1[j] += yv * wrow[j];
        }
        guard_all(a1, h1_, "fc1");
        for (int j = 0; j < h1_; ++j) a1[j] = stable_sigmoid(a1[j]);

        double* a2 = z2_.data() + size_t(i) * h2_;
        std::memcpy(a2, b2.data.data(), h2_ * sizeof(double));
        for (int k = 0; k < h1_; ++k) {
            double zv = a1[k];
            const double* wrow = w2.row(k);
            for (int j = 0; j < h2_; ++j) a2[j] += zv * wrow[j];
        }
        guard_all(a2, h2_, "fc2");
        for (int j = 0; j < h2_; ++j) a2[j] = stable_sigmoid(a2[j]);

        double acc = b3.data[0];
        for (int j = 0; j < h2_; ++j) acc += a2[j] * w3.data[j];
        z3[i] = acc;
    }
    guard_all(z3.data(), z3.size(), "fc3");
}

void FcHead::backward(const ParamStore& store, const double* y, int batch,
                      const std::vector<double>& dz3, GradMap& grads, std::vector<double>& dy) {
    const Tensor& w1 = store.at("fc1.W");
    const Tensor& w2 = store.at("fc2.W");
    const Tensor& w3 = store.at("fc3.W");

    auto& g_w1 = grads["fc1.W"];
    auto& g_b1 = grads["fc1.b"];
    auto& g_w2 = grads["fc2.W"];
    auto& g_b2 = grads["fc2.b"];
    auto& g_w3 = grads["fc3.W"];
    auto& g_b3 = grads["fc3.b"];
    if (g_w1.empty()) {
        g_w1.assign(w1.size(), 0.0);
        g_b1.assign(h1_, 0.0);
        g_w2.assign(w2.size(), 0.0);
        g_b2.assign(h2_, 0.0);
        g_w3.assign(w3.size(), 0.0);
        g_b3.assign(1, 0.0);
    }

    dy.assign(size_t(batch) * in_, 0.0);
    std::vector<double> da2(h2_), da1(h1_);

    for (int i = 0; i < batch; ++i) {
        const double* a1 = z1_.data() + size_t(i) * h1_;
        const double* a2 = z2_.data() + size_t(i) * h2_;
        double g3 = dz3[i];

        g_b3[0] += g3;
        for (int j = 0; j < h2_; ++j) {
            g_w3[j] += a2[j] * g3;
            // through the fc2 sigmoid
            da2[j] = g3 * w3.data[j] * a2[j] * (1.0 - a2[j]);
            g_b2[j] += da2[j];
        }

        for (int k = 0; k < h1_; ++k) {
            const double* wrow = w2.row(k);
            double* growk = g_w2.data() + size_t(k) * h2_;
            double zv = a1[k];
            double acc = 0;
            for (int j = 0; j < h2_; ++j) {
                acc += da2[j] * wrow[j];
                growk[j] += zv * da2[j];
            }
            da1[k] = acc * a1[k] * (1.0 - a1[k]);
            g_b1[k] += da1[k];
        }

        const double* yi = y + size_t(i) * in_;
        double* dyi = dy.data() + size_t(i) * in_;
        for (int k = 0; k < in_; ++k) {
            const double* wrow = w1.row(k);
            double* growk = g_w1.data() + size_t(k) * h1_;
            double yv = yi[k];
            double acc = 0;
            for (int j = 0; j < h1_; ++j) {
                acc += da1[j] * wrow[j];
                growk[j] += yv * da1[j];
            }
            dyi[k] = acc;
        }
    }
}

}  // namespace cdnas
