#pragma once

#include <vector>

#include "cdnas/params.hpp"

namespace cdnas {

// Batched three-FC-layer output head for vector-rooted trees:
//   z3 = FC3(sigmoid(FC2(sigmoid(FC1(y)))))
// returned pre-sigmoid. Weight tensors are monotonic-flagged so every
// coordinate of the prediction is nondecreasing in every coordinate of y.
class FcHead {
public:
    FcHead(int in_dim, int h1 = 512, int h2 = 256);

    // Adds fc1/fc2/fc3 weight+bias tensors (weights Xavier, biases zero).
    void register_params(ParamStore& store, Rng& rng) const;
    static bool registered(const ParamStore& store) { return store.has("fc1.W"); }

    // y: batch x in_dim row-major. Keeps activations for backward.
    // Throws NumericOverflow when any activation leaves the guarded range.
    void forward(const ParamStore& store, const double* y, int batch, std::vector<double>& z3);

    // dz3: d(loss)/d(z3) per item. Accumulates parameter gradients into
    // grads and writes d(loss)/d(y) (batch x in_dim) into dy.
    void backward(const ParamStore& store, const double* y, int batch,
                  const std::vector<double>& dz3, GradMap& grads, std::vector<double>& dy);

    int in_dim() const { return in_; }

private:
    int in_, h1_, h2_;
    std::vector<double> z1_, z2_;  // post-sigmoid activations of the last forward
};

}  // namespace cdnas
