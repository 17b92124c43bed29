#pragma once

#include <cstdint>
#include <vector>

#include "cdnas/errors.hpp"
#include "cdnas/operators.hpp"
#include "cdnas/value.hpp"

namespace cdnas {

// Records a forward pass over Values and plays it backwards for gradients.
// Node outputs live in one flat buffer so clearing between items reuses
// storage. Parameter slots (weight matrices of FFN/FFN_D/Concat nodes) are
// registered once and survive clear(); their gradients accumulate across
// backward() calls until zero_param_grads().
class Tape {
public:
    // Registers a weight matrix (row-major rows x cols). Returns the slot id.
    int add_param(const double* data, int rows, int cols);

    void zero_param_grads();
    const std::vector<double>& param_grad(int slot) const { return slots_[slot].grad; }
    int num_params() const { return int(slots_.size()); }

    int input(ValShape shape, const double* data, int len);
    int input(const Value& v) { return input(v.shape, v.v.data(), v.dim()); }

    // Records one primitive. b is the second operand for binary operators,
    // slot the parameter slot for FFN/FFN_D/Concat. Throws ShapeError on a
    // shape violation and NumericOverflow when an output entry leaves the
    // guarded range.
    int apply(OpKind op, int a, int b = -1, int slot = -1);

    ValShape shape(int node) const { return recs_[node].shape; }
    int len(int node) const { return recs_[node].len; }
    const double* data(int node) const { return buf_.data() + recs_[node].off; }
    Value value(int node) const;

    // Seeds d(out)/d(node) and propagates to all inputs and parameters.
    // seed_len must match len(node).
    void backward(int node, const double* seed, int seed_len);
    const double* adjoint(int node) const { return adj_.data() + recs_[node].off; }

    void clear();
    int num_nodes() const { return int(recs_.size()); }

private:
    struct Rec {
        OpKind op;
        bool is_input;
        int a, b, slot;
        int off, len;
        ValShape shape;
    };
    struct Slot {
        const double* data;
        int rows, cols;
        std::vector<double> grad;
    };

    int push(OpKind op, bool is_input, int a, int b, int slot, ValShape shape, int len);
    void guard(int node) const;

    std::vector<Rec> recs_;
    std::vector<double> buf_;
    std::vector<double> adj_;
    std::vector<Slot> slots_;
};

// Numerically stable helpers shared by the tape and the FC head.
double stable_sigmoid(double x);
double stable_softplus(double x);

}  // namespace cdnas
