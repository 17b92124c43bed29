#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string_view>

namespace cdnas {

// The 15 operators a computation node may carry.
enum class OpKind : uint8_t {
    Neg,
    Abs,
    Inv,
    Square,
    Sqrt,
    Tanh,
    Sigmoid,
    Softplus,
    Sum,
    Mean,
    FFN,
    FFN_D,
    Add,
    Mul,
    Concat,
};

inline constexpr int kNumOps = 15;

// How the output shape follows from the input shape(s).
enum class ShapeRule : uint8_t {
    Same,      // output shape equals the input's
    Single,    // scalar output
    Constant,  // Vector(D) output
    Maximum,   // vector if either input is a vector
};

inline constexpr std::array<OpKind, kNumOps> kAllOps = {
    OpKind::Neg,     OpKind::Abs,  OpKind::Inv,  OpKind::Square, OpKind::Sqrt,
    OpKind::Tanh,    OpKind::Sigmoid, OpKind::Softplus, OpKind::Sum, OpKind::Mean,
    OpKind::FFN,     OpKind::FFN_D, OpKind::Add, OpKind::Mul,    OpKind::Concat,
};

// Unary operators that accept any input shape; the pool infeasible unary
// nodes are repaired from.
inline constexpr std::array<OpKind, 8> kSameShapeUnaryOps = {
    OpKind::Neg,  OpKind::Abs,     OpKind::Inv,      OpKind::Square,
    OpKind::Sqrt, OpKind::Tanh,    OpKind::Sigmoid,  OpKind::Softplus,
};

// Pool an infeasible Concat is repaired from.
inline constexpr std::array<OpKind, 2> kBroadcastBinaryOps = {OpKind::Add, OpKind::Mul};

inline constexpr int arity(OpKind k) {
    switch (k) {
        case OpKind::Add:
        case OpKind::Mul:
        case OpKind::Concat:
            return 2;
        default:
            return 1;
    }
}

inline constexpr ShapeRule shape_rule(OpKind k) {
    switch (k) {
        case OpKind::Sum:
        case OpKind::Mean:
        case OpKind::FFN:
            return ShapeRule::Single;
        case OpKind::FFN_D:
        case OpKind::Concat:
            return ShapeRule::Constant;
        case OpKind::Add:
        case OpKind::Mul:
            return ShapeRule::Maximum;
        default:
            return ShapeRule::Same;
    }
}

// True for operators backed by a trainable weight matrix.
inline constexpr bool has_params(OpKind k) {
    return k == OpKind::FFN || k == OpKind::FFN_D || k == OpKind::Concat;
}

// Vector-only input requirement (both inputs for Concat).
inline constexpr bool requires_vector_input(OpKind k) {
    return k == OpKind::Sum || k == OpKind::Mean || k == OpKind::FFN ||
           k == OpKind::FFN_D || k == OpKind::Concat;
}

inline constexpr std::string_view op_name(OpKind k) {
    switch (k) {
        case OpKind::Neg: return "Neg";
        case OpKind::Abs: return "Abs";
        case OpKind::Inv: return "Inv";
        case OpKind::Square: return "Square";
        case OpKind::Sqrt: return "Sqrt";
        case OpKind::Tanh: return "Tanh";
        case OpKind::Sigmoid: return "Sigmoid";
        case OpKind::Softplus: return "Softplus";
        case OpKind::Sum: return "Sum";
        case OpKind::Mean: return "Mean";
        case OpKind::FFN: return "FFN";
        case OpKind::FFN_D: return "FFN_D";
        case OpKind::Add: return "Add";
        case OpKind::Mul: return "Mul";
        case OpKind::Concat: return "Concat";
    }
    return "?";
}

inline std::optional<OpKind> parse_op(std::string_view name) {
    for (OpKind k : kAllOps)
        if (op_name(k) == name) return k;
    return std::nullopt;
}

}  // namespace cdnas
