#pragma once

#include <cassert>
#include <cstdint>
#include <vector>

namespace cdnas {

enum class ValShape : uint8_t { Scalar, Vector };

// A scalar or a length-D vector. D is fixed per dataset (D = K).
struct Value {
    ValShape shape = ValShape::Scalar;
    std::vector<double> v;

    static Value scalar(double x) { return Value{ValShape::Scalar, {x}}; }
    static Value vector(std::vector<double> xs) {
        return Value{ValShape::Vector, std::move(xs)};
    }

    bool is_vector() const { return shape == ValShape::Vector; }
    int dim() const { return int(v.size()); }
    double s() const {
        assert(shape == ValShape::Scalar);
        return v[0];
    }
};

}  // namespace cdnas
