#include "cdnas/tape.hpp"

#include <cmath>
#include <cstring>
#include <string>

namespace cdnas {

namespace {
constexpr double kEps = 1e-6;

double sign(double x) { return x > 0 ? 1.0 : (x < 0 ? -1.0 : 0.0); }
}  // namespace

double stable_sigmoid(double x) {
    if (x >= 0) {
        return 1.0 / (1.0 + std::exp(-x));
    }
    double e = std::exp(x);
    return e / (1.0 + e);
}

double stable_softplus(double x) {
    return std::max(x, 0.0) + std::log1p(std::exp(-std::fabs(x)));
}

int Tape::add_param(const double* data, int rows, int cols) {
    Slot s;
    s.data = data;
    s.rows = rows;
    s.cols = cols;
    s.grad.assign(size_t(rows) * cols, 0.0);
    slots_.push_back(std::move(s));
    return int(slots_.size()) - 1;
}

void Tape::zero_param_grads() {
    for (auto& s : slots_) std::memset(s.grad.data(), 0, s.grad.size() * sizeof(double));
}

int Tape::push(OpKind op, bool is_input, int a, int b, int slot, ValShape shape, int len) {
    Rec r;
    r.op = op;
    r.is_input = is_input;
    r.a = a;
    r.b = b;
    r.slot = slot;
    r.off = int(buf_.size());
    r.len = len;
    r.shape = shape;
    buf_.resize(buf_.size() + len, 0.0);
    recs_.push_back(r);
    return int(recs_.size()) - 1;
}

void Tape::guard(int node) const {
    const Rec& r = recs_[node];
    const double* p = buf_.data() + r.off;
    for (int i = 0; i < r.len; ++i) {
        double v = p[i];
        if (!std::isfinite(v) || std::fabs(v) > kValueGuard) {
            throw NumericOverflow("value out of range in " +
                                  std::string(r.is_input ? "input" : op_name(r.op)));
        }
    }
}

int Tape::input(ValShape shape, const double* data, int len) {
    int id = push(OpKind::Neg, true, -1, -1, -1, shape, len);
    std::memcpy(buf_.data() + recs_[id].off, data, size_t(len) * sizeof(double));
    guard(id);
    return id;
}

Value Tape::value(int node) const {
    const Rec& r = recs_[node];
    Value v;
    v.shape = r.shape;
    v.v.assign(buf_.begin() + r.off, buf_.begin() + r.off + r.len);
    return v;
}

int Tape::apply(OpKind op, int a, int b, int slot) {
    int nargs = arity(op);
    if ((nargs == 1) != (b < 0)) throw StructuralError("wrong operand count for " + std::string(op_name(op)));

    const Rec& ra = recs_[a];
    const double* x = buf_.data() + ra.off;
    int la = ra.len;

    if (requires_vector_input(op)) {
        if (ra.shape != ValShape::Vector)
            throw ShapeError(std::string(op_name(op)) + " requires a vector input");
        if (op == OpKind::Concat && recs_[b].shape != ValShape::Vector)
            throw ShapeError("Concat requires two vector inputs");
    }
    if (has_params(op) && slot < 0) throw StructuralError("missing parameter slot for " + std::string(op_name(op)));

    // Output shape and length.
    ValShape out_shape;
    int out_len;
    switch (shape_rule(op)) {
        case ShapeRule::Same:
            out_shape = ra.shape;
            out_len = la;
            break;
        case ShapeRule::Single:
            out_shape = ValShape::Scalar;
            out_len = 1;
            break;
        case ShapeRule::Constant:
            out_shape = ValShape::Vector;
            out_len = slots_[slot].cols;
            break;
        case ShapeRule::Maximum: {
            const Rec& rb = recs_[b];
            if (ra.shape == ValShape::Vector && rb.shape == ValShape::Vector && la != rb.len)
                throw ShapeError("vector length mismatch in " + std::string(op_name(op)));
            out_shape = (ra.shape == ValShape::Vector || rb.shape == ValShape::Vector)
                            ? ValShape::Vector
                            : ValShape::Scalar;
            out_len = std::max(la, rb.len);
            break;
        }
    }

    if (has_params(op)) {
        const Slot& s = slots_[slot];
        int want_rows = (op == OpKind::Concat) ? 2 * la : la;
        int want_cols = (op == OpKind::FFN) ? 1 : la;
        if (s.rows != want_rows || s.cols != want_cols)
            throw StructuralError("parameter slot shape mismatch for " + std::string(op_name(op)));
    }

    int id = push(op, false, a, b, slot, out_shape, out_len);
    // push() may reallocate buf_; refresh pointers.
    x = buf_.data() + recs_[a].off;
    double* out = buf_.data() + recs_[id].off;

    switch (op) {
        case OpKind::Neg:
            for (int i = 0; i < la; ++i) out[i] = -x[i];
            break;
        case OpKind::Abs:
            for (int i = 0; i < la; ++i) out[i] = std::fabs(x[i]);
            break;
        case OpKind::Inv:
            for (int i = 0; i < la; ++i) out[i] = 1.0 / (x[i] + kEps);
            break;
        case OpKind::Square:
            for (int i = 0; i < la; ++i) out[i] = x[i] * x[i];
            break;
        case OpKind::Sqrt:
            for (int i = 0; i < la; ++i) out[i] = sign(x[i]) * std::sqrt(std::fabs(x[i]) + kEps);
            break;
        case OpKind::Tanh:
            for (int i = 0; i < la; ++i) out[i] = std::tanh(x[i]);
            break;
        case OpKind::Sigmoid:
            for (int i = 0; i < la; ++i) out[i] = stable_sigmoid(x[i]);
            break;
        case OpKind::Softplus:
            for (int i = 0; i < la; ++i) out[i] = stable_softplus(x[i]);
            break;
        case OpKind::Sum: {
            double acc = 0;
            for (int i = 0; i < la; ++i) acc += x[i];
            out[0] = acc;
            break;
        }
        case OpKind::Mean: {
            double acc = 0;
            for (int i = 0; i < la; ++i) acc += x[i];
            out[0] = acc / la;
            break;
        }
        case OpKind::FFN: {
            const double* w = slots_[slot].data;
            double acc = 0;
            for (int i = 0; i < la; ++i) acc += x[i] * w[i];
            out[0] = acc;
            break;
        }
        case OpKind::FFN_D: {
            const double* w = slots_[slot].data;  // la x la row-major
            for (int j = 0; j < out_len; ++j) out[j] = 0;
            for (int i = 0; i < la; ++i) {
                const double xi = x[i];
                const double* wrow = w + size_t(i) * out_len;
                for (int j = 0; j < out_len; ++j) out[j] += xi * wrow[j];
            }
            break;
        }
        case OpKind::Add:
        case OpKind::Mul: {
            const Rec& rb = recs_[b];
            const double* y = buf_.data() + rb.off;
            int lb = rb.len;
            bool mul = (op == OpKind::Mul);
            for (int i = 0; i < out_len; ++i) {
                double xv = x[la == 1 ? 0 : i];
                double yv = y[lb == 1 ? 0 : i];
                out[i] = mul ? xv * yv : xv + yv;
            }
            break;
        }
        case OpKind::Concat: {
            const Rec& rb = recs_[b];
            const double* y = buf_.data() + rb.off;
            const double* w = slots_[slot].data;  // 2D x D row-major
            for (int j = 0; j < out_len; ++j) out[j] = 0;
            for (int i = 0; i < la; ++i) {
                const double xi = x[i];
                const double* wrow = w + size_t(i) * out_len;
                for (int j = 0; j < out_len; ++j) out[j] += xi * wrow[j];
            }
            for (int i = 0; i < la; ++i) {
                const double yi = y[i];
                const double* wrow = w + size_t(la + i) * out_len;
                for (int j = 0; j < out_len; ++j) out[j] += yi * wrow[j];
            }
            break;
        }
    }

    guard(id);
    return id;
}

void Tape::backward(int node, const double* seed, int seed_len) {
    if (seed_len != recs_[node].len) throw StructuralError("seed length mismatch");
    adj_.assign(buf_.size(), 0.0);
    std::memcpy(adj_.data() + recs_[node].off, seed, size_t(seed_len) * sizeof(double));

    for (int id = node; id >= 0; --id) {
        const Rec& r = recs_[id];
        if (r.is_input) continue;
        const double* g = adj_.data() + r.off;
        const Rec& ra = recs_[r.a];
        const double* x = buf_.data() + ra.off;
        double* ga = adj_.data() + ra.off;
        const double* out = buf_.data() + r.off;
        int la = ra.len;

        switch (r.op) {
            case OpKind::Neg:
                for (int i = 0; i < la; ++i) ga[i] -= g[i];
                break;
            case OpKind::Abs:
                for (int i = 0; i < la; ++i) ga[i] += sign(x[i]) * g[i];
                break;
            case OpKind::Inv:
                for (int i = 0; i < la; ++i) ga[i] -= g[i] * out[i] * out[i];
                break;
            case OpKind::Square:
                for (int i = 0; i < la; ++i) ga[i] += 2.0 * x[i] * g[i];
                break;
            case OpKind::Sqrt:
                for (int i = 0; i < la; ++i)
                    if (x[i] != 0.0) ga[i] += g[i] / (2.0 * std::fabs(out[i]));
                break;
            case OpKind::Tanh:
                for (int i = 0; i < la; ++i) ga[i] += g[i] * (1.0 - out[i] * out[i]);
                break;
            case OpKind::Sigmoid:
                for (int i = 0; i < la; ++i) ga[i] += g[i] * out[i] * (1.0 - out[i]);
                break;
            case OpKind::Softplus:
                for (int i = 0; i < la; ++i) ga[i] += g[i] * stable_sigmoid(x[i]);
                break;
            case OpKind::Sum:
                for (int i = 0; i < la; ++i) ga[i] += g[0];
                break;
            case OpKind::Mean:
                for (int i = 0; i < la; ++i) ga[i] += g[0] / la;
                break;
            case OpKind::FFN: {
                const Slot& s = slots_[r.slot];
                double* gw = slots_[r.slot].grad.data();
                for (int i = 0; i < la; ++i) {
                    ga[i] += g[0] * s.data[i];
                    gw[i] += g[0] * x[i];
                }
                break;
            }
            case OpKind::FFN_D: {
                const Slot& s = slots_[r.slot];
                double* gw = slots_[r.slot].grad.data();
                int lo = r.len;
                for (int i = 0; i < la; ++i) {
                    const double* wrow = s.data + size_t(i) * lo;
                    double* gwrow = gw + size_t(i) * lo;
                    double acc = 0;
                    for (int j = 0; j < lo; ++j) {
                        acc += g[j] * wrow[j];
                        gwrow[j] += x[i] * g[j];
                    }
                    ga[i] += acc;
                }
                break;
            }
            case OpKind::Add:
            case OpKind::Mul: {
                const Rec& rb = recs_[r.b];
                const double* y = buf_.data() + rb.off;
                double* gb = adj_.data() + rb.off;
                int lb = rb.len;
                bool mul = (r.op == OpKind::Mul);
                for (int i = 0; i < r.len; ++i) {
                    int ia = la == 1 ? 0 : i;
                    int ib = lb == 1 ? 0 : i;
                    if (mul) {
                        ga[ia] += g[i] * y[ib];
                        gb[ib] += g[i] * x[ia];
                    } else {
                        ga[ia] += g[i];
                        gb[ib] += g[i];
                    }
                }
                break;
            }
            case OpKind::Concat: {
                const Rec& rb = recs_[r.b];
                const double* y = buf_.data() + rb.off;
                double* gb = adj_.data() + rb.off;
                const Slot& s = slots_[r.slot];
                double* gw = slots_[r.slot].grad.data();
                int lo = r.len;
                for (int i = 0; i < la; ++i) {
                    const double* wrow = s.data + size_t(i) * lo;
                    double* gwrow = gw + size_t(i) * lo;
                    double acc = 0;
                    for (int j = 0; j < lo; ++j) {
                        acc += g[j] * wrow[j];
                        gwrow[j] += x[i] * g[j];
                    }
                    ga[i] += acc;
                }
                for (int i = 0; i < la; ++i) {
                    const double* wrow = s.data + size_t(la + i) * lo;
                    double* gwrow = gw + size_t(la + i) * lo;
                    double acc = 0;
                    for (int j = 0; j < lo; ++j) {
                        acc += g[j] * wrow[j];
                        gwrow[j] += y[i] * g[j];
                    }
                    gb[i] += acc;
                }
                break;
            }
        }
    }
}

void Tape::clear() {
    recs_.clear();
    buf_.clear();
    adj_.clear();
}

}  // namespace cdnas
