#pragma once

// Dense tensors and a scoped reverse-mode gradient tape.
//
// A Tape records every operation applied to the Vars it owns. Nodes are
// appended in evaluation order, so a single reverse sweep visits each node
// after all of its consumers. Parameters enter a tape through Tape::param and
// receive their gradient contribution when the tape is swept.

#include <cmath>
#include <cstddef>
#include <deque>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "kano/errors.hpp"

namespace kano::ad {

using Shape = std::vector<std::size_t>;

inline std::size_t numel(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_str(const Shape& shape) {
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(shape[i]);
    }
    return s + "]";
}

/// Detached row-major array. Never carries gradient.
struct Tensor {
    Shape shape;
    std::vector<double> data;

    Tensor() = default;
    explicit Tensor(Shape s, double fill = 0.0) : shape(std::move(s)), data(numel(shape), fill) {
        validate();
    }
    Tensor(Shape s, std::vector<double> values) : shape(std::move(s)), data(std::move(values)) {
        validate();
    }

    std::size_t size() const { return data.size(); }
    double& operator[](std::size_t i) { return data[i]; }
    double operator[](std::size_t i) const { return data[i]; }

    void validate() const {
        for (std::size_t e : shape) {
            if (e == 0) throw ContractViolation("tensor extents must be positive: " + shape_str(shape));
        }
        if (data.size() != numel(shape)) {
            throw ContractViolation("tensor data length " + std::to_string(data.size()) +
                                    " does not match shape " + shape_str(shape));
        }
    }
};

/// Named trainable array with an accumulated gradient.
///
/// `frozen` marks entries that are pinned (their gradient is discarded by the
/// optimizer); it is empty when every entry is trainable.
struct Parameter {
    std::string name;
    Tensor value;
    std::vector<double> grad;
    std::vector<unsigned char> frozen;

    Parameter() = default;
    Parameter(std::string n, Tensor v) : name(std::move(n)), value(std::move(v)), grad(value.size(), 0.0) {}

    void zero_grad() { std::fill(grad.begin(), grad.end(), 0.0); }
    bool is_frozen(std::size_t i) const { return !frozen.empty() && frozen[i] != 0; }
};

class Tape;

/// Handle to a tensor recorded on a tape.
class Var {
public:
    Var() = default;

    bool attached() const { return tape_ != nullptr; }
    Tape* tape() const { return tape_; }
    std::size_t id() const { return id_; }

    const Shape& shape() const;
    std::size_t size() const { return numel(shape()); }
    const std::vector<double>& value() const;
    /// Gradient after Tape::backward; zeros if the node never received one.
    std::vector<double> grad() const;
    double item() const;

private:
    friend class Tape;
    Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

    Tape* tape_ = nullptr;
    std::size_t id_ = 0;
};

class Tape {
public:
    using Backward = std::function<void(Tape&, std::size_t)>;

    /// `record == false` builds an inference-only tape: values are computed
    /// but no backward closures are kept.
    explicit Tape(bool record = true) : record_(record) {}
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    bool recording() const { return record_; }
    bool consumed() const { return consumed_; }
    std::size_t size() const { return nodes_.size(); }

    Var constant(Tensor value) { return push_node(std::move(value), false, nullptr, nullptr); }

    /// Differentiable input whose gradient is readable through Var::grad.
    Var leaf(Tensor value) { return push_node(std::move(value), record_, nullptr, nullptr); }

    /// Differentiable view of a parameter; backward adds into `p.grad`.
    Var param(Parameter& p) {
        if (p.grad.size() != p.value.size()) p.grad.assign(p.value.size(), 0.0);
        return push_node(p.value, record_, nullptr, &p);
    }

    /// Record an operation result. `parents` decide whether the node needs a
    /// gradient; `fn` runs during the reverse sweep with the node id.
    Var push(Tensor value, std::initializer_list<Var> parents, Backward fn) {
        bool needs = false;
        for (const Var& v : parents) {
            check_owned(v);
            needs = needs || nodes_[v.id_].requires_grad;
        }
        return push_node(std::move(value), record_ && needs, record_ && needs ? std::move(fn) : nullptr, nullptr);
    }

    Var push(Tensor value, const std::vector<Var>& parents, Backward fn) {
        bool needs = false;
        for (const Var& v : parents) {
            check_owned(v);
            needs = needs || nodes_[v.id_].requires_grad;
        }
        return push_node(std::move(value), record_ && needs, record_ && needs ? std::move(fn) : nullptr, nullptr);
    }

    const Tensor& value(std::size_t id) const { return nodes_[id].value; }
    bool needs_grad(std::size_t id) const { return nodes_[id].requires_grad; }

    /// Gradient buffer of a node, allocated as zeros on first access.
    std::vector<double>& grad(std::size_t id) {
        auto& n = nodes_[id];
        if (n.grad.empty()) n.grad.assign(n.value.size(), 0.0);
        return n.grad;
    }
    const std::vector<double>& grad_view(std::size_t id) const { return nodes_[id].grad; }

    /// Reverse sweep from a scalar root. Consumes the tape.
    void backward(const Var& root) {
        if (!root.attached() || root.tape_ != this) {
            throw ContractViolation("backward called on a tensor detached from this tape");
        }
        if (consumed_) throw ContractViolation("tape already consumed by a previous backward");
        if (!record_) throw ContractViolation("backward on an inference-only tape");
        const auto& rv = nodes_[root.id_].value;
        if (rv.size() != 1) {
            throw ContractViolation("backward root must be scalar, got shape " + shape_str(rv.shape));
        }
        consumed_ = true;
        grad(root.id_)[0] = 1.0;
        for (std::size_t i = root.id_ + 1; i-- > 0;) {
            auto& n = nodes_[i];
            if (!n.requires_grad || n.grad.empty()) continue;
            if (n.backward) n.backward(*this, i);
            if (n.param != nullptr) {
                auto& pg = n.param->grad;
                for (std::size_t k = 0; k < pg.size(); ++k) pg[k] += n.grad[k];
            }
        }
    }

    void check_owned(const Var& v) const {
        if (v.tape_ != this) throw ContractViolation("operand belongs to a different tape (or none)");
    }

private:
    struct Node {
        Tensor value;
        std::vector<double> grad;
        Backward backward;
        bool requires_grad = false;
        Parameter* param = nullptr;
    };

    Var push_node(Tensor value, bool requires_grad, Backward fn, Parameter* p) {
        if (consumed_) throw ContractViolation("cannot record on a consumed tape");
        nodes_.push_back(Node{std::move(value), {}, std::move(fn), requires_grad, p});
        return Var(this, nodes_.size() - 1);
    }

    std::deque<Node> nodes_;
    bool record_ = true;
    bool consumed_ = false;
};

inline const Shape& Var::shape() const {
    if (!tape_) throw ContractViolation("detached Var has no value");
    return tape_->value(id_).shape;
}

inline const std::vector<double>& Var::value() const {
    if (!tape_) throw ContractViolation("detached Var has no value");
    return tape_->value(id_).data;
}

inline std::vector<double> Var::grad() const {
    if (!tape_) throw ContractViolation("detached Var has no gradient");
    const auto& g = tape_->grad_view(id_);
    if (g.empty()) return std::vector<double>(size(), 0.0);
    return g;
}

inline double Var::item() const {
    const auto& v = value();
    if (v.size() != 1) throw ContractViolation("item() on non-scalar " + shape_str(shape()));
    return v[0];
}

// ---------------------------------------------------------------------------
// Elementwise and reduction primitives
// ---------------------------------------------------------------------------

namespace detail {

inline Tape& same_tape(const Var& a, const Var& b) {
    if (!a.attached() || a.tape() != b.tape()) throw ContractViolation("operands must share one tape");
    return *a.tape();
}

inline void same_shape(const Var& a, const Var& b, const char* op) {
    if (a.shape() != b.shape()) {
        throw ContractViolation(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                                shape_str(b.shape()));
    }
}

inline void accumulate(Tape& t, std::size_t id, std::span<const double> g, double scale = 1.0) {
    if (!t.needs_grad(id)) return;
    auto& dst = t.grad(id);
    for (std::size_t i = 0; i < g.size(); ++i) dst[i] += scale * g[i];
}

}  // namespace detail

inline Var add(const Var& a, const Var& b) {
    Tape& t = detail::same_tape(a, b);
    detail::same_shape(a, b, "add");
    Tensor out(a.shape());
    const auto& x = a.value();
    const auto& y = b.value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] + y[i];
    const std::size_t ia = a.id(), ib = b.id();
    return t.push(std::move(out), {a, b}, [ia, ib](Tape& tp, std::size_t self) {
        const auto& g = tp.grad(self);
        detail::accumulate(tp, ia, g);
        detail::accumulate(tp, ib, g);
    });
}

inline Var sub(const Var& a, const Var& b) {
    Tape& t = detail::same_tape(a, b);
    detail::same_shape(a, b, "sub");
    Tensor out(a.shape());
    const auto& x = a.value();
    const auto& y = b.value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] - y[i];
    const std::size_t ia = a.id(), ib = b.id();
    return t.push(std::move(out), {a, b}, [ia, ib](Tape& tp, std::size_t self) {
        const auto& g = tp.grad(self);
        detail::accumulate(tp, ia, g);
        detail::accumulate(tp, ib, g, -1.0);
    });
}

/// Elementwise (Hadamard) product.
inline Var mul(const Var& a, const Var& b) {
    Tape& t = detail::same_tape(a, b);
    detail::same_shape(a, b, "mul");
    Tensor out(a.shape());
    const auto& x = a.value();
    const auto& y = b.value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * y[i];
    const std::size_t ia = a.id(), ib = b.id();
    return t.push(std::move(out), {a, b}, [ia, ib](Tape& tp, std::size_t self) {
        const auto& g = tp.grad(self);
        const auto& x = tp.value(ia).data;
        const auto& y = tp.value(ib).data;
        if (tp.needs_grad(ia)) {
            auto& ga = tp.grad(ia);
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * y[i];
        }
        if (tp.needs_grad(ib)) {
            auto& gb = tp.grad(ib);
            for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * x[i];
        }
    });
}

inline Var scale(const Var& a, double c) {
    Tape& t = *a.tape();
    t.check_owned(a);
    Tensor out(a.shape());
    const auto& x = a.value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = c * x[i];
    const std::size_t ia = a.id();
    return t.push(std::move(out), {a}, [ia, c](Tape& tp, std::size_t self) {
        detail::accumulate(tp, ia, tp.grad(self), c);
    });
}

inline Var square(const Var& a) { return mul(a, a); }

inline Var sum(const Var& a) {
    Tape& t = *a.tape();
    t.check_owned(a);
    const auto& x = a.value();
    Tensor out(Shape{1}, std::accumulate(x.begin(), x.end(), 0.0));
    const std::size_t ia = a.id();
    return t.push(std::move(out), {a}, [ia](Tape& tp, std::size_t self) {
        if (!tp.needs_grad(ia)) return;
        const double g = tp.grad(self)[0];
        for (double& v : tp.grad(ia)) v += g;
    });
}

inline Var mean(const Var& a) { return scale(sum(a), 1.0 / static_cast<double>(a.size())); }

/// Mean squared deviation from a fixed target of identical size.
inline Var mse(const Var& pred, const Tensor& target) {
    Tape& t = *pred.tape();
    t.check_owned(pred);
    if (pred.size() != target.size()) {
        throw ContractViolation("mse: prediction " + shape_str(pred.shape()) + " vs target " +
                                shape_str(target.shape));
    }
    const auto& p = pred.value();
    const double n = static_cast<double>(p.size());
    double acc = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        const double r = p[i] - target[i];
        acc += r * r;
    }
    const std::size_t ip = pred.id();
    return t.push(Tensor(Shape{1}, acc / n), {pred}, [ip, target, n](Tape& tp, std::size_t self) {
        if (!tp.needs_grad(ip)) return;
        const double g = tp.grad(self)[0];
        const auto& p = tp.value(ip).data;
        auto& gp = tp.grad(ip);
        for (std::size_t i = 0; i < p.size(); ++i) gp[i] += g * 2.0 * (p[i] - target[i]) / n;
    });
}

/// Same data, new shape.
inline Var reshape(const Var& a, Shape shape) {
    Tape& t = *a.tape();
    t.check_owned(a);
    if (numel(shape) != a.size()) {
        throw ContractViolation("reshape " + shape_str(a.shape()) + " -> " + shape_str(shape));
    }
    Tensor out(std::move(shape), a.value());
    const std::size_t ia = a.id();
    return t.push(std::move(out), {a}, [ia](Tape& tp, std::size_t self) {
        detail::accumulate(tp, ia, tp.grad(self));
    });
}

// ---------------------------------------------------------------------------
// Row-batched dense layers. A "rows" tensor has shape [N, C]: N grid nodes,
// C channels, channels contiguous.
// ---------------------------------------------------------------------------

inline std::size_t rows_of(const Var& x) {
    const auto& s = x.shape();
    if (s.size() < 2) throw ContractViolation("expected a [rows, channels] tensor, got " + shape_str(s));
    return numel(s) / s.back();
}

inline std::size_t cols_of(const Var& x) { return x.shape().back(); }

/// y[n, o] = sum_i A[o, i] x[n, i] + b[o].
inline Var linear(const Var& x, const Var& A, const Var& b) {
    Tape& t = *x.tape();
    t.check_owned(x);
    t.check_owned(A);
    t.check_owned(b);
    const std::size_t n_rows = rows_of(x), din = cols_of(x);
    if (A.shape().size() != 2 || A.shape()[1] != din) {
        throw ContractViolation("linear: weight " + shape_str(A.shape()) + " incompatible with input " +
                                shape_str(x.shape()));
    }
    const std::size_t dout = A.shape()[0];
    if (b.size() != dout) throw ContractViolation("linear: bias length must equal output width");
    Tensor out(Shape{n_rows, dout});
    {
        const double* xv = x.value().data();
        const double* av = A.value().data();
        const double* bv = b.value().data();
        double* ov = out.data.data();
        for (std::size_t n = 0; n < n_rows; ++n) {
            const double* xr = xv + n * din;
            double* orow = ov + n * dout;
            for (std::size_t o = 0; o < dout; ++o) {
                const double* ar = av + o * din;
                double acc = bv[o];
                for (std::size_t i = 0; i < din; ++i) acc += ar[i] * xr[i];
                orow[o] = acc;
            }
        }
    }
    const std::size_t ix = x.id(), ia = A.id(), ib = b.id();
    return t.push(std::move(out), {x, A, b}, [ix, ia, ib, n_rows, din, dout](Tape& tp, std::size_t self) {
        const double* g = tp.grad(self).data();
        const double* xv = tp.value(ix).data.data();
        const double* av = tp.value(ia).data.data();
        if (tp.needs_grad(ix)) {
            double* gx = tp.grad(ix).data();
            for (std::size_t n = 0; n < n_rows; ++n) {
                const double* gr = g + n * dout;
                double* gxr = gx + n * din;
                for (std::size_t o = 0; o < dout; ++o) {
                    const double go = gr[o];
                    if (go == 0.0) continue;
                    const double* ar = av + o * din;
                    for (std::size_t i = 0; i < din; ++i) gxr[i] += go * ar[i];
                }
            }
        }
        if (tp.needs_grad(ia)) {
            double* ga = tp.grad(ia).data();
            for (std::size_t n = 0; n < n_rows; ++n) {
                const double* gr = g + n * dout;
                const double* xr = xv + n * din;
                for (std::size_t o = 0; o < dout; ++o) {
                    const double go = gr[o];
                    if (go == 0.0) continue;
                    double* gar = ga + o * din;
                    for (std::size_t i = 0; i < din; ++i) gar[i] += go * xr[i];
                }
            }
        }
        if (tp.needs_grad(ib)) {
            double* gb = tp.grad(ib).data();
            for (std::size_t n = 0; n < n_rows; ++n) {
                const double* gr = g + n * dout;
                for (std::size_t o = 0; o < dout; ++o) gb[o] += gr[o];
            }
        }
    });
}

/// Rectangular diagonal map: y[n, i] = g[i] x[n, i] for i < min(din, dout), 0 beyond.
inline Var diag_gate(const Var& x, const Var& g, std::size_t dout) {
    Tape& t = *x.tape();
    t.check_owned(x);
    t.check_owned(g);
    const std::size_t n_rows = rows_of(x), din = cols_of(x);
    const std::size_t m = std::min(din, dout);
    if (g.size() != m) throw ContractViolation("diag_gate: gate length must be min(din, dout)");
    Tensor out(Shape{n_rows, dout});
    const auto& xv = x.value();
    const auto& gv = g.value();
    for (std::size_t n = 0; n < n_rows; ++n)
        for (std::size_t i = 0; i < m; ++i) out[n * dout + i] = gv[i] * xv[n * din + i];
    const std::size_t ix = x.id(), ig = g.id();
    return t.push(std::move(out), {x, g}, [ix, ig, n_rows, din, dout, m](Tape& tp, std::size_t self) {
        const auto& gr = tp.grad(self);
        const auto& xv = tp.value(ix).data;
        const auto& gv = tp.value(ig).data;
        if (tp.needs_grad(ix)) {
            auto& gx = tp.grad(ix);
            for (std::size_t n = 0; n < n_rows; ++n)
                for (std::size_t i = 0; i < m; ++i) gx[n * din + i] += gv[i] * gr[n * dout + i];
        }
        if (tp.needs_grad(ig)) {
            auto& gg = tp.grad(ig);
            for (std::size_t n = 0; n < n_rows; ++n)
                for (std::size_t i = 0; i < m; ++i) gg[i] += xv[n * din + i] * gr[n * dout + i];
        }
    });
}

/// Concatenate [N, c_k] tensors along the channel axis.
inline Var concat_cols(const std::vector<Var>& parts) {
    if (parts.empty()) throw ContractViolation("concat_cols: no operands");
    Tape& t = *parts.front().tape();
    const std::size_t n_rows = rows_of(parts.front());
    std::vector<std::size_t> widths, ids;
    std::size_t total = 0;
    for (const Var& p : parts) {
        t.check_owned(p);
        if (rows_of(p) != n_rows) throw ContractViolation("concat_cols: row counts differ");
        widths.push_back(cols_of(p));
        ids.push_back(p.id());
        total += cols_of(p);
    }
    Tensor out(Shape{n_rows, total});
    std::size_t offset = 0;
    for (std::size_t k = 0; k < parts.size(); ++k) {
        const auto& v = parts[k].value();
        const std::size_t w = widths[k];
        for (std::size_t n = 0; n < n_rows; ++n)
            for (std::size_t c = 0; c < w; ++c) out[n * total + offset + c] = v[n * w + c];
        offset += w;
    }
    return t.push(std::move(out), parts, [ids, widths, n_rows, total](Tape& tp, std::size_t self) {
        const auto& g = tp.grad(self);
        std::size_t offset = 0;
        for (std::size_t k = 0; k < ids.size(); ++k) {
            const std::size_t w = widths[k];
            if (tp.needs_grad(ids[k])) {
                auto& gk = tp.grad(ids[k]);
                for (std::size_t n = 0; n < n_rows; ++n)
                    for (std::size_t c = 0; c < w; ++c) gk[n * w + c] += g[n * total + offset + c];
            }
            offset += w;
        }
    });
}

/// Channels [begin, begin + count) of a [N, C] tensor.
inline Var slice_cols(const Var& x, std::size_t begin, std::size_t count) {
    Tape& t = *x.tape();
    t.check_owned(x);
    const std::size_t n_rows = rows_of(x), c_in = cols_of(x);
    if (count == 0 || begin + count > c_in) throw ContractViolation("slice_cols: range out of bounds");
    Tensor out(Shape{n_rows, count});
    const auto& v = x.value();
    for (std::size_t n = 0; n < n_rows; ++n)
        for (std::size_t c = 0; c < count; ++c) out[n * count + c] = v[n * c_in + begin + c];
    const std::size_t ix = x.id();
    return t.push(std::move(out), {x}, [ix, n_rows, c_in, begin, count](Tape& tp, std::size_t self) {
        if (!tp.needs_grad(ix)) return;
        const auto& g = tp.grad(self);
        auto& gx = tp.grad(ix);
        for (std::size_t n = 0; n < n_rows; ++n)
            for (std::size_t c = 0; c < count; ++c) gx[n * c_in + begin + c] += g[n * count + c];
    });
}

}  // namespace kano::ad
