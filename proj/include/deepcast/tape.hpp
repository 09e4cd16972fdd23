#pragma once

// Reverse-mode differentiation. A Tape records primitive operations as they
// execute; backward() replays their adjoints in exact reverse order of
// recording and accumulates gradients for every node reachable from a leaf.
//
// Values are immutable once produced. Recording and backward replay are
// single-threaded per tape; distinct tapes may run concurrently.

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "deepcast/errors.hpp"
#include "deepcast/tensor.hpp"

namespace deepcast {

// Handle to a tape node. Only meaningful together with the tape that made it.
struct Var {
    std::uint32_t id = 0;
};

class Tape {
public:
    enum class Op : std::uint8_t {
        leaf,
        constant,
        add,
        sub,
        mul,
        scale,       // multiply by a compile-time-known scalar
        tanh_op,
        sigmoid_op,
        relu_op,
        exp_op,
        matmul,
        sum,         // reduce all elements to a 1-element tensor
        softmax,     // rank-1, over the whole vector
        concat,      // two rank-1 tensors
        concat_rows, // k rank-1 tensors of length m -> [k, m]
        slice,       // contiguous flat range, arbitrary output shape
        reshape,
        squash,      // capsule nonlinearity, rank-1
        conv1d,      // causal 1-D cross-correlation
        maxpool1d,   // stride-1 windowed maximum with trailing edge padding
    };

    Var leaf(Tensor t) {
        Var v = push(Node{Op::leaf}, std::move(t), true);
        leaves_.push_back(v.id);
        return v;
    }

    Var constant(Tensor t) { return push(Node{Op::constant}, std::move(t), false); }

    const Tensor& value(Var v) const { return values_[v.id]; }

    std::size_t node_count() const { return nodes_.size(); }
    const std::vector<std::uint32_t>& leaves() const { return leaves_; }

    Var add(Var a, Var b) { return binary(Op::add, a, b); }
    Var sub(Var a, Var b) { return binary(Op::sub, a, b); }
    Var mul(Var a, Var b) { return binary(Op::mul, a, b); }

    Var scale(Var a, double factor) {
        Tensor out = values_[a.id];
        for (std::size_t i = 0; i < out.size(); ++i) out[i] *= factor;
        Node n{Op::scale};
        n.a = a.id;
        n.scalar = factor;
        return push(std::move(n), std::move(out), needs(a));
    }

    Var tanh(Var a) {
        return unary(Op::tanh_op, a, [](double x) { return std::tanh(x); });
    }

    Var sigmoid(Var a) {
        return unary(Op::sigmoid_op, a, [](double x) {
            if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
            const double e = std::exp(x);
            return e / (1.0 + e);
        });
    }

    Var relu(Var a) {
        return unary(Op::relu_op, a, [](double x) { return x > 0.0 ? x : 0.0; });
    }

    Var exp(Var a) {
        return unary(Op::exp_op, a, [](double x) { return std::exp(x); });
    }

    Var matmul(Var a, Var b) {
        const Tensor& va = values_[a.id];
        const Tensor& vb = values_[b.id];
        if (va.rank() != 2 || vb.rank() != 2) {
            throw ShapeError("matmul: operands must be rank 2, got " + shape_str(va.shape()) +
                             " and " + shape_str(vb.shape()));
        }
        if (va.dim(1) != vb.dim(0)) {
            throw ShapeError("matmul: inner dimensions disagree: " + shape_str(va.shape()) +
                             " vs " + shape_str(vb.shape()));
        }
        const std::size_t m = va.dim(0), k = va.dim(1), n = vb.dim(1);
        Tensor out({m, n});
        for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t p = 0; p < k; ++p) {
                const double aip = va(i, p);
                if (aip == 0.0) continue;
                for (std::size_t j = 0; j < n; ++j) out(i, j) += aip * vb(p, j);
            }
        }
        Node node{Op::matmul};
        node.a = a.id;
        node.b = b.id;
        return push(std::move(node), std::move(out), needs(a) || needs(b));
    }

    Var sum(Var a) {
        const Tensor& va = values_[a.id];
        double s = 0.0;
        for (std::size_t i = 0; i < va.size(); ++i) s += va[i];
        Node n{Op::sum};
        n.a = a.id;
        return push(std::move(n), Tensor::scalar(s), needs(a));
    }

    Var softmax(Var a) {
        const Tensor& va = values_[a.id];
        if (va.rank() != 1) {
            throw ShapeError("softmax: operand must be rank 1, got " + shape_str(va.shape()));
        }
        double mx = va[0];
        for (std::size_t i = 1; i < va.size(); ++i) mx = std::max(mx, va[i]);
        Tensor out(va.shape());
        double z = 0.0;
        for (std::size_t i = 0; i < va.size(); ++i) {
            out[i] = std::exp(va[i] - mx);
            z += out[i];
        }
        for (std::size_t i = 0; i < va.size(); ++i) out[i] /= z;
        Node n{Op::softmax};
        n.a = a.id;
        return push(std::move(n), std::move(out), needs(a));
    }

    Var concat(Var a, Var b) {
        const Tensor& va = values_[a.id];
        const Tensor& vb = values_[b.id];
        if (va.rank() != 1 || vb.rank() != 1) {
            throw ShapeError("concat: operands must be rank 1, got " + shape_str(va.shape()) +
                             " and " + shape_str(vb.shape()));
        }
        Tensor out({va.size() + vb.size()});
        for (std::size_t i = 0; i < va.size(); ++i) out[i] = va[i];
        for (std::size_t i = 0; i < vb.size(); ++i) out[va.size() + i] = vb[i];
        Node n{Op::concat};
        n.a = a.id;
        n.b = b.id;
        return push(std::move(n), std::move(out), needs(a) || needs(b));
    }

    Var concat_rows(std::span<const Var> rows) {
        if (rows.empty()) throw ShapeError("concat_rows: need at least one row");
        const std::size_t m = values_[rows[0].id].size();
        Tensor out({rows.size(), m});
        bool any = false;
        Node n{Op::concat_rows};
        n.many.reserve(rows.size());
        for (std::size_t r = 0; r < rows.size(); ++r) {
            const Tensor& row = values_[rows[r].id];
            if (row.rank() != 1 || row.size() != m) {
                throw ShapeError("concat_rows: row " + std::to_string(r) + " has shape " +
                                 shape_str(row.shape()) + ", expected (" + std::to_string(m) + ")");
            }
            for (std::size_t j = 0; j < m; ++j) out(r, j) = row[j];
            n.many.push_back(rows[r].id);
            any = any || needs(rows[r]);
        }
        return push(std::move(n), std::move(out), any);
    }

    Var slice(Var a, std::size_t offset, std::size_t len, Shape out_shape) {
        const Tensor& va = values_[a.id];
        if (offset + len > va.size()) {
            throw ShapeError("slice: range [" + std::to_string(offset) + ", " +
                             std::to_string(offset + len) + ") exceeds tensor of size " +
                             std::to_string(va.size()));
        }
        if (shape_size(out_shape) != len) {
            throw ShapeError("slice: output shape " + shape_str(out_shape) + " wants " +
                             std::to_string(shape_size(out_shape)) + " values, slice has " +
                             std::to_string(len));
        }
        std::vector<double> data(va.raw().begin() + static_cast<std::ptrdiff_t>(offset),
                                 va.raw().begin() + static_cast<std::ptrdiff_t>(offset + len));
        Node n{Op::slice};
        n.a = a.id;
        n.k0 = offset;
        n.k1 = len;
        return push(std::move(n), Tensor(std::move(out_shape), std::move(data)), needs(a));
    }

    Var reshape(Var a, Shape out_shape) {
        const Tensor& va = values_[a.id];
        if (shape_size(out_shape) != va.size()) {
            throw ShapeError("reshape: cannot view " + shape_str(va.shape()) + " as " +
                             shape_str(out_shape));
        }
        Node n{Op::reshape};
        n.a = a.id;
        return push(std::move(n), Tensor(std::move(out_shape), va.raw()), needs(a));
    }

    // v = (|s|^2 / (1 + |s|^2)) * s / (|s| + epsilon). Direction preserved,
    // output norm < 1. The zero vector maps to zero with zero Jacobian.
    Var squash(Var a, double epsilon) {
        const Tensor& va = values_[a.id];
        if (va.rank() != 1) {
            throw ShapeError("squash: operand must be rank 1, got " + shape_str(va.shape()));
        }
        if (!(epsilon > 0.0)) throw Error("squash: epsilon must be positive");
        double n2 = 0.0;
        for (std::size_t i = 0; i < va.size(); ++i) n2 += va[i] * va[i];
        const double r = std::sqrt(n2);
        const double coef = n2 / ((1.0 + n2) * (r + epsilon));
        Tensor out(va.shape());
        for (std::size_t i = 0; i < va.size(); ++i) out[i] = coef * va[i];
        Node n{Op::squash};
        n.a = a.id;
        n.scalar = epsilon;
        return push(std::move(n), std::move(out), needs(a));
    }

    // Causal cross-correlation. x: [d, C], w: [K, C, N], b: [N]. The input is
    // left-padded with K-1 zeros so output position t sees x[t-K+1 .. t]; with
    // stride 1 the output length equals the input length.
    Var conv1d(Var x, Var w, Var b, std::size_t stride = 1) {
        const Tensor& vx = values_[x.id];
        const Tensor& vw = values_[w.id];
        const Tensor& vb = values_[b.id];
        if (vx.rank() != 2) {
            throw ShapeError("conv1d: input must be rank 2 (time, channels), got " +
                             shape_str(vx.shape()));
        }
        if (vw.rank() != 3) {
            throw ShapeError("conv1d: weights must be rank 3 (kernel, channels, filters), got " +
                             shape_str(vw.shape()));
        }
        if (vx.dim(1) != vw.dim(1)) {
            throw ShapeError("conv1d: input channels " + shape_str(vx.shape()) +
                             " do not match weight channels " + shape_str(vw.shape()));
        }
        if (vb.rank() != 1 || vb.dim(0) != vw.dim(2)) {
            throw ShapeError("conv1d: bias shape " + shape_str(vb.shape()) +
                             " does not match filter count " + std::to_string(vw.dim(2)));
        }
        if (stride < 1) throw Error("conv1d: stride must be >= 1");
        const std::size_t d = vx.dim(0), C = vx.dim(1), K = vw.dim(0), N = vw.dim(2);
        const std::size_t d_out = (d - 1) / stride + 1;
        Tensor out({d_out, N});
        for (std::size_t to = 0; to < d_out; ++to) {
            const std::ptrdiff_t t0 =
                static_cast<std::ptrdiff_t>(to * stride) - static_cast<std::ptrdiff_t>(K - 1);
            for (std::size_t f = 0; f < N; ++f) out(to, f) = vb[f];
            for (std::size_t j = 0; j < K; ++j) {
                const std::ptrdiff_t s = t0 + static_cast<std::ptrdiff_t>(j);
                if (s < 0) continue;
                for (std::size_t c = 0; c < C; ++c) {
                    const double xv = vx(static_cast<std::size_t>(s), c);
                    if (xv == 0.0) continue;
                    for (std::size_t f = 0; f < N; ++f) out(to, f) += xv * vw(j, c, f);
                }
            }
        }
        Node n{Op::conv1d};
        n.a = x.id;
        n.b = w.id;
        n.c = b.id;
        n.k0 = stride;
        return push(std::move(n), std::move(out), needs(x) || needs(w) || needs(b));
    }

    // Stride-1 windowed maximum per channel; windows extending past the end
    // repeat the final element, so the output length equals the input length.
    // The gradient routes to the source of the maximum, first index on ties.
    Var maxpool1d(Var x, std::size_t pool_size) {
        const Tensor& vx = values_[x.id];
        if (vx.rank() != 2) {
            throw ShapeError("maxpool1d: input must be rank 2 (time, channels), got " +
                             shape_str(vx.shape()));
        }
        if (pool_size < 1) throw Error("maxpool1d: pool_size must be >= 1");
        const std::size_t d = vx.dim(0), C = vx.dim(1);
        Tensor out({d, C});
        Node n{Op::maxpool1d};
        n.a = x.id;
        n.k0 = pool_size;
        n.many.resize(d * C);
        for (std::size_t t = 0; t < d; ++t) {
            for (std::size_t c = 0; c < C; ++c) {
                std::size_t best_src = t * C + c;
                double best = vx(t, c);
                for (std::size_t j = 1; j < pool_size; ++j) {
                    const std::size_t s = std::min(t + j, d - 1);
                    if (vx(s, c) > best) {
                        best = vx(s, c);
                        best_src = s * C + c;
                    }
                }
                out(t, c) = best;
                n.many[t * C + c] = static_cast<std::uint32_t>(best_src);
            }
        }
        return push(std::move(n), std::move(out), needs(x));
    }

    // Accumulates adjoints for every recorded node, replayed newest-first
    // from the seed. The seed must hold exactly one element.
    void backward(Var seed) {
        const Tensor& sv = values_[seed.id];
        if (sv.size() != 1) {
            throw ShapeError("backward: seed must be a 1-element tensor, got " +
                             shape_str(sv.shape()));
        }
        grads_.assign(nodes_.size(), Tensor{});
        if (!nodes_[seed.id].needs_grad) return;
        grads_[seed.id] = Tensor::scalar(1.0);
        for (std::uint32_t id = seed.id + 1; id-- > 0;) {
            const Node& n = nodes_[id];
            if (!n.needs_grad || grads_[id].empty()) continue;
            propagate(id, n);
        }
    }

    // Accumulated gradient after backward(); zero tensor when the node is
    // not on any path from a leaf to the seed.
    Tensor grad(Var v) const {
        if (v.id < grads_.size() && !grads_[v.id].empty()) return grads_[v.id];
        return Tensor(values_[v.id].shape());
    }

    void clear() {
        nodes_.clear();
        values_.clear();
        grads_.clear();
        leaves_.clear();
    }

private:
    struct Node {
        Op op;
        bool needs_grad = false;
        std::uint32_t a = 0, b = 0, c = 0;
        double scalar = 0.0;
        std::size_t k0 = 0, k1 = 0;
        std::vector<std::uint32_t> many;  // concat_rows inputs / maxpool argmax sources
    };

    bool needs(Var v) const { return nodes_[v.id].needs_grad; }

    Var push(Node n, Tensor value, bool needs_grad) {
        n.needs_grad = needs_grad;
        nodes_.push_back(std::move(n));
        values_.push_back(std::move(value));
        return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
    }

    Var binary(Op op, Var a, Var b) {
        const Tensor& va = values_[a.id];
        const Tensor& vb = values_[b.id];
        const char* name = op == Op::add ? "add" : op == Op::sub ? "sub" : "mul";
        require_same_shape(va, vb, name);
        Tensor out(va.shape());
        switch (op) {
            case Op::add:
                for (std::size_t i = 0; i < out.size(); ++i) out[i] = va[i] + vb[i];
                break;
            case Op::sub:
                for (std::size_t i = 0; i < out.size(); ++i) out[i] = va[i] - vb[i];
                break;
            default:
                for (std::size_t i = 0; i < out.size(); ++i) out[i] = va[i] * vb[i];
                break;
        }
        Node n{op};
        n.a = a.id;
        n.b = b.id;
        return push(std::move(n), std::move(out), needs(a) || needs(b));
    }

    template <typename F>
    Var unary(Op op, Var a, F&& f) {
        const Tensor& va = values_[a.id];
        Tensor out(va.shape());
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(va[i]);
        Node n{op};
        n.a = a.id;
        return push(std::move(n), std::move(out), needs(a));
    }

    Tensor& grad_buf(std::uint32_t id) {
        if (grads_[id].empty()) grads_[id] = Tensor(values_[id].shape());
        return grads_[id];
    }

    void propagate(std::uint32_t id, const Node& n) {
        const Tensor& g = grads_[id];
        switch (n.op) {
            case Op::leaf:
            case Op::constant:
                break;
            case Op::add: {
                if (needs_id(n.a)) axpy(grad_buf(n.a), g, 1.0);
                if (needs_id(n.b)) axpy(grad_buf(n.b), g, 1.0);
                break;
            }
            case Op::sub: {
                if (needs_id(n.a)) axpy(grad_buf(n.a), g, 1.0);
                if (needs_id(n.b)) axpy(grad_buf(n.b), g, -1.0);
                break;
            }
            case Op::mul: {
                const Tensor& va = values_[n.a];
                const Tensor& vb = values_[n.b];
                if (needs_id(n.a)) {
                    Tensor& ga = grad_buf(n.a);
                    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * vb[i];
                }
                if (needs_id(n.b)) {
                    Tensor& gb = grad_buf(n.b);
                    for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * va[i];
                }
                break;
            }
            case Op::scale: {
                if (needs_id(n.a)) axpy(grad_buf(n.a), g, n.scalar);
                break;
            }
            case Op::tanh_op: {
                const Tensor& v = values_[id];
                Tensor& ga = grad_buf(n.a);
                for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * (1.0 - v[i] * v[i]);
                break;
            }
            case Op::sigmoid_op: {
                const Tensor& v = values_[id];
                Tensor& ga = grad_buf(n.a);
                for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * v[i] * (1.0 - v[i]);
                break;
            }
            case Op::relu_op: {
                const Tensor& x = values_[n.a];
                Tensor& ga = grad_buf(n.a);
                for (std::size_t i = 0; i < g.size(); ++i) {
                    if (x[i] > 0.0) ga[i] += g[i];
                }
                break;
            }
            case Op::exp_op: {
                const Tensor& v = values_[id];
                Tensor& ga = grad_buf(n.a);
                for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * v[i];
                break;
            }
            case Op::matmul: {
                const Tensor& va = values_[n.a];
                const Tensor& vb = values_[n.b];
                const std::size_t m = va.dim(0), k = va.dim(1), nn = vb.dim(1);
                if (needs_id(n.a)) {
                    Tensor& ga = grad_buf(n.a);  // dA = g . B^T
                    for (std::size_t i = 0; i < m; ++i) {
                        for (std::size_t p = 0; p < k; ++p) {
                            double acc = 0.0;
                            for (std::size_t j = 0; j < nn; ++j) acc += g(i, j) * vb(p, j);
                            ga(i, p) += acc;
                        }
                    }
                }
                if (needs_id(n.b)) {
                    Tensor& gb = grad_buf(n.b);  // dB = A^T . g
                    for (std::size_t i = 0; i < m; ++i) {
                        for (std::size_t p = 0; p < k; ++p) {
                            const double aip = va(i, p);
                            if (aip == 0.0) continue;
                            for (std::size_t j = 0; j < nn; ++j) gb(p, j) += aip * g(i, j);
                        }
                    }
                }
                break;
            }
            case Op::sum: {
                Tensor& ga = grad_buf(n.a);
                for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[0];
                break;
            }
            case Op::softmax: {
                const Tensor& c = values_[id];
                Tensor& ga = grad_buf(n.a);
                double dot = 0.0;
                for (std::size_t i = 0; i < g.size(); ++i) dot += g[i] * c[i];
                for (std::size_t i = 0; i < g.size(); ++i) ga[i] += c[i] * (g[i] - dot);
                break;
            }
            case Op::concat: {
                const std::size_t na = values_[n.a].size();
                if (needs_id(n.a)) {
                    Tensor& ga = grad_buf(n.a);
                    for (std::size_t i = 0; i < na; ++i) ga[i] += g[i];
                }
                if (needs_id(n.b)) {
                    Tensor& gb = grad_buf(n.b);
                    for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += g[na + i];
                }
                break;
            }
            case Op::concat_rows: {
                const std::size_t m = values_[id].dim(1);
                for (std::size_t r = 0; r < n.many.size(); ++r) {
                    if (!needs_id(n.many[r])) continue;
                    Tensor& gr = grad_buf(n.many[r]);
                    for (std::size_t j = 0; j < m; ++j) gr[j] += g[r * m + j];
                }
                break;
            }
            case Op::slice: {
                Tensor& ga = grad_buf(n.a);
                for (std::size_t i = 0; i < n.k1; ++i) ga[n.k0 + i] += g[i];
                break;
            }
            case Op::reshape: {
                Tensor& ga = grad_buf(n.a);
                for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
                break;
            }
            case Op::squash: {
                backward_squash(n, g);
                break;
            }
            case Op::conv1d: {
                backward_conv1d(n, g);
                break;
            }
            case Op::maxpool1d: {
                Tensor& ga = grad_buf(n.a);
                for (std::size_t i = 0; i < g.size(); ++i) ga[n.many[i]] += g[i];
                break;
            }
        }
    }

    bool needs_id(std::uint32_t id) const { return nodes_[id].needs_grad; }

    static void axpy(Tensor& dst, const Tensor& src, double factor) {
        for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += factor * src[i];
    }

    // v = alpha(r) * s with alpha(r) = r^2 / ((1 + r^2)(r + eps)):
    //   ds_k += alpha * g_k + (g . s) * alpha'(r) * s_k / r
    // At s = 0 the Jacobian vanishes, so nothing is accumulated.
    void backward_squash(const Node& n, const Tensor& g) {
        const Tensor& s = values_[n.a];
        const double eps = n.scalar;
        double n2 = 0.0;
        for (std::size_t i = 0; i < s.size(); ++i) n2 += s[i] * s[i];
        const double r = std::sqrt(n2);
        if (r == 0.0) return;
        const double denom = (1.0 + n2) * (r + eps);
        const double alpha = n2 / denom;
        const double dden = 2.0 * r * (r + eps) + (1.0 + n2);
        const double alpha_prime = (2.0 * r * denom - n2 * dden) / (denom * denom);
        double gs = 0.0;
        for (std::size_t i = 0; i < s.size(); ++i) gs += g[i] * s[i];
        const double radial = gs * alpha_prime / r;
        Tensor& ga = grad_buf(n.a);
        for (std::size_t i = 0; i < s.size(); ++i) ga[i] += alpha * g[i] + radial * s[i];
    }

    void backward_conv1d(const Node& n, const Tensor& g) {
        const Tensor& x = values_[n.a];
        const Tensor& w = values_[n.b];
        const std::size_t stride = n.k0;
        const std::size_t d = x.dim(0), C = x.dim(1), K = w.dim(0), N = w.dim(2);
        const std::size_t d_out = g.dim(0);
        const bool need_x = needs_id(n.a);
        const bool need_w = needs_id(n.b);
        const bool need_b = needs_id(n.c);
        Tensor* gx = need_x ? &grad_buf(n.a) : nullptr;
        Tensor* gw = need_w ? &grad_buf(n.b) : nullptr;
        Tensor* gb = need_b ? &grad_buf(n.c) : nullptr;
        for (std::size_t to = 0; to < d_out; ++to) {
            const std::ptrdiff_t t0 =
                static_cast<std::ptrdiff_t>(to * stride) - static_cast<std::ptrdiff_t>(K - 1);
            if (need_b) {
                for (std::size_t f = 0; f < N; ++f) (*gb)[f] += g(to, f);
            }
            for (std::size_t j = 0; j < K; ++j) {
                const std::ptrdiff_t sp = t0 + static_cast<std::ptrdiff_t>(j);
                if (sp < 0) continue;
                const std::size_t s = static_cast<std::size_t>(sp);
                for (std::size_t c = 0; c < C; ++c) {
                    if (need_x) {
                        double acc = 0.0;
                        for (std::size_t f = 0; f < N; ++f) acc += g(to, f) * w(j, c, f);
                        (*gx)(s, c) += acc;
                    }
                    if (need_w) {
                        const double xv = x(s, c);
                        if (xv != 0.0) {
                            for (std::size_t f = 0; f < N; ++f) (*gw)(j, c, f) += xv * g(to, f);
                        }
                    }
                }
            }
        }
    }

    std::vector<Node> nodes_;
    std::vector<Tensor> values_;
    std::vector<Tensor> grads_;
    std::vector<std::uint32_t> leaves_;
};

}  // namespace deepcast
