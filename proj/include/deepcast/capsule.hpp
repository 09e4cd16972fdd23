#pragma once

// Capsule stage: primary-capsule formation, squashing, per-channel linear
// transformation, and time-distributed dynamic routing. Routing runs
// independently per temporal slice, so output capsule t depends only on the
// primary capsules of slice t.

#include <cstddef>
#include <span>
#include <vector>

#include "deepcast/errors.hpp"
#include "deepcast/layers.hpp"
#include "deepcast/tape.hpp"

namespace deepcast {

struct CapsuleConfig {
    std::size_t primary_dim = 8;    // elements per primary capsule
    std::size_t high_dim = 256;     // elements per high-level capsule
    std::size_t routing_iters = 3;
    double epsilon = 1e-9;          // norm guard in the squash denominator

    void validate() const {
        if (primary_dim < 1) throw Error("capsule: primary_dim must be >= 1");
        if (high_dim < 1) throw Error("capsule: high_dim must be >= 1");
        if (routing_iters < 1) throw Error("capsule: routing iterations must be >= 1");
        if (!(epsilon > 0.0)) throw Error("capsule: epsilon must be positive");
    }

    // n = channels / primary_dim; channels must divide evenly.
    std::size_t capsules_per_slice(std::size_t channels) const {
        if (channels == 0 || channels % primary_dim != 0) {
            throw ShapeError("capsule: channel count " + std::to_string(channels) +
                             " is not divisible by primary_dim " + std::to_string(primary_dim));
        }
        return channels / primary_dim;
    }

    std::size_t transform_param_count(std::size_t channels) const {
        return capsules_per_slice(channels) * primary_dim * high_dim;
    }
};

// Per-slice routing variables captured for inspection: logits b and
// couplings c per iteration, plus the final output capsule x.
struct RoutingState {
    std::vector<Tensor> logits;
    std::vector<Tensor> couplings;
    Tensor output;
};

// [d, N] -> [d, n, primary_dim]. Pure reshape: channel c of slice t becomes
// element c mod primary_dim of capsule c div primary_dim.
inline Var form_primary_capsules(Tape& tape, Var feature_map, std::size_t primary_dim) {
    const Tensor& fm = tape.value(feature_map);
    if (fm.rank() != 2) {
        throw ShapeError("primary capsules: feature map must be rank 2, got " +
                         shape_str(fm.shape()));
    }
    if (primary_dim == 0 || fm.dim(1) % primary_dim != 0) {
        throw ShapeError("primary capsules: channel count " + std::to_string(fm.dim(1)) +
                         " is not divisible by primary_dim " + std::to_string(primary_dim));
    }
    return tape.reshape(feature_map, {fm.dim(0), fm.dim(1) / primary_dim, primary_dim});
}

inline Var squash(Tape& tape, Var s, double epsilon) { return tape.squash(s, epsilon); }

// u = W . v, no bias. W: [high_dim, primary_dim], v: [primary_dim].
inline Var transform(Tape& tape, Var w, Var v) {
    const Tensor& wt = tape.value(w);
    const Tensor& vt = tape.value(v);
    if (wt.rank() != 2 || vt.rank() != 1 || wt.dim(1) != vt.size()) {
        throw ShapeError("capsule transform: W " + shape_str(wt.shape()) +
                         " incompatible with v " + shape_str(vt.shape()));
    }
    const std::size_t high = wt.dim(0);
    return tape.reshape(tape.matmul(w, tape.reshape(v, {vt.size(), 1})), {high});
}

// Dynamic routing over one temporal slice. u holds n transformed capsules of
// equal dimension. Per iteration: c <- softmax(b); x <- sum_i c_i * u_i;
// b_i <- b_i + u_i . x. Logits start at exactly zero, x is returned without a
// final squash, and all iterations stay on the tape, so gradients flow
// through the full unrolled recurrence.
inline Var route_slice(Tape& tape, std::span<const Var> u, std::size_t iterations,
                       RoutingState* state = nullptr) {
    if (u.empty()) throw ShapeError("routing: need at least one capsule (n = 0)");
    if (iterations < 1) throw Error("routing: iterations must be >= 1");
    const std::size_t n = u.size();
    const std::size_t high = tape.value(u[0]).size();
    Var u_mat = tape.concat_rows(u);  // [n, high]
    Var b = tape.constant(Tensor({n}));
    Var x{};
    for (std::size_t it = 0; it < iterations; ++it) {
        Var c = tape.softmax(b);
        x = tape.reshape(tape.matmul(tape.reshape(c, {1, n}), u_mat), {high});
        if (state != nullptr) {
            state->logits.push_back(tape.value(b));
            state->couplings.push_back(tape.value(c));
        }
        if (it + 1 < iterations) {
            Var agreement = tape.reshape(tape.matmul(u_mat, tape.reshape(x, {high, 1})), {n});
            b = tape.add(b, agreement);
        }
    }
    if (state != nullptr) state->output = tape.value(x);
    return x;
}

// Full capsule stage over a feature map [d, N]. transforms holds the
// channel-indexed matrices W_i as one tensor [n, high_dim, primary_dim];
// they are shared across time steps. Returns [d, high_dim].
inline Var capsule_stage(Tape& tape, Var feature_map, Var transforms, const CapsuleConfig& cfg,
                         std::vector<RoutingState>* states = nullptr) {
    cfg.validate();
    const Tensor& fm = tape.value(feature_map);
    const std::size_t d = fm.dim(0);
    const std::size_t n = cfg.capsules_per_slice(fm.dim(1));
    const Tensor& tr = tape.value(transforms);
    const Shape want{n, cfg.high_dim, cfg.primary_dim};
    if (tr.shape() != want) {
        throw ShapeError("capsule: transform tensor " + shape_str(tr.shape()) + ", expected " +
                         shape_str(want));
    }
    Var caps = form_primary_capsules(tape, feature_map, cfg.primary_dim);
    const std::size_t p = cfg.primary_dim;
    const std::size_t h = cfg.high_dim;
    std::vector<Var> w(n);
    for (std::size_t i = 0; i < n; ++i) {
        w[i] = tape.slice(transforms, i * h * p, h * p, {h, p});
    }
    std::vector<Var> rows(d);
    std::vector<Var> u(n);
    for (std::size_t t = 0; t < d; ++t) {
        for (std::size_t i = 0; i < n; ++i) {
            Var s = tape.slice(caps, (t * n + i) * p, p, {p});
            u[i] = transform(tape, w[i], squash(tape, s, cfg.epsilon));
        }
        RoutingState* st = states != nullptr ? &states->emplace_back() : nullptr;
        rows[t] = route_slice(tape, u, cfg.routing_iters, st);
    }
    return tape.concat_rows(rows);
}

// Convolution followed by the capsule stage: [d, 1] -> [d, high_dim].
inline Var capsnet_forward(Tape& tape, const Conv1dSpec& conv, Var conv_w, Var conv_b,
                           Var transforms, const CapsuleConfig& cfg, Var input,
                           std::vector<RoutingState>* states = nullptr) {
    Var fm = conv1d_forward(tape, conv, conv_w, conv_b, input);
    return capsule_stage(tape, fm, transforms, cfg, states);
}

}  // namespace deepcast
