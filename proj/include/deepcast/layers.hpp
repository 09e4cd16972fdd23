#pragma once

// Feed-forward building blocks: causal 1-D convolution, stride-1 max pooling,
// and the dense head. All are thin graph builders over tape primitives.

#include <cstddef>

#include "deepcast/errors.hpp"
#include "deepcast/tape.hpp"

namespace deepcast {

enum class Activation { linear, relu };

struct Conv1dSpec {
    std::size_t filters = 0;
    std::size_t kernel_size = 0;
    std::size_t stride = 1;
    Activation activation = Activation::relu;

    void validate() const {
        if (filters < 1) throw Error("conv1d: filters must be >= 1");
        if (kernel_size < 1) throw Error("conv1d: kernel_size must be >= 1");
        if (stride < 1) throw Error("conv1d: stride must be >= 1");
    }

    std::size_t param_count(std::size_t in_channels) const {
        return filters * (kernel_size * in_channels) + filters;
    }
};

struct DenseSpec {
    std::size_t units = 0;

    std::size_t param_count(std::size_t in_dim) const { return in_dim * units + units; }
};

// weights: [kernel_size, in_channels, filters], bias: [filters],
// input: [d, in_channels] -> [d, filters] for stride 1 (causal padding).
inline Var conv1d_forward(Tape& tape, const Conv1dSpec& spec, Var weights, Var bias, Var input) {
    spec.validate();
    const Tensor& w = tape.value(weights);
    if (w.rank() != 3 || w.dim(0) != spec.kernel_size || w.dim(2) != spec.filters) {
        throw ShapeError("conv1d: weight shape " + shape_str(w.shape()) +
                         " does not match spec (kernel " + std::to_string(spec.kernel_size) +
                         ", filters " + std::to_string(spec.filters) + ")");
    }
    Var out = tape.conv1d(input, weights, bias, spec.stride);
    return spec.activation == Activation::relu ? tape.relu(out) : out;
}

// input: [d, C] -> [d, C]; only the stride-1 configuration is supported.
inline Var maxpool1d_forward(Tape& tape, std::size_t pool_size, std::size_t stride, Var input) {
    if (pool_size < 1) throw Error("maxpool1d: pool_size must be >= 1");
    if (stride != 1) throw Error("maxpool1d: only stride 1 is supported");
    return tape.maxpool1d(input, pool_size);
}

// weights: [k, units], bias: [units], input: [k] -> [units]. Linear
// activation: this is the MIMO head, and its targets can leave [0, 1].
inline Var dense_forward(Tape& tape, const DenseSpec& spec, Var weights, Var bias, Var input) {
    if (spec.units < 1) throw Error("dense: units must be >= 1");
    const Tensor& x = tape.value(input);
    const Tensor& w = tape.value(weights);
    if (x.rank() != 1 || w.rank() != 2 || x.size() != w.dim(0) || w.dim(1) != spec.units) {
        throw ShapeError("dense: input " + shape_str(x.shape()) + " incompatible with weights " +
                         shape_str(w.shape()) + " (units " + std::to_string(spec.units) + ")");
    }
    Var row = tape.reshape(input, {1, x.size()});
    Var out = tape.reshape(tape.matmul(row, weights), {spec.units});
    return tape.add(out, bias);
}

}  // namespace deepcast
