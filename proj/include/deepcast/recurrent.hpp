#pragma once

// LSTM and simple-RNN cells plus the many-to-one sequence fold. Gate kernels
// are stored as four separate [(in_dim + hidden), hidden] matrices acting on
// the concatenation [h, x], mirroring the cell equations one-to-one.

#include <cstddef>

#include "deepcast/errors.hpp"
#include "deepcast/tape.hpp"

namespace deepcast {

// The output gate is sigmoid by default; the tanh variant is selectable.
enum class OutputGate { sigmoid, tanh };

inline std::size_t lstm_param_count(std::size_t in_dim, std::size_t hidden) {
    return 4 * ((in_dim + hidden) * hidden + hidden);
}

inline std::size_t rnn_param_count(std::size_t in_dim, std::size_t hidden) {
    return (in_dim + hidden) * hidden + hidden;
}

struct LstmVars {
    Var w_f, b_f;  // forget gate
    Var w_u, b_u;  // update gate
    Var w_c, b_c;  // candidate state
    Var w_o, b_o;  // output gate
};

struct LstmStateVars {
    Var h, c;
};

// Gate activations of one step, exposed for inspection.
struct LstmStepTrace {
    Var f, u, candidate, o;
};

inline LstmStateVars lstm_step(Tape& tape, const LstmVars& p, LstmStateVars state, Var x,
                               OutputGate gate = OutputGate::sigmoid,
                               LstmStepTrace* trace = nullptr) {
    const std::size_t hidden = tape.value(state.h).size();
    Var z = tape.concat(state.h, x);
    Var zr = tape.reshape(z, {1, tape.value(z).size()});
    auto pre = [&](Var w, Var b) {
        return tape.add(tape.reshape(tape.matmul(zr, w), {hidden}), b);
    };
    Var f = tape.sigmoid(pre(p.w_f, p.b_f));
    Var u = tape.sigmoid(pre(p.w_u, p.b_u));
    Var candidate = tape.tanh(pre(p.w_c, p.b_c));
    Var o_pre = pre(p.w_o, p.b_o);
    Var o = gate == OutputGate::sigmoid ? tape.sigmoid(o_pre) : tape.tanh(o_pre);
    Var c_new = tape.add(tape.mul(f, state.c), tape.mul(u, candidate));
    Var h_new = tape.mul(o, tape.tanh(c_new));
    if (trace != nullptr) *trace = LstmStepTrace{f, u, candidate, o};
    return LstmStateVars{h_new, c_new};
}

// h' = tanh(W . [h, x] + b)
inline Var rnn_step(Tape& tape, Var w, Var b, Var h, Var x) {
    const std::size_t hidden = tape.value(h).size();
    Var z = tape.concat(h, x);
    Var zr = tape.reshape(z, {1, tape.value(z).size()});
    return tape.tanh(tape.add(tape.reshape(tape.matmul(zr, w), {hidden}), b));
}

inline void check_sequence_input(const Tensor& inputs) {
    if (inputs.rank() != 2) {
        throw ShapeError("sequence: inputs must be rank 2 (time, features), got " +
                         shape_str(inputs.shape()));
    }
    if (inputs.dim(0) < 1) throw ShapeError("sequence: empty input sequence");
}

// Folds the cell over t = 1..d from an all-zero initial state and returns
// only the final hidden state (many-to-one).
inline Var lstm_sequence(Tape& tape, const LstmVars& p, Var inputs, std::size_t hidden,
                         OutputGate gate = OutputGate::sigmoid) {
    const Tensor& in = tape.value(inputs);
    check_sequence_input(in);
    const std::size_t d = in.dim(0), width = in.dim(1);
    LstmStateVars state{tape.constant(Tensor({hidden})), tape.constant(Tensor({hidden}))};
    for (std::size_t t = 0; t < d; ++t) {
        Var x = tape.slice(inputs, t * width, width, {width});
        state = lstm_step(tape, p, state, x, gate);
    }
    return state.h;
}

inline Var rnn_sequence(Tape& tape, Var w, Var b, Var inputs, std::size_t hidden) {
    const Tensor& in = tape.value(inputs);
    check_sequence_input(in);
    const std::size_t d = in.dim(0), width = in.dim(1);
    Var h = tape.constant(Tensor({hidden}));
    for (std::size_t t = 0; t < d; ++t) {
        Var x = tape.slice(inputs, t * width, width, {width});
        h = rnn_step(tape, w, b, h, x);
    }
    return h;
}

}  // namespace deepcast
