#pragma once

// Assembles the four forecasting architectures, counts their parameters,
// runs end-to-end forward passes, and serializes checkpoints.

#include <bit>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "deepcast/capsule.hpp"
#include "deepcast/data.hpp"
#include "deepcast/layers.hpp"
#include "deepcast/parameters.hpp"
#include "deepcast/prng.hpp"
#include "deepcast/recurrent.hpp"
#include "deepcast/tape.hpp"

namespace deepcast {

enum class ArchKind { capsnet_lstm, lstm, rnn, cnn_lstm };

inline const char* arch_kind_name(ArchKind kind) {
    switch (kind) {
        case ArchKind::capsnet_lstm: return "capsnet_lstm";
        case ArchKind::lstm: return "lstm";
        case ArchKind::rnn: return "rnn";
        case ArchKind::cnn_lstm: return "cnn_lstm";
    }
    return "?";
}

inline ArchKind arch_kind_from(std::string_view name) {
    if (name == "capsnet_lstm") return ArchKind::capsnet_lstm;
    if (name == "lstm") return ArchKind::lstm;
    if (name == "rnn") return ArchKind::rnn;
    if (name == "cnn_lstm") return ArchKind::cnn_lstm;
    throw Error("unknown model kind '" + std::string(name) + "'");
}

struct ArchSpec {
    ArchKind kind = ArchKind::capsnet_lstm;
    std::size_t window = 50;   // d, input sequence length
    std::size_t horizon = 5;   // H, forecast steps emitted in one pass
    std::optional<Conv1dSpec> conv;
    std::optional<CapsuleConfig> capsule;
    std::size_t pool_size = 2;  // cnn_lstm only
    std::size_t hidden = 200;
    OutputGate output_gate = OutputGate::sigmoid;
    DenseSpec head{};

    bool has_conv() const { return kind == ArchKind::capsnet_lstm || kind == ArchKind::cnn_lstm; }

    void validate() const {
        if (window < 1) throw Error("model: window must be >= 1");
        if (horizon < 1) throw Error("model: horizon must be >= 1");
        if (hidden < 1) throw Error("model: hidden must be >= 1");
        if (conv.has_value() != has_conv()) {
            throw Error(std::string("model: conv spec ") +
                        (conv ? "not allowed" : "required") + " for kind " +
                        arch_kind_name(kind));
        }
        if (capsule.has_value() != (kind == ArchKind::capsnet_lstm)) {
            throw Error(std::string("model: capsule config ") +
                        (capsule ? "not allowed" : "required") + " for kind " +
                        arch_kind_name(kind));
        }
        if (head.units != horizon) {
            throw Error("model: head units (" + std::to_string(head.units) +
                        ") must equal horizon (" + std::to_string(horizon) + ")");
        }
        if (conv) conv->validate();
        if (capsule) {
            capsule->validate();
            capsule->capsules_per_slice(conv->filters);
        }
        if (kind == ArchKind::cnn_lstm && pool_size < 1) {
            throw Error("model: pool_size must be >= 1");
        }
    }

    // Feature width entering the recurrent layer.
    std::size_t recurrent_input_dim() const {
        switch (kind) {
            case ArchKind::capsnet_lstm: return capsule->high_dim;
            case ArchKind::cnn_lstm: return conv->filters;
            default: return 1;
        }
    }
};

// Table-style defaults: Conv1D(256, k=2, s=1, relu), 8-element primary
// capsules routed 3 times into 256-element capsules, recurrent width 200,
// 5-step head on a 50-step window.
inline ArchSpec default_arch(ArchKind kind, std::size_t window = 50, std::size_t horizon = 5) {
    ArchSpec spec;
    spec.kind = kind;
    spec.window = window;
    spec.horizon = horizon;
    spec.head.units = horizon;
    if (spec.has_conv()) spec.conv = Conv1dSpec{256, 2, 1, Activation::relu};
    if (kind == ArchKind::capsnet_lstm) spec.capsule = CapsuleConfig{8, 256, 3, 1e-9};
    return spec;
}

enum class ParamInit { glorot, zeros, ones };

struct ParamInfo {
    std::string name;
    Shape shape;
    ParamInit init = ParamInit::glorot;
    std::size_t fan_in = 0, fan_out = 0;
};

namespace detail {

inline void add_lstm_params(std::vector<ParamInfo>& out, std::size_t in_dim, std::size_t hidden) {
    const Shape kernel{in_dim + hidden, hidden};
    const Shape bias{hidden};
    const std::size_t fi = in_dim + hidden, fo = hidden;
    out.push_back({"lstm.w_f", kernel, ParamInit::glorot, fi, fo});
    out.push_back({"lstm.b_f", bias, ParamInit::ones, 0, 0});  // forget bias starts at 1
    out.push_back({"lstm.w_u", kernel, ParamInit::glorot, fi, fo});
    out.push_back({"lstm.b_u", bias, ParamInit::zeros, 0, 0});
    out.push_back({"lstm.w_c", kernel, ParamInit::glorot, fi, fo});
    out.push_back({"lstm.b_c", bias, ParamInit::zeros, 0, 0});
    out.push_back({"lstm.w_o", kernel, ParamInit::glorot, fi, fo});
    out.push_back({"lstm.b_o", bias, ParamInit::zeros, 0, 0});
}

}  // namespace detail

// Declared parameter order; fixes initialization draws, optimizer state,
// and checkpoint layout.
inline std::vector<ParamInfo> param_layout(const ArchSpec& spec) {
    spec.validate();
    std::vector<ParamInfo> out;
    if (spec.has_conv()) {
        const std::size_t k = spec.conv->kernel_size, f = spec.conv->filters;
        out.push_back({"conv.kernel", {k, 1, f}, ParamInit::glorot, k * 1, k * f});
        out.push_back({"conv.bias", {f}, ParamInit::zeros, 0, 0});
    }
    if (spec.kind == ArchKind::capsnet_lstm) {
        const std::size_t n = spec.capsule->capsules_per_slice(spec.conv->filters);
        out.push_back({"capsule.transforms",
                       {n, spec.capsule->high_dim, spec.capsule->primary_dim},
                       ParamInit::glorot, spec.capsule->primary_dim, spec.capsule->high_dim});
    }
    if (spec.kind == ArchKind::rnn) {
        out.push_back({"rnn.kernel", {1 + spec.hidden, spec.hidden}, ParamInit::glorot,
                       1 + spec.hidden, spec.hidden});
        out.push_back({"rnn.bias", {spec.hidden}, ParamInit::zeros, 0, 0});
    } else {
        detail::add_lstm_params(out, spec.recurrent_input_dim(), spec.hidden);
    }
    out.push_back({"head.weight", {spec.hidden, spec.horizon}, ParamInit::glorot, spec.hidden,
                   spec.horizon});
    out.push_back({"head.bias", {spec.horizon}, ParamInit::zeros, 0, 0});
    return out;
}

// Deterministic initialization: kernels drawn uniformly from the Glorot
// bounds +/- sqrt(6 / (fan_in + fan_out)) in declared order, row-major
// within each tensor; biases zero except the LSTM forget-gate bias (1.0).
inline ParameterSet build_model(const ArchSpec& spec, Prng& prng) {
    ParameterSet params;
    for (const ParamInfo& info : param_layout(spec)) {
        Tensor t(info.shape);
        switch (info.init) {
            case ParamInit::glorot: {
                const double bound =
                    std::sqrt(6.0 / static_cast<double>(info.fan_in + info.fan_out));
                for (std::size_t i = 0; i < t.size(); ++i) t[i] = prng.uniform(-bound, bound);
                break;
            }
            case ParamInit::zeros:
                break;
            case ParamInit::ones:
                for (std::size_t i = 0; i < t.size(); ++i) t[i] = 1.0;
                break;
        }
        params.add(info.name, std::move(t));
    }
    return params;
}

struct LayerInfo {
    std::string name;
    Shape output_shape;
    std::size_t params = 0;
};

// Closed-form per-layer parameter counts and output shapes, in pipeline
// order (the input stage itself carries no parameters and is omitted).
inline std::vector<LayerInfo> count_parameters(const ArchSpec& spec) {
    spec.validate();
    std::vector<LayerInfo> rows;
    const std::size_t d = spec.window;
    if (spec.has_conv()) {
        rows.push_back({"conv1d", {d, spec.conv->filters}, spec.conv->param_count(1)});
    }
    if (spec.kind == ArchKind::capsnet_lstm) {
        const std::size_t n = spec.capsule->capsules_per_slice(spec.conv->filters);
        const std::size_t p = spec.capsule->primary_dim;
        rows.push_back({"reshape", {d, n, p}, 0});
        rows.push_back({"squash", {d, n, p}, 0});
        rows.push_back({"routing", {d, spec.capsule->high_dim},
                        spec.capsule->transform_param_count(spec.conv->filters)});
    }
    if (spec.kind == ArchKind::cnn_lstm) {
        rows.push_back({"maxpool1d", {d, spec.conv->filters}, 0});
    }
    if (spec.kind == ArchKind::rnn) {
        rows.push_back({"rnn", {spec.hidden}, rnn_param_count(1, spec.hidden)});
    } else {
        rows.push_back(
            {"lstm", {spec.hidden}, lstm_param_count(spec.recurrent_input_dim(), spec.hidden)});
    }
    rows.push_back({"dense", {spec.horizon}, spec.head.param_count(spec.hidden)});
    return rows;
}

inline std::size_t total_parameters(const ArchSpec& spec) {
    std::size_t total = 0;
    for (const LayerInfo& row : count_parameters(spec)) total += row.params;
    return total;
}

// Parameter leaves registered on a tape, aligned with ParameterSet order.
struct ModelVars {
    const ParameterSet* params = nullptr;
    std::vector<Var> vars;

    Var at(std::string_view name) const {
        for (std::size_t i = 0; i < params->count(); ++i) {
            if (params->name(i) == name) return vars[i];
        }
        throw Error("model: unknown parameter '" + std::string(name) + "'");
    }
};

inline ModelVars register_params(Tape& tape, const ParameterSet& params) {
    ModelVars mv;
    mv.params = &params;
    mv.vars.reserve(params.count());
    for (std::size_t i = 0; i < params.count(); ++i) {
        mv.vars.push_back(tape.leaf(params.tensor(i)));
    }
    return mv;
}

inline LstmVars lstm_vars(const ModelVars& mv) {
    return LstmVars{mv.at("lstm.w_f"), mv.at("lstm.b_f"), mv.at("lstm.w_u"), mv.at("lstm.b_u"),
                    mv.at("lstm.w_c"), mv.at("lstm.b_c"), mv.at("lstm.w_o"), mv.at("lstm.b_o")};
}

// Kind-specific pipeline from [d, 1] to the H-step forecast [H] on the
// normalized scale. `shapes`, when given, records the stage output shapes
// starting with the input.
inline Var model_forward_graph(Tape& tape, const ArchSpec& spec, const ModelVars& mv, Var input,
                               std::vector<Shape>* shapes = nullptr) {
    spec.validate();
    const Tensor& in = tape.value(input);
    if (in.rank() != 2 || in.dim(0) != spec.window || in.dim(1) != 1) {
        throw ShapeError("model: input must be " + shape_str({spec.window, 1}) + ", got " +
                         shape_str(in.shape()));
    }
    auto record = [&](const Shape& s) {
        if (shapes != nullptr) shapes->push_back(s);
    };
    record(in.shape());
    Var features = input;
    if (spec.has_conv()) {
        features = conv1d_forward(tape, *spec.conv, mv.at("conv.kernel"), mv.at("conv.bias"),
                                  features);
        record(tape.value(features).shape());
    }
    if (spec.kind == ArchKind::capsnet_lstm) {
        const std::size_t n = spec.capsule->capsules_per_slice(spec.conv->filters);
        record({spec.window, n, spec.capsule->primary_dim});  // reshape
        record({spec.window, n, spec.capsule->primary_dim});  // squash
        features = capsule_stage(tape, features, mv.at("capsule.transforms"), *spec.capsule);
        record(tape.value(features).shape());
    }
    if (spec.kind == ArchKind::cnn_lstm) {
        features = maxpool1d_forward(tape, spec.pool_size, 1, features);
        record(tape.value(features).shape());
    }
    Var hidden;
    if (spec.kind == ArchKind::rnn) {
        hidden = rnn_sequence(tape, mv.at("rnn.kernel"), mv.at("rnn.bias"), features, spec.hidden);
    } else {
        hidden = lstm_sequence(tape, lstm_vars(mv), features, spec.hidden, spec.output_gate);
    }
    record(tape.value(hidden).shape());
    Var out = dense_forward(tape, spec.head, mv.at("head.weight"), mv.at("head.bias"), hidden);
    record(tape.value(out).shape());
    return out;
}

// Pure function of (params, input): repeated calls agree bitwise.
inline Tensor model_forward(const ArchSpec& spec, const ParameterSet& params, const Tensor& input,
                            std::vector<Shape>* shapes = nullptr) {
    Tape tape;
    ModelVars mv = register_params(tape, params);
    Var in = tape.constant(input);
    return tape.value(model_forward_graph(tape, spec, mv, in, shapes));
}

// ---------------------------------------------------------------------------
// Checkpoints.
//
// Binary layout: magic "C1DL"; u32 little-endian version (= 1); u32 byte
// length + text block (key=value lines for the architecture spec and
// normalization constants); u32 tensor count; per tensor: u32 name length +
// name, u32 rank, rank u64 dims, then raw little-endian IEEE-754 doubles.
// ---------------------------------------------------------------------------

struct Checkpoint {
    ArchSpec spec;
    NormParams norm;
    ParameterSet params;
};

inline constexpr char kCheckpointMagic[4] = {'C', '1', 'D', 'L'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail {

inline std::string fmt_g17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

inline void write_u32(std::ostream& out, std::uint32_t v) {
    char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
    out.write(b, 4);
}

inline void write_u64(std::ostream& out, std::uint64_t v) {
    char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
    out.write(b, 8);
}

inline void write_f64(std::ostream& out, double v) {
    write_u64(out, std::bit_cast<std::uint64_t>(v));
}

inline std::uint32_t read_u32(std::istream& in) {
    unsigned char b[4];
    if (!in.read(reinterpret_cast<char*>(b), 4)) {
        throw CheckpointError("truncated checkpoint file");
    }
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
    return v;
}

inline std::uint64_t read_u64(std::istream& in) {
    unsigned char b[8];
    if (!in.read(reinterpret_cast<char*>(b), 8)) {
        throw CheckpointError("truncated checkpoint file");
    }
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
}

inline double read_f64(std::istream& in) { return std::bit_cast<double>(read_u64(in)); }

inline std::string read_bytes(std::istream& in, std::size_t n) {
    std::string s(n, '\0');
    if (n > 0 && !in.read(s.data(), static_cast<std::streamsize>(n))) {
        throw CheckpointError("truncated checkpoint file");
    }
    return s;
}

inline std::string encode_spec_text(const ArchSpec& spec, const NormParams& norm) {
    std::ostringstream out;
    out << "kind=" << arch_kind_name(spec.kind) << "\n";
    out << "window=" << spec.window << "\n";
    out << "horizon=" << spec.horizon << "\n";
    if (spec.conv) {
        out << "conv_filters=" << spec.conv->filters << "\n";
        out << "conv_kernel=" << spec.conv->kernel_size << "\n";
        out << "conv_stride=" << spec.conv->stride << "\n";
        out << "conv_activation="
            << (spec.conv->activation == Activation::relu ? "relu" : "linear") << "\n";
    }
    if (spec.capsule) {
        out << "primary_dim=" << spec.capsule->primary_dim << "\n";
        out << "high_dim=" << spec.capsule->high_dim << "\n";
        out << "routing_iters=" << spec.capsule->routing_iters << "\n";
        out << "routing_epsilon=" << fmt_g17(spec.capsule->epsilon) << "\n";
    }
    if (spec.kind == ArchKind::cnn_lstm) out << "pool_size=" << spec.pool_size << "\n";
    out << "hidden=" << spec.hidden << "\n";
    out << "output_gate=" << (spec.output_gate == OutputGate::sigmoid ? "sigmoid" : "tanh")
        << "\n";
    out << "norm_min=" << fmt_g17(norm.min) << "\n";
    out << "norm_max=" << fmt_g17(norm.max) << "\n";
    return out.str();
}

inline std::size_t parse_size(const std::string& v, const std::string& key) {
    char* end = nullptr;
    const unsigned long long parsed = std::strtoull(v.c_str(), &end, 10);
    if (v.empty() || end != v.c_str() + v.size()) {
        throw CheckpointError("checkpoint: bad value for '" + key + "': " + v);
    }
    return static_cast<std::size_t>(parsed);
}

inline double parse_real(const std::string& v, const std::string& key) {
    char* end = nullptr;
    const double parsed = std::strtod(v.c_str(), &end);
    if (v.empty() || end != v.c_str() + v.size()) {
        throw CheckpointError("checkpoint: bad value for '" + key + "': " + v);
    }
    return parsed;
}

inline void decode_spec_text(const std::string& text, ArchSpec& spec, NormParams& norm) {
    std::istringstream in(text);
    std::string line;
    bool have_kind = false, have_min = false, have_max = false;
    std::optional<Conv1dSpec> conv;
    std::optional<CapsuleConfig> caps;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos) throw CheckpointError("checkpoint: bad spec line: " + line);
        const std::string key = line.substr(0, eq);
        const std::string value = line.substr(eq + 1);
        if (key == "kind") {
            spec.kind = arch_kind_from(value);
            have_kind = true;
        } else if (key == "window") {
            spec.window = parse_size(value, key);
        } else if (key == "horizon") {
            spec.horizon = parse_size(value, key);
            spec.head.units = spec.horizon;
        } else if (key == "conv_filters") {
            if (!conv) conv = Conv1dSpec{};
            conv->filters = parse_size(value, key);
        } else if (key == "conv_kernel") {
            if (!conv) conv = Conv1dSpec{};
            conv->kernel_size = parse_size(value, key);
        } else if (key == "conv_stride") {
            if (!conv) conv = Conv1dSpec{};
            conv->stride = parse_size(value, key);
        } else if (key == "conv_activation") {
            if (!conv) conv = Conv1dSpec{};
            if (value == "relu") {
                conv->activation = Activation::relu;
            } else if (value == "linear") {
                conv->activation = Activation::linear;
            } else {
                throw CheckpointError("checkpoint: bad conv activation: " + value);
            }
        } else if (key == "primary_dim") {
            if (!caps) caps = CapsuleConfig{};
            caps->primary_dim = parse_size(value, key);
        } else if (key == "high_dim") {
            if (!caps) caps = CapsuleConfig{};
            caps->high_dim = parse_size(value, key);
        } else if (key == "routing_iters") {
            if (!caps) caps = CapsuleConfig{};
            caps->routing_iters = parse_size(value, key);
        } else if (key == "routing_epsilon") {
            if (!caps) caps = CapsuleConfig{};
            caps->epsilon = parse_real(value, key);
        } else if (key == "pool_size") {
            spec.pool_size = parse_size(value, key);
        } else if (key == "hidden") {
            spec.hidden = parse_size(value, key);
        } else if (key == "output_gate") {
            if (value == "sigmoid") {
                spec.output_gate = OutputGate::sigmoid;
            } else if (value == "tanh") {
                spec.output_gate = OutputGate::tanh;
            } else {
                throw CheckpointError("checkpoint: bad output gate: " + value);
            }
        } else if (key == "norm_min") {
            norm.min = parse_real(value, key);
            have_min = true;
        } else if (key == "norm_max") {
            norm.max = parse_real(value, key);
            have_max = true;
        } else {
            throw CheckpointError("checkpoint: unknown spec key '" + key + "'");
        }
    }
    if (!have_kind || !have_min || !have_max) {
        throw CheckpointError("checkpoint: incomplete spec block");
    }
    spec.conv = conv;
    spec.capsule = caps;
    try {
        spec.validate();
        norm.validate();
    } catch (const Error& e) {
        throw CheckpointError(std::string("checkpoint: invalid spec: ") + e.what());
    }
}

}  // namespace detail

inline void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write file: " + path);
    out.write(kCheckpointMagic, 4);
    detail::write_u32(out, kCheckpointVersion);
    const std::string text = detail::encode_spec_text(ckpt.spec, ckpt.norm);
    detail::write_u32(out, static_cast<std::uint32_t>(text.size()));
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    detail::write_u32(out, static_cast<std::uint32_t>(ckpt.params.count()));
    for (std::size_t i = 0; i < ckpt.params.count(); ++i) {
        const std::string& name = ckpt.params.name(i);
        const Tensor& t = ckpt.params.tensor(i);
        detail::write_u32(out, static_cast<std::uint32_t>(name.size()));
        out.write(name.data(), static_cast<std::streamsize>(name.size()));
        detail::write_u32(out, static_cast<std::uint32_t>(t.rank()));
        for (std::size_t k = 0; k < t.rank(); ++k) detail::write_u64(out, t.dim(k));
        for (std::size_t k = 0; k < t.size(); ++k) detail::write_f64(out, t[k]);
    }
    if (!out) throw DataError("write failed: " + path);
}

// Validates magic, version, the spec block, and each tensor's name and shape
// against the spec's declared layout before reading that tensor's data.
inline Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open file: " + path);
    char magic[4];
    if (!in.read(magic, 4)) throw CheckpointError("truncated checkpoint file");
    if (std::string_view(magic, 4) != std::string_view(kCheckpointMagic, 4)) {
        throw CheckpointError("bad checkpoint magic (not a checkpoint file)");
    }
    const std::uint32_t version = detail::read_u32(in);
    if (version != kCheckpointVersion) {
        throw CheckpointError("unsupported checkpoint version " + std::to_string(version) +
                              " (supported: " + std::to_string(kCheckpointVersion) + ")");
    }
    const std::uint32_t text_len = detail::read_u32(in);
    const std::string text = detail::read_bytes(in, text_len);
    Checkpoint ckpt;
    detail::decode_spec_text(text, ckpt.spec, ckpt.norm);
    const std::vector<ParamInfo> layout = param_layout(ckpt.spec);
    const std::uint32_t tensor_count = detail::read_u32(in);
    if (tensor_count != layout.size()) {
        throw CheckpointError("checkpoint shape table mismatch: " + std::to_string(tensor_count) +
                              " tensors, spec declares " + std::to_string(layout.size()));
    }
    for (const ParamInfo& info : layout) {
        const std::uint32_t name_len = detail::read_u32(in);
        const std::string name = detail::read_bytes(in, name_len);
        const std::uint32_t rank = detail::read_u32(in);
        Shape shape(rank);
        for (std::uint32_t k = 0; k < rank; ++k) {
            shape[k] = static_cast<std::size_t>(detail::read_u64(in));
        }
        if (name != info.name || shape != info.shape) {
            throw CheckpointError("checkpoint shape table mismatch: got '" + name + "' " +
                                  shape_str(shape) + ", expected '" + info.name + "' " +
                                  shape_str(info.shape));
        }
        Tensor t(shape);
        for (std::size_t k = 0; k < t.size(); ++k) t[k] = detail::read_f64(in);
        ckpt.params.add(name, std::move(t));
    }
    return ckpt;
}

}  // namespace deepcast
