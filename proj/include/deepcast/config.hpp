#pragma once

// Run configuration: flat key=value text with [model] / [train] / [data] /
// [output] sections. Unknown sections or keys are rejected with their line
// number, and a run seed is mandatory.

#include <cstdlib>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "deepcast/data.hpp"
#include "deepcast/errors.hpp"
#include "deepcast/model.hpp"
#include "deepcast/train.hpp"

namespace deepcast {

struct RunConfig {
    ArchSpec arch;
    TrainConfig train;
    enum class Source { csv, synthetic };
    Source source = Source::csv;
    std::string csv_path;
    std::string csv_column = "Close";
    SynthKind synth_kind = SynthKind::sine;
    std::size_t synth_length = 0;
    SplitSpec split;
    std::string checkpoint_path = "model.ckpt";
    std::string log_path = "training_log.csv";
};

namespace detail {

struct ConfigEntry {
    std::string value;
    std::size_t line = 0;
    bool used = false;
};

class ConfigMap {
public:
    void insert(const std::string& section, const std::string& key, std::string value,
                std::size_t line) {
        const std::string full = section + "." + key;
        if (entries_.count(full) != 0) {
            throw ConfigError("line " + std::to_string(line) + ": duplicate key '" + key +
                              "' in [" + section + "]");
        }
        entries_[full] = ConfigEntry{std::move(value), line, false};
    }

    const ConfigEntry* find(const std::string& section, const std::string& key) {
        auto it = entries_.find(section + "." + key);
        if (it == entries_.end()) return nullptr;
        it->second.used = true;
        return &it->second;
    }

    void reject_unused() const {
        for (const auto& [full, entry] : entries_) {
            if (!entry.used) {
                const std::size_t dot = full.find('.');
                throw ConfigError("line " + std::to_string(entry.line) + ": unknown key '" +
                                  full.substr(dot + 1) + "' in [" + full.substr(0, dot) + "]");
            }
        }
    }

private:
    std::map<std::string, ConfigEntry> entries_;
};

inline std::size_t config_size(const ConfigEntry& e, const std::string& key) {
    char* end = nullptr;
    const unsigned long long v = std::strtoull(e.value.c_str(), &end, 10);
    if (e.value.empty() || end != e.value.c_str() + e.value.size()) {
        throw ConfigError("line " + std::to_string(e.line) + ": bad count for '" + key + "': " +
                          e.value);
    }
    return static_cast<std::size_t>(v);
}

inline double config_real(const ConfigEntry& e, const std::string& key) {
    char* end = nullptr;
    const double v = std::strtod(e.value.c_str(), &end);
    if (e.value.empty() || end != e.value.c_str() + e.value.size()) {
        throw ConfigError("line " + std::to_string(e.line) + ": bad number for '" + key + "': " +
                          e.value);
    }
    return v;
}

inline bool config_bool(const ConfigEntry& e, const std::string& key) {
    if (e.value == "true") return true;
    if (e.value == "false") return false;
    throw ConfigError("line " + std::to_string(e.line) + ": bad flag for '" + key +
                      "' (want true/false): " + e.value);
}

}  // namespace detail

inline RunConfig parse_run_config(const std::string& text) {
    detail::ConfigMap map;
    {
        std::istringstream in(text);
        std::string line;
        std::string section;
        std::size_t line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            std::string t = detail::trim(line);
            if (!t.empty() && t.back() == '\r') t.pop_back();
            if (t.empty() || t[0] == '#') continue;
            if (t.front() == '[') {
                if (t.back() != ']') {
                    throw ConfigError("line " + std::to_string(line_no) + ": malformed section: " +
                                      t);
                }
                section = t.substr(1, t.size() - 2);
                if (section != "model" && section != "train" && section != "data" &&
                    section != "output") {
                    throw ConfigError("line " + std::to_string(line_no) + ": unknown section '[" +
                                      section + "]'");
                }
                continue;
            }
            const std::size_t eq = t.find('=');
            if (eq == std::string::npos) {
                throw ConfigError("line " + std::to_string(line_no) + ": expected key=value: " +
                                  t);
            }
            const std::string key = detail::trim(t.substr(0, eq));
            const std::string value = detail::trim(t.substr(eq + 1));
            if (key.empty()) {
                throw ConfigError("line " + std::to_string(line_no) + ": empty key");
            }
            if (section.empty()) {
                throw ConfigError("line " + std::to_string(line_no) + ": key '" + key +
                                  "' outside any section");
            }
            map.insert(section, key, value, line_no);
        }
    }

    RunConfig cfg;

    // [model]
    const detail::ConfigEntry* kind = map.find("model", "kind");
    if (kind == nullptr) throw ConfigError("missing required key 'kind' in [model]");
    ArchKind arch_kind;
    try {
        arch_kind = arch_kind_from(kind->value);
    } catch (const Error&) {
        throw ConfigError("line " + std::to_string(kind->line) + ": unknown model kind '" +
                          kind->value + "'");
    }
    std::size_t window = 50, horizon = 5;
    if (const auto* e = map.find("model", "window")) window = detail::config_size(*e, "window");
    if (const auto* e = map.find("model", "horizon")) horizon = detail::config_size(*e, "horizon");
    cfg.arch = default_arch(arch_kind, window, horizon);
    auto conv_key = [&](const char* key) -> const detail::ConfigEntry* {
        const auto* e = map.find("model", key);
        if (e != nullptr && !cfg.arch.conv) {
            throw ConfigError("line " + std::to_string(e->line) + ": key '" + key +
                              "' not applicable to kind '" + kind->value + "'");
        }
        return e;
    };
    if (const auto* e = conv_key("conv_filters")) cfg.arch.conv->filters = detail::config_size(*e, "conv_filters");
    if (const auto* e = conv_key("conv_kernel")) cfg.arch.conv->kernel_size = detail::config_size(*e, "conv_kernel");
    if (const auto* e = conv_key("conv_stride")) cfg.arch.conv->stride = detail::config_size(*e, "conv_stride");
    auto caps_key = [&](const char* key) -> const detail::ConfigEntry* {
        const auto* e = map.find("model", key);
        if (e != nullptr && !cfg.arch.capsule) {
            throw ConfigError("line " + std::to_string(e->line) + ": key '" + key +
                              "' not applicable to kind '" + kind->value + "'");
        }
        return e;
    };
    if (const auto* e = caps_key("primary_dim")) cfg.arch.capsule->primary_dim = detail::config_size(*e, "primary_dim");
    if (const auto* e = caps_key("high_dim")) cfg.arch.capsule->high_dim = detail::config_size(*e, "high_dim");
    if (const auto* e = caps_key("routing_iters")) cfg.arch.capsule->routing_iters = detail::config_size(*e, "routing_iters");
    if (const auto* e = caps_key("routing_epsilon")) cfg.arch.capsule->epsilon = detail::config_real(*e, "routing_epsilon");
    if (const auto* e = map.find("model", "pool_size")) {
        if (arch_kind != ArchKind::cnn_lstm) {
            throw ConfigError("line " + std::to_string(e->line) +
                              ": key 'pool_size' not applicable to kind '" + kind->value + "'");
        }
        cfg.arch.pool_size = detail::config_size(*e, "pool_size");
    }
    if (const auto* e = map.find("model", "hidden")) cfg.arch.hidden = detail::config_size(*e, "hidden");
    if (const auto* e = map.find("model", "output_gate")) {
        if (e->value == "sigmoid") {
            cfg.arch.output_gate = OutputGate::sigmoid;
        } else if (e->value == "tanh") {
            cfg.arch.output_gate = OutputGate::tanh;
        } else {
            throw ConfigError("line " + std::to_string(e->line) + ": bad output_gate '" +
                              e->value + "' (want sigmoid or tanh)");
        }
    }

    // [train] — the seed is required; omitting it must fail rather than run
    // nondeterministically.
    const detail::ConfigEntry* seed = map.find("train", "seed");
    if (seed == nullptr) throw ConfigError("missing required key 'seed' in [train]");
    cfg.train.seed = static_cast<std::uint64_t>(detail::config_size(*seed, "seed"));
    if (const auto* e = map.find("train", "epochs")) cfg.train.epochs = detail::config_size(*e, "epochs");
    if (const auto* e = map.find("train", "batch_size")) cfg.train.batch_size = detail::config_size(*e, "batch_size");
    if (const auto* e = map.find("train", "lr")) cfg.train.lr = detail::config_real(*e, "lr");
    if (const auto* e = map.find("train", "lr_decay")) cfg.train.lr_decay = detail::config_real(*e, "lr_decay");
    if (const auto* e = map.find("train", "plateau_patience")) cfg.train.plateau_patience = detail::config_size(*e, "plateau_patience");
    if (const auto* e = map.find("train", "min_lr")) cfg.train.min_lr = detail::config_real(*e, "min_lr");
    if (const auto* e = map.find("train", "adam_beta1")) cfg.train.beta1 = detail::config_real(*e, "adam_beta1");
    if (const auto* e = map.find("train", "adam_beta2")) cfg.train.beta2 = detail::config_real(*e, "adam_beta2");
    if (const auto* e = map.find("train", "adam_epsilon")) cfg.train.adam_epsilon = detail::config_real(*e, "adam_epsilon");
    if (const auto* e = map.find("train", "grad_groups")) cfg.train.grad_groups = detail::config_size(*e, "grad_groups");
    if (const auto* e = map.find("train", "parallel")) cfg.train.parallel = detail::config_bool(*e, "parallel");

    // [data]
    const detail::ConfigEntry* source = map.find("data", "source");
    if (source == nullptr) throw ConfigError("missing required key 'source' in [data]");
    if (source->value == "csv") {
        cfg.source = RunConfig::Source::csv;
        const auto* path = map.find("data", "csv_path");
        if (path == nullptr) throw ConfigError("missing required key 'csv_path' in [data]");
        cfg.csv_path = path->value;
        if (const auto* e = map.find("data", "csv_column")) cfg.csv_column = e->value;
    } else if (source->value == "synthetic") {
        cfg.source = RunConfig::Source::synthetic;
        const auto* kind_e = map.find("data", "synth_kind");
        if (kind_e == nullptr) throw ConfigError("missing required key 'synth_kind' in [data]");
        if (kind_e->value == "sine") {
            cfg.synth_kind = SynthKind::sine;
        } else if (kind_e->value == "noisy_sine") {
            cfg.synth_kind = SynthKind::noisy_sine;
        } else if (kind_e->value == "random_walk") {
            cfg.synth_kind = SynthKind::random_walk;
        } else {
            throw ConfigError("line " + std::to_string(kind_e->line) + ": unknown synth_kind '" +
                              kind_e->value + "'");
        }
        const auto* len = map.find("data", "synth_length");
        if (len == nullptr) throw ConfigError("missing required key 'synth_length' in [data]");
        cfg.synth_length = detail::config_size(*len, "synth_length");
    } else {
        throw ConfigError("line " + std::to_string(source->line) + ": unknown source '" +
                          source->value + "' (want csv or synthetic)");
    }
    if (const auto* e = map.find("data", "split_train")) cfg.split.train_len = detail::config_size(*e, "split_train");
    if (const auto* e = map.find("data", "split_val")) cfg.split.val_len = detail::config_size(*e, "split_val");

    // [output]
    if (const auto* e = map.find("output", "checkpoint")) cfg.checkpoint_path = e->value;
    if (const auto* e = map.find("output", "log")) cfg.log_path = e->value;

    map.reject_unused();
    try {
        cfg.arch.validate();
        cfg.train.validate();
    } catch (const Error& e) {
        throw ConfigError(std::string("invalid configuration: ") + e.what());
    }
    return cfg;
}

inline RunConfig load_run_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_run_config(buf.str());
}

}  // namespace deepcast
