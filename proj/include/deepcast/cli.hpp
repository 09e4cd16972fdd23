#pragma once

// Command implementations behind the CLI: train / evaluate / predict /
// inspect. Each returns a process exit code; error classes map to disjoint
// codes (2 config, 3 data or checkpoint, 4 non-finite loss, 5 window/horizon
// mismatch).

#include <fstream>
#include <iostream>
#include <ostream>
#include <string>

#include "deepcast/config.hpp"
#include "deepcast/data.hpp"
#include "deepcast/errors.hpp"
#include "deepcast/metrics.hpp"
#include "deepcast/model.hpp"
#include "deepcast/train.hpp"

namespace deepcast {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitData = 3;
inline constexpr int kExitTrain = 4;
inline constexpr int kExitMismatch = 5;

namespace detail {

template <typename Fn>
int run_command(std::ostream& err, Fn&& fn) {
    try {
        fn();
        return kExitOk;
    } catch (const ConfigError& e) {
        err << "error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const EvalError& e) {
        err << "error: " << e.what() << "\n";
        return kExitMismatch;
    } catch (const TrainError& e) {
        err << "error: " << e.what() << "\n";
        return kExitTrain;
    } catch (const DataError& e) {
        err << "error: " << e.what() << "\n";
        return kExitData;
    } catch (const CheckpointError& e) {
        err << "error: " << e.what() << "\n";
        return kExitData;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kExitFailure;
    }
}

inline void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write file: " + path);
    out << text;
}

inline PriceSeries config_series(const RunConfig& cfg) {
    if (cfg.source == RunConfig::Source::csv) return load_csv(cfg.csv_path, cfg.csv_column);
    Prng rng(sub_seed(cfg.train.seed, 2));
    return synth_series(cfg.synth_kind, cfg.synth_length, rng);
}

}  // namespace detail

inline int cmd_train(const std::string& config_path, std::ostream& out = std::cout,
                     std::ostream& err = std::cerr) {
    return detail::run_command(err, [&] {
        const RunConfig cfg = load_run_config(config_path);
        const PriceSeries series = detail::config_series(cfg);
        const WindowedDataset dataset =
            make_dataset(series, cfg.arch.window, cfg.arch.horizon, cfg.split);
        const TrainResult result = train(cfg.arch, dataset, cfg.train);
        save_checkpoint(cfg.checkpoint_path, result.checkpoint);
        detail::write_text_file(cfg.log_path, log_to_csv(result.log));
        const EpochStats& last = result.log.back();
        out << "checkpoint: " << cfg.checkpoint_path << "\n";
        out << "log: " << cfg.log_path << "\n";
        out << "final train_mse=" << detail::fmt_g17(last.train_mse)
            << " val_mse=" << detail::fmt_g17(last.val_mse) << "\n";
    });
}

inline int cmd_evaluate(const std::string& model_path, const std::string& data_path,
                        const std::string& out_path = "", std::ostream& out = std::cout,
                        std::ostream& err = std::cerr) {
    return detail::run_command(err, [&] {
        const Checkpoint ckpt = load_checkpoint(model_path);
        const PriceSeries series = load_csv(data_path);
        const SplitSegments segments = split_811(series.values);
        const std::size_t d = ckpt.spec.window, H = ckpt.spec.horizon;
        if (segments.test.size() < d + H) {
            throw EvalError("test segment of " + std::to_string(segments.test.size()) +
                            " points cannot form evaluation windows with checkpoint window " +
                            std::to_string(d) + " and horizon " + std::to_string(H));
        }
        const std::vector<WindowPair> test_pairs =
            make_windows(normalize(segments.test, ckpt.norm), d, H);
        const MetricsReport report = evaluate_model(ckpt.spec, ckpt.params, test_pairs, ckpt.norm);
        const std::string csv = report_to_csv(report);
        if (out_path.empty()) {
            out << csv;
        } else {
            detail::write_text_file(out_path, csv);
            out << "report: " << out_path << "\n";
        }
    });
}

inline int cmd_predict(const std::string& model_path, const std::string& data_path,
                       std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    return detail::run_command(err, [&] {
        const Checkpoint ckpt = load_checkpoint(model_path);
        const PriceSeries series = load_csv(data_path);
        const std::size_t d = ckpt.spec.window;
        if (series.size() < d) {
            throw DataError("need at least " + std::to_string(d) + " points to forecast, got " +
                            std::to_string(series.size()));
        }
        std::vector<double> window(series.values.end() - static_cast<std::ptrdiff_t>(d),
                                   series.values.end());
        const std::vector<double> normalized = normalize(window, ckpt.norm);
        const Tensor input({d, 1}, normalized);
        const Tensor pred = model_forward(ckpt.spec, ckpt.params, input);
        for (std::size_t h = 0; h < ckpt.spec.horizon; ++h) {
            out << detail::fmt_g17(denormalize(pred[h], ckpt.norm)) << "\n";
        }
    });
}

inline int cmd_inspect(const std::string& model_path, std::ostream& out = std::cout,
                       std::ostream& err = std::cerr) {
    return detail::run_command(err, [&] {
        const Checkpoint ckpt = load_checkpoint(model_path);
        out << "kind: " << arch_kind_name(ckpt.spec.kind) << "\n";
        out << "input: " << shape_str({ckpt.spec.window, 1}) << "\n";
        std::size_t total = 0;
        for (const LayerInfo& row : count_parameters(ckpt.spec)) {
            out << row.name << "  " << shape_str(row.output_shape) << "  " << row.params << "\n";
            total += row.params;
        }
        out << "total  " << total << "\n";
    });
}

}  // namespace deepcast
