#pragma once

// Training protocol: MSE loss, Adam updates, plateau learning-rate decay,
// and the epoch loop. Deterministic end to end: one run seed drives
// initialization and the per-epoch Fisher-Yates shuffle, and the optional
// data-parallel mode computes bit-identical gradients to the single-threaded
// path because both reduce per-group partial sums in fixed group order.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <exception>
#include <limits>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "deepcast/data.hpp"
#include "deepcast/errors.hpp"
#include "deepcast/model.hpp"
#include "deepcast/parameters.hpp"
#include "deepcast/prng.hpp"
#include "deepcast/tape.hpp"

namespace deepcast {

struct TrainConfig {
    std::size_t epochs = 400;
    std::size_t batch_size = 32;
    double lr = 1e-3;
    double lr_decay = 0.95;             // 5% decay on plateau
    std::size_t plateau_patience = 5;   // epochs without improvement
    double min_lr = 1e-6;
    double improve_threshold = 1e-7;    // absolute improvement that resets patience
    std::uint64_t seed = 0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_epsilon = 1e-8;
    std::size_t grad_groups = 1;        // gradient reduction groups per batch
    bool parallel = false;              // compute groups on separate threads

    void validate() const {
        if (epochs < 1) throw Error("train: epochs must be >= 1");
        if (batch_size < 1) throw Error("train: batch_size must be >= 1");
        if (!(lr > 0.0)) throw Error("train: lr must be positive");
        if (!(lr_decay > 0.0 && lr_decay < 1.0)) throw Error("train: lr_decay must be in (0, 1)");
        if (plateau_patience < 1) throw Error("train: plateau_patience must be >= 1");
        if (!(min_lr > 0.0)) throw Error("train: min_lr must be positive");
        if (min_lr > lr) throw Error("train: min_lr must not exceed lr");
        if (grad_groups < 1) throw Error("train: grad_groups must be >= 1");
    }
};

// Mean over all elements of the squared residuals; differentiable.
inline Var mse_loss(Tape& tape, Var pred, Var target) {
    require_same_shape(tape.value(pred), tape.value(target), "mse");
    Var diff = tape.sub(pred, target);
    Var sq = tape.mul(diff, diff);
    return tape.scale(tape.sum(sq), 1.0 / static_cast<double>(tape.value(pred).size()));
}

inline double mse_loss_value(const Tensor& pred, const Tensor& target) {
    require_same_shape(pred, target, "mse");
    double s = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double d = pred[i] - target[i];
        s += d * d;
    }
    return s / static_cast<double>(pred.size());
}

struct AdamState {
    std::vector<Tensor> m, v;
    std::uint64_t t = 0;

    static AdamState init(const ParameterSet& params) {
        AdamState s;
        s.m.reserve(params.count());
        s.v.reserve(params.count());
        for (std::size_t i = 0; i < params.count(); ++i) {
            s.m.emplace_back(params.tensor(i).shape());
            s.v.emplace_back(params.tensor(i).shape());
        }
        return s;
    }
};

// m <- b1 m + (1-b1) g; v <- b2 v + (1-b2) g^2; bias-corrected update
// p <- p - lr * m^ / (sqrt(v^) + eps).
inline void adam_step(AdamState& state, ParameterSet& params, const ParameterSet& grads,
                      double lr, const TrainConfig& cfg) {
    if (!params.same_layout(grads)) throw ShapeError("adam: gradient layout mismatch");
    state.t += 1;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
    for (std::size_t i = 0; i < params.count(); ++i) {
        Tensor& p = params.tensor(i);
        Tensor& m = state.m[i];
        Tensor& v = state.v[i];
        const Tensor& g = grads.tensor(i);
        for (std::size_t k = 0; k < p.size(); ++k) {
            if (!std::isfinite(g[k])) {
                throw TrainError("non-finite gradient for parameter '" + params.name(i) + "'");
            }
            m[k] = cfg.beta1 * m[k] + (1.0 - cfg.beta1) * g[k];
            v[k] = cfg.beta2 * v[k] + (1.0 - cfg.beta2) * g[k] * g[k];
            const double m_hat = m[k] / bc1;
            const double v_hat = v[k] / bc2;
            p[k] -= lr * m_hat / (std::sqrt(v_hat) + cfg.adam_epsilon);
        }
    }
}

// Learning rate after processing the whole loss history: each run of
// `plateau_patience` consecutive epochs without an improvement beyond the
// threshold multiplies the rate by lr_decay (floored at min_lr) and resets
// the patience counter.
inline double plateau_lr(const std::vector<double>& history, double initial_lr,
                         const TrainConfig& cfg) {
    if (history.empty()) throw Error("plateau: empty loss history");
    double lr = initial_lr;
    double best = history[0];
    std::size_t stall = 0;
    for (std::size_t i = 1; i < history.size(); ++i) {
        if (history[i] < best - cfg.improve_threshold) {
            best = history[i];
            stall = 0;
        } else if (++stall >= cfg.plateau_patience) {
            lr = std::max(lr * cfg.lr_decay, cfg.min_lr);
            stall = 0;
        }
    }
    return lr;
}

// Deterministic Fisher-Yates permutation of 0..n-1 driven by the run seed.
inline std::vector<std::size_t> epoch_order(std::size_t n, Prng& rng) {
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    for (std::size_t i = n; i > 1; --i) {
        const std::size_t j = static_cast<std::size_t>(rng.next_below(i));
        std::swap(order[i - 1], order[j]);
    }
    return order;
}

namespace detail {

// Forward + backward for one training pair; adds the pair's parameter
// gradients into `acc` and its loss into `loss_sum`.
inline void accumulate_sample(const ArchSpec& spec, const ParameterSet& params,
                              const WindowPair& pair, Tape& tape, ParameterSet& acc,
                              double& loss_sum) {
    tape.clear();
    ModelVars mv = register_params(tape, params);
    Var input = tape.constant(Tensor({spec.window, 1}, pair.sequence.raw()));
    Var target = tape.constant(pair.label);
    Var loss = mse_loss(tape, model_forward_graph(tape, spec, mv, input), target);
    loss_sum += tape.value(loss)[0];
    tape.backward(loss);
    for (std::size_t i = 0; i < params.count(); ++i) {
        const Tensor g = tape.grad(mv.vars[i]);
        Tensor& dst = acc.tensor(i);
        for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += g[k];
    }
}

}  // namespace detail

struct BatchGrad {
    ParameterSet grads;    // mean gradient over the batch
    double loss_sum = 0.0; // sum of per-pair losses
};

// Splits the batch into `groups` contiguous index ranges, accumulates each
// group's gradient sum independently (on its own tape, optionally on its own
// thread), then combines the partial sums in fixed group order and scales by
// 1/batch. The arithmetic is identical whether or not threads are used.
inline BatchGrad batch_gradients(const ArchSpec& spec, const ParameterSet& params,
                                 const std::vector<WindowPair>& pairs,
                                 const std::vector<std::size_t>& indices, std::size_t begin,
                                 std::size_t end, std::size_t groups, bool parallel) {
    const std::size_t batch = end - begin;
    if (batch == 0) throw Error("train: empty batch");
    groups = std::min(std::max<std::size_t>(groups, 1), batch);
    std::vector<ParameterSet> partial;
    std::vector<double> losses(groups, 0.0);
    partial.reserve(groups);
    for (std::size_t g = 0; g < groups; ++g) partial.push_back(params.zeros_like());
    auto worker = [&](std::size_t g) {
        const std::size_t lo = begin + g * batch / groups;
        const std::size_t hi = begin + (g + 1) * batch / groups;
        Tape tape;
        for (std::size_t s = lo; s < hi; ++s) {
            detail::accumulate_sample(spec, params, pairs[indices[s]], tape, partial[g],
                                      losses[g]);
        }
    };
    if (parallel && groups > 1) {
        std::vector<std::thread> threads;
        std::vector<std::exception_ptr> errors(groups);
        threads.reserve(groups);
        for (std::size_t g = 0; g < groups; ++g) {
            threads.emplace_back([&, g] {
                try {
                    worker(g);
                } catch (...) {
                    errors[g] = std::current_exception();
                }
            });
        }
        for (std::thread& t : threads) t.join();
        for (const std::exception_ptr& e : errors) {
            if (e) std::rethrow_exception(e);
        }
    } else {
        for (std::size_t g = 0; g < groups; ++g) worker(g);
    }
    BatchGrad out{std::move(partial[0]), losses[0]};
    for (std::size_t g = 1; g < groups; ++g) {
        out.grads.accumulate(partial[g]);
        out.loss_sum += losses[g];
    }
    out.grads.scale(1.0 / static_cast<double>(batch));
    return out;
}

struct EpochStats {
    std::size_t epoch = 0;  // 1-based
    double train_mse = 0.0;
    double val_mse = 0.0;  // NaN when the dataset has no validation pairs
    double lr = 0.0;
};

struct TrainResult {
    Checkpoint checkpoint;
    std::vector<EpochStats> log;
};

inline double dataset_mse(const ArchSpec& spec, const ParameterSet& params,
                          const std::vector<WindowPair>& pairs) {
    double sum = 0.0;
    for (const WindowPair& pair : pairs) {
        const Tensor input({spec.window, 1}, pair.sequence.raw());
        sum += mse_loss_value(model_forward(spec, params, input), pair.label);
    }
    return sum / static_cast<double>(pairs.size());
}

// Full protocol: seeded shuffle each epoch, mini-batches with the final
// partial batch kept, forward/MSE/backward/Adam per batch, plateau decay on
// the validation loss each epoch (training loss when no validation pairs
// exist). Runs the full epoch count; there is no early stopping.
inline TrainResult train(const ArchSpec& spec, const WindowedDataset& dataset,
                         const TrainConfig& cfg) {
    spec.validate();
    cfg.validate();
    if (dataset.train.empty()) throw DataError("train: dataset has no training pairs");
    if (dataset.window != spec.window || dataset.horizon != spec.horizon) {
        throw ShapeError("train: dataset window/horizon (" + std::to_string(dataset.window) +
                         ", " + std::to_string(dataset.horizon) + ") do not match model (" +
                         std::to_string(spec.window) + ", " + std::to_string(spec.horizon) + ")");
    }
    Prng init_rng(sub_seed(cfg.seed, 0));
    Prng shuffle_rng(sub_seed(cfg.seed, 1));
    ParameterSet params = build_model(spec, init_rng);
    AdamState adam = AdamState::init(params);
    const std::size_t n = dataset.train.size();
    double lr = cfg.lr;
    std::vector<double> monitored;
    TrainResult result;
    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        const std::vector<std::size_t> order = epoch_order(n, shuffle_rng);
        double loss_sum = 0.0;
        std::size_t batch_index = 0;
        for (std::size_t begin = 0; begin < n; begin += cfg.batch_size, ++batch_index) {
            const std::size_t end = std::min(begin + cfg.batch_size, n);
            BatchGrad bg = batch_gradients(spec, params, dataset.train, order, begin, end,
                                           cfg.grad_groups, cfg.parallel);
            const double batch_mse = bg.loss_sum / static_cast<double>(end - begin);
            if (!std::isfinite(batch_mse)) {
                throw TrainError("non-finite loss at epoch " + std::to_string(epoch) +
                                 ", batch " + std::to_string(batch_index + 1));
            }
            adam_step(adam, params, bg.grads, lr, cfg);
            loss_sum += bg.loss_sum;
        }
        const double train_mse = loss_sum / static_cast<double>(n);
        const double val_mse = dataset.val.empty()
                                   ? std::numeric_limits<double>::quiet_NaN()
                                   : dataset_mse(spec, params, dataset.val);
        monitored.push_back(dataset.val.empty() ? train_mse : val_mse);
        lr = plateau_lr(monitored, cfg.lr, cfg);
        result.log.push_back(EpochStats{epoch, train_mse, val_mse, lr});
    }
    result.checkpoint = Checkpoint{spec, dataset.norm, std::move(params)};
    return result;
}

// Comma-separated epoch log: epoch,train_mse,val_mse,lr.
inline std::string log_to_csv(const std::vector<EpochStats>& log) {
    std::ostringstream out;
    out << "epoch,train_mse,val_mse,lr\n";
    for (const EpochStats& row : log) {
        out << row.epoch << "," << detail::fmt_g17(row.train_mse) << ","
            << detail::fmt_g17(row.val_mse) << "," << detail::fmt_g17(row.lr) << "\n";
    }
    return out.str();
}

}  // namespace deepcast
