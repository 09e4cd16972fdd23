#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "deepcast/train.hpp"
#include "test_util.hpp"

using namespace deepcast;
using testutil::gradient_gap;
using testutil::rand_tensor;

namespace {

WindowedDataset sine_dataset(std::size_t length, std::size_t d, std::size_t H,
                             std::uint64_t seed = 11) {
    Prng rng(seed);
    return make_dataset(synth_series(SynthKind::sine, length, rng), d, H);
}

ArchSpec small_lstm(std::size_t d, std::size_t H, std::size_t hidden = 6) {
    ArchSpec spec = default_arch(ArchKind::lstm, d, H);
    spec.hidden = hidden;
    return spec;
}

}  // namespace

TEST(MseLoss, ValuesAndGradient) {
    Tape tape;
    Var equal = mse_loss(tape, tape.constant(Tensor({2}, {1.0, 2.0})),
                         tape.constant(Tensor({2}, {1.0, 2.0})));
    EXPECT_EQ(tape.value(equal)[0], 0.0);

    Var pred = tape.leaf(Tensor({1, 2}, {1.0, 2.0}));
    Var loss = mse_loss(tape, pred, tape.constant(Tensor({1, 2}, {0.0, 0.0})));
    EXPECT_DOUBLE_EQ(tape.value(loss)[0], 2.5);
    tape.backward(loss);
    Tensor g = tape.grad(pred);
    // analytic gradient 2 (pred - target) / (B H)
    EXPECT_DOUBLE_EQ(g[0], 1.0);
    EXPECT_DOUBLE_EQ(g[1], 2.0);

    EXPECT_THROW(mse_loss(tape, pred, tape.constant(Tensor({3}))), ShapeError);

    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        Prng rng(seed);
        ParameterSet params;
        params.add("pred", rand_tensor({3, 2}, rng));
        const Tensor target = rand_tensor({3, 2}, rng);
        const double gap = gradient_gap(params, [&](Tape& t, const ModelVars& mv) {
            return mse_loss(t, mv.at("pred"), t.constant(target));
        });
        EXPECT_LT(gap, 1e-4);
    }
}

TEST(Adam, FirstStepMovesByLearningRate) {
    ParameterSet params;
    params.add("w", Tensor::full({4}, 2.0));
    ParameterSet grads = params.zeros_like();
    for (std::size_t k = 0; k < 4; ++k) grads.tensor(0)[k] = 1.0;
    AdamState state = AdamState::init(params);
    TrainConfig cfg;
    adam_step(state, params, grads, 0.001, cfg);
    EXPECT_EQ(state.t, 1u);
    for (std::size_t k = 0; k < 4; ++k) {
        EXPECT_NEAR(params.tensor(0)[k], 2.0 - 0.001, 1e-6);  // m^ = v^ = 1
    }
}

TEST(Adam, ZeroGradientLeavesParametersUnchanged) {
    ParameterSet params;
    params.add("w", Tensor({3}, {1.0, -1.0, 0.5}));
    AdamState state = AdamState::init(params);
    TrainConfig cfg;
    ParameterSet zero = params.zeros_like();
    const Tensor before = params.tensor(0);
    adam_step(state, params, zero, 0.001, cfg);
    EXPECT_TRUE(params.tensor(0) == before);  // fresh moments stay zero
    EXPECT_EQ(state.t, 1u);

    // After a real step, a zero-gradient step only decays the moments.
    ParameterSet ones = params.zeros_like();
    for (std::size_t k = 0; k < 3; ++k) ones.tensor(0)[k] = 1.0;
    adam_step(state, params, ones, 0.001, cfg);
    const double m_after_grad = state.m[0][0];
    adam_step(state, params, zero, 0.001, cfg);
    EXPECT_LT(std::abs(state.m[0][0]), std::abs(m_after_grad));
}

TEST(Adam, DeterministicAndRejectsNonFinite) {
    Prng rng(4);
    ParameterSet p1;
    p1.add("conv.kernel", rand_tensor({3}, rng));
    ParameterSet p2;
    p2.add("conv.kernel", p1.tensor(0));
    ParameterSet grads = p1.zeros_like();
    grads.tensor(0) = Tensor({3}, {0.1, -0.2, 0.3});
    TrainConfig cfg;
    AdamState s1 = AdamState::init(p1), s2 = AdamState::init(p2);
    adam_step(s1, p1, grads, 0.01, cfg);
    adam_step(s2, p2, grads, 0.01, cfg);
    EXPECT_TRUE(p1.tensor(0) == p2.tensor(0));
    EXPECT_TRUE(s1.m[0] == s2.m[0]);
    EXPECT_TRUE(s1.v[0] == s2.v[0]);

    grads.tensor(0)[1] = std::numeric_limits<double>::quiet_NaN();
    try {
        adam_step(s1, p1, grads, 0.01, cfg);
        FAIL() << "expected TrainError";
    } catch (const TrainError& e) {
        EXPECT_NE(std::string(e.what()).find("conv.kernel"), std::string::npos);
    }
}

TEST(Plateau, SpecCaseDecaysExactlyOnce) {
    TrainConfig cfg;
    const std::vector<double> history{1.0, 0.9, 0.9, 0.9, 0.9, 0.9, 0.9};
    EXPECT_DOUBLE_EQ(plateau_lr(history, 0.001, cfg), 0.00095);
    const std::vector<double> improving{1.0, 0.9, 0.8, 0.7, 0.6, 0.5, 0.4};
    EXPECT_DOUBLE_EQ(plateau_lr(improving, 0.001, cfg), 0.001);
    EXPECT_THROW(plateau_lr({}, 0.001, cfg), Error);
}

TEST(Plateau, FloorsAtMinLr) {
    TrainConfig cfg;
    cfg.min_lr = 0.001;
    std::vector<double> flat(60, 0.5);
    EXPECT_DOUBLE_EQ(plateau_lr(flat, 0.001, cfg), 0.001);
    cfg.min_lr = 1e-6;
    const double decayed = plateau_lr(flat, 0.001, cfg);
    EXPECT_LT(decayed, 0.001);
    EXPECT_GE(decayed, 1e-6);
}

TEST(EpochOrder, DeterministicPermutation) {
    Prng a(5), b(5);
    std::vector<std::size_t> o1 = epoch_order(97, a);
    std::vector<std::size_t> o2 = epoch_order(97, b);
    EXPECT_EQ(o1, o2);
    std::vector<std::size_t> sorted = o1;
    std::sort(sorted.begin(), sorted.end());
    for (std::size_t i = 0; i < sorted.size(); ++i) EXPECT_EQ(sorted[i], i);
    // consecutive epochs from one stream differ
    std::vector<std::size_t> o3 = epoch_order(97, a);
    EXPECT_NE(o1, o3);
}

TEST(Train, DeterministicLogsAndCheckpoints) {
    WindowedDataset ds = sine_dataset(80, 6, 2);
    ArchSpec spec = small_lstm(6, 2);
    TrainConfig cfg;
    cfg.epochs = 4;
    cfg.seed = 42;
    TrainResult r1 = train(spec, ds, cfg);
    TrainResult r2 = train(spec, ds, cfg);
    EXPECT_EQ(log_to_csv(r1.log), log_to_csv(r2.log));
    for (std::size_t i = 0; i < r1.checkpoint.params.count(); ++i) {
        EXPECT_TRUE(r1.checkpoint.params.tensor(i) == r2.checkpoint.params.tensor(i));
    }
    const auto p1 = std::filesystem::temp_directory_path() / "deepcast_train_a.ckpt";
    const auto p2 = std::filesystem::temp_directory_path() / "deepcast_train_b.ckpt";
    save_checkpoint(p1.string(), r1.checkpoint);
    save_checkpoint(p2.string(), r2.checkpoint);
    std::ifstream f1(p1, std::ios::binary), f2(p2, std::ios::binary);
    std::ostringstream b1, b2;
    b1 << f1.rdbuf();
    b2 << f2.rdbuf();
    EXPECT_EQ(b1.str(), b2.str());
    std::filesystem::remove(p1);
    std::filesystem::remove(p2);

    TrainConfig other = cfg;
    other.seed = 43;
    TrainResult r3 = train(spec, ds, other);
    EXPECT_NE(log_to_csv(r1.log), log_to_csv(r3.log));
}

TEST(Train, LrIsNonIncreasingAndRespectsFloor) {
    WindowedDataset ds = sine_dataset(80, 6, 2);
    ArchSpec spec = small_lstm(6, 2);
    TrainConfig cfg;
    cfg.epochs = 25;
    cfg.seed = 3;
    cfg.lr = 1e-3;
    cfg.min_lr = 9e-4;
    TrainResult r = train(spec, ds, cfg);
    double prev = cfg.lr;
    for (const EpochStats& row : r.log) {
        EXPECT_LE(row.lr, prev);
        EXPECT_GE(row.lr, cfg.min_lr);
        prev = row.lr;
    }

    TrainConfig pinned = cfg;
    pinned.min_lr = pinned.lr;  // floor equal to the initial rate: never changes
    TrainResult rp = train(spec, ds, pinned);
    for (const EpochStats& row : rp.log) EXPECT_EQ(row.lr, pinned.lr);
}

TEST(Train, SingleStepDecreasesSinglePairLoss) {
    // One optimizer step on one pair at a small rate; pathological seeds are
    // skipped but recorded.
    std::size_t successes = 0;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        ArchSpec spec = small_lstm(5, 2, 4);
        Prng init(sub_seed(seed, 0));
        ParameterSet params = build_model(spec, init);
        Prng data_rng(seed + 100);
        WindowPair pair{rand_tensor({5}, data_rng, 0.0, 1.0),
                        rand_tensor({2}, data_rng, 0.0, 1.0)};
        std::vector<WindowPair> pairs{pair};
        std::vector<std::size_t> order{0};
        const Tensor input({5, 1}, pair.sequence.raw());
        const double before = mse_loss_value(model_forward(spec, params, input), pair.label);
        BatchGrad bg = batch_gradients(spec, params, pairs, order, 0, 1, 1, false);
        AdamState adam = AdamState::init(params);
        TrainConfig cfg;
        adam_step(adam, params, bg.grads, 1e-4, cfg);
        const double after = mse_loss_value(model_forward(spec, params, input), pair.label);
        if (after < before) {
            ++successes;
        } else {
            RecordProperty("pathological_seed", static_cast<int>(seed));
            std::cout << "[ skipped ] pathological seed " << seed << " (loss " << before
                      << " -> " << after << ")\n";
        }
    }
    EXPECT_GE(successes, 4u);
}

TEST(Train, DataParallelGroupsMatchSequentialBitwise) {
    WindowedDataset ds = sine_dataset(90, 6, 2);
    ArchSpec spec = small_lstm(6, 2);
    TrainConfig seq;
    seq.epochs = 2;
    seq.seed = 9;
    seq.batch_size = 16;
    seq.grad_groups = 4;
    seq.parallel = false;
    TrainConfig par = seq;
    par.parallel = true;
    TrainResult a = train(spec, ds, seq);
    TrainResult b = train(spec, ds, par);
    EXPECT_EQ(log_to_csv(a.log), log_to_csv(b.log));
    for (std::size_t i = 0; i < a.checkpoint.params.count(); ++i) {
        EXPECT_TRUE(a.checkpoint.params.tensor(i) == b.checkpoint.params.tensor(i));
    }
}

TEST(Train, EveryPairVisitedOncePerEpoch) {
    // The loop walks a Fisher-Yates permutation in contiguous batches, so
    // coverage per epoch reduces to the permutation property.
    Prng rng(31);
    for (std::size_t n : {1u, 7u, 32u, 33u, 100u}) {
        std::vector<std::size_t> order = epoch_order(n, rng);
        std::vector<bool> seen(n, false);
        std::size_t batches = 0;
        for (std::size_t begin = 0; begin < n; begin += 32, ++batches) {
            const std::size_t end = std::min(begin + 32ul, n);
            for (std::size_t s = begin; s < end; ++s) {
                EXPECT_FALSE(seen[order[s]]);
                seen[order[s]] = true;
            }
        }
        EXPECT_EQ(batches, (n + 31) / 32);
        for (std::size_t i = 0; i < n; ++i) EXPECT_TRUE(seen[i]);
    }
}

TEST(Train, ErrorsOnEmptyDatasetAndNonFiniteLoss) {
    ArchSpec spec = small_lstm(6, 2);
    WindowedDataset empty;
    empty.window = 6;
    empty.horizon = 2;
    empty.norm = NormParams{0.0, 1.0};
    TrainConfig cfg;
    cfg.seed = 1;
    EXPECT_THROW(train(spec, empty, cfg), DataError);

    WindowedDataset exploding;
    exploding.window = 6;
    exploding.horizon = 2;
    exploding.norm = NormParams{0.0, 1.0};
    exploding.train.push_back(
        WindowPair{Tensor({6}, {0.1, 0.2, 0.3, 0.4, 0.5, 0.6}), Tensor({2}, {1e200, 1e200})});
    cfg.epochs = 1;
    try {
        train(spec, exploding, cfg);
        FAIL() << "expected TrainError";
    } catch (const TrainError& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("epoch 1"), std::string::npos);
        EXPECT_NE(msg.find("batch 1"), std::string::npos);
    }
}

TEST(Train, ValidationLossDrivesPlateauAndLogShape) {
    WindowedDataset ds = sine_dataset(120, 6, 2);
    ASSERT_FALSE(ds.val.empty());
    ArchSpec spec = small_lstm(6, 2);
    TrainConfig cfg;
    cfg.epochs = 3;
    cfg.seed = 12;
    TrainResult r = train(spec, ds, cfg);
    ASSERT_EQ(r.log.size(), 3u);
    for (std::size_t i = 0; i < r.log.size(); ++i) {
        EXPECT_EQ(r.log[i].epoch, i + 1);
        EXPECT_TRUE(std::isfinite(r.log[i].train_mse));
        EXPECT_TRUE(std::isfinite(r.log[i].val_mse));
    }
    const std::string csv = log_to_csv(r.log);
    EXPECT_EQ(csv.rfind("epoch,train_mse,val_mse,lr\n", 0), 0u);
}

TEST(Train, WholeModelGradientMatchesFiniteDifferences) {
    // End-to-end loss through the full hybrid at desk scale.
    ArchSpec spec = default_arch(ArchKind::capsnet_lstm, 6, 2);
    spec.conv = Conv1dSpec{8, 2, 1, Activation::relu};
    spec.capsule = CapsuleConfig{4, 6, 3, 1e-9};
    spec.hidden = 5;
    Prng rng(77);
    ParameterSet params = build_model(spec, rng);
    Prng data_rng(78);
    const Tensor input = rand_tensor({6, 1}, data_rng, 0.0, 1.0);
    const Tensor target = rand_tensor({2}, data_rng, 0.0, 1.0);
    const double gap = gradient_gap(params, [&](Tape& t, const ModelVars& mv) {
        return mse_loss(t, model_forward_graph(t, spec, mv, t.constant(input)),
                        t.constant(target));
    });
    EXPECT_LT(gap, 1e-4);
}
