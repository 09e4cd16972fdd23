#include <gtest/gtest.h>

#include "deepcast/config.hpp"

using namespace deepcast;

namespace {

std::string valid_config() {
    return "[model]\n"
           "kind = capsnet_lstm\n"
           "window = 16\n"
           "horizon = 3\n"
           "conv_filters = 8\n"
           "conv_kernel = 2\n"
           "primary_dim = 4\n"
           "high_dim = 8\n"
           "routing_iters = 3\n"
           "hidden = 16\n"
           "\n"
           "[train]\n"
           "seed = 42\n"
           "epochs = 5\n"
           "batch_size = 32\n"
           "lr = 0.001\n"
           "\n"
           "[data]\n"
           "source = synthetic\n"
           "synth_kind = sine\n"
           "synth_length = 200\n"
           "\n"
           "[output]\n"
           "checkpoint = /tmp/m.ckpt\n"
           "log = /tmp/m.csv\n";
}

}  // namespace

TEST(Config, ParsesFullExample) {
    RunConfig cfg = parse_run_config(valid_config());
    EXPECT_EQ(cfg.arch.kind, ArchKind::capsnet_lstm);
    EXPECT_EQ(cfg.arch.window, 16u);
    EXPECT_EQ(cfg.arch.horizon, 3u);
    EXPECT_EQ(cfg.arch.conv->filters, 8u);
    EXPECT_EQ(cfg.arch.capsule->primary_dim, 4u);
    EXPECT_EQ(cfg.arch.capsule->high_dim, 8u);
    EXPECT_EQ(cfg.arch.hidden, 16u);
    EXPECT_EQ(cfg.arch.head.units, 3u);
    EXPECT_EQ(cfg.train.seed, 42u);
    EXPECT_EQ(cfg.train.epochs, 5u);
    EXPECT_EQ(cfg.source, RunConfig::Source::synthetic);
    EXPECT_EQ(cfg.synth_kind, SynthKind::sine);
    EXPECT_EQ(cfg.synth_length, 200u);
    EXPECT_EQ(cfg.checkpoint_path, "/tmp/m.ckpt");
    EXPECT_EQ(cfg.log_path, "/tmp/m.csv");
    // defaults survive
    EXPECT_EQ(cfg.train.batch_size, 32u);
    EXPECT_DOUBLE_EQ(cfg.train.lr_decay, 0.95);
    EXPECT_EQ(cfg.train.plateau_patience, 5u);
    EXPECT_EQ(cfg.csv_column, "Close");
}

TEST(Config, CommentsAndBlankLinesIgnored) {
    std::string text = "# leading comment\n\n" + valid_config() + "\n# trailing\n";
    EXPECT_NO_THROW(parse_run_config(text));
}

TEST(Config, UnknownKeyNamesKeyAndLine) {
    std::string text = valid_config() + "frobnicate = 1\n";
    try {
        parse_run_config(text);
        FAIL() << "expected ConfigError";
    } catch (const ConfigError& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("frobnicate"), std::string::npos);
        EXPECT_NE(msg.find("line"), std::string::npos);
    }
}

TEST(Config, UnknownSectionAndMalformedLines) {
    EXPECT_THROW(parse_run_config("[bogus]\nx = 1\n"), ConfigError);
    EXPECT_THROW(parse_run_config("[model\nkind = lstm\n"), ConfigError);
    EXPECT_THROW(parse_run_config("kind = lstm\n"), ConfigError);  // outside any section
    EXPECT_THROW(parse_run_config("[model]\njust-words\n"), ConfigError);
    EXPECT_THROW(parse_run_config("[model]\n= 3\n"), ConfigError);
}

TEST(Config, DuplicateKeyRejected) {
    std::string text = valid_config() + "[train]\nseed = 43\n";
    try {
        parse_run_config(text);
        FAIL() << "expected ConfigError";
    } catch (const ConfigError& e) {
        EXPECT_NE(std::string(e.what()).find("duplicate"), std::string::npos);
    }
}

TEST(Config, SeedIsMandatory) {
    std::string text =
        "[model]\nkind = lstm\n[train]\nepochs = 1\n[data]\nsource = synthetic\n"
        "synth_kind = sine\nsynth_length = 100\n";
    try {
        parse_run_config(text);
        FAIL() << "expected ConfigError";
    } catch (const ConfigError& e) {
        EXPECT_NE(std::string(e.what()).find("seed"), std::string::npos);
    }
}

TEST(Config, KindAndSourceAreMandatory) {
    EXPECT_THROW(parse_run_config("[train]\nseed = 1\n"), ConfigError);
    EXPECT_THROW(parse_run_config("[model]\nkind = lstm\n[train]\nseed = 1\n"), ConfigError);
    EXPECT_THROW(
        parse_run_config("[model]\nkind = lstm\n[train]\nseed = 1\n[data]\nsource = csv\n"),
        ConfigError);  // csv_path missing
    EXPECT_THROW(parse_run_config("[model]\nkind = martian\n[train]\nseed = 1\n"
                                  "[data]\nsource = synthetic\nsynth_kind = sine\n"
                                  "synth_length = 50\n"),
                 ConfigError);
}

TEST(Config, InapplicableKeysRejected) {
    std::string text =
        "[model]\nkind = lstm\nprimary_dim = 4\n[train]\nseed = 1\n"
        "[data]\nsource = synthetic\nsynth_kind = sine\nsynth_length = 100\n";
    try {
        parse_run_config(text);
        FAIL() << "expected ConfigError";
    } catch (const ConfigError& e) {
        EXPECT_NE(std::string(e.what()).find("primary_dim"), std::string::npos);
    }

    std::string pool =
        "[model]\nkind = lstm\npool_size = 2\n[train]\nseed = 1\n"
        "[data]\nsource = synthetic\nsynth_kind = sine\nsynth_length = 100\n";
    EXPECT_THROW(parse_run_config(pool), ConfigError);
}

TEST(Config, BadNumbersAndFlags) {
    EXPECT_THROW(parse_run_config("[model]\nkind = lstm\nwindow = ten\n[train]\nseed = 1\n"
                                  "[data]\nsource = synthetic\nsynth_kind = sine\n"
                                  "synth_length = 100\n"),
                 ConfigError);
    EXPECT_THROW(parse_run_config("[model]\nkind = lstm\n[train]\nseed = 1\nlr = fast\n"
                                  "[data]\nsource = synthetic\nsynth_kind = sine\n"
                                  "synth_length = 100\n"),
                 ConfigError);
    EXPECT_THROW(parse_run_config("[model]\nkind = lstm\n[train]\nseed = 1\nparallel = maybe\n"
                                  "[data]\nsource = synthetic\nsynth_kind = sine\n"
                                  "synth_length = 100\n"),
                 ConfigError);
}

TEST(Config, InvalidCombinationsFailValidation) {
    // capsule channel count must divide filters
    std::string text =
        "[model]\nkind = capsnet_lstm\nconv_filters = 30\n[train]\nseed = 1\n"
        "[data]\nsource = synthetic\nsynth_kind = sine\nsynth_length = 100\n";
    EXPECT_THROW(parse_run_config(text), ConfigError);
}

TEST(Config, CsvSourceAndSplitOverrides) {
    std::string text =
        "[model]\nkind = lstm\n[train]\nseed = 7\n[data]\nsource = csv\n"
        "csv_path = prices.csv\ncsv_column = Adj Close\nsplit_train = 2014\nsplit_val = 251\n";
    RunConfig cfg = parse_run_config(text);
    EXPECT_EQ(cfg.source, RunConfig::Source::csv);
    EXPECT_EQ(cfg.csv_path, "prices.csv");
    EXPECT_EQ(cfg.csv_column, "Adj Close");
    ASSERT_TRUE(cfg.split.train_len.has_value());
    EXPECT_EQ(*cfg.split.train_len, 2014u);
    EXPECT_EQ(*cfg.split.val_len, 251u);
}

TEST(Config, GateVariantAndParallelKeys) {
    std::string text =
        "[model]\nkind = lstm\noutput_gate = tanh\n[train]\nseed = 7\ngrad_groups = 4\n"
        "parallel = true\n[data]\nsource = synthetic\nsynth_kind = random_walk\n"
        "synth_length = 500\n";
    RunConfig cfg = parse_run_config(text);
    EXPECT_EQ(cfg.arch.output_gate, OutputGate::tanh);
    EXPECT_EQ(cfg.train.grad_groups, 4u);
    EXPECT_TRUE(cfg.train.parallel);
    EXPECT_EQ(cfg.synth_kind, SynthKind::random_walk);
}

TEST(Config, MissingFileIsConfigError) {
    EXPECT_THROW(load_run_config("/nonexistent/deepcast.cfg"), ConfigError);
}
