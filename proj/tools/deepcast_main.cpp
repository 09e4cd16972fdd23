// deepcast command-line tool: train, evaluate, predict, and inspect
// multi-step forecasting models.

#include <string>

#include <CLI11.hpp>

#include "deepcast/cli.hpp"

int main(int argc, char** argv) {
    CLI::App app{"multi-step time-series forecasting with capsule and recurrent networks"};
    app.require_subcommand(1);

    std::string config_path;
    CLI::App* train = app.add_subcommand("train", "train a model from a run configuration");
    train->add_option("--config", config_path, "run configuration file")->required();

    std::string model_path, data_path, out_path;
    CLI::App* evaluate =
        app.add_subcommand("evaluate", "per-horizon test metrics for a trained model");
    evaluate->add_option("--model", model_path, "checkpoint file")->required();
    evaluate->add_option("--data", data_path, "CSV price series")->required();
    evaluate->add_option("--out", out_path, "write the report here instead of stdout");

    CLI::App* predict = app.add_subcommand("predict", "forecast from the final window of a series");
    predict->add_option("--model", model_path, "checkpoint file")->required();
    predict->add_option("--data", data_path, "CSV price series")->required();

    CLI::App* inspect = app.add_subcommand("inspect", "layer table of a checkpoint");
    inspect->add_option("--model", model_path, "checkpoint file")->required();

    CLI11_PARSE(app, argc, argv);

    if (train->parsed()) return deepcast::cmd_train(config_path);
    if (evaluate->parsed()) return deepcast::cmd_evaluate(model_path, data_path, out_path);
    if (predict->parsed()) return deepcast::cmd_predict(model_path, data_path);
    return deepcast::cmd_inspect(model_path);
}
