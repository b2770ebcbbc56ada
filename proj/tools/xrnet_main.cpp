#include <cstdio>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "xrnet/cli.hpp"

namespace {

// Runs a command body and maps exceptions onto the exit-code contract.
template <typename Fn>
int guarded(Fn&& fn) {
    try {
        return fn();
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return xrnet::cli::exit_code_for(e);
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"xrnet: train and evaluate a small CNN on two-class chest X-ray images"};
    app.require_subcommand(1);

    std::string config_path;
    std::string checkpoint_path;
    std::vector<std::string> image_paths;
    std::uint64_t gradcheck_seed = 42;

    CLI::App* split = app.add_subcommand("split", "freeze a stratified train/test split");
    split->add_option("--config", config_path, "JSON run configuration")->required();

    CLI::App* train = app.add_subcommand("train", "train on the manifest's train side");
    train->add_option("--config", config_path, "JSON run configuration")->required();

    CLI::App* eval = app.add_subcommand("eval", "evaluate a checkpoint on the test side");
    eval->add_option("--config", config_path, "JSON run configuration")->required();

    CLI::App* predict = app.add_subcommand("predict", "classify individual images");
    predict->add_option("--checkpoint", checkpoint_path, "checkpoint file")->required();
    predict->add_option("images", image_paths, "image files to classify");

    CLI::App* gradcheck =
        app.add_subcommand("gradcheck", "finite-difference check of every layer kind");
    gradcheck->add_option("--seed", gradcheck_seed, "seed for the check fixtures");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;  // usage problems exit 2
    }

    if (split->parsed()) {
        return guarded([&] {
            xrnet::cli::cmd_split(xrnet::cli::load_run_config(config_path));
            return 0;
        });
    }
    if (train->parsed()) {
        return guarded([&] {
            xrnet::cli::cmd_train(xrnet::cli::load_run_config(config_path));
            return 0;
        });
    }
    if (eval->parsed()) {
        return guarded([&] {
            xrnet::cli::cmd_eval(xrnet::cli::load_run_config(config_path));
            return 0;
        });
    }
    if (predict->parsed()) {
        return guarded([&] {
            xrnet::cli::cmd_predict(checkpoint_path, image_paths);
            return 0;
        });
    }
    if (gradcheck->parsed()) {
        return guarded([&] { return xrnet::cli::cmd_gradcheck(gradcheck_seed); });
    }
    return 2;
}
