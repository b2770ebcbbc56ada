#include "xrnet/cli.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>

#include <json.hpp>

#include "xrnet/checkpoint.hpp"
#include "xrnet/error.hpp"
#include "xrnet/gradcheck.hpp"
#include "xrnet/image.hpp"
#include "xrnet/metrics.hpp"
#include "xrnet/text.hpp"

namespace xrnet::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void reject_unknown_keys(const json& object, const std::vector<std::string>& known,
                         const std::string& where) {
    for (const auto& [key, value] : object.items()) {
        if (std::find(known.begin(), known.end(), key) == known.end()) {
            throw UsageError(str_printf("unknown key '%s' in %s", key.c_str(), where.c_str()));
        }
    }
}

void write_text_file(const fs::path& path, const std::string& content) {
    std::ofstream file(path, std::ios::binary | std::ios::trunc);
    if (!file) {
        throw ArtifactError(str_printf("cannot write '%s'", path.string().c_str()));
    }
    file << content;
    if (!file) {
        throw ArtifactError(str_printf("failed writing '%s'", path.string().c_str()));
    }
}

void ensure_output_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec || !fs::is_directory(dir)) {
        throw ConfigError(str_printf("cannot create output directory '%s'",
                                     dir.string().c_str()));
    }
}

fs::path checkpoint_path_of(const RunConfig& config) {
    if (!config.checkpoint_path.empty()) {
        return config.checkpoint_path;
    }
    return fs::path(config.output_dir) / kDefaultCheckpointFile;
}

// Evaluates in batches so the activation footprint stays bounded.
std::vector<int> predict_labels(Model<float>& model, const Dataset& dataset,
                                std::size_t batch_size) {
    if (batch_size == 0) {
        throw ConfigError("batch_size must be at least 1");
    }
    std::vector<int> predicted;
    predicted.reserve(dataset.size());
    std::vector<std::size_t> indices;
    for (std::size_t start = 0; start < dataset.size(); start += batch_size) {
        const std::size_t end = std::min(start + batch_size, dataset.size());
        indices.clear();
        for (std::size_t i = start; i < end; ++i) {
            indices.push_back(i);
        }
        const Batch batch = stack_batch(dataset, indices);
        const PredictResult result = predict(model, batch.images);
        predicted.insert(predicted.end(), result.classes.begin(), result.classes.end());
    }
    return predicted;
}

}  // namespace

RunConfig load_run_config(const fs::path& path) {
    std::ifstream file(path);
    if (!file) {
        throw UsageError(str_printf("cannot open config '%s'", path.string().c_str()));
    }
    json root;
    try {
        root = json::parse(file);
    } catch (const json::exception& e) {
        throw UsageError(str_printf("config '%s' is not valid JSON: %s",
                                    path.string().c_str(), e.what()));
    }

    RunConfig config;
    try {
        reject_unknown_keys(root, {"data_root", "output_dir", "checkpoint_path", "model",
                                   "train", "split"},
                            "config");
        config.data_root = root.at("data_root").get<std::string>();
        config.output_dir = root.at("output_dir").get<std::string>();
        config.checkpoint_path = root.value("checkpoint_path", std::string{});

        if (root.contains("model")) {
            const json& m = root["model"];
            reject_unknown_keys(m, {"input_size", "channels", "conv_filters", "kernel",
                                    "padding", "fc_widths", "dropout_rate", "num_classes",
                                    "seed"},
                                "config.model");
            config.model.input_size = m.value("input_size", config.model.input_size);
            config.model.channels = m.value("channels", config.model.channels);
            config.model.conv_filters = m.value("conv_filters", config.model.conv_filters);
            config.model.kernel = m.value("kernel", config.model.kernel);
            config.model.padding = m.value("padding", config.model.padding);
            config.model.fc_widths = m.value("fc_widths", config.model.fc_widths);
            config.model.dropout_rate = m.value("dropout_rate", config.model.dropout_rate);
            config.model.num_classes = m.value("num_classes", config.model.num_classes);
            config.model.seed = m.value("seed", config.model.seed);
        }
        if (root.contains("train")) {
            const json& t = root["train"];
            reject_unknown_keys(t, {"epochs", "batch_size", "learning_rate", "optimizer",
                                    "seed"},
                                "config.train");
            config.train.epochs = t.value("epochs", config.train.epochs);
            config.train.batch_size = t.value("batch_size", config.train.batch_size);
            config.train.learning_rate = t.value("learning_rate", config.train.learning_rate);
            config.train.optimizer = t.value("optimizer", config.train.optimizer);
            config.train.seed = t.value("seed", config.train.seed);
        }
        if (root.contains("split")) {
            const json& s = root["split"];
            reject_unknown_keys(s, {"train_fraction", "seed"}, "config.split");
            config.split.train_fraction = s.value("train_fraction", config.split.train_fraction);
            config.split.seed = s.value("seed", config.split.seed);
        }
    } catch (const json::exception& e) {
        throw UsageError(str_printf("config '%s' is malformed: %s", path.string().c_str(),
                                    e.what()));
    }
    return config;
}

void cmd_split(const RunConfig& config) {
    if (!fs::exists(config.data_root)) {
        throw DataError(str_printf("data_root '%s' does not exist",
                                   config.data_root.c_str()));
    }
    ensure_output_dir(config.output_dir);

    const DatasetIndex index = index_dataset(config.data_root);
    const SplitIndex split = stratified_split(index, config.split);
    write_manifest(fs::path(config.output_dir) / kManifestFile, split);

    const std::vector<std::size_t> train_counts = split.train.class_counts();
    const std::vector<std::size_t> test_counts = split.test.class_counts();
    for (std::size_t k = 0; k < index.class_names.size(); ++k) {
        std::printf("class %zu (%s): %zu train / %zu test\n", k,
                    index.class_names[k].c_str(), train_counts[k], test_counts[k]);
    }
    std::printf("train=%zu test=%zu\n", split.train.size(), split.test.size());
}

void cmd_train(const RunConfig& config) {
    const fs::path manifest_path = fs::path(config.output_dir) / kManifestFile;
    if (!fs::exists(manifest_path)) {
        throw ArtifactError(str_printf("manifest '%s' not found; run `xrnet split` first",
                                       manifest_path.string().c_str()));
    }
    ensure_output_dir(config.output_dir);
    const fs::path ckpt_path = checkpoint_path_of(config);
    if (ckpt_path.has_parent_path()) {
        ensure_output_dir(ckpt_path.parent_path());
    }

    const SplitIndex split = parse_manifest(manifest_path);
    std::fprintf(stderr, "loading %zu training images at %zux%zu\n", split.train.size(),
                 config.model.input_size, config.model.input_size);
    const Dataset train_set = load_samples(split.train, config.model.input_size);

    Model<float> model = Model<float>::build(config.model);
    const std::string trace = model.shape_trace().to_string();
    std::fputs(trace.c_str(), stderr);
    write_text_file(fs::path(config.output_dir) / kShapeTraceFile, trace);

    const auto t0 = std::chrono::steady_clock::now();
    const TrainingHistory history = train_model(
        model, train_set, config.train, [&](const EpochStats& stats) {
            const double elapsed =
                std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            std::fprintf(stderr, "epoch %zu/%zu loss=%.6f acc=%.4f (%.1fs)\n", stats.epoch,
                         config.train.epochs, stats.loss, stats.train_accuracy, elapsed);
        });

    write_text_file(fs::path(config.output_dir) / kHistoryFile, history.to_csv());
    save_checkpoint(model, split.train.class_names, ckpt_path);
    std::fprintf(stderr, "checkpoint written to %s\n", ckpt_path.string().c_str());
}

void cmd_eval(const RunConfig& config) {
    const fs::path manifest_path = fs::path(config.output_dir) / kManifestFile;
    if (!fs::exists(manifest_path)) {
        throw ArtifactError(str_printf("manifest '%s' not found; run `xrnet split` first",
                                       manifest_path.string().c_str()));
    }
    ensure_output_dir(config.output_dir);

    LoadedModel loaded = load_checkpoint(checkpoint_path_of(config));
    require_compatible(loaded.model.config(), config.model);

    const SplitIndex split = parse_manifest(manifest_path);
    std::fprintf(stderr, "loading %zu test images at %zux%zu\n", split.test.size(),
                 loaded.model.config().input_size, loaded.model.config().input_size);
    const Dataset test_set = load_samples(split.test, loaded.model.config().input_size);

    const std::vector<int> predicted =
        predict_labels(loaded.model, test_set, config.train.batch_size);
    std::vector<int> truth;
    truth.reserve(test_set.size());
    for (const Sample& s : test_set.samples) {
        truth.push_back(s.label);
    }

    std::vector<std::string> names = loaded.class_names;
    if (names.size() != loaded.model.config().num_classes) {
        names = split.test.class_names;
    }
    const ConfusionMatrix cm =
        confusion_matrix(truth, predicted, loaded.model.config().num_classes, names);
    const ClassificationReport report = classification_report(cm);

    write_text_file(fs::path(config.output_dir) / kReportCsvFile, report_csv(report));
    write_text_file(fs::path(config.output_dir) / kReportTextFile, report_table(report, cm));
    write_text_file(fs::path(config.output_dir) / kConfusionSvgFile, confusion_svg(cm));
    std::printf("accuracy=%.4f over %zu test images\n", report.accuracy, test_set.size());
}

void cmd_predict(const fs::path& checkpoint_path,
                 const std::vector<std::string>& image_paths) {
    if (image_paths.empty()) {
        throw UsageError("predict needs at least one image path");
    }
    LoadedModel loaded = load_checkpoint(checkpoint_path);
    const std::size_t input_size = loaded.model.config().input_size;
    std::vector<std::string> names = loaded.class_names;
    if (names.size() != loaded.model.config().num_classes) {
        names.clear();
        for (std::size_t k = 0; k < loaded.model.config().num_classes; ++k) {
            names.push_back("class_" + std::to_string(k));
        }
    }

    std::size_t failures = 0;
    for (const std::string& path : image_paths) {
        Tensor<float> image;
        try {
            image = load_image(path, input_size);
        } catch (const DataError& e) {
            std::fprintf(stderr, "error: %s\n", e.what());
            ++failures;
            continue;
        }
        Tensor<float> batch = image.reshaped({1, input_size, input_size, 1});
        const PredictResult result = predict(loaded.model, batch);
        std::string line = path + "\t" + names[static_cast<std::size_t>(result.classes[0])];
        for (std::size_t k = 0; k < loaded.model.config().num_classes; ++k) {
            line += str_printf("\t%.4f", static_cast<double>(result.probs[k]));
        }
        std::printf("%s\n", line.c_str());
    }
    if (failures > 0) {
        throw DataError(str_printf("%zu image(s) could not be classified", failures));
    }
}

int cmd_gradcheck(std::uint64_t seed) {
    const GradCheckReport report = run_gradient_checks(seed);
    for (const GradCheckEntry& entry : report.entries) {
        std::printf("%-14s max relative error %.3e  %s\n", entry.name.c_str(),
                    entry.max_rel_error,
                    entry.max_rel_error < report.tolerance ? "ok" : "FAIL");
    }
    if (!report.all_passed()) {
        std::printf("gradcheck FAILED (tolerance %.0e)\n", report.tolerance);
        return 1;
    }
    std::printf("gradcheck passed (tolerance %.0e)\n", report.tolerance);
    return 0;
}

int exit_code_for(const std::exception& error) {
    if (dynamic_cast<const NumericError*>(&error)) {
        return 3;
    }
    if (dynamic_cast<const ArtifactError*>(&error)) {
        return 4;
    }
    if (dynamic_cast<const UsageError*>(&error) ||
        dynamic_cast<const ConfigError*>(&error) ||
        dynamic_cast<const DataError*>(&error)) {
        return 2;
    }
    return 1;
}

}  // namespace xrnet::cli
