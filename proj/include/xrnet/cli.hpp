#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "xrnet/dataset.hpp"
#include "xrnet/model.hpp"

namespace xrnet::cli {

// Everything one experiment needs, loaded from a JSON config file. Unknown
// keys are rejected so typos fail fast.
struct RunConfig {
    std::string data_root;
    std::string output_dir;
    std::string checkpoint_path;  // defaults to <output_dir>/model.ckpt
    ModelConfig model;
    TrainConfig train;
    SplitSpec split;
};

RunConfig load_run_config(const std::filesystem::path& path);

// Subcommands. Each throws on failure; exit_code_for maps exceptions onto
// the exit-code contract (0 ok, 2 usage/config/data, 3 numeric, 4 artifact).
void cmd_split(const RunConfig& config);
void cmd_train(const RunConfig& config);
void cmd_eval(const RunConfig& config);
void cmd_predict(const std::filesystem::path& checkpoint_path,
                 const std::vector<std::string>& image_paths);
int cmd_gradcheck(std::uint64_t seed);  // returns 0 iff every check passes

int exit_code_for(const std::exception& error);

// Output file names inside output_dir.
inline constexpr const char* kManifestFile = "split_manifest.txt";
inline constexpr const char* kHistoryFile = "history.csv";
inline constexpr const char* kShapeTraceFile = "shape_trace.txt";
inline constexpr const char* kReportCsvFile = "report.csv";
inline constexpr const char* kReportTextFile = "report.txt";
inline constexpr const char* kConfusionSvgFile = "confusion_matrix.svg";
inline constexpr const char* kDefaultCheckpointFile = "model.ckpt";

}  // namespace xrnet::cli
