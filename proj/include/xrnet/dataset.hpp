#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "xrnet/tensor.hpp"

namespace xrnet {

// One labeled image after ingestion: HxWx1 values in [0, 1].
struct Sample {
    Tensor<float> image;
    int label = 0;
    std::string source_path;
};

struct Dataset {
    std::vector<Sample> samples;
    std::vector<std::string> class_names;  // lexicographic directory order

    std::size_t size() const { return samples.size(); }
    std::vector<std::size_t> class_counts() const;
};

// Paths and labels without pixel data. Every listed file was decode-checked;
// undecodable files are counted in skipped and warned to stderr.
struct DatasetIndex {
    std::vector<std::string> paths;  // sorted within each class, class-major
    std::vector<int> labels;
    std::vector<std::string> class_names;
    std::size_t skipped = 0;

    std::size_t size() const { return paths.size(); }
    std::vector<std::size_t> class_counts() const;
};

struct SplitSpec {
    double train_fraction = 0.8;  // in (0, 1)
    std::uint64_t seed = 0;
};

struct SplitIndex {
    DatasetIndex train;
    DatasetIndex test;
};

// Scans a two-class directory layout. Class indices follow lexicographic
// subdirectory-name order; files are decode-validated and sorted by name.
DatasetIndex index_dataset(const std::filesystem::path& root);

// Loads the images referenced by an index, resized to image_size^2.
Dataset load_samples(const DatasetIndex& index, std::size_t image_size);

// index_dataset followed by load_samples.
Dataset load_dataset(const std::filesystem::path& root, std::size_t image_size);

// Per class: seeded shuffle, then the first round_half_up(n * fraction)
// entries go to train and the rest to test.
SplitIndex stratified_split(const DatasetIndex& index, const SplitSpec& spec);

struct SplitDataset {
    Dataset train;
    Dataset test;
};
SplitDataset stratified_split(const Dataset& dataset, const SplitSpec& spec);

// floor(x + 0.5) for non-negative x.
std::size_t round_half_up(double x);

// Shuffled sample indices for one epoch, chunked into batches. The order is
// keyed by (seed, epoch_index); the final batch may be smaller.
std::vector<std::vector<std::size_t>> epoch_batches(std::size_t dataset_size,
                                                    std::size_t batch_size, std::uint64_t seed,
                                                    std::size_t epoch_index);

// Stacks the selected samples into a B x H x W x 1 batch plus labels.
struct Batch {
    Tensor<float> images;
    std::vector<int> labels;
};
Batch stack_batch(const Dataset& dataset, std::span<const std::size_t> indices);

// Frozen split file: one "path,label,split" line per sample, dataset order.
std::string render_manifest(const SplitIndex& split);
void write_manifest(const std::filesystem::path& path, const SplitIndex& split);
SplitIndex parse_manifest(const std::filesystem::path& path);

}  // namespace xrnet
