#include "xrnet/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#include "xrnet/error.hpp"
#include "xrnet/image.hpp"
#include "xrnet/rng.hpp"
#include "xrnet/text.hpp"

namespace xrnet {

namespace {

std::vector<std::size_t> count_labels(const std::vector<int>& labels, std::size_t num_classes) {
    std::vector<std::size_t> counts(num_classes, 0);
    for (const int label : labels) {
        ++counts[static_cast<std::size_t>(label)];
    }
    return counts;
}

// Membership vector for a stratified split: per class, a seeded shuffle
// decides which round_half_up(n * fraction) samples train.
std::vector<char> split_membership(const std::vector<int>& labels, std::size_t num_classes,
                                   const SplitSpec& spec) {
    if (!(spec.train_fraction > 0.0 && spec.train_fraction < 1.0)) {
        throw ConfigError(str_printf("train_fraction %g outside (0, 1)", spec.train_fraction));
    }
    std::vector<char> is_train(labels.size(), 0);
    for (std::size_t cls = 0; cls < num_classes; ++cls) {
        std::vector<std::size_t> members;
        for (std::size_t i = 0; i < labels.size(); ++i) {
            if (static_cast<std::size_t>(labels[i]) == cls) {
                members.push_back(i);
            }
        }
        if (members.empty()) {
            throw ConfigError(str_printf("class %zu has no samples to split", cls));
        }
        Rng rng(mix_seed(spec.seed, cls));
        rng.shuffle(members);
        const std::size_t train_count =
            round_half_up(static_cast<double>(members.size()) * spec.train_fraction);
        if (train_count == 0 || train_count >= members.size()) {
            throw ConfigError(str_printf(
                "fraction %g leaves class %zu with an empty train or test side (%zu samples)",
                spec.train_fraction, cls, members.size()));
        }
        for (std::size_t j = 0; j < train_count; ++j) {
            is_train[members[j]] = 1;
        }
    }
    return is_train;
}

}  // namespace

std::vector<std::size_t> Dataset::class_counts() const {
    std::vector<int> labels;
    labels.reserve(samples.size());
    for (const Sample& s : samples) {
        labels.push_back(s.label);
    }
    return count_labels(labels, class_names.size());
}

std::vector<std::size_t> DatasetIndex::class_counts() const {
    return count_labels(labels, class_names.size());
}

std::size_t round_half_up(double x) {
    return static_cast<std::size_t>(std::floor(x + 0.5));
}

DatasetIndex index_dataset(const std::filesystem::path& root) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(root)) {
        throw DataError(str_printf("dataset root '%s' is not a directory",
                                   root.string().c_str()));
    }
    std::vector<fs::path> class_dirs;
    for (const auto& entry : fs::directory_iterator(root)) {
        if (entry.is_directory()) {
            class_dirs.push_back(entry.path());
        }
    }
    if (class_dirs.size() != 2) {
        throw DataError(str_printf("dataset root '%s' must hold exactly 2 class directories, found %zu",
                                   root.string().c_str(), class_dirs.size()));
    }
    std::sort(class_dirs.begin(), class_dirs.end(),
              [](const fs::path& a, const fs::path& b) { return a.filename() < b.filename(); });

    DatasetIndex index;
    for (std::size_t cls = 0; cls < class_dirs.size(); ++cls) {
        index.class_names.push_back(class_dirs[cls].filename().string());
        std::vector<fs::path> files;
        for (const auto& entry : fs::directory_iterator(class_dirs[cls])) {
            if (entry.is_regular_file()) {
                files.push_back(entry.path());
            }
        }
        std::sort(files.begin(), files.end());
        std::size_t usable = 0;
        for (const fs::path& file : files) {
            try {
                decode_image(file);
            } catch (const DataError& e) {
                std::fprintf(stderr, "warning: skipping %s: %s\n", file.string().c_str(),
                             e.what());
                ++index.skipped;
                continue;
            }
            index.paths.push_back(file.string());
            index.labels.push_back(static_cast<int>(cls));
            ++usable;
        }
        if (usable == 0) {
            throw DataError(str_printf("class directory '%s' has no usable images",
                                       class_dirs[cls].string().c_str()));
        }
    }
    if (index.skipped > 0) {
        std::fprintf(stderr, "warning: skipped %zu undecodable file(s)\n", index.skipped);
    }
    return index;
}

Dataset load_samples(const DatasetIndex& index, std::size_t image_size) {
    if (image_size == 0) {
        throw ConfigError("image_size must be positive");
    }
    Dataset dataset;
    dataset.class_names = index.class_names;
    dataset.samples.reserve(index.size());
    for (std::size_t i = 0; i < index.size(); ++i) {
        Sample sample;
        sample.image = load_image(index.paths[i], image_size);
        sample.label = index.labels[i];
        sample.source_path = index.paths[i];
        dataset.samples.push_back(std::move(sample));
    }
    return dataset;
}

Dataset load_dataset(const std::filesystem::path& root, std::size_t image_size) {
    return load_samples(index_dataset(root), image_size);
}

SplitIndex stratified_split(const DatasetIndex& index, const SplitSpec& spec) {
    const std::size_t num_classes =
        index.class_names.empty() ? 2 : index.class_names.size();
    const std::vector<char> is_train = split_membership(index.labels, num_classes, spec);
    SplitIndex split;
    split.train.class_names = index.class_names;
    split.test.class_names = index.class_names;
    for (std::size_t i = 0; i < index.size(); ++i) {
        DatasetIndex& side = is_train[i] ? split.train : split.test;
        side.paths.push_back(index.paths[i]);
        side.labels.push_back(index.labels[i]);
    }
    return split;
}

SplitDataset stratified_split(const Dataset& dataset, const SplitSpec& spec) {
    std::vector<int> labels;
    labels.reserve(dataset.size());
    for (const Sample& s : dataset.samples) {
        labels.push_back(s.label);
    }
    const std::size_t num_classes =
        dataset.class_names.empty() ? 2 : dataset.class_names.size();
    const std::vector<char> is_train = split_membership(labels, num_classes, spec);
    SplitDataset split;
    split.train.class_names = dataset.class_names;
    split.test.class_names = dataset.class_names;
    for (std::size_t i = 0; i < dataset.size(); ++i) {
        (is_train[i] ? split.train : split.test).samples.push_back(dataset.samples[i]);
    }
    return split;
}

std::vector<std::vector<std::size_t>> epoch_batches(std::size_t dataset_size,
                                                    std::size_t batch_size, std::uint64_t seed,
                                                    std::size_t epoch_index) {
    if (batch_size == 0) {
        throw ConfigError("batch_size must be at least 1");
    }
    std::vector<std::size_t> order(dataset_size);
    std::iota(order.begin(), order.end(), 0);
    Rng rng(mix_seed(seed, epoch_index));
    rng.shuffle(order);
    std::vector<std::vector<std::size_t>> batches;
    for (std::size_t start = 0; start < dataset_size; start += batch_size) {
        const std::size_t end = std::min(start + batch_size, dataset_size);
        batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                             order.begin() + static_cast<std::ptrdiff_t>(end));
    }
    return batches;
}

Batch stack_batch(const Dataset& dataset, std::span<const std::size_t> indices) {
    if (indices.empty()) {
        throw DataError("cannot stack an empty batch");
    }
    const Tensor<float>& first = dataset.samples[indices[0]].image;
    const std::size_t h = first.extent(0), w = first.extent(1), c = first.extent(2);
    Batch batch;
    batch.images = Tensor<float>({indices.size(), h, w, c});
    batch.labels.reserve(indices.size());
    const std::size_t stride = h * w * c;
    for (std::size_t i = 0; i < indices.size(); ++i) {
        const Sample& sample = dataset.samples[indices[i]];
        if (sample.image.shape() != first.shape()) {
            throw DataError(str_printf("sample '%s' shaped %s, batch expects %s",
                                       sample.source_path.c_str(),
                                       shape_to_string(sample.image.shape()).c_str(),
                                       shape_to_string(first.shape()).c_str()));
        }
        std::copy(sample.image.data(), sample.image.data() + stride,
                  batch.images.data() + i * stride);
        batch.labels.push_back(sample.label);
    }
    return batch;
}

std::string render_manifest(const SplitIndex& split) {
    struct Line {
        std::string path;
        int label;
        bool train;
    };
    std::vector<Line> lines;
    lines.reserve(split.train.size() + split.test.size());
    for (std::size_t i = 0; i < split.train.size(); ++i) {
        lines.push_back({split.train.paths[i], split.train.labels[i], true});
    }
    for (std::size_t i = 0; i < split.test.size(); ++i) {
        lines.push_back({split.test.paths[i], split.test.labels[i], false});
    }
    // Dataset order: class-major, paths sorted within each class.
    std::sort(lines.begin(), lines.end(), [](const Line& a, const Line& b) {
        return a.label != b.label ? a.label < b.label : a.path < b.path;
    });
    std::string out;
    for (const Line& line : lines) {
        out += line.path;
        out += ',';
        out += std::to_string(line.label);
        out += ',';
        out += line.train ? "train" : "test";
        out += '\n';
    }
    return out;
}

void write_manifest(const std::filesystem::path& path, const SplitIndex& split) {
    std::ofstream file(path, std::ios::binary);
    if (!file) {
        throw ArtifactError(str_printf("cannot write manifest '%s'", path.string().c_str()));
    }
    file << render_manifest(split);
    if (!file) {
        throw ArtifactError(str_printf("failed writing manifest '%s'", path.string().c_str()));
    }
}

SplitIndex parse_manifest(const std::filesystem::path& path) {
    std::ifstream file(path, std::ios::binary);
    if (!file) {
        throw ArtifactError(str_printf("cannot open manifest '%s'", path.string().c_str()));
    }
    SplitIndex split;
    std::vector<std::string> names;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(file, line)) {
        ++line_no;
        if (line.empty()) {
            continue;
        }
        // path,label,split -- the path may itself contain commas, so parse
        // the two fixed fields from the right.
        const std::size_t last = line.rfind(',');
        const std::size_t second = last == std::string::npos ? std::string::npos
                                                             : line.rfind(',', last - 1);
        if (last == std::string::npos || second == std::string::npos || second == 0) {
            throw ArtifactError(str_printf("manifest '%s' line %zu is malformed",
                                           path.string().c_str(), line_no));
        }
        const std::string sample_path = line.substr(0, second);
        const std::string label_text = line.substr(second + 1, last - second - 1);
        const std::string side = line.substr(last + 1);
        int label = -1;
        try {
            label = std::stoi(label_text);
        } catch (const std::exception&) {
            label = -1;
        }
        if (label < 0 || (side != "train" && side != "test")) {
            throw ArtifactError(str_printf("manifest '%s' line %zu is malformed",
                                           path.string().c_str(), line_no));
        }
        const auto ulabel = static_cast<std::size_t>(label);
        if (names.size() <= ulabel) {
            names.resize(ulabel + 1);
        }
        if (names[ulabel].empty()) {
            names[ulabel] =
                std::filesystem::path(sample_path).parent_path().filename().string();
            if (names[ulabel].empty()) {
                names[ulabel] = "class_" + std::to_string(label);
            }
        }
        DatasetIndex& dest = side == "train" ? split.train : split.test;
        dest.paths.push_back(sample_path);
        dest.labels.push_back(label);
    }
    if (split.train.size() == 0 || split.test.size() == 0) {
        throw ArtifactError(str_printf("manifest '%s' must list both train and test samples",
                                       path.string().c_str()));
    }
    split.train.class_names = names;
    split.test.class_names = names;
    return split;
}

}  // namespace xrnet
