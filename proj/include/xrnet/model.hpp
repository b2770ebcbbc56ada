#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "xrnet/dataset.hpp"
#include "xrnet/layers.hpp"
#include "xrnet/optim.hpp"
#include "xrnet/rng.hpp"
#include "xrnet/tensor.hpp"

namespace xrnet {

// Declarative description of the network: a [conv -> relu -> pool] block per
// filter count, then flatten, [dense -> relu -> dropout] per width, then a
// final dense into num_classes with softmax on top.
struct ModelConfig {
    std::size_t input_size = 256;
    std::size_t channels = 1;
    std::vector<std::size_t> conv_filters = {64, 128, 128};
    std::size_t kernel = 3;
    std::size_t padding = 2;
    std::vector<std::size_t> fc_widths = {1024, 1024};
    double dropout_rate = 0.2;
    std::size_t num_classes = 2;
    std::uint64_t seed = 0;

    bool operator==(const ModelConfig&) const = default;
};

struct TrainConfig {
    std::size_t epochs = 45;
    std::size_t batch_size = 64;
    double learning_rate = 0.001;
    std::string optimizer = "adam";  // "adam" or "sgd"
    std::uint64_t seed = 0;
};

// One line per layer: name plus input/output extents, e.g. "conv1" from
// "256x256x1" to "258x258x64".
struct ShapeTraceEntry {
    std::string layer;
    std::string input;
    std::string output;
};

struct ShapeTrace {
    std::vector<ShapeTraceEntry> entries;
    std::size_t flatten_size = 0;

    std::string to_string() const {
        std::string out;
        for (const ShapeTraceEntry& e : entries) {
            out += str_printf("%-10s %-14s -> %s\n", e.layer.c_str(), e.input.c_str(),
                              e.output.c_str());
        }
        return out;
    }
};

// Walks the configured stack symbolically and validates it: conv inputs must
// be at least the kernel size and pool inputs at least 2, checked without
// allocating any parameters.
ShapeTrace compute_shape_trace(const ModelConfig& config);

struct EpochStats {
    std::size_t epoch = 0;  // 1-based
    double loss = 0.0;      // mean over samples
    double train_accuracy = 0.0;
};

struct TrainingHistory {
    std::vector<EpochStats> epochs;

    std::string to_csv() const;
};

// The sequential network. Single-owner while training (layers cache forward
// state); eval-mode forward is pure and safe to share read-only.
template <typename T>
class Model {
public:
    static Model build(const ModelConfig& config);

    const ModelConfig& config() const { return config_; }
    const ShapeTrace& shape_trace() const { return trace_; }

    // Probability rows over classes (softmax applied).
    Tensor<T> forward(const Tensor<T>& batch, Mode mode) {
        return softmax_probs(forward_logits(batch, mode));
    }

    Tensor<T> forward_logits(const Tensor<T>& batch, Mode mode) {
        validate_batch(batch);
        Tensor<T> x = batch;
        for (auto& layer : layers_) {
            x = layer->forward(x, mode, dropout_rng_);
        }
        return x;
    }

    // Propagates d(loss)/d(logits) through the stack; parameter grads land
    // in params().
    void backward_from_logits(const Tensor<T>& grad_logits) {
        Tensor<T> g = grad_logits;
        for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) {
            g = (*it)->backward(g);
        }
    }

    std::vector<Param<T>*> parameters() {
        std::vector<Param<T>*> out;
        for (auto& layer : layers_) {
            for (Param<T>* p : layer->params()) {
                out.push_back(p);
            }
        }
        return out;
    }

    // Dropout draws come from this stream; reseeded at the start of every
    // training run so runs are reproducible.
    void reseed_dropout(std::uint64_t seed) { dropout_rng_ = Rng(seed); }

    std::span<const std::unique_ptr<Layer<T>>> layers() const { return layers_; }

private:
    explicit Model(ModelConfig config) : config_(std::move(config)), dropout_rng_(0) {}

    void validate_batch(const Tensor<T>& batch) const {
        if (batch.rank() != 4 || batch.extent(1) != config_.input_size ||
            batch.extent(2) != config_.input_size || batch.extent(3) != config_.channels) {
            throw DataError(str_printf("batch shaped %s, model expects Bx%zux%zux%zu",
                                       shape_to_string(batch.shape()).c_str(),
                                       config_.input_size, config_.input_size,
                                       config_.channels));
        }
        detail::require_finite(batch, "model input batch");
    }

    ModelConfig config_;
    ShapeTrace trace_;
    std::vector<std::unique_ptr<Layer<T>>> layers_;
    Rng dropout_rng_;
};

namespace detail {

inline void he_normal_fill(Rng& rng, double fan_in, float* data, std::size_t n) {
    const double std_dev = std::sqrt(2.0 / fan_in);
    for (std::size_t i = 0; i < n; ++i) {
        data[i] = static_cast<float>(std_dev * rng.normal());
    }
}
inline void he_normal_fill(Rng& rng, double fan_in, double* data, std::size_t n) {
    const double std_dev = std::sqrt(2.0 / fan_in);
    for (std::size_t i = 0; i < n; ++i) {
        data[i] = std_dev * rng.normal();
    }
}

}  // namespace detail

inline ShapeTrace compute_shape_trace(const ModelConfig& config) {
    if (config.num_classes < 2) {
        throw ConfigError("num_classes must be at least 2");
    }
    if (config.input_size == 0 || config.channels == 0 || config.kernel == 0) {
        throw ConfigError("input_size, channels and kernel must be positive");
    }
    for (const std::size_t f : config.conv_filters) {
        if (f == 0) {
            throw ConfigError("conv filter counts must be positive");
        }
    }
    for (const std::size_t w : config.fc_widths) {
        if (w == 0) {
            throw ConfigError("fc widths must be positive");
        }
    }
    if (!(config.dropout_rate >= 0.0 && config.dropout_rate < 1.0)) {
        throw ConfigError(str_printf("dropout rate %g outside [0, 1)", config.dropout_rate));
    }
    ShapeTrace trace;
    std::size_t extent = config.input_size;
    std::size_t channels = config.channels;
    for (std::size_t i = 0; i < config.conv_filters.size(); ++i) {
        const std::string conv_name = "conv" + std::to_string(i + 1);
        if (extent < config.kernel) {
            throw ConfigError(str_printf(
                "%s: input extent %zu is smaller than the %zux%zu kernel", conv_name.c_str(),
                extent, config.kernel, config.kernel));
        }
        ConvGeometry geom{config.kernel, config.padding, channels, config.conv_filters[i]};
        const std::size_t conv_out = geom.output_extent(extent);
        trace.entries.push_back({conv_name,
                                 str_printf("%zux%zux%zu", extent, extent, channels),
                                 str_printf("%zux%zux%zu", conv_out, conv_out,
                                            config.conv_filters[i])});
        const std::string pool_name = "pool" + std::to_string(i + 1);
        if (conv_out < 2) {
            throw ConfigError(str_printf("%s: input extent %zu is smaller than the 2x2 window",
                                         pool_name.c_str(), conv_out));
        }
        const std::size_t pool_out = conv_out / 2;
        trace.entries.push_back({pool_name,
                                 str_printf("%zux%zux%zu", conv_out, conv_out,
                                            config.conv_filters[i]),
                                 str_printf("%zux%zux%zu", pool_out, pool_out,
                                            config.conv_filters[i])});
        extent = pool_out;
        channels = config.conv_filters[i];
    }
    trace.flatten_size = extent * extent * channels;
    trace.entries.push_back({"flatten",
                             str_printf("%zux%zux%zu", extent, extent, channels),
                             std::to_string(trace.flatten_size)});
    std::size_t features = trace.flatten_size;
    for (std::size_t i = 0; i < config.fc_widths.size(); ++i) {
        trace.entries.push_back({"fc" + std::to_string(i + 1), std::to_string(features),
                                 std::to_string(config.fc_widths[i])});
        features = config.fc_widths[i];
    }
    trace.entries.push_back({"output", std::to_string(features),
                             std::to_string(config.num_classes)});
    return trace;
}

template <typename T>
Model<T> Model<T>::build(const ModelConfig& config) {
    Model model(config);
    model.trace_ = compute_shape_trace(config);

    Rng init_rng(config.seed);
    std::size_t channels = config.channels;
    for (std::size_t i = 0; i < config.conv_filters.size(); ++i) {
        ConvGeometry geom{config.kernel, config.padding, channels, config.conv_filters[i]};
        auto conv = std::make_unique<Conv2dLayer<T>>(geom, "conv" + std::to_string(i + 1));
        Param<T>* kernels = conv->params()[0];
        detail::he_normal_fill(init_rng,
                               static_cast<double>(geom.kernel * geom.kernel * channels),
                               kernels->value.data(), kernels->value.size());
        model.layers_.push_back(std::move(conv));
        model.layers_.push_back(std::make_unique<ReluLayer<T>>());
        model.layers_.push_back(std::make_unique<MaxPoolLayer<T>>());
        channels = config.conv_filters[i];
    }
    model.layers_.push_back(std::make_unique<FlattenLayer<T>>());
    std::size_t features = model.trace_.flatten_size;
    for (std::size_t i = 0; i < config.fc_widths.size(); ++i) {
        auto dense = std::make_unique<DenseLayer<T>>(features, config.fc_widths[i],
                                                     "fc" + std::to_string(i + 1));
        Param<T>* weights = dense->params()[0];
        detail::he_normal_fill(init_rng, static_cast<double>(features), weights->value.data(),
                               weights->value.size());
        model.layers_.push_back(std::move(dense));
        model.layers_.push_back(std::make_unique<ReluLayer<T>>());
        model.layers_.push_back(std::make_unique<DropoutLayer<T>>(config.dropout_rate));
        features = config.fc_widths[i];
    }
    auto head = std::make_unique<DenseLayer<T>>(features, config.num_classes, "output");
    Param<T>* weights = head->params()[0];
    detail::he_normal_fill(init_rng, static_cast<double>(features), weights->value.data(),
                           weights->value.size());
    model.layers_.push_back(std::move(head));
    return model;
}

struct PredictResult {
    std::vector<int> classes;
    Tensor<float> probs;
};

// argmax per row; ties break toward the lower class index.
template <typename T>
std::vector<int> argmax_rows(const Tensor<T>& probs) {
    const std::size_t b = probs.extent(0), k = probs.extent(1);
    std::vector<int> out(b, 0);
    for (std::size_t i = 0; i < b; ++i) {
        const T* row = probs.data() + i * k;
        std::size_t best = 0;
        for (std::size_t j = 1; j < k; ++j) {
            if (row[j] > row[best]) {
                best = j;
            }
        }
        out[i] = static_cast<int>(best);
    }
    return out;
}

inline PredictResult predict(Model<float>& model, const Tensor<float>& images) {
    PredictResult result;
    result.probs = model.forward(images, Mode::eval);
    result.classes = argmax_rows(result.probs);
    return result;
}

// Callback for per-epoch progress logging; receives the stats just recorded.
using EpochCallback = std::function<void(const EpochStats&)>;

// Runs epochs x (seeded shuffle into batches, forward, loss, backward,
// optimizer step). The last partial batch is trained on. Epoch e is shuffled
// with key (seed, e) so runs with the same seed are identical.
inline TrainingHistory train_model(Model<float>& model, const Dataset& train_set,
                                   const TrainConfig& config,
                                   const EpochCallback& callback = {}) {
    if (train_set.size() == 0) {
        throw DataError("training set is empty");
    }
    if (config.epochs == 0) {
        throw ConfigError("epochs must be positive");
    }
    if (config.optimizer != "adam" && config.optimizer != "sgd") {
        throw ConfigError(str_printf("unknown optimizer '%s'", config.optimizer.c_str()));
    }
    if (config.learning_rate < 0.0) {
        throw ConfigError("learning_rate must be non-negative");
    }

    model.reseed_dropout(mix_seed(config.seed, 0x5eed));
    std::vector<Param<float>*> params = model.parameters();
    AdamConfig adam_config;
    if (config.learning_rate > 0.0) {
        adam_config.learning_rate = config.learning_rate;
    }
    Adam<float> adam(adam_config);

    TrainingHistory history;
    history.epochs.reserve(config.epochs);
    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        const auto batches =
            epoch_batches(train_set.size(), config.batch_size, config.seed, epoch);
        double loss_sum = 0.0;
        std::size_t correct = 0;
        for (std::size_t batch_no = 0; batch_no < batches.size(); ++batch_no) {
            const Batch batch = stack_batch(train_set, batches[batch_no]);
            const Tensor<float> logits = model.forward_logits(batch.images, Mode::train);
            const SoftmaxLoss<float> loss = softmax_cross_entropy(logits, batch.labels);
            if (!std::isfinite(loss.loss)) {
                throw NumericError(str_printf("non-finite loss at epoch %zu batch %zu",
                                              epoch + 1, batch_no + 1));
            }
            loss_sum += loss.loss * static_cast<double>(batch.labels.size());
            const std::vector<int> predicted = argmax_rows(loss.probs);
            for (std::size_t i = 0; i < predicted.size(); ++i) {
                if (predicted[i] == batch.labels[i]) {
                    ++correct;
                }
            }
            if (config.learning_rate > 0.0) {
                model.backward_from_logits(
                    softmax_cross_entropy_backward(loss.probs, batch.labels));
                if (config.optimizer == "adam") {
                    adam.step(params);
                } else {
                    sgd_step<float>(params, config.learning_rate);
                }
            }
        }
        EpochStats stats;
        stats.epoch = epoch + 1;
        stats.loss = loss_sum / static_cast<double>(train_set.size());
        stats.train_accuracy =
            static_cast<double>(correct) / static_cast<double>(train_set.size());
        history.epochs.push_back(stats);
        if (callback) {
            callback(stats);
        }
    }
    return history;
}

inline std::string TrainingHistory::to_csv() const {
    std::string out = "epoch,loss,train_accuracy\n";
    for (const EpochStats& e : epochs) {
        out += std::to_string(e.epoch);
        out += ',';
        out += format_exact(e.loss);
        out += ',';
        out += format_exact(e.train_accuracy);
        out += '\n';
    }
    return out;
}

}  // namespace xrnet
