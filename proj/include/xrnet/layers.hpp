#pragma once

#include <algorithm>
#include <cmath>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "xrnet/rng.hpp"
#include "xrnet/tensor.hpp"
#include "xrnet/tensor_ops.hpp"

namespace xrnet {

enum class Mode { train, eval };

// Named learnable tensor shared between a layer and the optimizer. The layer
// writes grad during backward; the optimizer consumes it.
template <typename T>
struct Param {
    std::string name;
    Tensor<T> value;
    Tensor<T> grad;

    Param(std::string n, Tensor<T> v) : name(std::move(n)), value(std::move(v)) {
        grad = Tensor<T>(value.shape());
    }
};

// Uniform forward/backward contract for the sequential stack. Only
// train-mode forwards retain the cache backward needs; eval-mode forwards
// write no layer state and are safe to run concurrently.
template <typename T>
class Layer {
public:
    virtual ~Layer() = default;
    virtual std::string_view kind() const = 0;
    virtual Tensor<T> forward(const Tensor<T>& input, Mode mode, Rng& rng) = 0;
    virtual Tensor<T> backward(const Tensor<T>& upstream) = 0;
    virtual std::vector<Param<T>*> params() { return {}; }

protected:
    void require_forward_ran(bool ran) const {
        if (!ran) {
            throw UsageError(std::string(kind()) + ": backward called before forward");
        }
    }
};

// Batched convolution over B x H x W x C, one im2col pass per sample.
template <typename T>
class Conv2dLayer : public Layer<T> {
public:
    Conv2dLayer(ConvGeometry geom, std::string name_prefix)
        : geom_(geom),
          kernels_(name_prefix + ".kernels",
                   Tensor<T>({geom.kernel, geom.kernel, geom.in_channels, geom.out_channels})),
          bias_(name_prefix + ".bias", Tensor<T>({geom.out_channels})) {}

    std::string_view kind() const override { return "conv2d"; }

    const ConvGeometry& geometry() const { return geom_; }

    // Eval-mode forward writes no member state, so a trained model can serve
    // concurrent readers.
    Tensor<T> forward(const Tensor<T>& input, Mode mode, Rng&) override {
        if (input.rank() != 4 || input.extent(3) != geom_.in_channels) {
            throw ConfigError(str_printf("conv2d batch shaped %s, expected BxHxWx%zu",
                                         shape_to_string(input.shape()).c_str(),
                                         geom_.in_channels));
        }
        const std::size_t b = input.extent(0), h = input.extent(1), w = input.extent(2);
        const std::size_t oh = geom_.output_extent(h), ow = geom_.output_extent(w);
        Tensor<T> output({b, oh, ow, geom_.out_channels});
        const std::size_t in_stride = h * w * geom_.in_channels;
        const std::size_t out_stride = oh * ow * geom_.out_channels;
        for (std::size_t i = 0; i < b; ++i) {
            Tensor<T> sample({h, w, geom_.in_channels},
                             std::vector<T>(input.data() + i * in_stride,
                                            input.data() + (i + 1) * in_stride));
            Tensor<T> result = conv2d_forward(sample, kernels_.value, bias_.value, geom_);
            std::copy(result.data(), result.data() + out_stride, output.data() + i * out_stride);
        }
        if (mode == Mode::train) {
            cached_input_ = input;
            forward_ran_ = true;
        }
        return output;
    }

    Tensor<T> backward(const Tensor<T>& upstream) override {
        this->require_forward_ran(forward_ran_);
        const std::size_t b = cached_input_.extent(0);
        const std::size_t h = cached_input_.extent(1), w = cached_input_.extent(2);
        const std::size_t oh = geom_.output_extent(h), ow = geom_.output_extent(w);
        if (upstream.shape() != std::vector<std::size_t>{b, oh, ow, geom_.out_channels}) {
            throw ConfigError(str_printf("conv2d upstream shaped %s, expected %zux%zux%zux%zu",
                                         shape_to_string(upstream.shape()).c_str(), b, oh, ow,
                                         geom_.out_channels));
        }
        kernels_.grad.fill(T{});
        bias_.grad.fill(T{});
        Tensor<T> downstream(cached_input_.shape());
        const std::size_t in_stride = h * w * geom_.in_channels;
        const std::size_t out_stride = oh * ow * geom_.out_channels;
        for (std::size_t i = 0; i < b; ++i) {
            Tensor<T> sample({h, w, geom_.in_channels},
                             std::vector<T>(cached_input_.data() + i * in_stride,
                                            cached_input_.data() + (i + 1) * in_stride));
            Tensor<T> up({oh, ow, geom_.out_channels},
                         std::vector<T>(upstream.data() + i * out_stride,
                                        upstream.data() + (i + 1) * out_stride));
            ConvGrads<T> grads = conv2d_backward(sample, kernels_.value, geom_, up);
            std::copy(grads.input.data(), grads.input.data() + in_stride,
                      downstream.data() + i * in_stride);
            for (std::size_t j = 0; j < kernels_.grad.size(); ++j) {
                kernels_.grad[j] += grads.kernels[j];
            }
            for (std::size_t j = 0; j < bias_.grad.size(); ++j) {
                bias_.grad[j] += grads.bias[j];
            }
        }
        return downstream;
    }

    std::vector<Param<T>*> params() override { return {&kernels_, &bias_}; }

private:
    ConvGeometry geom_;
    Param<T> kernels_;
    Param<T> bias_;
    Tensor<T> cached_input_;
    bool forward_ran_ = false;
};

template <typename T>
class MaxPoolLayer : public Layer<T> {
public:
    std::string_view kind() const override { return "maxpool"; }

    Tensor<T> forward(const Tensor<T>& input, Mode mode, Rng&) override {
        if (input.rank() != 4) {
            throw ConfigError(str_printf("maxpool batch shaped %s, expected BxHxWxC",
                                         shape_to_string(input.shape()).c_str()));
        }
        const std::size_t b = input.extent(0), h = input.extent(1), w = input.extent(2),
                          c = input.extent(3);
        const std::size_t oh = h / 2, ow = w / 2;
        if (h < 2 || w < 2) {
            throw ConfigError(str_printf("maxpool input %zux%zu smaller than 2x2 window", h, w));
        }
        std::vector<std::vector<std::size_t>> argmax(b);
        Tensor<T> output({b, oh, ow, c});
        const std::size_t in_stride = h * w * c;
        const std::size_t out_stride = oh * ow * c;
        for (std::size_t i = 0; i < b; ++i) {
            Tensor<T> sample({h, w, c},
                             std::vector<T>(input.data() + i * in_stride,
                                            input.data() + (i + 1) * in_stride));
            MaxPoolResult<T> result = maxpool2d_forward(sample);
            std::copy(result.output.data(), result.output.data() + out_stride,
                      output.data() + i * out_stride);
            argmax[i] = std::move(result.argmax);
        }
        if (mode == Mode::train) {
            input_shape_ = input.shape();
            argmax_ = std::move(argmax);
            forward_ran_ = true;
        }
        return output;
    }

    Tensor<T> backward(const Tensor<T>& upstream) override {
        this->require_forward_ran(forward_ran_);
        const std::size_t b = input_shape_[0], h = input_shape_[1], w = input_shape_[2],
                          c = input_shape_[3];
        const std::size_t out_stride = (h / 2) * (w / 2) * c;
        if (upstream.shape() != std::vector<std::size_t>{b, h / 2, w / 2, c}) {
            throw ConfigError(str_printf("maxpool upstream shaped %s, expected %zux%zux%zux%zu",
                                         shape_to_string(upstream.shape()).c_str(), b, h / 2,
                                         w / 2, c));
        }
        Tensor<T> downstream(input_shape_);
        const std::size_t in_stride = h * w * c;
        for (std::size_t i = 0; i < b; ++i) {
            Tensor<T> up({h / 2, w / 2, c},
                         std::vector<T>(upstream.data() + i * out_stride,
                                        upstream.data() + (i + 1) * out_stride));
            Tensor<T> grad = maxpool2d_backward(argmax_[i], up, {h, w, c});
            std::copy(grad.data(), grad.data() + in_stride, downstream.data() + i * in_stride);
        }
        return downstream;
    }

private:
    std::vector<std::size_t> input_shape_;
    std::vector<std::vector<std::size_t>> argmax_;
    bool forward_ran_ = false;
};

// Elementwise max(0, x); the subgradient at exactly 0 is 0.
template <typename T>
class ReluLayer : public Layer<T> {
public:
    std::string_view kind() const override { return "relu"; }

    Tensor<T> forward(const Tensor<T>& input, Mode mode, Rng&) override {
        detail::require_finite(input, "relu input");
        Tensor<T> output(input.shape());
        for (std::size_t i = 0; i < input.size(); ++i) {
            output[i] = input[i] > T{} ? input[i] : T{};
        }
        if (mode == Mode::train) {
            cached_input_ = input;
            forward_ran_ = true;
        }
        return output;
    }

    Tensor<T> backward(const Tensor<T>& upstream) override {
        this->require_forward_ran(forward_ran_);
        if (!same_shape(upstream, cached_input_)) {
            throw ConfigError(str_printf("relu upstream shaped %s, expected %s",
                                         shape_to_string(upstream.shape()).c_str(),
                                         shape_to_string(cached_input_.shape()).c_str()));
        }
        Tensor<T> downstream(upstream.shape());
        for (std::size_t i = 0; i < upstream.size(); ++i) {
            downstream[i] = cached_input_[i] > T{} ? upstream[i] : T{};
        }
        return downstream;
    }

private:
    Tensor<T> cached_input_;
    bool forward_ran_ = false;
};

// B x H x W x C -> B x (H*W*C). Row-major layout makes this a pure reshape.
template <typename T>
class FlattenLayer : public Layer<T> {
public:
    std::string_view kind() const override { return "flatten"; }

    Tensor<T> forward(const Tensor<T>& input, Mode mode, Rng&) override {
        if (input.rank() < 2) {
            throw ConfigError("flatten expects a batched tensor");
        }
        const std::size_t b = input.extent(0);
        if (mode == Mode::train) {
            input_shape_ = input.shape();
            forward_ran_ = true;
        }
        return input.reshaped({b, input.size() / b});
    }

    Tensor<T> backward(const Tensor<T>& upstream) override {
        this->require_forward_ran(forward_ran_);
        return upstream.reshaped(input_shape_);
    }

private:
    std::vector<std::size_t> input_shape_;
    bool forward_ran_ = false;
};

// Fully connected: output = input * weights + bias, bias broadcast over rows.
template <typename T>
class DenseLayer : public Layer<T> {
public:
    DenseLayer(std::size_t in_features, std::size_t out_features, std::string name_prefix)
        : weights_(name_prefix + ".weights", Tensor<T>({in_features, out_features})),
          bias_(name_prefix + ".bias", Tensor<T>({out_features})) {}

    std::string_view kind() const override { return "dense"; }

    Tensor<T> forward(const Tensor<T>& input, Mode mode, Rng&) override {
        if (input.rank() != 2 || input.extent(1) != weights_.value.extent(0)) {
            throw ConfigError(str_printf("dense input shaped %s, weights expect Bx%zu",
                                         shape_to_string(input.shape()).c_str(),
                                         weights_.value.extent(0)));
        }
        Tensor<T> output = matmul(input, weights_.value);
        const std::size_t b = output.extent(0), m = output.extent(1);
        for (std::size_t i = 0; i < b; ++i) {
            for (std::size_t j = 0; j < m; ++j) {
                output[i * m + j] += bias_.value[j];
            }
        }
        if (mode == Mode::train) {
            cached_input_ = input;
            forward_ran_ = true;
        }
        return output;
    }

    Tensor<T> backward(const Tensor<T>& upstream) override {
        this->require_forward_ran(forward_ran_);
        const std::size_t b = cached_input_.extent(0);
        const std::size_t m = weights_.value.extent(1);
        if (upstream.shape() != std::vector<std::size_t>{b, m}) {
            throw ConfigError(str_printf("dense upstream shaped %s, expected %zux%zu",
                                         shape_to_string(upstream.shape()).c_str(), b, m));
        }
        weights_.grad = detail::matmul_transpose_a(cached_input_, upstream);
        bias_.grad.fill(T{});
        for (std::size_t i = 0; i < b; ++i) {
            for (std::size_t j = 0; j < m; ++j) {
                bias_.grad[j] += upstream[i * m + j];
            }
        }
        return detail::matmul_transpose_b(upstream, weights_.value);
    }

    std::vector<Param<T>*> params() override { return {&weights_, &bias_}; }

private:
    Param<T> weights_;
    Param<T> bias_;
    Tensor<T> cached_input_;
    bool forward_ran_ = false;
};

// Inverted dropout: train mode zeroes each element with probability rate and
// scales survivors by 1/(1-rate); eval mode is the exact identity.
template <typename T>
class DropoutLayer : public Layer<T> {
public:
    explicit DropoutLayer(double rate) : rate_(rate) {
        if (!(rate >= 0.0 && rate < 1.0)) {
            throw ConfigError(str_printf("dropout rate %g outside [0, 1)", rate));
        }
    }

    std::string_view kind() const override { return "dropout"; }

    Tensor<T> forward(const Tensor<T>& input, Mode mode, Rng& rng) override {
        if (mode == Mode::eval) {
            return input;  // pure identity, no member writes
        }
        forward_ran_ = true;
        if (rate_ == 0.0) {
            mask_.clear();
            return input;
        }
        const T scale = static_cast<T>(1.0 / (1.0 - rate_));
        mask_.resize(input.size());
        Tensor<T> output(input.shape());
        for (std::size_t i = 0; i < input.size(); ++i) {
            mask_[i] = rng.uniform() < rate_ ? T{} : scale;
            output[i] = input[i] * mask_[i];
        }
        return output;
    }

    Tensor<T> backward(const Tensor<T>& upstream) override {
        this->require_forward_ran(forward_ran_);
        if (rate_ == 0.0) {
            return upstream;
        }
        if (upstream.size() != mask_.size()) {
            throw ConfigError("dropout upstream does not match the cached mask");
        }
        Tensor<T> downstream(upstream.shape());
        for (std::size_t i = 0; i < upstream.size(); ++i) {
            downstream[i] = upstream[i] * mask_[i];
        }
        return downstream;
    }

    double rate() const { return rate_; }

private:
    double rate_;
    std::vector<T> mask_;
    bool forward_ran_ = false;
};

// Row-wise softmax with max subtraction. Rows sum to 1.
template <typename T>
Tensor<T> softmax_probs(const Tensor<T>& logits) {
    if (logits.rank() != 2) {
        throw ConfigError(str_printf("softmax logits shaped %s, expected BxK",
                                     shape_to_string(logits.shape()).c_str()));
    }
    const std::size_t b = logits.extent(0), k = logits.extent(1);
    Tensor<T> probs(logits.shape());
    for (std::size_t i = 0; i < b; ++i) {
        const T* row = logits.data() + i * k;
        T* out = probs.data() + i * k;
        T row_max = row[0];
        for (std::size_t j = 1; j < k; ++j) {
            row_max = std::max(row_max, row[j]);
        }
        double denom = 0.0;
        for (std::size_t j = 0; j < k; ++j) {
            const double e = std::exp(static_cast<double>(row[j] - row_max));
            out[j] = static_cast<T>(e);
            denom += e;
        }
        for (std::size_t j = 0; j < k; ++j) {
            out[j] = static_cast<T>(static_cast<double>(out[j]) / denom);
        }
    }
    return probs;
}

template <typename T>
struct SoftmaxLoss {
    double loss = 0.0;  // mean over the batch of -log p[true class]
    Tensor<T> probs;    // B x K
};

// Fused softmax + categorical cross-entropy. The per-row loss is evaluated
// in log space so extreme logits stay finite.
template <typename T>
SoftmaxLoss<T> softmax_cross_entropy(const Tensor<T>& logits, std::span<const int> labels) {
    if (logits.rank() != 2) {
        throw ConfigError(str_printf("softmax logits shaped %s, expected BxK",
                                     shape_to_string(logits.shape()).c_str()));
    }
    const std::size_t b = logits.extent(0), k = logits.extent(1);
    if (labels.size() != b) {
        throw ConfigError(str_printf("softmax got %zu labels for a batch of %zu",
                                     labels.size(), b));
    }
    SoftmaxLoss<T> result;
    result.probs = Tensor<T>(logits.shape());
    double total = 0.0;
    for (std::size_t i = 0; i < b; ++i) {
        const int label = labels[i];
        if (label < 0 || static_cast<std::size_t>(label) >= k) {
            throw DataError(str_printf("label %d out of range for %zu classes", label, k));
        }
        const T* row = logits.data() + i * k;
        T* out = result.probs.data() + i * k;
        T row_max = row[0];
        for (std::size_t j = 1; j < k; ++j) {
            row_max = std::max(row_max, row[j]);
        }
        double denom = 0.0;
        for (std::size_t j = 0; j < k; ++j) {
            const double e = std::exp(static_cast<double>(row[j] - row_max));
            out[j] = static_cast<T>(e);
            denom += e;
        }
        for (std::size_t j = 0; j < k; ++j) {
            out[j] = static_cast<T>(static_cast<double>(out[j]) / denom);
        }
        // -log p = log(sum exp(x - max)) - (x_true - max)
        total += std::log(denom) -
                 static_cast<double>(row[static_cast<std::size_t>(label)] - row_max);
    }
    result.loss = total / static_cast<double>(b);
    return result;
}

// Gradient of the mean cross-entropy w.r.t. the logits: (probs - onehot) / B.
template <typename T>
Tensor<T> softmax_cross_entropy_backward(const Tensor<T>& probs, std::span<const int> labels) {
    const std::size_t b = probs.extent(0), k = probs.extent(1);
    if (labels.size() != b) {
        throw ConfigError(str_printf("softmax got %zu labels for a batch of %zu",
                                     labels.size(), b));
    }
    Tensor<T> grad = probs;
    const T inv_b = static_cast<T>(1.0 / static_cast<double>(b));
    for (std::size_t i = 0; i < b; ++i) {
        grad[i * k + static_cast<std::size_t>(labels[i])] -= T{1};
        for (std::size_t j = 0; j < k; ++j) {
            grad[i * k + j] *= inv_b;
        }
    }
    return grad;
}

}  // namespace xrnet
