#include "xrnet/gradcheck.hpp"

#include <cmath>
#include <functional>

#include "xrnet/model.hpp"
#include "xrnet/rng.hpp"

namespace xrnet {

namespace {

constexpr double kEpsilon = 1e-5;

double rel_error(double analytic, double numeric) {
    const double scale = std::max({std::fabs(analytic), std::fabs(numeric), 1e-6});
    return std::fabs(analytic - numeric) / scale;
}

// Central difference of f around one slot, restoring the original value.
double central_difference(double& slot, const std::function<double()>& f) {
    const double saved = slot;
    slot = saved + kEpsilon;
    const double up = f();
    slot = saved - kEpsilon;
    const double down = f();
    slot = saved;
    return (up - down) / (2.0 * kEpsilon);
}

}  // namespace

double check_layer_gradients(Layer<double>& layer, const std::vector<std::size_t>& input_shape,
                             std::uint64_t seed) {
    Tensor<double> input(input_shape);
    Rng data_rng(mix_seed(seed, 1));
    for (double& v : input) {
        v = data_rng.normal();
    }

    // Shape discovery, then fixed readout weights over the output.
    Rng probe_rng(seed);
    const Tensor<double> probe = layer.forward(input, Mode::train, probe_rng);
    Tensor<double> readout(probe.shape());
    Rng weight_rng(mix_seed(seed, 2));
    for (double& v : readout) {
        v = weight_rng.normal();
    }

    const auto loss = [&]() {
        Rng rng(seed);  // identical dropout mask on every probe
        const Tensor<double> out = layer.forward(input, Mode::train, rng);
        double acc = 0.0;
        for (std::size_t i = 0; i < out.size(); ++i) {
            acc += out[i] * readout[i];
        }
        return acc;
    };

    loss();  // leave the cache in the unperturbed state
    const Tensor<double> grad_input = layer.backward(readout);
    std::vector<Tensor<double>> param_grads;
    for (Param<double>* p : layer.params()) {
        param_grads.push_back(p->grad);
    }

    double worst = 0.0;
    for (std::size_t i = 0; i < input.size(); ++i) {
        const double numeric = central_difference(input[i], loss);
        worst = std::max(worst, rel_error(grad_input[i], numeric));
    }
    const std::vector<Param<double>*> params = layer.params();
    for (std::size_t p = 0; p < params.size(); ++p) {
        for (std::size_t j = 0; j < params[p]->value.size(); ++j) {
            const double numeric = central_difference(params[p]->value[j], loss);
            worst = std::max(worst, rel_error(param_grads[p][j], numeric));
        }
    }
    return worst;
}

double check_softmax_gradients(std::uint64_t seed) {
    const std::size_t batch = 4, classes = 3;
    Tensor<double> logits({batch, classes});
    Rng rng(mix_seed(seed, 3));
    for (double& v : logits) {
        v = 2.0 * rng.normal();
    }
    std::vector<int> labels(batch);
    for (std::size_t i = 0; i < batch; ++i) {
        labels[i] = static_cast<int>(rng.bounded(classes));
    }

    const auto loss = [&]() { return softmax_cross_entropy<double>(logits, labels).loss; };
    const SoftmaxLoss<double> base = softmax_cross_entropy<double>(logits, labels);
    const Tensor<double> analytic = softmax_cross_entropy_backward(base.probs, labels);

    double worst = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        const double numeric = central_difference(logits[i], loss);
        worst = std::max(worst, rel_error(analytic[i], numeric));
    }
    return worst;
}

double check_model_gradients(std::uint64_t seed) {
    ModelConfig config;
    config.input_size = 8;
    config.channels = 1;
    config.conv_filters = {2};
    config.kernel = 3;
    config.padding = 2;
    config.fc_widths = {4};
    config.dropout_rate = 0.0;
    config.num_classes = 2;
    config.seed = mix_seed(seed, 4);
    Model<double> model = Model<double>::build(config);

    Tensor<double> batch({2, 8, 8, 1});
    Rng rng(mix_seed(seed, 5));
    for (double& v : batch) {
        v = 0.5 + 0.25 * rng.normal();
    }
    const std::vector<int> labels = {0, 1};

    const auto loss = [&]() {
        return softmax_cross_entropy(model.forward_logits(batch, Mode::train), labels).loss;
    };

    const Tensor<double> logits = model.forward_logits(batch, Mode::train);
    const SoftmaxLoss<double> base = softmax_cross_entropy<double>(logits, labels);
    model.backward_from_logits(softmax_cross_entropy_backward(base.probs, labels));

    std::vector<Param<double>*> params = model.parameters();
    std::vector<Tensor<double>> analytic;
    for (const Param<double>* p : params) {
        analytic.push_back(p->grad);
    }

    double worst = 0.0;
    for (std::size_t p = 0; p < params.size(); ++p) {
        for (std::size_t j = 0; j < params[p]->value.size(); ++j) {
            const double numeric = central_difference(params[p]->value[j], loss);
            worst = std::max(worst, rel_error(analytic[p][j], numeric));
        }
    }
    return worst;
}

GradCheckReport run_gradient_checks(std::uint64_t seed) {
    GradCheckReport report;

    {
        Conv2dLayer<double> conv({3, 2, 2, 3}, "probe");
        Rng rng(mix_seed(seed, 10));
        for (Param<double>* p : conv.params()) {
            for (double& v : p->value) {
                v = 0.5 * rng.normal();
            }
        }
        report.entries.push_back(
            {"conv2d", check_layer_gradients(conv, {2, 5, 5, 2}, mix_seed(seed, 11))});
    }
    {
        MaxPoolLayer<double> pool;
        report.entries.push_back(
            {"maxpool", check_layer_gradients(pool, {2, 6, 6, 3}, mix_seed(seed, 12))});
    }
    {
        ReluLayer<double> relu;
        report.entries.push_back(
            {"relu", check_layer_gradients(relu, {3, 7, 7, 2}, mix_seed(seed, 13))});
    }
    {
        DenseLayer<double> dense(6, 4, "probe");
        Rng rng(mix_seed(seed, 14));
        for (Param<double>* p : dense.params()) {
            for (double& v : p->value) {
                v = 0.5 * rng.normal();
            }
        }
        report.entries.push_back(
            {"dense", check_layer_gradients(dense, {3, 6}, mix_seed(seed, 15))});
    }
    {
        DropoutLayer<double> dropout(0.3);
        report.entries.push_back(
            {"dropout", check_layer_gradients(dropout, {4, 25}, mix_seed(seed, 16))});
    }
    report.entries.push_back({"softmax_xent", check_softmax_gradients(mix_seed(seed, 17))});
    report.entries.push_back({"model", check_model_gradients(mix_seed(seed, 18))});
    return report;
}

}  // namespace xrnet
