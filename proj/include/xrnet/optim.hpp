#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "xrnet/layers.hpp"
#include "xrnet/tensor.hpp"

namespace xrnet {

struct AdamConfig {
    double learning_rate = 0.001;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

// Adam with bias correction:
//   m <- b1*m + (1-b1)*g        v <- b2*v + (1-b2)*g^2
//   theta <- theta - lr * (m / (1-b1^t)) / (sqrt(v / (1-b2^t)) + eps)
// Moment state is matched to the parameter list on the first step; the same
// parameter order must be used on every subsequent step.
template <typename T>
class Adam {
public:
    explicit Adam(AdamConfig config = {}) : config_(config) {
        if (config_.learning_rate <= 0.0 || config_.beta1 <= 0.0 || config_.beta1 >= 1.0 ||
            config_.beta2 <= 0.0 || config_.beta2 >= 1.0 || config_.epsilon <= 0.0) {
            throw ConfigError("adam hyperparameters out of range");
        }
    }

    void step(std::span<Param<T>* const> params) {
        if (slots_.empty()) {
            slots_.reserve(params.size());
            for (const Param<T>* p : params) {
                slots_.push_back({Tensor<T>(p->value.shape()), Tensor<T>(p->value.shape())});
            }
        }
        if (slots_.size() != params.size()) {
            throw ConfigError(str_printf("adam state tracks %zu parameters, got %zu",
                                         slots_.size(), params.size()));
        }
        for (std::size_t i = 0; i < params.size(); ++i) {
            if (!same_shape(params[i]->grad, params[i]->value) ||
                !same_shape(slots_[i].first_moment, params[i]->value)) {
                throw ConfigError(str_printf("adam shape mismatch for parameter '%s'",
                                             params[i]->name.c_str()));
            }
            if (!params[i]->grad.all_finite()) {
                throw NumericError(str_printf("non-finite gradient in parameter '%s'",
                                              params[i]->name.c_str()));
            }
        }
        ++step_count_;
        const double bias1 = 1.0 - std::pow(config_.beta1, static_cast<double>(step_count_));
        const double bias2 = 1.0 - std::pow(config_.beta2, static_cast<double>(step_count_));
        for (std::size_t i = 0; i < params.size(); ++i) {
            Param<T>& p = *params[i];
            Tensor<T>& m = slots_[i].first_moment;
            Tensor<T>& v = slots_[i].second_moment;
            for (std::size_t j = 0; j < p.value.size(); ++j) {
                const double g = static_cast<double>(p.grad[j]);
                const double mj = config_.beta1 * static_cast<double>(m[j]) +
                                  (1.0 - config_.beta1) * g;
                const double vj = config_.beta2 * static_cast<double>(v[j]) +
                                  (1.0 - config_.beta2) * g * g;
                m[j] = static_cast<T>(mj);
                v[j] = static_cast<T>(vj);
                const double m_hat = mj / bias1;
                const double v_hat = vj / bias2;
                p.value[j] = static_cast<T>(
                    static_cast<double>(p.value[j]) -
                    config_.learning_rate * m_hat / (std::sqrt(v_hat) + config_.epsilon));
            }
        }
    }

    std::uint64_t step_count() const { return step_count_; }
    const AdamConfig& config() const { return config_; }

    const Tensor<T>& first_moment(std::size_t i) const { return slots_.at(i).first_moment; }
    const Tensor<T>& second_moment(std::size_t i) const { return slots_.at(i).second_moment; }

private:
    struct Slot {
        Tensor<T> first_moment;
        Tensor<T> second_moment;
    };

    AdamConfig config_;
    std::vector<Slot> slots_;
    std::uint64_t step_count_ = 0;
};

// Plain gradient descent, kept as a debugging baseline.
template <typename T>
void sgd_step(std::span<Param<T>* const> params, double learning_rate) {
    for (Param<T>* p : params) {
        if (!same_shape(p->grad, p->value)) {
            throw ConfigError(str_printf("sgd shape mismatch for parameter '%s'",
                                         p->name.c_str()));
        }
        if (!p->grad.all_finite()) {
            throw NumericError(str_printf("non-finite gradient in parameter '%s'",
                                          p->name.c_str()));
        }
        for (std::size_t j = 0; j < p->value.size(); ++j) {
            p->value[j] = static_cast<T>(static_cast<double>(p->value[j]) -
                                         learning_rate * static_cast<double>(p->grad[j]));
        }
    }
}

}  // namespace xrnet
