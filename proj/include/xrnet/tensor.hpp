#pragma once

#include <cassert>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "xrnet/error.hpp"
#include "xrnet/text.hpp"

namespace xrnet {

// Dense N-dimensional array, row-major (last axis fastest). The scalar type
// selects the precision: Tensor<float> for training, Tensor<double> for
// gradient-check paths.
template <typename T>
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(std::vector<std::size_t> shape)
        : shape_(std::move(shape)), data_(checked_size(shape_), T{}) {}

    Tensor(std::vector<std::size_t> shape, std::vector<T> values)
        : shape_(std::move(shape)), data_(std::move(values)) {
        if (data_.size() != checked_size(shape_)) {
            throw ConfigError(str_printf("tensor data length %zu does not match shape product %zu",
                                         data_.size(), checked_size(shape_)));
        }
    }

    static Tensor zeros(std::vector<std::size_t> shape) { return Tensor(std::move(shape)); }

    static Tensor full(std::vector<std::size_t> shape, T value) {
        Tensor t(std::move(shape));
        t.fill(value);
        return t;
    }

    const std::vector<std::size_t>& shape() const noexcept { return shape_; }
    std::size_t rank() const noexcept { return shape_.size(); }
    std::size_t extent(std::size_t axis) const {
        assert(axis < shape_.size());
        return shape_[axis];
    }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    T* data() noexcept { return data_.data(); }
    const T* data() const noexcept { return data_.data(); }
    std::vector<T>& values() noexcept { return data_; }
    const std::vector<T>& values() const noexcept { return data_; }

    T& operator[](std::size_t flat) {
        assert(flat < data_.size());
        return data_[flat];
    }
    const T& operator[](std::size_t flat) const {
        assert(flat < data_.size());
        return data_[flat];
    }

    // Row-major element access: (i0, ..., in-1) -> i0*s0 + i1*s1 + ...
    template <typename... Ix>
    T& operator()(Ix... ix) {
        return data_[flat_index({static_cast<std::size_t>(ix)...})];
    }
    template <typename... Ix>
    const T& operator()(Ix... ix) const {
        return data_[flat_index({static_cast<std::size_t>(ix)...})];
    }

    std::size_t flat_index(std::initializer_list<std::size_t> indices) const {
        assert(indices.size() == shape_.size());
        std::size_t flat = 0;
        std::size_t axis = 0;
        for (const std::size_t i : indices) {
            assert(i < shape_[axis]);
            flat = flat * shape_[axis] + i;
            ++axis;
        }
        return flat;
    }

    void fill(T value) { std::fill(data_.begin(), data_.end(), value); }

    // Same data, new shape; sizes must agree.
    Tensor reshaped(std::vector<std::size_t> shape) const {
        if (checked_size(shape) != data_.size()) {
            throw ConfigError(str_printf("reshape to product %zu does not match tensor size %zu",
                                         checked_size(shape), data_.size()));
        }
        return Tensor(std::move(shape), data_);
    }

    bool all_finite() const noexcept {
        for (const T v : data_) {
            if (!std::isfinite(static_cast<double>(v))) {
                return false;
            }
        }
        return true;
    }

    bool operator==(const Tensor& other) const noexcept {
        return shape_ == other.shape_ && data_ == other.data_;
    }
    bool operator!=(const Tensor& other) const noexcept { return !(*this == other); }

    auto begin() noexcept { return data_.begin(); }
    auto end() noexcept { return data_.end(); }
    auto begin() const noexcept { return data_.begin(); }
    auto end() const noexcept { return data_.end(); }

private:
    static std::size_t checked_size(const std::vector<std::size_t>& shape) {
        std::size_t n = shape.empty() ? 0 : 1;
        for (const std::size_t extent : shape) {
            if (extent == 0) {
                throw ConfigError("tensor extents must be positive");
            }
            n *= extent;
        }
        return n;
    }

    std::vector<std::size_t> shape_;
    std::vector<T> data_;
};

template <typename T>
bool same_shape(const Tensor<T>& a, const Tensor<T>& b) noexcept {
    return a.shape() == b.shape();
}

// "HxWxC"-style rendering for diagnostics.
inline std::string shape_to_string(const std::vector<std::size_t>& shape) {
    std::string out;
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i > 0) {
            out += 'x';
        }
        out += std::to_string(shape[i]);
    }
    return out.empty() ? "scalar" : out;
}

}  // namespace xrnet
