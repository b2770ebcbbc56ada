#pragma once

#include <cstddef>
#include <vector>

#include "xrnet/error.hpp"
#include "xrnet/tensor.hpp"
#include "xrnet/text.hpp"

namespace xrnet {

// Square-kernel convolution geometry. Stride is fixed at 1; the output
// extent follows out = in + 2*padding - kernel + 1.
struct ConvGeometry {
    std::size_t kernel = 3;
    std::size_t padding = 0;
    std::size_t in_channels = 1;
    std::size_t out_channels = 1;

    std::size_t output_extent(std::size_t input_extent) const {
        const std::size_t padded = input_extent + 2 * padding;
        if (padded < kernel) {
            throw ConfigError(str_printf(
                "conv output extent would be non-positive: input %zu, padding %zu, kernel %zu",
                input_extent, padding, kernel));
        }
        return padded - kernel + 1;
    }
};

namespace detail {

template <typename T>
void require_finite(const Tensor<T>& t, const char* what) {
    if (!t.all_finite()) {
        throw NumericError(std::string("non-finite values in ") + what);
    }
}

inline void require_hwc(const std::vector<std::size_t>& shape, const char* what) {
    if (shape.size() != 3) {
        throw ConfigError(str_printf("%s must be rank-3 HxWxC, got %s", what,
                                     shape_to_string(shape).c_str()));
    }
}

}  // namespace detail

// Standard matrix product, M x K times K x N.
template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.rank() != 2 || b.rank() != 2) {
        throw ConfigError(str_printf("matmul needs rank-2 tensors, got %s and %s",
                                     shape_to_string(a.shape()).c_str(),
                                     shape_to_string(b.shape()).c_str()));
    }
    const std::size_t m = a.extent(0), k = a.extent(1);
    const std::size_t k2 = b.extent(0), n = b.extent(1);
    if (k != k2) {
        throw ConfigError(str_printf("matmul inner dimensions disagree: %zux%zu vs %zux%zu",
                                     m, k, k2, n));
    }
    Tensor<T> c({m, n});
    const T* pa = a.data();
    const T* pb = b.data();
    T* pc = c.data();
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
            const T aip = pa[i * k + p];
            if (aip == T{}) {
                continue;
            }
            const T* brow = pb + p * n;
            T* crow = pc + i * n;
            for (std::size_t j = 0; j < n; ++j) {
                crow[j] += aip * brow[j];
            }
        }
    }
    return c;
}

namespace detail {

// a^T * b where a is K x M and b is K x N; avoids materializing a transpose.
template <typename T>
Tensor<T> matmul_transpose_a(const Tensor<T>& a, const Tensor<T>& b) {
    const std::size_t k = a.extent(0), m = a.extent(1);
    const std::size_t n = b.extent(1);
    assert(b.extent(0) == k);
    Tensor<T> c({m, n});
    const T* pa = a.data();
    const T* pb = b.data();
    T* pc = c.data();
    for (std::size_t p = 0; p < k; ++p) {
        const T* arow = pa + p * m;
        const T* brow = pb + p * n;
        for (std::size_t i = 0; i < m; ++i) {
            const T aip = arow[i];
            if (aip == T{}) {
                continue;
            }
            T* crow = pc + i * n;
            for (std::size_t j = 0; j < n; ++j) {
                crow[j] += aip * brow[j];
            }
        }
    }
    return c;
}

// a * b^T where a is M x K and b is N x K.
template <typename T>
Tensor<T> matmul_transpose_b(const Tensor<T>& a, const Tensor<T>& b) {
    const std::size_t m = a.extent(0), k = a.extent(1);
    const std::size_t n = b.extent(0);
    assert(b.extent(1) == k);
    Tensor<T> c({m, n});
    const T* pa = a.data();
    const T* pb = b.data();
    T* pc = c.data();
    for (std::size_t i = 0; i < m; ++i) {
        const T* arow = pa + i * k;
        for (std::size_t j = 0; j < n; ++j) {
            const T* brow = pb + j * k;
            T acc{};
            for (std::size_t p = 0; p < k; ++p) {
                acc += arow[p] * brow[p];
            }
            pc[i * n + j] = acc;
        }
    }
    return c;
}

}  // namespace detail

// Rearranges zero-padded receptive fields into rows: one row per output
// position (row-major over positions), columns ordered (ky, kx, channel).
// conv2d_forward(x) == im2col(x) * reshape(kernels) + bias.
template <typename T>
Tensor<T> im2col(const Tensor<T>& input, const ConvGeometry& geom) {
    detail::require_hwc(input.shape(), "im2col input");
    const std::size_t h = input.extent(0), w = input.extent(1), c = input.extent(2);
    if (c != geom.in_channels) {
        throw ConfigError(str_printf("im2col input has %zu channels, geometry expects %zu",
                                     c, geom.in_channels));
    }
    const std::size_t oh = geom.output_extent(h);
    const std::size_t ow = geom.output_extent(w);
    const std::size_t k = geom.kernel;
    const std::size_t patch = k * k * c;

    Tensor<T> cols({oh * ow, patch});
    const T* in = input.data();
    T* out = cols.data();
    const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>(geom.padding);
    for (std::size_t oy = 0; oy < oh; ++oy) {
        for (std::size_t ox = 0; ox < ow; ++ox) {
            T* row = out + (oy * ow + ox) * patch;
            for (std::size_t ky = 0; ky < k; ++ky) {
                const std::ptrdiff_t y = static_cast<std::ptrdiff_t>(oy + ky) - pad;
                for (std::size_t kx = 0; kx < k; ++kx) {
                    const std::ptrdiff_t x = static_cast<std::ptrdiff_t>(ox + kx) - pad;
                    T* dst = row + (ky * k + kx) * c;
                    if (y < 0 || y >= static_cast<std::ptrdiff_t>(h) || x < 0 ||
                        x >= static_cast<std::ptrdiff_t>(w)) {
                        for (std::size_t ch = 0; ch < c; ++ch) {
                            dst[ch] = T{};
                        }
                    } else {
                        const T* src = in + (static_cast<std::size_t>(y) * w +
                                             static_cast<std::size_t>(x)) * c;
                        for (std::size_t ch = 0; ch < c; ++ch) {
                            dst[ch] = src[ch];
                        }
                    }
                }
            }
        }
    }
    return cols;
}

// Cross-correlation of an HxWxC input with kernels kxkxCxF plus bias F,
// computed as im2col followed by one matrix multiply.
template <typename T>
Tensor<T> conv2d_forward(const Tensor<T>& input, const Tensor<T>& kernels,
                         const Tensor<T>& bias, const ConvGeometry& geom) {
    detail::require_hwc(input.shape(), "conv2d input");
    if (kernels.rank() != 4 || kernels.extent(0) != geom.kernel ||
        kernels.extent(1) != geom.kernel || kernels.extent(2) != geom.in_channels ||
        kernels.extent(3) != geom.out_channels) {
        throw ConfigError(str_printf(
            "conv2d kernels shaped %s, geometry expects %zux%zux%zux%zu",
            shape_to_string(kernels.shape()).c_str(), geom.kernel, geom.kernel,
            geom.in_channels, geom.out_channels));
    }
    if (bias.rank() != 1 || bias.extent(0) != geom.out_channels) {
        throw ConfigError(str_printf("conv2d bias shaped %s, geometry expects %zu",
                                     shape_to_string(bias.shape()).c_str(),
                                     geom.out_channels));
    }
    if (input.extent(2) != geom.in_channels) {
        throw ConfigError(str_printf("conv2d input has %zu channels, geometry expects %zu",
                                     input.extent(2), geom.in_channels));
    }
    detail::require_finite(input, "conv2d input");

    const std::size_t oh = geom.output_extent(input.extent(0));
    const std::size_t ow = geom.output_extent(input.extent(1));
    const std::size_t f = geom.out_channels;
    const std::size_t patch = geom.kernel * geom.kernel * geom.in_channels;

    // kernels are (ky, kx, c, f) row-major, so the flat buffer already reads
    // as a (k*k*C) x F matrix.
    const Tensor<T> cols = im2col(input, geom);
    Tensor<T> out = matmul(cols, kernels.reshaped({patch, f}));
    T* po = out.data();
    const T* pb = bias.data();
    for (std::size_t pos = 0; pos < oh * ow; ++pos) {
        for (std::size_t j = 0; j < f; ++j) {
            po[pos * f + j] += pb[j];
        }
    }
    return out.reshaped({oh, ow, f});
}

template <typename T>
struct ConvGrads {
    Tensor<T> input;
    Tensor<T> kernels;
    Tensor<T> bias;
};

// Exact gradients of conv2d_forward. The patch-space gradient is scattered
// back with the col2im adjoint of im2col.
template <typename T>
ConvGrads<T> conv2d_backward(const Tensor<T>& input, const Tensor<T>& kernels,
                             const ConvGeometry& geom, const Tensor<T>& upstream) {
    detail::require_hwc(input.shape(), "conv2d input");
    const std::size_t h = input.extent(0), w = input.extent(1), c = input.extent(2);
    const std::size_t oh = geom.output_extent(h);
    const std::size_t ow = geom.output_extent(w);
    const std::size_t f = geom.out_channels;
    if (upstream.shape() != std::vector<std::size_t>{oh, ow, f}) {
        throw ConfigError(str_printf("conv2d upstream shaped %s, expected %zux%zux%zu",
                                     shape_to_string(upstream.shape()).c_str(), oh, ow, f));
    }
    const std::size_t k = geom.kernel;
    const std::size_t patch = k * k * c;

    const Tensor<T> cols = im2col(input, geom);
    const Tensor<T> up_mat = upstream.reshaped({oh * ow, f});

    ConvGrads<T> grads;
    grads.kernels = detail::matmul_transpose_a(cols, up_mat).reshaped({k, k, c, f});

    grads.bias = Tensor<T>({f});
    {
        T* gb = grads.bias.data();
        const T* up = up_mat.data();
        for (std::size_t pos = 0; pos < oh * ow; ++pos) {
            for (std::size_t j = 0; j < f; ++j) {
                gb[j] += up[pos * f + j];
            }
        }
    }

    // d(cols) = upstream * K^T, then scatter-add rows back into the input.
    const Tensor<T> grad_cols =
        detail::matmul_transpose_b(up_mat, kernels.reshaped({patch, f}));
    grads.input = Tensor<T>({h, w, c});
    T* gi = grads.input.data();
    const T* gc = grad_cols.data();
    const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>(geom.padding);
    for (std::size_t oy = 0; oy < oh; ++oy) {
        for (std::size_t ox = 0; ox < ow; ++ox) {
            const T* row = gc + (oy * ow + ox) * patch;
            for (std::size_t ky = 0; ky < k; ++ky) {
                const std::ptrdiff_t y = static_cast<std::ptrdiff_t>(oy + ky) - pad;
                if (y < 0 || y >= static_cast<std::ptrdiff_t>(h)) {
                    continue;
                }
                for (std::size_t kx = 0; kx < k; ++kx) {
                    const std::ptrdiff_t x = static_cast<std::ptrdiff_t>(ox + kx) - pad;
                    if (x < 0 || x >= static_cast<std::ptrdiff_t>(w)) {
                        continue;
                    }
                    const T* src = row + (ky * k + kx) * c;
                    T* dst = gi + (static_cast<std::size_t>(y) * w +
                                   static_cast<std::size_t>(x)) * c;
                    for (std::size_t ch = 0; ch < c; ++ch) {
                        dst[ch] += src[ch];
                    }
                }
            }
        }
    }
    return grads;
}

template <typename T>
struct MaxPoolResult {
    Tensor<T> output;                 // floor(H/2) x floor(W/2) x C
    std::vector<std::size_t> argmax;  // flat input index per output element
};

// 2x2 max pooling with stride 2; odd trailing rows/columns are dropped.
// Ties go to the first window element in scan order.
template <typename T>
MaxPoolResult<T> maxpool2d_forward(const Tensor<T>& input) {
    detail::require_hwc(input.shape(), "maxpool input");
    const std::size_t h = input.extent(0), w = input.extent(1), c = input.extent(2);
    if (h < 2 || w < 2) {
        throw ConfigError(str_printf("maxpool input %zux%zu smaller than 2x2 window", h, w));
    }
    const std::size_t oh = h / 2, ow = w / 2;
    MaxPoolResult<T> result;
    result.output = Tensor<T>({oh, ow, c});
    result.argmax.resize(oh * ow * c);
    const T* in = input.data();
    T* out = result.output.data();
    for (std::size_t oy = 0; oy < oh; ++oy) {
        for (std::size_t ox = 0; ox < ow; ++ox) {
            for (std::size_t ch = 0; ch < c; ++ch) {
                std::size_t best = (2 * oy * w + 2 * ox) * c + ch;
                T best_value = in[best];
                for (std::size_t dy = 0; dy < 2; ++dy) {
                    for (std::size_t dx = 0; dx < 2; ++dx) {
                        const std::size_t idx = ((2 * oy + dy) * w + (2 * ox + dx)) * c + ch;
                        if (in[idx] > best_value) {
                            best_value = in[idx];
                            best = idx;
                        }
                    }
                }
                const std::size_t o = (oy * ow + ox) * c + ch;
                out[o] = best_value;
                result.argmax[o] = best;
            }
        }
    }
    return result;
}

// Routes each upstream value to its recorded argmax position.
template <typename T>
Tensor<T> maxpool2d_backward(const std::vector<std::size_t>& argmax,
                             const Tensor<T>& upstream,
                             const std::vector<std::size_t>& input_shape) {
    detail::require_hwc(input_shape, "maxpool input");
    if (argmax.size() != upstream.size()) {
        throw ConfigError(str_printf(
            "maxpool argmax map holds %zu entries, upstream has %zu elements",
            argmax.size(), upstream.size()));
    }
    const std::size_t expected_h = input_shape[0] / 2, expected_w = input_shape[1] / 2;
    if (upstream.shape() != std::vector<std::size_t>{expected_h, expected_w, input_shape[2]}) {
        throw ConfigError(str_printf("maxpool upstream shaped %s, expected %zux%zux%zu",
                                     shape_to_string(upstream.shape()).c_str(), expected_h,
                                     expected_w, input_shape[2]));
    }
    Tensor<T> grad(input_shape);
    T* g = grad.data();
    const T* up = upstream.data();
    const std::size_t n = grad.size();
    for (std::size_t i = 0; i < upstream.size(); ++i) {
        if (argmax[i] >= n) {
            throw ConfigError("maxpool argmax map points outside the input shape");
        }
        g[argmax[i]] += up[i];
    }
    return grad;
}

}  // namespace xrnet
