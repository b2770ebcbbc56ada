#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "xrnet/tensor.hpp"

namespace xrnet {

// Decoded 8-bit image, interleaved row-major. channels is 1 (gray), 3 (RGB)
// or 4 (RGBA); gray+alpha PNGs have the alpha stripped at decode.
struct ImageBuffer {
    std::size_t height = 0;
    std::size_t width = 0;
    std::size_t channels = 0;
    std::vector<std::uint8_t> pixels;
};

// Sniffs PNG/JPEG by magic bytes and decodes. Throws DataError on anything
// unreadable or unsupported.
ImageBuffer decode_image(const std::filesystem::path& path);

// Luminance conversion to an HxW matrix of values in [0, 255]. 1 channel is
// kept as-is; 3/4 channels use 0.299 R + 0.587 G + 0.114 B, alpha ignored.
Tensor<float> to_grayscale(const ImageBuffer& image);

// Bilinear resize with half-pixel-center sampling and edge clamping:
// source = (dst + 0.5) * src_extent / dst_extent - 0.5. Equal sizes return
// the input unchanged.
Tensor<float> resize_bilinear(const Tensor<float>& image, std::size_t target_height,
                              std::size_t target_width);

// Maps 0..255 to [0, 1] as value / 255 and reshapes HxW to HxWx1.
Tensor<float> normalize(const Tensor<float>& image);

// Full ingestion path for one file: decode, grayscale, resize to a square,
// normalize. Output values are clamped to [0, 1] to absorb interpolation
// rounding.
Tensor<float> load_image(const std::filesystem::path& path, std::size_t target_size);

// Minimal encoders, used to build test fixtures and sample datasets.
void write_png_gray8(const std::filesystem::path& path, std::size_t height, std::size_t width,
                     const std::vector<std::uint8_t>& pixels);
void write_jpeg_gray8(const std::filesystem::path& path, std::size_t height, std::size_t width,
                      const std::vector<std::uint8_t>& pixels, int quality = 92);

}  // namespace xrnet
