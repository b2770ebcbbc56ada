#include "xrnet/image.hpp"

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <cstring>
#include <memory>

#include <jpeglib.h>
#include <png.h>

#include "xrnet/error.hpp"
#include "xrnet/text.hpp"

namespace xrnet {

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) {
            std::fclose(f);
        }
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

FilePtr open_file(const std::filesystem::path& path, const char* mode) {
    FilePtr f(std::fopen(path.string().c_str(), mode));
    if (!f) {
        throw DataError(str_printf("cannot open '%s'", path.string().c_str()));
    }
    return f;
}

// libpng reports errors through longjmp; keep all C++ objects outside the
// setjmp region trivial.
ImageBuffer decode_png(std::FILE* file, const std::string& name) {
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) {
        throw DataError("libpng initialization failed");
    }
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        throw DataError("libpng initialization failed");
    }

    ImageBuffer image;
    std::vector<png_bytep> rows;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw DataError(str_printf("undecodable PNG '%s'", name.c_str()));
    }

    png_init_io(png, file);
    png_read_info(png, info);

    png_set_strip_16(png);
    png_set_packing(png);
    const int color_type = png_get_color_type(png, info);
    if (color_type == PNG_COLOR_TYPE_PALETTE) {
        png_set_palette_to_rgb(png);
    }
    if (color_type == PNG_COLOR_TYPE_GRAY && png_get_bit_depth(png, info) < 8) {
        png_set_expand_gray_1_2_4_to_8(png);
    }
    if (color_type == PNG_COLOR_TYPE_GRAY_ALPHA) {
        png_set_strip_alpha(png);
    }
    if (png_get_valid(png, info, PNG_INFO_tRNS)) {
        png_set_tRNS_to_alpha(png);
    }
    png_read_update_info(png, info);

    image.height = png_get_image_height(png, info);
    image.width = png_get_image_width(png, info);
    image.channels = png_get_channels(png, info);
    if (image.height == 0 || image.width == 0) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw DataError(str_printf("empty PNG '%s'", name.c_str()));
    }

    image.pixels.resize(image.height * image.width * image.channels);
    rows.resize(image.height);
    const std::size_t stride = image.width * image.channels;
    for (std::size_t y = 0; y < image.height; ++y) {
        rows[y] = image.pixels.data() + y * stride;
    }
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    return image;
}

struct JpegErrorTrap {
    jpeg_error_mgr mgr;
    std::jmp_buf jump;
};

void jpeg_error_exit(j_common_ptr cinfo) {
    auto* trap = reinterpret_cast<JpegErrorTrap*>(cinfo->err);
    longjmp(trap->jump, 1);
}

ImageBuffer decode_jpeg(std::FILE* file, const std::string& name) {
    jpeg_decompress_struct cinfo;
    JpegErrorTrap trap;
    cinfo.err = jpeg_std_error(&trap.mgr);
    trap.mgr.error_exit = jpeg_error_exit;

    ImageBuffer image;
    if (setjmp(trap.jump)) {
        jpeg_destroy_decompress(&cinfo);
        throw DataError(str_printf("undecodable JPEG '%s'", name.c_str()));
    }

    jpeg_create_decompress(&cinfo);
    jpeg_stdio_src(&cinfo, file);
    jpeg_read_header(&cinfo, TRUE);
    jpeg_start_decompress(&cinfo);

    image.height = cinfo.output_height;
    image.width = cinfo.output_width;
    image.channels = static_cast<std::size_t>(cinfo.output_components);
    image.pixels.resize(image.height * image.width * image.channels);
    const std::size_t stride = image.width * image.channels;
    while (cinfo.output_scanline < cinfo.output_height) {
        JSAMPROW row = image.pixels.data() + cinfo.output_scanline * stride;
        jpeg_read_scanlines(&cinfo, &row, 1);
    }
    jpeg_finish_decompress(&cinfo);
    jpeg_destroy_decompress(&cinfo);
    return image;
}

}  // namespace

ImageBuffer decode_image(const std::filesystem::path& path) {
    FilePtr file = open_file(path, "rb");
    unsigned char magic[8] = {};
    const std::size_t got = std::fread(magic, 1, sizeof(magic), file.get());
    std::rewind(file.get());

    static const unsigned char png_magic[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
    if (got >= 8 && std::memcmp(magic, png_magic, 8) == 0) {
        return decode_png(file.get(), path.string());
    }
    if (got >= 2 && magic[0] == 0xff && magic[1] == 0xd8) {
        return decode_jpeg(file.get(), path.string());
    }
    throw DataError(str_printf("'%s' is neither PNG nor JPEG", path.string().c_str()));
}

Tensor<float> to_grayscale(const ImageBuffer& image) {
    if (image.height == 0 || image.width == 0) {
        throw DataError("empty image");
    }
    Tensor<float> gray({image.height, image.width});
    const std::size_t n = image.height * image.width;
    const std::uint8_t* px = image.pixels.data();
    switch (image.channels) {
        case 1:
            for (std::size_t i = 0; i < n; ++i) {
                gray[i] = static_cast<float>(px[i]);
            }
            break;
        case 3:
        case 4:
            for (std::size_t i = 0; i < n; ++i) {
                const std::uint8_t* p = px + i * image.channels;
                gray[i] = 0.299f * static_cast<float>(p[0]) +
                          0.587f * static_cast<float>(p[1]) +
                          0.114f * static_cast<float>(p[2]);
            }
            break;
        default:
            throw DataError(str_printf("unsupported channel count %zu", image.channels));
    }
    return gray;
}

Tensor<float> resize_bilinear(const Tensor<float>& image, std::size_t target_height,
                              std::size_t target_width) {
    if (image.rank() != 2) {
        throw DataError(str_printf("resize expects an HxW matrix, got %s",
                                   shape_to_string(image.shape()).c_str()));
    }
    const std::size_t h = image.extent(0), w = image.extent(1);
    if (h == 0 || w == 0 || target_height == 0 || target_width == 0) {
        throw DataError("resize with a zero-sized image");
    }
    if (h == target_height && w == target_width) {
        return image;
    }
    Tensor<float> out({target_height, target_width});
    const double scale_y = static_cast<double>(h) / static_cast<double>(target_height);
    const double scale_x = static_cast<double>(w) / static_cast<double>(target_width);
    for (std::size_t dy = 0; dy < target_height; ++dy) {
        const double sy = (static_cast<double>(dy) + 0.5) * scale_y - 0.5;
        const double fy = std::floor(sy);
        const double ty = sy - fy;
        const std::size_t y0 = static_cast<std::size_t>(std::clamp<double>(fy, 0.0, h - 1.0));
        const std::size_t y1 = static_cast<std::size_t>(std::clamp<double>(fy + 1.0, 0.0, h - 1.0));
        for (std::size_t dx = 0; dx < target_width; ++dx) {
            const double sx = (static_cast<double>(dx) + 0.5) * scale_x - 0.5;
            const double fx = std::floor(sx);
            const double tx = sx - fx;
            const std::size_t x0 = static_cast<std::size_t>(std::clamp<double>(fx, 0.0, w - 1.0));
            const std::size_t x1 =
                static_cast<std::size_t>(std::clamp<double>(fx + 1.0, 0.0, w - 1.0));
            const double top = (1.0 - tx) * image(y0, x0) + tx * image(y0, x1);
            const double bottom = (1.0 - tx) * image(y1, x0) + tx * image(y1, x1);
            out(dy, dx) = static_cast<float>((1.0 - ty) * top + ty * bottom);
        }
    }
    return out;
}

Tensor<float> normalize(const Tensor<float>& image) {
    if (image.rank() != 2) {
        throw DataError(str_printf("normalize expects an HxW matrix, got %s",
                                   shape_to_string(image.shape()).c_str()));
    }
    Tensor<float> out({image.extent(0), image.extent(1), 1});
    for (std::size_t i = 0; i < image.size(); ++i) {
        out[i] = image[i] / 255.0f;
    }
    return out;
}

Tensor<float> load_image(const std::filesystem::path& path, std::size_t target_size) {
    const ImageBuffer decoded = decode_image(path);
    Tensor<float> pixels = normalize(
        resize_bilinear(to_grayscale(decoded), target_size, target_size));
    for (float& v : pixels) {
        v = std::clamp(v, 0.0f, 1.0f);
    }
    return pixels;
}

void write_png_gray8(const std::filesystem::path& path, std::size_t height, std::size_t width,
                     const std::vector<std::uint8_t>& pixels) {
    if (pixels.size() != height * width) {
        throw ConfigError("pixel buffer does not match the image size");
    }
    FilePtr file = open_file(path, "wb");
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) {
        throw DataError("libpng initialization failed");
    }
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        throw DataError("libpng initialization failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw DataError(str_printf("PNG write failed for '%s'", path.string().c_str()));
    }
    png_init_io(png, file.get());
    png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), 8,
                 PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                 PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    for (std::size_t y = 0; y < height; ++y) {
        png_write_row(png, const_cast<png_bytep>(pixels.data() + y * width));
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

void write_jpeg_gray8(const std::filesystem::path& path, std::size_t height, std::size_t width,
                      const std::vector<std::uint8_t>& pixels, int quality) {
    if (pixels.size() != height * width) {
        throw ConfigError("pixel buffer does not match the image size");
    }
    FilePtr file = open_file(path, "wb");
    jpeg_compress_struct cinfo;
    JpegErrorTrap trap;
    cinfo.err = jpeg_std_error(&trap.mgr);
    trap.mgr.error_exit = jpeg_error_exit;
    std::vector<std::uint8_t> row(width);
    if (setjmp(trap.jump)) {
        jpeg_destroy_compress(&cinfo);
        throw DataError(str_printf("JPEG write failed for '%s'", path.string().c_str()));
    }
    jpeg_create_compress(&cinfo);
    jpeg_stdio_dest(&cinfo, file.get());
    cinfo.image_width = static_cast<JDIMENSION>(width);
    cinfo.image_height = static_cast<JDIMENSION>(height);
    cinfo.input_components = 1;
    cinfo.in_color_space = JCS_GRAYSCALE;
    jpeg_set_defaults(&cinfo);
    jpeg_set_quality(&cinfo, quality, TRUE);
    jpeg_start_compress(&cinfo, TRUE);
    while (cinfo.next_scanline < cinfo.image_height) {
        std::memcpy(row.data(), pixels.data() + cinfo.next_scanline * width, width);
        JSAMPROW rp = row.data();
        jpeg_write_scanlines(&cinfo, &rp, 1);
    }
    jpeg_finish_compress(&cinfo);
    jpeg_destroy_compress(&cinfo);
}

}  // namespace xrnet
