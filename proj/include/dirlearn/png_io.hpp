#pragma once

#include <png.h>

#include <cstdint>
#include <cstdio>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "dirlearn/image.hpp"

namespace dirlearn {

namespace detail {

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

struct PngRead {
    png_structp png = nullptr;
    png_infop info = nullptr;
    ~PngRead() {
        if (png) png_destroy_read_struct(&png, info ? &info : nullptr, nullptr);
    }
};

struct PngWrite {
    png_structp png = nullptr;
    png_infop info = nullptr;
    ~PngWrite() {
        if (png) png_destroy_write_struct(&png, info ? &info : nullptr);
    }
};

// Decodes any PNG into interleaved 16-bit RGB rows.
inline void read_png_rgb16(const std::string& path, int& height, int& width,
                           std::vector<std::uint16_t>& out) {
    FilePtr fp(std::fopen(path.c_str(), "rb"));
    if (!fp) throw std::runtime_error("cannot open PNG for reading: " + path);

    PngRead ctx;
    ctx.png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!ctx.png) throw std::runtime_error("png_create_read_struct failed");
    ctx.info = png_create_info_struct(ctx.png);
    if (!ctx.info) throw std::runtime_error("png_create_info_struct failed");
    if (setjmp(png_jmpbuf(ctx.png))) throw std::runtime_error("PNG decode error: " + path);

    png_init_io(ctx.png, fp.get());
    png_read_info(ctx.png, ctx.info);

    width = static_cast<int>(png_get_image_width(ctx.png, ctx.info));
    height = static_cast<int>(png_get_image_height(ctx.png, ctx.info));
    const int color = png_get_color_type(ctx.png, ctx.info);
    const int depth = png_get_bit_depth(ctx.png, ctx.info);

    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(ctx.png);
    if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(ctx.png);
    if (png_get_valid(ctx.png, ctx.info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(ctx.png);
    if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA)
        png_set_gray_to_rgb(ctx.png);
    png_set_strip_alpha(ctx.png);
    if (depth < 16) png_set_expand_16(ctx.png);  // scales 8-bit to 16-bit (x257)
    png_set_swap(ctx.png);                       // PNG is big-endian on the wire
    png_read_update_info(ctx.png, ctx.info);

    out.assign(static_cast<std::size_t>(height) * width * 3, 0);
    std::vector<png_bytep> rows(static_cast<std::size_t>(height));
    for (int y = 0; y < height; ++y)
        rows[static_cast<std::size_t>(y)] =
            reinterpret_cast<png_bytep>(out.data() + static_cast<std::size_t>(y) * width * 3);
    png_read_image(ctx.png, rows.data());
    png_read_end(ctx.png, nullptr);
}

inline void write_png(const std::string& path, int height, int width, int channels, int depth,
                      const std::uint8_t* bytes) {
    FilePtr fp(std::fopen(path.c_str(), "wb"));
    if (!fp) throw std::runtime_error("cannot open PNG for writing: " + path);

    PngWrite ctx;
    ctx.png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!ctx.png) throw std::runtime_error("png_create_write_struct failed");
    ctx.info = png_create_info_struct(ctx.png);
    if (!ctx.info) throw std::runtime_error("png_create_info_struct failed");
    if (setjmp(png_jmpbuf(ctx.png))) throw std::runtime_error("PNG encode error: " + path);

    png_init_io(ctx.png, fp.get());
    const int color = channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY;
    png_set_IHDR(ctx.png, ctx.info, static_cast<png_uint_32>(width),
                 static_cast<png_uint_32>(height), depth, color, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(ctx.png, ctx.info);
    if (depth == 16) png_set_swap(ctx.png);

    const std::size_t stride = static_cast<std::size_t>(width) * channels * (depth / 8);
    std::vector<png_bytep> rows(static_cast<std::size_t>(height));
    for (int y = 0; y < height; ++y)
        rows[static_cast<std::size_t>(y)] = const_cast<png_bytep>(bytes + y * stride);
    png_write_image(ctx.png, rows.data());
    png_write_end(ctx.png, nullptr);
}

}  // namespace detail

inline ImageRGB read_image_png(const std::string& path) {
    int h = 0, w = 0;
    std::vector<std::uint16_t> raw;
    detail::read_png_rgb16(path, h, w, raw);
    ImageRGB img(h, w);
    for (std::size_t i = 0; i < raw.size(); ++i)
        img.pixels()[i] = static_cast<float>(raw[i]) / 65535.0f;
    return img;
}

inline void write_image_png8(const std::string& path, const ImageRGB& img) {
    std::vector<std::uint8_t> bytes(img.pixels().size());
    for (std::size_t i = 0; i < bytes.size(); ++i)
        bytes[i] = static_cast<std::uint8_t>(std::lround(clamp01(img.pixels()[i]) * 255.0));
    detail::write_png(path, img.height(), img.width(), 3, 8, bytes.data());
}

inline void write_image_png16(const std::string& path, const ImageRGB& img) {
    std::vector<std::uint16_t> data(img.pixels().size());
    for (std::size_t i = 0; i < data.size(); ++i)
        data[i] = static_cast<std::uint16_t>(std::lround(clamp01(img.pixels()[i]) * 65535.0));
    detail::write_png(path, img.height(), img.width(), 3, 16,
                      reinterpret_cast<const std::uint8_t*>(data.data()));
}

// RAW frames persist as 16-bit single-channel PNG.
inline void write_raw_png16(const std::string& path, const BayerRaw& raw) {
    std::vector<std::uint16_t> data(raw.pixels().size());
    for (std::size_t i = 0; i < data.size(); ++i)
        data[i] = static_cast<std::uint16_t>(std::lround(clamp01(raw.pixels()[i]) * 65535.0));
    detail::write_png(path, raw.height(), raw.width(), 1, 16,
                      reinterpret_cast<const std::uint8_t*>(data.data()));
}

inline BayerRaw read_raw_png16(const std::string& path) {
    int h = 0, w = 0;
    std::vector<std::uint16_t> rgb;
    detail::read_png_rgb16(path, h, w, rgb);  // gray promotes to identical RGB
    BayerRaw raw(h, w);
    for (std::size_t i = 0; i < raw.pixels().size(); ++i)
        raw.pixels()[i] = static_cast<float>(rgb[i * 3]) / 65535.0f;
    return raw;
}

}  // namespace dirlearn
