#include "fusion_stereo/png_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <vector>

#include "fusion_stereo/errors.hpp"

namespace fstereo {

namespace {

struct FileHandle {
    FILE* fp = nullptr;
    ~FileHandle() {
        if (fp) std::fclose(fp);
    }
};

[[noreturn]] void fail(const std::string& path, const char* what) {
    throw DataError("PNG '" + path + "': " + what);
}

struct PngReader {
    png_structp png = nullptr;
    png_infop info = nullptr;
    ~PngReader() {
        if (png) png_destroy_read_struct(&png, info ? &info : nullptr, nullptr);
    }
};

struct PngWriter {
    png_structp png = nullptr;
    png_infop info = nullptr;
    ~PngWriter() {
        if (png) png_destroy_write_struct(&png, info ? &info : nullptr);
    }
};

}  // namespace

SparseDisparityMap read_depth_png(const std::string& path) {
    FileHandle file;
    file.fp = std::fopen(path.c_str(), "rb");
    if (!file.fp) fail(path, "cannot open file");
    PngReader r;
    r.png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!r.png) fail(path, "png_create_read_struct failed");
    r.info = png_create_info_struct(r.png);
    if (!r.info) fail(path, "png_create_info_struct failed");
    if (setjmp(png_jmpbuf(r.png))) fail(path, "decode error");
    png_init_io(r.png, file.fp);
    png_read_info(r.png, r.info);

    const png_uint_32 width = png_get_image_width(r.png, r.info);
    const png_uint_32 height = png_get_image_height(r.png, r.info);
    const int bit_depth = png_get_bit_depth(r.png, r.info);
    const int color_type = png_get_color_type(r.png, r.info);
    if (bit_depth != 16 || color_type != PNG_COLOR_TYPE_GRAY)
        fail(path, "expected 16-bit grayscale");

    const size_t rowbytes = png_get_rowbytes(r.png, r.info);
    std::vector<png_byte> data(static_cast<size_t>(height) * rowbytes);
    std::vector<png_bytep> row_ptrs(height);
    for (png_uint_32 y = 0; y < height; ++y) row_ptrs[y] = data.data() + y * rowbytes;
    png_read_image(r.png, row_ptrs.data());
    png_read_end(r.png, nullptr);

    // PNG stores 16-bit samples big-endian
    SparseDisparityMap map(static_cast<int>(height), static_cast<int>(width));
    for (png_uint_32 y = 0; y < height; ++y) {
        const png_byte* row = row_ptrs[y];
        for (png_uint_32 x = 0; x < width; ++x) {
            const uint16_t raw = static_cast<uint16_t>((row[2 * x] << 8) | row[2 * x + 1]);
            if (raw == 0) continue;
            map.set(static_cast<int>(y), static_cast<int>(x), static_cast<double>(raw) / 256.0);
        }
    }
    return map;
}

void write_depth_png(const std::string& path, const SparseDisparityMap& map) {
    FileHandle file;
    file.fp = std::fopen(path.c_str(), "wb");
    if (!file.fp) fail(path, "cannot open file for writing");
    PngWriter w;
    w.png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!w.png) fail(path, "png_create_write_struct failed");
    w.info = png_create_info_struct(w.png);
    if (!w.info) fail(path, "png_create_info_struct failed");
    if (setjmp(png_jmpbuf(w.png))) fail(path, "encode error");
    png_init_io(w.png, file.fp);
    png_set_IHDR(w.png, w.info, static_cast<png_uint_32>(map.width),
                 static_cast<png_uint_32>(map.height), 16, PNG_COLOR_TYPE_GRAY,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(w.png, w.info);

    std::vector<png_byte> row(static_cast<size_t>(map.width) * 2);
    for (int y = 0; y < map.height; ++y) {
        for (int x = 0; x < map.width; ++x) {
            uint16_t raw = 0;
            if (map.is_valid(y, x)) {
                const long v = std::lround(map.at(y, x) * 256.0);
                raw = static_cast<uint16_t>(std::clamp(v, 1L, 65535L));
            }
            row[static_cast<size_t>(2 * x)] = static_cast<png_byte>(raw >> 8);
            row[static_cast<size_t>(2 * x) + 1] = static_cast<png_byte>(raw & 0xff);
        }
        png_write_row(w.png, row.data());
    }
    png_write_end(w.png, nullptr);
}

Tensor read_rgb8_png(const std::string& path) {
    FileHandle file;
    file.fp = std::fopen(path.c_str(), "rb");
    if (!file.fp) fail(path, "cannot open file");
    PngReader r;
    r.png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!r.png) fail(path, "png_create_read_struct failed");
    r.info = png_create_info_struct(r.png);
    if (!r.info) fail(path, "png_create_info_struct failed");
    if (setjmp(png_jmpbuf(r.png))) fail(path, "decode error");
    png_init_io(r.png, file.fp);
    png_read_info(r.png, r.info);

    png_set_expand(r.png);
    png_set_strip_16(r.png);
    png_set_strip_alpha(r.png);
    png_set_gray_to_rgb(r.png);
    png_read_update_info(r.png, r.info);

    const png_uint_32 width = png_get_image_width(r.png, r.info);
    const png_uint_32 height = png_get_image_height(r.png, r.info);
    const size_t rowbytes = png_get_rowbytes(r.png, r.info);
    if (rowbytes != static_cast<size_t>(width) * 3) fail(path, "expected an RGB image");

    std::vector<png_byte> data(static_cast<size_t>(height) * rowbytes);
    std::vector<png_bytep> row_ptrs(height);
    for (png_uint_32 y = 0; y < height; ++y) row_ptrs[y] = data.data() + y * rowbytes;
    png_read_image(r.png, row_ptrs.data());
    png_read_end(r.png, nullptr);

    Tensor img({3, static_cast<int>(height), static_cast<int>(width)});
    const size_t plane = static_cast<size_t>(height) * static_cast<size_t>(width);
    for (png_uint_32 y = 0; y < height; ++y) {
        const png_byte* row = row_ptrs[y];
        for (png_uint_32 x = 0; x < width; ++x) {
            const size_t pix = static_cast<size_t>(y) * width + x;
            for (int c = 0; c < 3; ++c)
                img.values[static_cast<size_t>(c) * plane + pix] =
                    static_cast<double>(row[3 * x + static_cast<png_uint_32>(c)]) / 255.0;
        }
    }
    return img;
}

void write_rgb8_png(const std::string& path, const Tensor& image) {
    if (image.ndim() != 3 || image.dim(0) != 3)
        throw ShapeError("write_rgb8_png: image must be [3,H,W], got " + image.shape_str());
    const int h = image.dim(1), w = image.dim(2);
    FileHandle file;
    file.fp = std::fopen(path.c_str(), "wb");
    if (!file.fp) fail(path, "cannot open file for writing");
    PngWriter pw;
    pw.png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!pw.png) fail(path, "png_create_write_struct failed");
    pw.info = png_create_info_struct(pw.png);
    if (!pw.info) fail(path, "png_create_info_struct failed");
    if (setjmp(png_jmpbuf(pw.png))) fail(path, "encode error");
    png_init_io(pw.png, file.fp);
    png_set_IHDR(pw.png, pw.info, static_cast<png_uint_32>(w), static_cast<png_uint_32>(h), 8,
                 PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                 PNG_FILTER_TYPE_DEFAULT);
    png_write_info(pw.png, pw.info);

    const size_t plane = static_cast<size_t>(h) * static_cast<size_t>(w);
    std::vector<png_byte> row(static_cast<size_t>(w) * 3);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const size_t pix = static_cast<size_t>(y) * static_cast<size_t>(w) +
                               static_cast<size_t>(x);
            for (int c = 0; c < 3; ++c) {
                const double v = std::clamp(image.values[static_cast<size_t>(c) * plane + pix],
                                            0.0, 1.0);
                row[static_cast<size_t>(3 * x + c)] =
                    static_cast<png_byte>(std::lround(v * 255.0));
            }
        }
        png_write_row(pw.png, row.data());
    }
    png_write_end(pw.png, nullptr);
}

void write_gray8_png(const std::string& path, const Tensor& image, double lo, double hi) {
    if (image.ndim() != 2)
        throw ShapeError("write_gray8_png: image must be [H,W], got " + image.shape_str());
    if (hi <= lo) throw ConfigError("write_gray8_png: need hi > lo");
    const int h = image.dim(0), w = image.dim(1);
    FileHandle file;
    file.fp = std::fopen(path.c_str(), "wb");
    if (!file.fp) fail(path, "cannot open file for writing");
    PngWriter pw;
    pw.png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!pw.png) fail(path, "png_create_write_struct failed");
    pw.info = png_create_info_struct(pw.png);
    if (!pw.info) fail(path, "png_create_info_struct failed");
    if (setjmp(png_jmpbuf(pw.png))) fail(path, "encode error");
    png_init_io(pw.png, file.fp);
    png_set_IHDR(pw.png, pw.info, static_cast<png_uint_32>(w), static_cast<png_uint_32>(h), 8,
                 PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                 PNG_FILTER_TYPE_DEFAULT);
    png_write_info(pw.png, pw.info);

    std::vector<png_byte> row(static_cast<size_t>(w));
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const double v =
                (image.values[static_cast<size_t>(y * w + x)] - lo) / (hi - lo);
            row[static_cast<size_t>(x)] =
                static_cast<png_byte>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
        }
        png_write_row(pw.png, row.data());
    }
    png_write_end(pw.png, nullptr);
}

}  // namespace fstereo
