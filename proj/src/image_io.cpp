#include "facefit/image_io.hpp"

#include <cmath>
#include <cstdio>
#include <memory>
#include <stdexcept>

#include <png.h>

namespace facefit {

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const
    {
        if (f)
            std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

[[noreturn]] void fail(const std::string& path, const std::string& what)
{
    throw std::runtime_error(path + ": " + what);
}

} // namespace

Grid load_png(const std::string& path)
{
    FilePtr fp(std::fopen(path.c_str(), "rb"));
    if (!fp)
        fail(path, "cannot open for reading");

    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png)
        fail(path, "png_create_read_struct failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        fail(path, "png_create_info_struct failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        fail(path, "PNG decode error");
    }

    png_init_io(png, fp.get());
    png_read_info(png, info);

    const png_uint_32 width = png_get_image_width(png, info);
    const png_uint_32 height = png_get_image_height(png, info);
    const int color_type = png_get_color_type(png, info);
    int bit_depth = png_get_bit_depth(png, info);

    if (color_type == PNG_COLOR_TYPE_PALETTE)
        png_set_palette_to_rgb(png);
    if (color_type == PNG_COLOR_TYPE_GRAY && bit_depth < 8)
        png_set_expand_gray_1_2_4_to_8(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS))
        png_set_tRNS_to_alpha(png);
    if (bit_depth == 16)
        png_set_swap(png); // libpng reads big-endian; host is little-endian
    png_read_update_info(png, info);

    bit_depth = png_get_bit_depth(png, info);
    const int channels = png_get_channels(png, info);

    std::vector<png_byte> buffer(static_cast<size_t>(png_get_rowbytes(png, info)) * height);
    std::vector<png_bytep> rows(height);
    for (png_uint_32 y = 0; y < height; ++y)
        rows[y] = buffer.data() + static_cast<size_t>(y) * png_get_rowbytes(png, info);
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);

    Grid out;
    out.width = static_cast<int>(width);
    out.height = static_cast<int>(height);
    out.channels = channels;
    out.data.resize(static_cast<Eigen::Index>(width) * height * channels);

    const Eigen::Index count = out.data.size();
    if (bit_depth == 8) {
        for (Eigen::Index i = 0; i < count; ++i)
            out.data[i] = buffer[static_cast<size_t>(i)] / real(255);
    } else if (bit_depth == 16) {
        const auto* samples = reinterpret_cast<const uint16_t*>(buffer.data());
        for (Eigen::Index i = 0; i < count; ++i)
            out.data[i] = samples[static_cast<size_t>(i)] / real(65535);
    } else {
        fail(path, "unsupported bit depth " + std::to_string(bit_depth));
    }
    return out;
}

void save_png8(const std::string& path, const Grid& image)
{
    if (image.channels != 1 && image.channels != 3)
        fail(path, "save_png8 expects 1 or 3 channels, got " + std::to_string(image.channels));
    if (image.width <= 0 || image.height <= 0)
        fail(path, "empty image");

    FilePtr fp(std::fopen(path.c_str(), "wb"));
    if (!fp)
        fail(path, "cannot open for writing");

    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png)
        fail(path, "png_create_write_struct failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        fail(path, "png_create_info_struct failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        fail(path, "PNG encode error");
    }

    png_init_io(png, fp.get());
    png_set_IHDR(png, info, static_cast<png_uint_32>(image.width),
                 static_cast<png_uint_32>(image.height), 8,
                 image.channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);

    std::vector<png_byte> row(static_cast<size_t>(image.width) * image.channels);
    for (int y = 0; y < image.height; ++y) {
        for (int x = 0; x < image.width; ++x)
            for (int c = 0; c < image.channels; ++c) {
                const real v = std::clamp(image.at(x, y, c), real(0), real(1));
                row[static_cast<size_t>(x) * image.channels + c] =
                    static_cast<png_byte>(std::lround(v * 255));
            }
        png_write_row(png, row.data());
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

void save_png16(const std::string& path, const Grid& image)
{
    if (image.channels != 1 && image.channels != 3)
        fail(path, "save_png16 expects 1 or 3 channels, got " + std::to_string(image.channels));
    if (image.width <= 0 || image.height <= 0)
        fail(path, "empty image");

    FilePtr fp(std::fopen(path.c_str(), "wb"));
    if (!fp)
        fail(path, "cannot open for writing");

    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png)
        fail(path, "png_create_write_struct failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        fail(path, "png_create_info_struct failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        fail(path, "PNG encode error");
    }

    png_init_io(png, fp.get());
    png_set_IHDR(png, info, static_cast<png_uint_32>(image.width),
                 static_cast<png_uint_32>(image.height), 16,
                 image.channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    png_set_swap(png); // feed host-endian 16-bit samples

    std::vector<uint16_t> row(static_cast<size_t>(image.width) * image.channels);
    for (int y = 0; y < image.height; ++y) {
        for (int x = 0; x < image.width; ++x)
            for (int c = 0; c < image.channels; ++c) {
                const real v = std::clamp(image.at(x, y, c), real(0), real(1));
                row[static_cast<size_t>(x) * image.channels + c] =
                    static_cast<uint16_t>(std::lround(v * 65535));
            }
        png_write_row(png, reinterpret_cast<png_bytep>(row.data()));
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

void load_png_indices(const std::string& path, std::vector<int>& indices_out, int& width_out,
                      int& height_out, int& palette_size_out)
{
    FilePtr fp(std::fopen(path.c_str(), "rb"));
    if (!fp)
        fail(path, "cannot open for reading");

    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png)
        fail(path, "png_create_read_struct failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        fail(path, "png_create_info_struct failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        fail(path, "PNG decode error");
    }

    png_init_io(png, fp.get());
    png_read_info(png, info);

    if (png_get_color_type(png, info) != PNG_COLOR_TYPE_PALETTE) {
        png_destroy_read_struct(&png, &info, nullptr);
        fail(path, "expected an indexed (palette) PNG for class labels");
    }
    if (png_get_bit_depth(png, info) < 8)
        png_set_packing(png); // one index per byte
    png_read_update_info(png, info);

    const png_uint_32 width = png_get_image_width(png, info);
    const png_uint_32 height = png_get_image_height(png, info);

    png_colorp palette = nullptr;
    int palette_size = 0;
    png_get_PLTE(png, info, &palette, &palette_size);

    std::vector<png_byte> buffer(static_cast<size_t>(png_get_rowbytes(png, info)) * height);
    std::vector<png_bytep> rows(height);
    for (png_uint_32 y = 0; y < height; ++y)
        rows[y] = buffer.data() + static_cast<size_t>(y) * png_get_rowbytes(png, info);
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);

    width_out = static_cast<int>(width);
    height_out = static_cast<int>(height);
    palette_size_out = palette_size;
    indices_out.assign(buffer.begin(), buffer.end());
}

void save_png_indexed(const std::string& path, const std::vector<int>& indices, int width,
                      int height, int palette_size)
{
    if (palette_size < 1 || palette_size > 256)
        fail(path, "palette size must be in [1, 256]");
    if (static_cast<size_t>(width) * height != indices.size())
        fail(path, "index buffer does not match the image dimensions");

    FilePtr fp(std::fopen(path.c_str(), "wb"));
    if (!fp)
        fail(path, "cannot open for writing");

    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png)
        fail(path, "png_create_write_struct failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        fail(path, "png_create_info_struct failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        fail(path, "PNG encode error");
    }

    png_init_io(png, fp.get());
    png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), 8,
                 PNG_COLOR_TYPE_PALETTE, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                 PNG_FILTER_TYPE_DEFAULT);

    // Deterministic palette: class 0 black, the rest stepped through hue.
    std::vector<png_color> palette(static_cast<size_t>(palette_size));
    palette[0] = {0, 0, 0};
    for (int i = 1; i < palette_size; ++i) {
        const real h = real(i - 1) / std::max(palette_size - 1, 1) * 6;
        const int sector = static_cast<int>(h) % 6;
        const real f = h - std::floor(h);
        const auto q = static_cast<png_byte>(std::lround((1 - f) * 255));
        const auto t = static_cast<png_byte>(std::lround(f * 255));
        png_color c{};
        switch (sector) {
        case 0: c = {255, t, 0}; break;
        case 1: c = {q, 255, 0}; break;
        case 2: c = {0, 255, t}; break;
        case 3: c = {0, q, 255}; break;
        case 4: c = {t, 0, 255}; break;
        default: c = {255, 0, q}; break;
        }
        palette[static_cast<size_t>(i)] = c;
    }
    png_set_PLTE(png, info, palette.data(), palette_size);
    png_write_info(png, info);

    std::vector<png_byte> row(static_cast<size_t>(width));
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            const int idx = indices[static_cast<size_t>(y) * width + x];
            if (idx < 0 || idx >= palette_size) {
                png_destroy_write_struct(&png, &info);
                fail(path, "class index " + std::to_string(idx) + " outside palette");
            }
            row[static_cast<size_t>(x)] = static_cast<png_byte>(idx);
        }
        png_write_row(png, row.data());
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

} // namespace facefit
