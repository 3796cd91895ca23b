#include "image_io.hpp"

#include <png.h>

#include <cstdio>
#include <memory>

namespace fading {

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

}  // namespace

void write_png_gray(const std::filesystem::path& path, const Tensor& image) {
    if (image.shape.size() != 3 || image.shape[0] != 1) throw_data("write_png_gray: expected (1,H,W)");
    int h = image.shape[1], w = image.shape[2];
    FilePtr f(std::fopen(path.string().c_str(), "wb"));
    if (!f) throw_data("cannot open for writing: " + path.string());
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png_create_info_struct(png);
    if (!png || !info || setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw_data("png write failed: " + path.string());
    }
    png_init_io(png, f.get());
    png_set_IHDR(png, info, static_cast<png_uint_32>(w), static_cast<png_uint_32>(h), 8,
                 PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                 PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    std::vector<png_byte> row(static_cast<std::size_t>(w));
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            float v = image[static_cast<std::size_t>(y) * w + x];
            v = std::min(1.0f, std::max(0.0f, v));
            row[static_cast<std::size_t>(x)] = static_cast<png_byte>(std::lround(v * 255.0f));
        }
        png_write_row(png, row.data());
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

Tensor read_png_gray(const std::filesystem::path& path) {
    FilePtr f(std::fopen(path.string().c_str(), "rb"));
    if (!f) throw_data("cannot open image: " + path.string());
    png_byte header[8];
    if (std::fread(header, 1, 8, f.get()) != 8 || png_sig_cmp(header, 0, 8))
        throw_data("not a PNG file: " + path.string());
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png_create_info_struct(png);
    if (!png || !info || setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw_data("png decode failed: " + path.string());
    }
    png_init_io(png, f.get());
    png_set_sig_bytes(png, 8);
    png_read_info(png, info);
    png_uint_32 w = png_get_image_width(png, info);
    png_uint_32 h = png_get_image_height(png, info);
    // normalize anything to 8-bit grayscale
    png_set_strip_16(png);
    png_set_strip_alpha(png);
    int color = png_get_color_type(png, info);
    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color & PNG_COLOR_MASK_COLOR) png_set_rgb_to_gray(png, 1, -1.0, -1.0);
    if (png_get_bit_depth(png, info) < 8) png_set_expand_gray_1_2_4_to_8(png);
    png_read_update_info(png, info);

    Tensor out({1, static_cast<int>(h), static_cast<int>(w)});
    std::vector<png_byte> row(static_cast<std::size_t>(w));
    for (png_uint_32 y = 0; y < h; ++y) {
        png_read_row(png, row.data(), nullptr);
        for (png_uint_32 x = 0; x < w; ++x)
            out[static_cast<std::size_t>(y) * w + x] = static_cast<float>(row[x]) / 255.0f;
    }
    png_destroy_read_struct(&png, &info, nullptr);
    return out;
}

}  // namespace fading
