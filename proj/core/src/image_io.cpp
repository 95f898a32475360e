#include "veta/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <filesystem>
#include <memory>
#include <vector>

namespace veta {

std::uint16_t encode_unit16(double v) {
    const double c = std::clamp(std::isnan(v) ? 0.0 : v, 0.0, 1.0);
    return static_cast<std::uint16_t>(std::min(65535.0, std::floor(c * 65536.0)));
}

double decode_unit16(std::uint16_t q) { return (static_cast<double>(q) + 0.5) / 65536.0; }

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

void on_png_error(png_structp png, png_const_charp msg) {
    auto* text = static_cast<std::string*>(png_get_error_ptr(png));
    if (text) *text = msg;
    png_longjmp(png, 1);
}

void on_png_warning(png_structp, png_const_charp) {}

}  // namespace

Image read_image(const std::string& path) {
    if (!std::filesystem::exists(path)) throw MissingFile(path);
    FilePtr f(std::fopen(path.c_str(), "rb"));
    if (!f) throw IoError("cannot open " + path);
    unsigned char sig[8] = {};
    if (std::fread(sig, 1, 8, f.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0) {
        throw UnsupportedFormat(path + ": not a PNG file");
    }

    std::string error;
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &error, on_png_error, on_png_warning);
    if (!png) throw IoError("libpng initialisation failed");
    png_infop info = png_create_info_struct(png);
    // Declared before setjmp so they are not clobbered by longjmp.
    std::vector<png_byte> pixels;
    std::vector<png_bytep> rows;
    png_uint_32 width = 0, height = 0;
    int bit_depth = 0, color_type = 0;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw CorruptFile(path + ": " + error);
    }
    png_init_io(png, f.get());
    png_set_sig_bytes(png, 8);
    png_read_info(png, info);
    png_get_IHDR(png, info, &width, &height, &bit_depth, &color_type, nullptr, nullptr, nullptr);
    if (bit_depth != 16 || color_type != PNG_COLOR_TYPE_GRAY) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw UnsupportedFormat(path + ": expected 16-bit single-channel grayscale, got bit depth " +
                                std::to_string(bit_depth) + " and color type " + std::to_string(color_type));
    }
    png_set_interlace_handling(png);
    png_read_update_info(png, info);
    const std::size_t stride = png_get_rowbytes(png, info);
    pixels.resize(stride * height);
    rows.resize(height);
    for (png_uint_32 y = 0; y < height; ++y) rows[y] = pixels.data() + y * stride;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);

    Image out(static_cast<Eigen::Index>(height), static_cast<Eigen::Index>(width));
    for (png_uint_32 y = 0; y < height; ++y) {
        for (png_uint_32 x = 0; x < width; ++x) {
            const png_byte* p = rows[y] + 2 * x;
            out(y, x) = decode_unit16(static_cast<std::uint16_t>((p[0] << 8) | p[1]));
        }
    }
    return out;
}

void write_image(const std::string& path, const Image& image) {
    if (image.rows() <= 0 || image.cols() <= 0) throw ShapeMismatch("write_image: empty image");
    const std::filesystem::path p(path);
    if (p.has_parent_path() && !std::filesystem::is_directory(p.parent_path())) {
        throw IoError("cannot write " + path + ": parent directory does not exist");
    }
    FilePtr f(std::fopen(path.c_str(), "wb"));
    if (!f) throw IoError("cannot open " + path + " for writing");

    const auto width = static_cast<png_uint_32>(image.cols());
    const auto height = static_cast<png_uint_32>(image.rows());
    std::vector<png_byte> pixels(static_cast<std::size_t>(width) * height * 2);
    for (png_uint_32 y = 0; y < height; ++y) {
        for (png_uint_32 x = 0; x < width; ++x) {
            const std::uint16_t q = encode_unit16(image(y, x));
            png_byte* dst = &pixels[(static_cast<std::size_t>(y) * width + x) * 2];
            dst[0] = static_cast<png_byte>(q >> 8);
            dst[1] = static_cast<png_byte>(q & 0xff);
        }
    }
    std::vector<png_bytep> rows(height);
    for (png_uint_32 y = 0; y < height; ++y) rows[y] = &pixels[static_cast<std::size_t>(y) * width * 2];

    std::string error;
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &error, on_png_error, on_png_warning);
    if (!png) throw IoError("libpng initialisation failed");
    png_infop info = png_create_info_struct(png);
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw IoError("failed writing " + path + ": " + error);
    }
    png_init_io(png, f.get());
    png_set_IHDR(png, info, width, height, 16, PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                 PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    png_write_image(png, rows.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

}  // namespace veta
