#include <png.h>

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>

#include "s3net/data.hpp"

namespace s3net {

namespace {

// Skips whitespace and '#' comments between netpbm header tokens.
std::string next_token(std::istream& is) {
    std::string tok;
    int c = is.get();
    while (c != EOF) {
        if (c == '#') {
            while (c != EOF && c != '\n') c = is.get();
        } else if (std::isspace(c)) {
            c = is.get();
        } else {
            break;
        }
    }
    while (c != EOF && !std::isspace(c)) {
        tok.push_back(static_cast<char>(c));
        c = is.get();
    }
    return tok;
}

int64_t parse_extent(const std::string& tok, const std::string& path) {
    S3NET_CHECK_IO(!tok.empty(), "malformed raster header in ", path);
    return std::stoll(tok);
}

uint8_t quantize(float v) {
    const float s = std::round(v * 255.0f);
    return static_cast<uint8_t>(std::clamp(s, 0.0f, 255.0f));
}

}  // namespace

Tensor<float> read_image_rgb(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    S3NET_CHECK_IO(is.good(), "cannot open image '", path, "'");
    S3NET_CHECK_IO(next_token(is) == "P6", "'", path, "' is not a binary PPM (P6) image");
    const int64_t w = parse_extent(next_token(is), path);
    const int64_t h = parse_extent(next_token(is), path);
    const int64_t maxval = parse_extent(next_token(is), path);
    S3NET_CHECK_IO(maxval == 255, "'", path, "' must be 8-bit (maxval 255), got ", maxval);
    std::vector<uint8_t> raw(static_cast<size_t>(3 * w * h));
    is.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    S3NET_CHECK_IO(is.gcount() == static_cast<std::streamsize>(raw.size()),
                   "truncated PPM data in '", path, "'");
    Tensor<float> img({3, h, w});
    for (int64_t y = 0; y < h; ++y)
        for (int64_t x = 0; x < w; ++x)
            for (int64_t c = 0; c < 3; ++c)
                img.at({c, y, x}) =
                    static_cast<float>(raw[static_cast<size_t>((y * w + x) * 3 + c)]) / 255.0f;
    return img;
}

void write_image_rgb(const std::string& path, const Tensor<float>& img) {
    S3NET_CHECK(img.dim() == 3 && img.size(0) == 3, "write_image_rgb: expected [3, H, W], got ",
                shape_str(img.shape()));
    const int64_t h = img.size(1), w = img.size(2);
    std::ofstream os(path, std::ios::binary);
    S3NET_CHECK_IO(os.good(), "cannot write image '", path, "'");
    os << "P6\n" << w << " " << h << "\n255\n";
    std::vector<uint8_t> raw(static_cast<size_t>(3 * w * h));
    for (int64_t y = 0; y < h; ++y)
        for (int64_t x = 0; x < w; ++x)
            for (int64_t c = 0; c < 3; ++c)
                raw[static_cast<size_t>((y * w + x) * 3 + c)] = quantize(img.at({c, y, x}));
    os.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
}

Tensor<float> read_pfm(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    S3NET_CHECK_IO(is.good(), "cannot open raster '", path, "'");
    S3NET_CHECK_IO(next_token(is) == "Pf", "'", path, "' is not a single-channel PFM raster");
    const int64_t w = parse_extent(next_token(is), path);
    const int64_t h = parse_extent(next_token(is), path);
    const double scale = std::stod(next_token(is));
    S3NET_CHECK_IO(scale < 0.0, "big-endian PFM not supported: '", path, "'");
    Tensor<float> raster({h, w});
    std::vector<float> row(static_cast<size_t>(w));
    for (int64_t y = h - 1; y >= 0; --y) {  // PFM stores rows bottom-up
        is.read(reinterpret_cast<char*>(row.data()),
                static_cast<std::streamsize>(sizeof(float) * row.size()));
        S3NET_CHECK_IO(is.gcount() == static_cast<std::streamsize>(sizeof(float) * row.size()),
                       "truncated PFM data in '", path, "'");
        std::memcpy(&raster.at({y, 0}), row.data(), sizeof(float) * row.size());
    }
    return raster;
}

void write_pfm(const std::string& path, const Tensor<float>& raster) {
    S3NET_CHECK(raster.dim() == 2, "write_pfm: expected [H, W], got ",
                shape_str(raster.shape()));
    const int64_t h = raster.size(0), w = raster.size(1);
    std::ofstream os(path, std::ios::binary);
    S3NET_CHECK_IO(os.good(), "cannot write raster '", path, "'");
    os << "Pf\n" << w << " " << h << "\n-1.0\n";
    for (int64_t y = h - 1; y >= 0; --y)
        os.write(reinterpret_cast<const char*>(&raster.at({y, 0})),
                 static_cast<std::streamsize>(sizeof(float) * static_cast<size_t>(w)));
}

Tensor<int32_t> read_label_raster(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    S3NET_CHECK_IO(is.good(), "cannot open raster '", path, "'");
    S3NET_CHECK_IO(next_token(is) == "P5", "'", path, "' is not a binary PGM (P5) raster");
    const int64_t w = parse_extent(next_token(is), path);
    const int64_t h = parse_extent(next_token(is), path);
    const int64_t maxval = parse_extent(next_token(is), path);
    S3NET_CHECK_IO(maxval > 0 && maxval < 65536, "bad PGM maxval ", maxval, " in '", path, "'");
    Tensor<int32_t> labels({h, w});
    if (maxval <= 255) {
        std::vector<uint8_t> raw(static_cast<size_t>(w * h));
        is.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
        S3NET_CHECK_IO(is.gcount() == static_cast<std::streamsize>(raw.size()),
                       "truncated PGM data in '", path, "'");
        for (int64_t i = 0; i < h * w; ++i) labels[i] = raw[static_cast<size_t>(i)];
    } else {
        std::vector<uint8_t> raw(static_cast<size_t>(2 * w * h));
        is.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
        S3NET_CHECK_IO(is.gcount() == static_cast<std::streamsize>(raw.size()),
                       "truncated PGM data in '", path, "'");
        for (int64_t i = 0; i < h * w; ++i)  // big-endian per the PGM spec
            labels[i] = (static_cast<int32_t>(raw[static_cast<size_t>(2 * i)]) << 8) |
                        raw[static_cast<size_t>(2 * i + 1)];
    }
    return labels;
}

void write_label_raster(const std::string& path, const Tensor<int32_t>& labels) {
    S3NET_CHECK(labels.dim() == 2, "write_label_raster: expected [H, W]");
    const int64_t h = labels.size(0), w = labels.size(1);
    std::ofstream os(path, std::ios::binary);
    S3NET_CHECK_IO(os.good(), "cannot write raster '", path, "'");
    os << "P5\n" << w << " " << h << "\n255\n";
    std::vector<uint8_t> raw(static_cast<size_t>(w * h));
    for (int64_t i = 0; i < h * w; ++i) {
        S3NET_CHECK(labels[i] >= 0 && labels[i] <= 255, "write_label_raster: label ", labels[i],
                    " not representable in 8 bits");
        raw[static_cast<size_t>(i)] = static_cast<uint8_t>(labels[i]);
    }
    os.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
}

void write_png_rgb8(const std::string& path, const std::vector<uint8_t>& rgb, int64_t width,
                    int64_t height) {
    S3NET_CHECK(static_cast<int64_t>(rgb.size()) == 3 * width * height,
                "write_png_rgb8: buffer size mismatch");
    FILE* fp = std::fopen(path.c_str(), "wb");
    S3NET_CHECK_IO(fp != nullptr, "cannot write PNG '", path, "'");
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info || setjmp(png_jmpbuf(png))) {
        if (png) png_destroy_write_struct(&png, info ? &info : nullptr);
        std::fclose(fp);
        throw io_error(format_msg("libpng failure while writing '", path, "'"));
    }
    png_init_io(png, fp);
    png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), 8,
                 PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                 PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    for (int64_t y = 0; y < height; ++y)
        png_write_row(png, const_cast<png_bytep>(rgb.data() + y * width * 3));
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    std::fclose(fp);
}

}  // namespace s3net
