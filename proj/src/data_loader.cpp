#include <cmath>
#include <filesystem>
#include <fstream>

#include "s3net/data.hpp"

namespace s3net {

namespace {

int64_t pad_to_16(int64_t v) { return (v + 15) / 16 * 16; }

}  // namespace

StereoSample load_us3d_sample(const std::string& left_path, const std::string& right_path,
                              const std::string& disp_path, const std::string& class_path,
                              const LabelRemap& remap, int64_t* orig_h, int64_t* orig_w) {
    Tensor<float> left = read_image_rgb(left_path);
    Tensor<float> right = read_image_rgb(right_path);
    Tensor<float> disp = read_pfm(disp_path);
    Tensor<int32_t> raw_labels = read_label_raster(class_path);

    const int64_t h = left.size(1), w = left.size(2);
    S3NET_CHECK_IO(right.size(1) == h && right.size(2) == w,
                   "dimension mismatch: left is ", w, "x", h, " but right is ", right.size(2),
                   "x", right.size(1));
    S3NET_CHECK_IO(disp.size(0) == h && disp.size(1) == w,
                   "dimension mismatch: disparity raster is ", disp.size(1), "x", disp.size(0),
                   " for a ", w, "x", h, " image pair");
    S3NET_CHECK_IO(raw_labels.size(0) == h && raw_labels.size(1) == w,
                   "dimension mismatch: class raster is ", raw_labels.size(1), "x",
                   raw_labels.size(0), " for a ", w, "x", h, " image pair");
    if (orig_h) *orig_h = h;
    if (orig_w) *orig_w = w;

    const int64_t ph = pad_to_16(h), pw = pad_to_16(w);
    StereoSample s;
    s.left = Tensor<float>({3, ph, pw});
    s.right = Tensor<float>({3, ph, pw});
    s.gt_disp = Tensor<float>({ph, pw});
    s.gt_class = Tensor<int32_t>::full({ph, pw}, 255);
    s.valid_mask = Tensor<uint8_t>({ph, pw});
    for (int64_t y = 0; y < h; ++y)
        for (int64_t x = 0; x < w; ++x) {
            for (int64_t c = 0; c < 3; ++c) {
                s.left.at({c, y, x}) = left.at({c, y, x});
                s.right.at({c, y, x}) = right.at({c, y, x});
            }
            const float d = disp.at({y, x});
            s.gt_disp.at({y, x}) = d;
            const bool invalid = !std::isfinite(d) ||
                                 std::abs(static_cast<double>(d)) > kDisparityMagnitudeLimit ||
                                 d == kDisparitySentinel;
            s.valid_mask.at({y, x}) = invalid ? 0 : 1;
            s.gt_class.at({y, x}) = remap.apply(raw_labels.at({y, x}));
        }
    return s;
}

std::vector<StereoSample> crop_tiles(const StereoSample& sample, int64_t tile, CropMode mode,
                                     Rng* rng, int64_t count) {
    const int64_t h = sample.height(), w = sample.width();
    S3NET_CHECK(tile >= 1 && tile <= h && tile <= w, "crop_tiles: tile ", tile,
                " does not fit in ", w, "x", h);

    auto crop_at = [&](int64_t oy, int64_t ox, const std::string& suffix) {
        StereoSample t;
        t.left = Tensor<float>({3, tile, tile});
        t.right = Tensor<float>({3, tile, tile});
        t.gt_disp = Tensor<float>({tile, tile});
        t.gt_class = Tensor<int32_t>({tile, tile});
        t.valid_mask = Tensor<uint8_t>({tile, tile});
        t.id = sample.id + suffix;
        for (int64_t y = 0; y < tile; ++y)
            for (int64_t x = 0; x < tile; ++x) {
                for (int64_t c = 0; c < 3; ++c) {
                    t.left.at({c, y, x}) = sample.left.at({c, oy + y, ox + x});
                    t.right.at({c, y, x}) = sample.right.at({c, oy + y, ox + x});
                }
                t.gt_disp.at({y, x}) = sample.gt_disp.at({oy + y, ox + x});
                t.gt_class.at({y, x}) = sample.gt_class.at({oy + y, ox + x});
                t.valid_mask.at({y, x}) = sample.valid_mask.at({oy + y, ox + x});
            }
        return t;
    };

    std::vector<StereoSample> tiles;
    if (mode == CropMode::grid) {
        S3NET_CHECK(h % tile == 0 && w % tile == 0, "crop_tiles: grid mode needs extents "
                    "divisible by the tile size; got ", w, "x", h, " with tile ", tile);
        for (int64_t oy = 0; oy < h; oy += tile)
            for (int64_t ox = 0; ox < w; ox += tile)
                tiles.push_back(crop_at(oy, ox, "_y" + std::to_string(oy) + "_x" +
                                                    std::to_string(ox)));
    } else {
        S3NET_CHECK(rng != nullptr, "crop_tiles: random mode needs an rng");
        for (int64_t i = 0; i < count; ++i) {
            const int64_t oy = h == tile ? 0 : rng->uniform_int(0, h - tile);
            const int64_t ox = w == tile ? 0 : rng->uniform_int(0, w - tile);
            tiles.push_back(crop_at(oy, ox, "_r" + std::to_string(i)));
        }
    }
    return tiles;
}

void write_sample_files(const StereoSample& sample, const std::string& dir) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    const std::string base = dir + "/" + sample.id;
    write_image_rgb(base + "_LEFT_RGB.ppm", sample.left);
    write_image_rgb(base + "_RIGHT_RGB.ppm", sample.right);
    // Invalid pixels exported with the standard nodata sentinel.
    Tensor<float> disp = sample.gt_disp;
    for (int64_t i = 0; i < disp.numel(); ++i)
        if (!sample.valid_mask[i]) disp[i] = kDisparitySentinel;
    write_pfm(base + "_LEFT_DSP.pfm", disp);
    // Classes are written back in raw LAS label space so a round trip through
    // the default remap is the identity.
    Tensor<int32_t> raw = sample.gt_class;
    const auto remap = LabelRemap::us3d_default();
    std::map<int32_t, int32_t> inverse;
    for (const auto& [k, v] : remap.table) inverse[v] = k;
    for (int64_t i = 0; i < raw.numel(); ++i) {
        auto it = inverse.find(raw[i]);
        raw[i] = it == inverse.end() ? 0 : it->second;
    }
    write_label_raster(base + "_LEFT_CLS.pgm", raw);
}

StereoSample load_sample_files(const std::string& dir, const std::string& id,
                               const LabelRemap& remap) {
    const std::string base = dir + "/" + id;
    StereoSample s = load_us3d_sample(base + "_LEFT_RGB.ppm", base + "_RIGHT_RGB.ppm",
                                      base + "_LEFT_DSP.pfm", base + "_LEFT_CLS.pgm", remap);
    s.id = id;
    return s;
}

std::vector<std::string> read_manifest(const std::string& path) {
    std::ifstream is(path);
    S3NET_CHECK_IO(is.good(), "cannot open split manifest '", path, "'");
    std::vector<std::string> ids;
    std::string line;
    while (std::getline(is, line)) {
        while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
        if (!line.empty()) ids.push_back(line);
    }
    S3NET_CHECK_IO(!ids.empty(), "split manifest '", path, "' lists no samples");
    return ids;
}

void write_manifest(const std::string& path, const std::vector<std::string>& ids) {
    std::ofstream os(path);
    S3NET_CHECK_IO(os.good(), "cannot write split manifest '", path, "'");
    for (const auto& id : ids) os << id << "\n";
}

}  // namespace s3net
