#pragma once

#include <map>
#include <string>
#include <vector>

#include "s3net/random.hpp"
#include "s3net/tensor.hpp"

namespace s3net {

struct StereoSample {
    Tensor<float> left;          // [3, H, W] in [0, 1]
    Tensor<float> right;         // [3, H, W]
    Tensor<float> gt_disp;       // [H, W] signed pixels
    Tensor<int32_t> gt_class;    // [H, W], labels 0..K-1 or 255
    Tensor<uint8_t> valid_mask;  // [H, W]
    std::string id;

    int64_t height() const { return gt_disp.size(0); }
    int64_t width() const { return gt_disp.size(1); }
};

// --- synthetic scenes --------------------------------------------------------

struct SynthConfig {
    int64_t height = 128;
    int64_t width = 128;
    int64_t num_objects = 6;      // 0 => flat zero-disparity ground (left == right)
    int64_t d_min = -16;          // generated disparities stay inside (d_min, d_max)
    int64_t d_max = 16;
    int64_t num_classes = 5;
};

// Deterministic scene: a textured ground plane (class 0) with a smoothly
// varying disparity field, plus textured rectangles/ellipses at constant
// integer disparities (classes 1..K-1). The right image is synthesized by
// horizontal displacement with nearer-occludes-farther ordering; pixels whose
// surface point is not cleanly visible in the right view are masked invalid.
StereoSample synth_scene(uint64_t seed, const SynthConfig& cfg);

// Bilinear sample of row y at real column x (rows never move across views).
float sample_row_bilinear(const Tensor<float>& img, int64_t channel, int64_t y, double x);

// --- raster I/O --------------------------------------------------------------

Tensor<float> read_image_rgb(const std::string& path);             // PPM (P6), 8-bit
void write_image_rgb(const std::string& path, const Tensor<float>& img);
Tensor<float> read_pfm(const std::string& path);                   // [H, W] float32
void write_pfm(const std::string& path, const Tensor<float>& raster);
Tensor<int32_t> read_label_raster(const std::string& path);        // PGM (P5), 8/16-bit
void write_label_raster(const std::string& path, const Tensor<int32_t>& labels);
void write_png_rgb8(const std::string& path, const std::vector<uint8_t>& rgb, int64_t width,
                    int64_t height);

// --- US3D-format loading -----------------------------------------------------

struct LabelRemap {
    std::map<int32_t, int32_t> table;
    int32_t apply(int32_t raw) const {
        auto it = table.find(raw);
        return it == table.end() ? 255 : it->second;
    }
    // Contest LAS labels {2, 5, 6, 9, 17} -> {Ground, Tree, Building, Water, Bridge}.
    static LabelRemap us3d_default() { return {{{2, 0}, {5, 1}, {6, 2}, {9, 3}, {17, 4}}}; }
};

// Nodata conventions: the exact -999 sentinel, any magnitude above 10000, and
// non-finite values all mark a pixel invalid.
constexpr float kDisparitySentinel = -999.0f;
constexpr double kDisparityMagnitudeLimit = 10000.0;

// Loads one sample, rescales images to [0, 1], remaps labels (unknown -> 255)
// and pads H/W up to multiples of 16 (images zero, labels 255, mask invalid).
// orig_h/orig_w receive the pre-padding dimensions when non-null.
StereoSample load_us3d_sample(const std::string& left_path, const std::string& right_path,
                              const std::string& disp_path, const std::string& class_path,
                              const LabelRemap& remap, int64_t* orig_h = nullptr,
                              int64_t* orig_w = nullptr);

// --- cropping ----------------------------------------------------------------

enum class CropMode { random, grid };

// grid: exact non-overlapping cover (extents must divide by tile).
// random: `count` tiles at uniformly random in-bounds origins.
std::vector<StereoSample> crop_tiles(const StereoSample& sample, int64_t tile, CropMode mode,
                                     Rng* rng = nullptr, int64_t count = 1);

// --- dataset directories -----------------------------------------------------

// Naming scheme inside a dataset directory (mirrors the US3D layout):
//   <id>_LEFT_RGB.ppm  <id>_RIGHT_RGB.ppm  <id>_LEFT_DSP.pfm  <id>_LEFT_CLS.pgm
void write_sample_files(const StereoSample& sample, const std::string& dir);
StereoSample load_sample_files(const std::string& dir, const std::string& id,
                               const LabelRemap& remap);
std::vector<std::string> read_manifest(const std::string& path);
void write_manifest(const std::string& path, const std::vector<std::string>& ids);

}  // namespace s3net
