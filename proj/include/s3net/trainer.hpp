#pragma once

#include <functional>

#include "s3net/checkpoint.hpp"
#include "s3net/config.hpp"
#include "s3net/data.hpp"
#include "s3net/metrics.hpp"

namespace s3net {

// Images are fed to the network as (x - 0.5) * 2, mapping [0, 1] to [-1, 1].
Tensor<float> normalize_image(const Tensor<float>& img);

// Validity used for supervision and scoring: the sample mask intersected with
// the model's disparity range [d_min, d_max].
Tensor<uint8_t> range_valid_mask(const StereoSample& sample, int64_t d_min, int64_t d_max);

struct PredictionMaps {
    Tensor<float> disparity;  // [H, W]
    Tensor<int32_t> classes;  // [H, W], argmax with ties to the lowest index
};

// Round-3 inference on one sample.
PredictionMaps predict_maps(const S3Net<float>& model, const StereoSample& sample);

using Predictor = std::function<PredictionMaps(const StereoSample&)>;

// Grid-tiles every sample, scores round-3 predictions through the associative
// accumulator. `tile` is clamped to the sample extent.
MetricReport evaluate_dataset(const std::vector<StereoSample>& samples,
                              const Predictor& predictor, int64_t tile, int64_t d_min,
                              int64_t d_max, int64_t num_classes, int32_t ignore_class = 255);

std::vector<StereoSample> load_training_samples(const RunConfig& cfg);

struct TrainResult {
    std::string checkpoint_path;
    std::string loss_curve_path;
    int64_t steps_run = 0;
    double final_total = 0.0;
    double train_epe = 0.0;       // training-set metrics at the end of the run
    double train_accuracy = 0.0;  // pixel accuracy over non-ignored labels
};

TrainResult train(const RunConfig& cfg);

// CLI-level entry points.
MetricReport evaluate_checkpoint(const std::string& checkpoint_path, const std::string& data_dir,
                                 const std::string& split, const std::string& report_path);
void predict_files(const std::string& checkpoint_path, const std::string& left_path,
                   const std::string& right_path, const std::string& out_dir);
std::string ablate(const RunConfig& base, const std::string& out_dir);

// Fixed render palettes for predict outputs.
std::vector<uint8_t> render_class_map(const Tensor<int32_t>& classes);
std::vector<uint8_t> render_disparity_map(const Tensor<float>& disp, int64_t d_min,
                                          int64_t d_max);

}  // namespace s3net
