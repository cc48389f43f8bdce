#pragma once

#include <optional>
#include <string>
#include <vector>

#include "s3net/tensor.hpp"

namespace s3net {

inline const std::vector<std::string> kDefaultClassNames = {"Ground", "Tree", "Building",
                                                            "Water", "Bridge"};

struct MetricReport {
    double epe = 0.0;        // mean |pred - gt| over valid pixels
    double d1_error = 0.0;   // percent of valid pixels with |err| > threshold
    std::vector<std::optional<double>> per_class_iou;  // fraction; nullopt = empty union
    double miou = 0.0;       // mean over classes with nonzero union
    double miou3 = 0.0;      // joint class-and-disparity variant
    int64_t valid_pixel_count = 0;
    std::vector<std::string> class_names;
};

// --- standalone metric operations (errors on empty masks) -------------------

double epe(const Tensor<float>& pred_disp, const Tensor<float>& gt_disp,
           const Tensor<uint8_t>& valid_mask);

double d1_error(const Tensor<float>& pred_disp, const Tensor<float>& gt_disp,
                const Tensor<uint8_t>& valid_mask, double threshold = 3.0);

// cm[i*K + j] = #pixels with gt class i, predicted class j, gt != ignore.
std::vector<int64_t> confusion_matrix(const Tensor<int32_t>& pred_class,
                                      const Tensor<int32_t>& gt_class, int64_t num_classes,
                                      int32_t ignore_class);

struct MiouResult {
    std::vector<std::optional<double>> per_class;
    double mean = 0.0;
};

MiouResult miou(const std::vector<int64_t>& cm, int64_t num_classes);

double miou3(const Tensor<int32_t>& pred_class, const Tensor<int32_t>& gt_class,
             const Tensor<float>& pred_disp, const Tensor<float>& gt_disp,
             const Tensor<uint8_t>& valid_mask, int64_t num_classes, int32_t ignore_class,
             double threshold = 3.0);

// --- associative accumulation across tiles ----------------------------------

class MetricAccumulator {
public:
    explicit MetricAccumulator(int64_t num_classes, int32_t ignore_class = 255,
                               double d1_threshold = 3.0);

    void add(const Tensor<float>& pred_disp, const Tensor<float>& gt_disp,
             const Tensor<int32_t>& pred_class, const Tensor<int32_t>& gt_class,
             const Tensor<uint8_t>& valid_mask);

    void merge(const MetricAccumulator& other);

    MetricReport report(std::vector<std::string> class_names = kDefaultClassNames) const;

    int64_t valid_count() const { return valid_count_; }

private:
    int64_t k_;
    int32_t ignore_class_;
    double d1_threshold_;
    double abs_err_sum_ = 0.0;
    int64_t valid_count_ = 0;
    int64_t bad_count_ = 0;
    std::vector<int64_t> cm_;    // K x K
    std::vector<int64_t> tp3_;   // per-class joint true positives
};

// Flat key-value serialization mirroring the evaluation table row labels:
// K per-class rows plus EPE, D1-Error, mIoU, mIoU-3, ValidPixels. IoU rows are
// percentages; absent classes print "-".
std::string format_report(const MetricReport& report);
MetricReport parse_report(const std::string& text);

}  // namespace s3net
