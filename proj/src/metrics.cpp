#include "s3net/metrics.hpp"

#include <cmath>
#include <iomanip>
#include <sstream>

namespace s3net {

namespace {
void check_same_shape(const std::vector<int64_t>& a, const std::vector<int64_t>& b,
                      const char* what) {
    S3NET_CHECK(a == b, what, ": shape mismatch ", shape_str(a), " vs ", shape_str(b));
}
}  // namespace

double epe(const Tensor<float>& pred_disp, const Tensor<float>& gt_disp,
           const Tensor<uint8_t>& valid_mask) {
    check_same_shape(pred_disp.shape(), gt_disp.shape(), "epe");
    S3NET_CHECK(pred_disp.numel() == valid_mask.numel(), "epe: mask size mismatch");
    double sum = 0.0;
    int64_t count = 0;
    for (int64_t i = 0; i < pred_disp.numel(); ++i) {
        if (!valid_mask[i]) continue;
        sum += std::abs(static_cast<double>(pred_disp[i]) - static_cast<double>(gt_disp[i]));
        ++count;
    }
    S3NET_CHECK(count > 0, "epe: empty valid mask");
    return sum / static_cast<double>(count);
}

double d1_error(const Tensor<float>& pred_disp, const Tensor<float>& gt_disp,
                const Tensor<uint8_t>& valid_mask, double threshold) {
    check_same_shape(pred_disp.shape(), gt_disp.shape(), "d1_error");
    S3NET_CHECK(pred_disp.numel() == valid_mask.numel(), "d1_error: mask size mismatch");
    int64_t bad = 0, count = 0;
    for (int64_t i = 0; i < pred_disp.numel(); ++i) {
        if (!valid_mask[i]) continue;
        const double err =
            std::abs(static_cast<double>(pred_disp[i]) - static_cast<double>(gt_disp[i]));
        if (err > threshold) ++bad;
        ++count;
    }
    S3NET_CHECK(count > 0, "d1_error: empty valid mask");
    return 100.0 * static_cast<double>(bad) / static_cast<double>(count);
}

std::vector<int64_t> confusion_matrix(const Tensor<int32_t>& pred_class,
                                      const Tensor<int32_t>& gt_class, int64_t num_classes,
                                      int32_t ignore_class) {
    check_same_shape(pred_class.shape(), gt_class.shape(), "confusion_matrix");
    S3NET_CHECK(num_classes >= 1, "confusion_matrix: num_classes >= 1");
    std::vector<int64_t> cm(static_cast<size_t>(num_classes * num_classes), 0);
    for (int64_t i = 0; i < gt_class.numel(); ++i) {
        const int32_t g = gt_class[i];
        if (g == ignore_class) continue;
        const int32_t p = pred_class[i];
        S3NET_CHECK(g >= 0 && g < num_classes, "confusion_matrix: gt label ", g, " out of range");
        S3NET_CHECK(p >= 0 && p < num_classes, "confusion_matrix: predicted label ", p,
                    " out of range");
        ++cm[static_cast<size_t>(g * num_classes + p)];
    }
    return cm;
}

MiouResult miou(const std::vector<int64_t>& cm, int64_t num_classes) {
    S3NET_CHECK(static_cast<int64_t>(cm.size()) == num_classes * num_classes,
                "miou: confusion matrix size mismatch");
    MiouResult out;
    out.per_class.resize(static_cast<size_t>(num_classes));
    double sum = 0.0;
    int64_t present = 0;
    for (int64_t k = 0; k < num_classes; ++k) {
        int64_t row = 0, col = 0;
        for (int64_t j = 0; j < num_classes; ++j) {
            row += cm[static_cast<size_t>(k * num_classes + j)];
            col += cm[static_cast<size_t>(j * num_classes + k)];
        }
        const int64_t inter = cm[static_cast<size_t>(k * num_classes + k)];
        const int64_t uni = row + col - inter;
        if (uni == 0) continue;  // class absent from gt and prediction
        const double iou = static_cast<double>(inter) / static_cast<double>(uni);
        out.per_class[static_cast<size_t>(k)] = iou;
        sum += iou;
        ++present;
    }
    out.mean = present > 0 ? sum / static_cast<double>(present) : 0.0;
    return out;
}

double miou3(const Tensor<int32_t>& pred_class, const Tensor<int32_t>& gt_class,
             const Tensor<float>& pred_disp, const Tensor<float>& gt_disp,
             const Tensor<uint8_t>& valid_mask, int64_t num_classes, int32_t ignore_class,
             double threshold) {
    check_same_shape(pred_class.shape(), gt_class.shape(), "miou3");
    check_same_shape(pred_disp.shape(), gt_disp.shape(), "miou3");
    S3NET_CHECK(pred_class.numel() == pred_disp.numel(), "miou3: class/disparity size mismatch");
    S3NET_CHECK(pred_class.numel() == valid_mask.numel(), "miou3: mask size mismatch");
    int64_t valid = 0;
    for (int64_t i = 0; i < valid_mask.numel(); ++i) valid += valid_mask[i] ? 1 : 0;
    S3NET_CHECK(valid > 0, "miou3: empty valid mask");

    const auto cm = confusion_matrix(pred_class, gt_class, num_classes, ignore_class);
    std::vector<int64_t> tp3(static_cast<size_t>(num_classes), 0);
    for (int64_t i = 0; i < gt_class.numel(); ++i) {
        const int32_t g = gt_class[i];
        if (g == ignore_class || g != pred_class[i] || !valid_mask[i]) continue;
        const double err =
            std::abs(static_cast<double>(pred_disp[i]) - static_cast<double>(gt_disp[i]));
        if (err <= threshold) ++tp3[static_cast<size_t>(g)];
    }
    double sum = 0.0;
    int64_t present = 0;
    for (int64_t k = 0; k < num_classes; ++k) {
        int64_t row = 0, col = 0;
        for (int64_t j = 0; j < num_classes; ++j) {
            row += cm[static_cast<size_t>(k * num_classes + j)];
            col += cm[static_cast<size_t>(j * num_classes + k)];
        }
        const int64_t uni = row + col - cm[static_cast<size_t>(k * num_classes + k)];
        if (uni == 0) continue;
        sum += static_cast<double>(tp3[static_cast<size_t>(k)]) / static_cast<double>(uni);
        ++present;
    }
    return present > 0 ? sum / static_cast<double>(present) : 0.0;
}

MetricAccumulator::MetricAccumulator(int64_t num_classes, int32_t ignore_class,
                                     double d1_threshold)
    : k_(num_classes),
      ignore_class_(ignore_class),
      d1_threshold_(d1_threshold),
      cm_(static_cast<size_t>(num_classes * num_classes), 0),
      tp3_(static_cast<size_t>(num_classes), 0) {
    S3NET_CHECK(num_classes >= 1, "MetricAccumulator: num_classes >= 1");
}

void MetricAccumulator::add(const Tensor<float>& pred_disp, const Tensor<float>& gt_disp,
                            const Tensor<int32_t>& pred_class, const Tensor<int32_t>& gt_class,
                            const Tensor<uint8_t>& valid_mask) {
    check_same_shape(pred_disp.shape(), gt_disp.shape(), "MetricAccumulator");
    S3NET_CHECK(pred_disp.numel() == pred_class.numel() &&
                    pred_disp.numel() == valid_mask.numel(),
                "MetricAccumulator: raster size mismatch");
    for (int64_t i = 0; i < pred_disp.numel(); ++i) {
        const double err =
            std::abs(static_cast<double>(pred_disp[i]) - static_cast<double>(gt_disp[i]));
        if (valid_mask[i]) {
            abs_err_sum_ += err;
            ++valid_count_;
            if (err > d1_threshold_) ++bad_count_;
        }
        const int32_t g = gt_class[i];
        if (g == ignore_class_) continue;
        const int32_t p = pred_class[i];
        S3NET_CHECK(g >= 0 && g < k_ && p >= 0 && p < k_,
                    "MetricAccumulator: label out of range");
        ++cm_[static_cast<size_t>(g * k_ + p)];
        if (g == p && valid_mask[i] && err <= d1_threshold_) ++tp3_[static_cast<size_t>(g)];
    }
}

void MetricAccumulator::merge(const MetricAccumulator& other) {
    S3NET_CHECK(k_ == other.k_, "MetricAccumulator: class count mismatch in merge");
    abs_err_sum_ += other.abs_err_sum_;
    valid_count_ += other.valid_count_;
    bad_count_ += other.bad_count_;
    for (size_t i = 0; i < cm_.size(); ++i) cm_[i] += other.cm_[i];
    for (size_t i = 0; i < tp3_.size(); ++i) tp3_[i] += other.tp3_[i];
}

MetricReport MetricAccumulator::report(std::vector<std::string> class_names) const {
    S3NET_CHECK(valid_count_ > 0, "MetricAccumulator: no valid pixels accumulated");
    S3NET_CHECK(static_cast<int64_t>(class_names.size()) == k_,
                "MetricAccumulator: expected ", k_, " class names, got ", class_names.size());
    MetricReport rep;
    rep.class_names = std::move(class_names);
    rep.epe = abs_err_sum_ / static_cast<double>(valid_count_);
    rep.d1_error = 100.0 * static_cast<double>(bad_count_) / static_cast<double>(valid_count_);
    rep.valid_pixel_count = valid_count_;
    const auto m = miou(cm_, k_);
    rep.per_class_iou = m.per_class;
    rep.miou = m.mean;
    double sum3 = 0.0;
    int64_t present = 0;
    for (int64_t k = 0; k < k_; ++k) {
        if (!m.per_class[static_cast<size_t>(k)].has_value()) continue;
        int64_t row = 0, col = 0;
        for (int64_t j = 0; j < k_; ++j) {
            row += cm_[static_cast<size_t>(k * k_ + j)];
            col += cm_[static_cast<size_t>(j * k_ + k)];
        }
        const int64_t uni = row + col - cm_[static_cast<size_t>(k * k_ + k)];
        sum3 += static_cast<double>(tp3_[static_cast<size_t>(k)]) / static_cast<double>(uni);
        ++present;
    }
    rep.miou3 = present > 0 ? sum3 / static_cast<double>(present) : 0.0;
    return rep;
}

std::string format_report(const MetricReport& report) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(6);
    os << "EPE " << report.epe << "\n";
    os << "D1-Error " << report.d1_error << "\n";
    for (size_t k = 0; k < report.class_names.size(); ++k) {
        os << report.class_names[k] << " ";
        if (k < report.per_class_iou.size() && report.per_class_iou[k].has_value())
            os << 100.0 * *report.per_class_iou[k];
        else
            os << "-";
        os << "\n";
    }
    os << "mIoU " << 100.0 * report.miou << "\n";
    os << "mIoU-3 " << 100.0 * report.miou3 << "\n";
    os << "ValidPixels " << report.valid_pixel_count << "\n";
    return os.str();
}

MetricReport parse_report(const std::string& text) {
    MetricReport rep;
    std::istringstream is(text);
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        const auto sp = line.rfind(' ');
        S3NET_CHECK(sp != std::string::npos, "parse_report: malformed line '", line, "'");
        const std::string key = line.substr(0, sp);
        const std::string val = line.substr(sp + 1);
        if (key == "EPE")
            rep.epe = std::stod(val);
        else if (key == "D1-Error")
            rep.d1_error = std::stod(val);
        else if (key == "mIoU")
            rep.miou = std::stod(val) / 100.0;
        else if (key == "mIoU-3")
            rep.miou3 = std::stod(val) / 100.0;
        else if (key == "ValidPixels")
            rep.valid_pixel_count = std::stoll(val);
        else {
            rep.class_names.push_back(key);
            if (val == "-")
                rep.per_class_iou.push_back(std::nullopt);
            else
                rep.per_class_iou.push_back(std::stod(val) / 100.0);
        }
    }
    return rep;
}

}  // namespace s3net
