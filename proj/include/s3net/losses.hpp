#pragma once

#include <array>

#include "s3net/heads.hpp"
#include "s3net/ops_loss.hpp"

namespace s3net {

struct LossConfig {
    double lambda_disp = 1.0;
    double lambda_sem = 1.0;
    std::array<double, 3> round_weights = {0.5, 0.7, 1.0};
    int32_t ignore_class = 255;
    double smooth_l1_beta = 1.0;

    void validate() const {
        S3NET_CHECK(lambda_disp >= 0.0 && lambda_sem >= 0.0, "loss: lambdas must be >= 0");
        double sum = 0.0;
        for (double w : round_weights) {
            S3NET_CHECK(w >= 0.0, "loss: round weights must be >= 0");
            sum += w;
        }
        S3NET_CHECK(sum > 0.0, "loss: at least one round weight must be > 0");
        S3NET_CHECK(smooth_l1_beta > 0.0, "loss: smooth_l1_beta must be > 0");
    }
};

template <typename T>
struct LossResult {
    ag::Var<T> total;        // scalar graph node for backward()
    double disp_part = 0.0;  // lambda- and round-weighted; total = disp + sem
    double sem_part = 0.0;
    std::array<double, 3> round_disp{};  // unweighted per-round means
    std::array<double, 3> round_sem{};
    int64_t disp_count = 0;  // supervised pixels per round (identical masks)
    int64_t sem_count = 0;
};

// Deep-supervised multitask objective: per round, masked smooth-L1 on the
// disparity map plus masked cross-entropy on the class logits.
template <typename T>
LossResult<T> multitask_loss(const std::vector<Prediction<T>>& preds, const Tensor<T>& gt_disp,
                             const Tensor<int32_t>& gt_class, const Tensor<uint8_t>& valid_mask,
                             const LossConfig& cfg) {
    cfg.validate();
    S3NET_CHECK(preds.size() == 3, "multitask_loss: expected 3 round predictions, got ",
                preds.size());

    LossResult<T> result;
    std::vector<std::pair<T, ag::Var<T>>> terms;
    for (size_t r = 0; r < preds.size(); ++r) {
        const double w = cfg.round_weights[r];
        auto disp = ag::smooth_l1_masked(preds[r].disparity, gt_disp, valid_mask,
                                         static_cast<T>(cfg.smooth_l1_beta));
        auto sem = ag::cross_entropy_masked(preds[r].class_logits, gt_class, cfg.ignore_class);
        result.round_disp[r] = static_cast<double>(disp.loss->value[0]);
        result.round_sem[r] = static_cast<double>(sem.loss->value[0]);
        result.disp_count = disp.count;
        result.sem_count = sem.count;
        result.disp_part += w * cfg.lambda_disp * result.round_disp[r];
        result.sem_part += w * cfg.lambda_sem * result.round_sem[r];
        terms.emplace_back(static_cast<T>(w * cfg.lambda_disp), disp.loss);
        terms.emplace_back(static_cast<T>(w * cfg.lambda_sem), sem.loss);
    }
    if (result.disp_count == 0 && result.sem_count == 0)
        throw contract_error("no supervised pixels: disparity mask and class mask are both empty");
    result.total = ag::weighted_sum(terms);
    return result;
}

}  // namespace s3net
