#pragma once

#include <string>
#include <utility>
#include <vector>

#include "s3net/nn.hpp"

namespace s3net {

// Binary checkpoint: parameters by name, optional optimizer moments, the step
// counter and a config snapshot. Writing the same state twice produces
// identical bytes.
struct CheckpointData {
    uint64_t step = 0;
    std::string config_text;
    std::vector<std::pair<std::string, Tensor<float>>> params;
    bool has_optimizer = false;
    uint64_t adam_step = 0;
    std::vector<Tensor<float>> adam_m, adam_v;
};

void save_checkpoint(const std::string& path, const CheckpointData& data);
CheckpointData load_checkpoint(const std::string& path);

CheckpointData snapshot(const nn::ParamSet<float>& params, nn::Adam<float>* optimizer,
                        uint64_t step, const std::string& config_text);

// Copies stored tensors into live parameters; names and shapes must match.
void restore_params(nn::ParamSet<float>& params, const CheckpointData& data);
void restore_optimizer(nn::Adam<float>& optimizer, const CheckpointData& data);

}  // namespace s3net
