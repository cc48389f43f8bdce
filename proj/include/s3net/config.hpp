#pragma once

#include <string>

#include "s3net/heads.hpp"
#include "s3net/losses.hpp"

namespace s3net {

// Flat sectioned key-value run configuration. Every key has a default;
// unknown sections or keys are rejected before any work starts.
struct RunConfig {
    ModelConfig model;
    LossConfig loss;

    struct Optim {
        double lr = 1e-3;
        int64_t steps = 1000;
        int64_t batch_size = 4;
        uint64_t seed = 42;
        int64_t checkpoint_every = 500;
        double beta1 = 0.9;
        double beta2 = 0.999;
        double eps = 1e-8;
        // Optional early stop on training-set targets; 0 disables.
        double target_epe = 0.0;
        double target_accuracy = 0.0;
        int64_t check_every = 50;
    } optim;

    struct Data {
        std::string source = "synth";  // synth | dir
        std::string root;
        std::string split = "train.txt";
        int64_t synth_samples = 4;
        int64_t synth_size = 128;
        int64_t synth_objects = 6;
        int64_t tile = 128;
    } data;

    struct Output {
        std::string dir = "runs/default";
    } output;

    void validate() const;
    std::string to_text() const;   // canonical serialization (fixed key order)
    uint64_t hash() const;         // FNV-1a of the canonical text

    static RunConfig from_text(const std::string& text);
    static RunConfig from_file(const std::string& path);
};

}  // namespace s3net
