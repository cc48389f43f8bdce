#include <CLI11.hpp>

#include <iostream>

#include "s3net/trainer.hpp"

namespace {

int run(int argc, char** argv) {
    CLI::App app{"S3Net single-branch semantic stereo: training, evaluation and rendering"};
    app.require_subcommand(1);

    // train
    auto* train_cmd = app.add_subcommand("train", "train a model from a config file");
    std::string train_config;
    int64_t seed_override = -1;
    train_cmd->add_option("--config", train_config, "run configuration file")->required();
    train_cmd->add_option("--seed", seed_override, "override [optimizer] seed");

    // eval
    auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on a dataset directory");
    std::string eval_ckpt, eval_data, eval_report, eval_split = "manifest.txt";
    eval_cmd->add_option("--checkpoint", eval_ckpt, "checkpoint file")->required();
    eval_cmd->add_option("--data", eval_data, "dataset directory")->required();
    eval_cmd->add_option("--report", eval_report, "metric report output path")->required();
    eval_cmd->add_option("--split", eval_split, "split manifest inside the dataset directory");

    // predict
    auto* predict_cmd = app.add_subcommand("predict", "run inference on one image pair");
    std::string pr_ckpt, pr_left, pr_right, pr_out;
    predict_cmd->add_option("--checkpoint", pr_ckpt, "checkpoint file")->required();
    predict_cmd->add_option("--left", pr_left, "left image (PPM)")->required();
    predict_cmd->add_option("--right", pr_right, "right image (PPM)")->required();
    predict_cmd->add_option("--out", pr_out, "output directory")->required();

    // synth
    auto* synth_cmd = app.add_subcommand("synth", "generate a synthetic stereo dataset");
    std::string sy_out;
    int64_t sy_count = 4, sy_seed = 7, sy_size = 128, sy_objects = 6, sy_classes = 5;
    int64_t sy_dmin = -16, sy_dmax = 16;
    synth_cmd->add_option("--out", sy_out, "output directory")->required();
    synth_cmd->add_option("--count", sy_count, "number of samples");
    synth_cmd->add_option("--seed", sy_seed, "base seed");
    synth_cmd->add_option("--size", sy_size, "square sample size (multiple of 16)");
    synth_cmd->add_option("--objects", sy_objects, "objects per scene");
    synth_cmd->add_option("--classes", sy_classes, "class count");
    synth_cmd->add_option("--d-min", sy_dmin, "minimum disparity");
    synth_cmd->add_option("--d-max", sy_dmax, "maximum disparity");

    // ablate
    auto* ablate_cmd = app.add_subcommand("ablate", "run the ablation table at desk scale");
    std::string ab_config, ab_out;
    ablate_cmd->add_option("--config", ab_config, "base run configuration")->required();
    ablate_cmd->add_option("--out", ab_out, "output directory")->required();

    app.parse(argc, argv);

    if (*train_cmd) {
        s3net::RunConfig cfg = s3net::RunConfig::from_file(train_config);
        if (seed_override >= 0) cfg.optim.seed = static_cast<uint64_t>(seed_override);
        const auto result = s3net::train(cfg);
        std::cout << "checkpoint: " << result.checkpoint_path << "\n"
                  << "loss curve: " << result.loss_curve_path << "\n"
                  << "steps: " << result.steps_run << "  final loss: " << result.final_total
                  << "\n";
    } else if (*eval_cmd) {
        const auto report =
            s3net::evaluate_checkpoint(eval_ckpt, eval_data, eval_split, eval_report);
        std::cout << s3net::format_report(report);
        std::cout << "report written to " << eval_report << "\n";
    } else if (*predict_cmd) {
        s3net::predict_files(pr_ckpt, pr_left, pr_right, pr_out);
        std::cout << "wrote disparity.pfm, classes.pgm, disparity.png, classes.png to " << pr_out
                  << "\n";
    } else if (*synth_cmd) {
        s3net::SynthConfig sc;
        sc.height = sc.width = sy_size;
        sc.num_objects = sy_objects;
        sc.d_min = sy_dmin;
        sc.d_max = sy_dmax;
        sc.num_classes = sy_classes;
        std::vector<std::string> ids;
        for (int64_t i = 0; i < sy_count; ++i) {
            const auto sample = s3net::synth_scene(static_cast<uint64_t>(sy_seed + i), sc);
            s3net::write_sample_files(sample, sy_out);
            ids.push_back(sample.id);
        }
        s3net::write_manifest(sy_out + "/manifest.txt", ids);
        std::cout << "wrote " << sy_count << " samples to " << sy_out << "\n";
    } else if (*ablate_cmd) {
        const s3net::RunConfig cfg = s3net::RunConfig::from_file(ab_config);
        std::cout << s3net::ablate(cfg, ab_out);
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const CLI::ParseError& e) {
        CLI::App app;
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    } catch (const s3net::config_error& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}
