#include "s3net/trainer.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "s3net/losses.hpp"

namespace fs = std::filesystem;

namespace s3net {

Tensor<float> normalize_image(const Tensor<float>& img) {
    Tensor<float> out = img;
    for (int64_t i = 0; i < out.numel(); ++i) out[i] = out[i] * 2.0f - 1.0f;
    return out;
}

Tensor<uint8_t> range_valid_mask(const StereoSample& sample, int64_t d_min, int64_t d_max) {
    Tensor<uint8_t> mask = sample.valid_mask;
    for (int64_t i = 0; i < mask.numel(); ++i) {
        const float d = sample.gt_disp[i];
        if (!std::isfinite(d) || d < static_cast<float>(d_min) || d > static_cast<float>(d_max))
            mask[i] = 0;
    }
    return mask;
}

namespace {

struct Batch {
    ag::Var<float> left, right;
    Tensor<float> gt_disp;
    Tensor<int32_t> gt_class;
    Tensor<uint8_t> valid;
    std::string ids;
};

Batch make_batch(const std::vector<StereoSample>& tiles, int64_t d_min, int64_t d_max) {
    const int64_t b = static_cast<int64_t>(tiles.size());
    const int64_t h = tiles[0].height(), w = tiles[0].width();
    Tensor<float> left({b, 3, h, w}), right({b, 3, h, w});
    Batch batch;
    batch.gt_disp = Tensor<float>({b, h, w});
    batch.gt_class = Tensor<int32_t>({b, h, w});
    batch.valid = Tensor<uint8_t>({b, h, w});
    for (int64_t i = 0; i < b; ++i) {
        const auto& t = tiles[static_cast<size_t>(i)];
        S3NET_CHECK(t.height() == h && t.width() == w, "batch tiles must share a size");
        const Tensor<float> ln = normalize_image(t.left);
        const Tensor<float> rn = normalize_image(t.right);
        std::copy(ln.data(), ln.data() + ln.numel(), left.data() + i * 3 * h * w);
        std::copy(rn.data(), rn.data() + rn.numel(), right.data() + i * 3 * h * w);
        std::copy(t.gt_disp.data(), t.gt_disp.data() + h * w, batch.gt_disp.data() + i * h * w);
        std::copy(t.gt_class.data(), t.gt_class.data() + h * w,
                  batch.gt_class.data() + i * h * w);
        const Tensor<uint8_t> mask = range_valid_mask(t, d_min, d_max);
        std::copy(mask.data(), mask.data() + h * w, batch.valid.data() + i * h * w);
        if (!batch.ids.empty()) batch.ids += ", ";
        batch.ids += t.id;
    }
    batch.left = ag::constant(std::move(left));
    batch.right = ag::constant(std::move(right));
    return batch;
}

// Training-set metrics used for logging and optional early stop.
std::pair<double, double> training_scores(const S3Net<float>& model,
                                          const std::vector<StereoSample>& samples,
                                          int64_t tile) {
    const auto& mc = model.config();
    double err_sum = 0.0;
    int64_t err_count = 0, hit = 0, labeled = 0;
    for (const auto& sample : samples) {
        const int64_t t = std::min({tile, sample.height(), sample.width()});
        for (const auto& piece : crop_tiles(sample, t, CropMode::grid)) {
            const PredictionMaps maps = predict_maps(model, piece);
            const Tensor<uint8_t> valid = range_valid_mask(piece, mc.d_min, mc.d_max);
            for (int64_t i = 0; i < valid.numel(); ++i) {
                if (valid[i]) {
                    err_sum += std::abs(static_cast<double>(maps.disparity[i]) -
                                        static_cast<double>(piece.gt_disp[i]));
                    ++err_count;
                }
                if (piece.gt_class[i] != 255) {
                    ++labeled;
                    if (maps.classes[i] == piece.gt_class[i]) ++hit;
                }
            }
        }
    }
    const double epe_val = err_count > 0 ? err_sum / static_cast<double>(err_count) : 0.0;
    const double acc = labeled > 0 ? static_cast<double>(hit) / static_cast<double>(labeled)
                                   : 0.0;
    return {epe_val, acc};
}

}  // namespace

PredictionMaps predict_maps(const S3Net<float>& model, const StereoSample& sample) {
    auto left = ag::constant(normalize_image(sample.left)
                                 .reshaped({1, 3, sample.height(), sample.width()}));
    auto right = ag::constant(normalize_image(sample.right)
                                  .reshaped({1, 3, sample.height(), sample.width()}));
    const auto preds = model(left, right);
    const auto& last = preds.back();
    const int64_t h = sample.height(), w = sample.width();
    PredictionMaps maps;
    maps.disparity = last.disparity->value.reshaped({h, w});
    const auto& logits = last.class_logits->value;  // [1, K, H, W]
    const int64_t k = logits.size(1);
    maps.classes = Tensor<int32_t>({h, w});
    for (int64_t i = 0; i < h * w; ++i) {
        int32_t best = 0;
        float best_v = logits[i];
        for (int64_t c = 1; c < k; ++c) {
            const float v = logits[c * h * w + i];
            if (v > best_v) {
                best_v = v;
                best = static_cast<int32_t>(c);
            }
        }
        maps.classes[i] = best;
    }
    return maps;
}

MetricReport evaluate_dataset(const std::vector<StereoSample>& samples,
                              const Predictor& predictor, int64_t tile, int64_t d_min,
                              int64_t d_max, int64_t num_classes, int32_t ignore_class) {
    S3NET_CHECK(!samples.empty(), "evaluate: no samples");
    MetricAccumulator acc(num_classes, ignore_class);
    for (const auto& sample : samples) {
        const int64_t t = std::min({tile, sample.height(), sample.width()});
        for (const auto& piece : crop_tiles(sample, t, CropMode::grid)) {
            const PredictionMaps maps = predictor(piece);
            acc.add(maps.disparity, piece.gt_disp, maps.classes, piece.gt_class,
                    range_valid_mask(piece, d_min, d_max));
        }
    }
    return acc.report(num_classes == 5 ? kDefaultClassNames : [&] {
        std::vector<std::string> names;
        for (int64_t i = 0; i < num_classes; ++i) names.push_back("Class" + std::to_string(i));
        return names;
    }());
}

std::vector<StereoSample> load_training_samples(const RunConfig& cfg) {
    std::vector<StereoSample> samples;
    if (cfg.data.source == "synth") {
        SynthConfig sc;
        sc.height = sc.width = cfg.data.synth_size;
        sc.num_objects = cfg.data.synth_objects;
        sc.d_min = cfg.model.d_min;
        sc.d_max = cfg.model.d_max;
        sc.num_classes = cfg.model.num_classes;
        for (int64_t i = 0; i < cfg.data.synth_samples; ++i)
            samples.push_back(synth_scene(cfg.optim.seed * 1000 + static_cast<uint64_t>(i), sc));
    } else {
        const auto remap = LabelRemap::us3d_default();
        for (const auto& id : read_manifest(cfg.data.root + "/" + cfg.data.split))
            samples.push_back(load_sample_files(cfg.data.root, id, remap));
    }
    return samples;
}

TrainResult train(const RunConfig& cfg) {
    cfg.validate();
    fs::create_directories(cfg.output.dir);
    const std::string config_text = cfg.to_text();

    S3Net<float> model(cfg.model, cfg.optim.seed);
    nn::ParamSet<float> params = model.params();
    nn::Adam<float> adam(params, cfg.optim.lr, cfg.optim.beta1, cfg.optim.beta2, cfg.optim.eps);

    const std::vector<StereoSample> samples = load_training_samples(cfg);
    Rng data_rng(cfg.optim.seed ^ 0xda7a5eedull);

    const std::string curve_path = cfg.output.dir + "/loss_curve.csv";
    std::ofstream curve(curve_path);
    S3NET_CHECK_IO(curve.good(), "cannot write loss curve '", curve_path, "'");

    TrainResult result;
    result.loss_curve_path = curve_path;
    const std::string final_path = cfg.output.dir + "/checkpoint.bin";

    std::cout << "training: " << params.total_count() << " parameters, " << samples.size()
              << " samples, " << cfg.optim.steps << " steps (config hash " << std::hex
              << cfg.hash() << std::dec << ")" << std::endl;

    for (int64_t step = 1; step <= cfg.optim.steps; ++step) {
        std::vector<StereoSample> tiles;
        for (int64_t b = 0; b < cfg.optim.batch_size; ++b) {
            const auto& sample =
                samples[static_cast<size_t>(data_rng.uniform_int(
                    0, static_cast<int64_t>(samples.size()) - 1))];
            const int64_t t = std::min({cfg.data.tile, sample.height(), sample.width()});
            auto crops = crop_tiles(sample, t, CropMode::random, &data_rng, 1);
            tiles.push_back(std::move(crops[0]));
        }
        Batch batch = make_batch(tiles, cfg.model.d_min, cfg.model.d_max);

        const auto preds = model(batch.left, batch.right);
        const auto loss =
            multitask_loss(preds, batch.gt_disp, batch.gt_class, batch.valid, cfg.loss);
        const double total = static_cast<double>(loss.total->value[0]);
        if (!std::isfinite(total))
            throw std::runtime_error(format_msg("non-finite loss at step ", step, " on batch [",
                                                batch.ids, "]"));

        params.zero_grad();
        ag::backward(loss.total);
        adam.step();

        curve << step << "," << total << "," << loss.disp_part << "," << loss.sem_part << "\n";
        result.steps_run = step;
        result.final_total = total;

        const bool check_now = step % cfg.optim.check_every == 0 || step == cfg.optim.steps;
        if (check_now) {
            std::cout << "step " << std::setw(6) << step << "  total " << std::fixed
                      << std::setprecision(4) << total << "  disp " << loss.disp_part << "  sem "
                      << loss.sem_part;
            if (cfg.optim.target_epe > 0.0 || cfg.optim.target_accuracy > 0.0) {
                const auto [train_epe, train_acc] = training_scores(model, samples,
                                                                    cfg.data.tile);
                result.train_epe = train_epe;
                result.train_accuracy = train_acc;
                std::cout << "  train-epe " << train_epe << "  train-acc " << train_acc;
                const bool epe_ok = cfg.optim.target_epe <= 0.0 || train_epe < cfg.optim.target_epe;
                const bool acc_ok =
                    cfg.optim.target_accuracy <= 0.0 || train_acc > cfg.optim.target_accuracy;
                if (epe_ok && acc_ok) {
                    std::cout << "  (targets reached)" << std::endl;
                    break;
                }
            }
            std::cout << std::endl;
        }
        if (step % cfg.optim.checkpoint_every == 0 && step != cfg.optim.steps) {
            std::ostringstream name;
            name << cfg.output.dir << "/checkpoint_step" << std::setfill('0') << std::setw(6)
                 << step << ".bin";
            save_checkpoint(name.str(), snapshot(params, &adam, static_cast<uint64_t>(step),
                                                 config_text));
        }
    }

    if (cfg.optim.target_epe <= 0.0 && cfg.optim.target_accuracy <= 0.0) {
        const auto [train_epe, train_acc] = training_scores(model, samples, cfg.data.tile);
        result.train_epe = train_epe;
        result.train_accuracy = train_acc;
    }
    save_checkpoint(final_path, snapshot(params, &adam,
                                         static_cast<uint64_t>(result.steps_run), config_text));
    result.checkpoint_path = final_path;
    return result;
}

MetricReport evaluate_checkpoint(const std::string& checkpoint_path, const std::string& data_dir,
                                 const std::string& split, const std::string& report_path) {
    const CheckpointData ck = load_checkpoint(checkpoint_path);
    const RunConfig cfg = RunConfig::from_text(ck.config_text);
    S3Net<float> model(cfg.model, cfg.optim.seed);
    nn::ParamSet<float> params = model.params();
    restore_params(params, ck);

    const auto remap = LabelRemap::us3d_default();
    std::vector<StereoSample> samples;
    for (const auto& id : read_manifest(data_dir + "/" + split))
        samples.push_back(load_sample_files(data_dir, id, remap));

    const MetricReport report = evaluate_dataset(
        samples, [&](const StereoSample& s) { return predict_maps(model, s); }, cfg.data.tile,
        cfg.model.d_min, cfg.model.d_max, cfg.model.num_classes, cfg.loss.ignore_class);
    if (!report_path.empty()) {
        std::ofstream os(report_path);
        S3NET_CHECK_IO(os.good(), "cannot write report '", report_path, "'");
        os << format_report(report);
    }
    return report;
}

std::vector<uint8_t> render_class_map(const Tensor<int32_t>& classes) {
    // Fixed palette: Ground, Tree, Building, Water, Bridge, then wrap.
    static const uint8_t palette[][3] = {{120, 110, 90}, {50, 140, 60}, {200, 80, 70},
                                         {60, 110, 200}, {230, 200, 70}, {150, 90, 160},
                                         {90, 200, 200}, {240, 140, 40}};
    const int64_t n = classes.numel();
    std::vector<uint8_t> rgb(static_cast<size_t>(3 * n));
    for (int64_t i = 0; i < n; ++i) {
        const auto& c = palette[classes[i] >= 0 ? classes[i] % 8 : 0];
        rgb[static_cast<size_t>(3 * i)] = c[0];
        rgb[static_cast<size_t>(3 * i + 1)] = c[1];
        rgb[static_cast<size_t>(3 * i + 2)] = c[2];
    }
    return rgb;
}

std::vector<uint8_t> render_disparity_map(const Tensor<float>& disp, int64_t d_min,
                                          int64_t d_max) {
    // Linear two-stop ramp: d_min -> (68, 1, 84), d_max -> (253, 231, 37).
    static const double lo[3] = {68.0, 1.0, 84.0};
    static const double hi[3] = {253.0, 231.0, 37.0};
    const int64_t n = disp.numel();
    std::vector<uint8_t> rgb(static_cast<size_t>(3 * n));
    const double span = static_cast<double>(d_max - d_min);
    for (int64_t i = 0; i < n; ++i) {
        double t = (static_cast<double>(disp[i]) - static_cast<double>(d_min)) / span;
        t = std::clamp(t, 0.0, 1.0);
        for (int c = 0; c < 3; ++c)
            rgb[static_cast<size_t>(3 * i + c)] =
                static_cast<uint8_t>(std::lround(lo[c] + t * (hi[c] - lo[c])));
    }
    return rgb;
}

void predict_files(const std::string& checkpoint_path, const std::string& left_path,
                   const std::string& right_path, const std::string& out_dir) {
    const CheckpointData ck = load_checkpoint(checkpoint_path);
    const RunConfig cfg = RunConfig::from_text(ck.config_text);
    S3Net<float> model(cfg.model, cfg.optim.seed);
    nn::ParamSet<float> params = model.params();
    restore_params(params, ck);

    Tensor<float> left = read_image_rgb(left_path);
    Tensor<float> right = read_image_rgb(right_path);
    S3NET_CHECK_IO(left.same_shape(right), "left and right images differ in size");
    const int64_t oh = left.size(1), ow = left.size(2);
    const int64_t ph = (oh + 15) / 16 * 16, pw = (ow + 15) / 16 * 16;

    StereoSample sample;
    sample.left = Tensor<float>({3, ph, pw});
    sample.right = Tensor<float>({3, ph, pw});
    sample.gt_disp = Tensor<float>({ph, pw});
    sample.gt_class = Tensor<int32_t>({ph, pw});
    sample.valid_mask = Tensor<uint8_t>({ph, pw});
    for (int64_t c = 0; c < 3; ++c)
        for (int64_t y = 0; y < oh; ++y)
            for (int64_t x = 0; x < ow; ++x) {
                sample.left.at({c, y, x}) = left.at({c, y, x});
                sample.right.at({c, y, x}) = right.at({c, y, x});
            }

    const PredictionMaps maps = predict_maps(model, sample);
    Tensor<float> disp({oh, ow});
    Tensor<int32_t> classes({oh, ow});
    for (int64_t y = 0; y < oh; ++y)
        for (int64_t x = 0; x < ow; ++x) {
            disp.at({y, x}) = maps.disparity.at({y, x});
            classes.at({y, x}) = maps.classes.at({y, x});
        }

    fs::create_directories(out_dir);
    write_pfm(out_dir + "/disparity.pfm", disp);
    write_label_raster(out_dir + "/classes.pgm", classes);
    write_png_rgb8(out_dir + "/disparity.png",
                   render_disparity_map(disp, cfg.model.d_min, cfg.model.d_max), ow, oh);
    write_png_rgb8(out_dir + "/classes.png", render_class_map(classes), ow, oh);
}

namespace {

std::string fmt_cell(bool enabled) { return enabled ? "x" : "-"; }

std::string fmt_metric(double v, bool present) {
    if (!present) return "-";
    std::ostringstream os;
    os << std::fixed << std::setprecision(3) << v;
    return os.str();
}

}  // namespace

std::string ablate(const RunConfig& base, const std::string& out_dir) {
    struct Row {
        std::string name;
        bool sfm, dm, sm, dcv, scv;
    };
    // Mirrors the ablation table layout: SFM off; disparity-only; semantic-
    // only; full model.
    const std::vector<Row> rows = {
        {"no_sfm", false, true, true, true, true},
        {"disparity_only", true, true, false, true, false},
        {"semantic_only", true, false, true, false, true},
        {"full", true, true, true, true, true},
    };

    fs::create_directories(out_dir);
    std::ostringstream table;
    table << "SFM DM SM DCV SCV mIoU mIoU-3 D1-Error EPE config\n";
    for (const auto& row : rows) {
        RunConfig cfg = base;
        cfg.model.disable_sfm = !row.sfm;
        cfg.model.disable_dm = !row.dm;
        cfg.model.disable_sm = !row.sm;
        cfg.model.disable_dcv = !row.dcv;
        cfg.model.disable_scv = !row.scv;
        if (!row.sm) cfg.loss.lambda_sem = 0.0;
        if (!row.dm) cfg.loss.lambda_disp = 0.0;
        cfg.output.dir = out_dir + "/" + row.name;
        std::cout << "[ablate] " << row.name << " (config hash " << std::hex << cfg.hash()
                  << std::dec << ")" << std::endl;
        train(cfg);

        const CheckpointData ck = load_checkpoint(cfg.output.dir + "/checkpoint.bin");
        S3Net<float> model(cfg.model, cfg.optim.seed);
        nn::ParamSet<float> params = model.params();
        restore_params(params, ck);
        const auto samples = load_training_samples(cfg);
        const MetricReport rep = evaluate_dataset(
            samples, [&](const StereoSample& s) { return predict_maps(model, s); },
            cfg.data.tile, cfg.model.d_min, cfg.model.d_max, cfg.model.num_classes,
            cfg.loss.ignore_class);

        const bool has_sem = row.sm;
        const bool has_disp = row.dm;
        table << fmt_cell(row.sfm) << " " << fmt_cell(row.dm) << " " << fmt_cell(row.sm) << " "
              << fmt_cell(row.dcv) << " " << fmt_cell(row.scv) << " "
              << fmt_metric(100.0 * rep.miou, has_sem) << " "
              << fmt_metric(100.0 * rep.miou3, has_sem && has_disp) << " "
              << fmt_metric(rep.d1_error, has_disp) << " " << fmt_metric(rep.epe, has_disp)
              << " " << std::hex << cfg.hash() << std::dec << "\n";
    }
    const std::string text = table.str();
    std::ofstream os(out_dir + "/ablation.txt");
    S3NET_CHECK_IO(os.good(), "cannot write ablation table");
    os << text;
    return text;
}

}  // namespace s3net
