#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "epan/dataset.hpp"
#include "epan/edge.hpp"
#include "epan/image.hpp"
#include "epan/metrics.hpp"
#include "epan/model.hpp"
#include "epan/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr double kPi = 3.14159265358979323846;

struct RunConfig {
    epan::ModelConfig model;
    epan::TrainConfig train;
    epan::CannyParams canny;
};

RunConfig load_run_config(const std::string& path) {
    RunConfig cfg;
    if (path.empty()) {
        return cfg;
    }
    std::ifstream in(path);
    if (!in) {
        throw epan::config_error("cannot open config file: " + path);
    }
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw epan::config_error("config " + path + ": invalid JSON: " + e.what());
    }
    if (j.contains("model")) {
        cfg.model = epan::model_config_from_json(j["model"].dump());
    }
    if (j.contains("train")) {
        cfg.train = epan::train_config_from_json(j["train"].dump());
    }
    if (j.contains("canny")) {
        const json& c = j["canny"];
        if (c.contains("sigma")) cfg.canny.gaussian_sigma = c["sigma"].get<double>();
        if (c.contains("low")) cfg.canny.low_threshold = c["low"].get<double>();
        if (c.contains("high")) cfg.canny.high_threshold = c["high"].get<double>();
        if (c.contains("soften")) cfg.canny.soften = c["soften"].get<bool>();
    }
    return cfg;
}

std::vector<fs::path> list_pngs(const fs::path& dir) {
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (entry.is_regular_file() && entry.path().extension() == ".png") {
            files.push_back(entry.path());
        }
    }
    std::sort(files.begin(), files.end());
    return files;
}

void require_dir(const std::string& path, const char* what) {
    if (!fs::is_directory(path)) {
        throw epan::config_error(std::string(what) + " directory does not exist: " + path);
    }
}

void require_file(const std::string& path, const char* what) {
    if (!fs::is_regular_file(path)) {
        throw epan::config_error(std::string(what) + " does not exist: " + path);
    }
}

// ---- detect-edges ----------------------------------------------------------

int cmd_detect_edges(const std::string& in_dir, const std::string& out_dir,
                     const epan::CannyParams& params) {
    params.validate();
    require_dir(in_dir, "input");
    const auto files = list_pngs(in_dir);
    fs::create_directories(out_dir);
    if (files.empty()) {
        std::cerr << "detect-edges: no .png files in " << in_dir << " (nothing to do)\n";
        return 0;
    }
    int failures = 0;
    for (const auto& file : files) {
        try {
            epan::Image img = epan::read_png(file.string());
            epan::Image edges = epan::canny(img, params);
            epan::write_png((fs::path(out_dir) / file.filename()).string(), edges);
        } catch (const std::exception& e) {
            std::cerr << "detect-edges: " << file.string() << ": " << e.what() << "\n";
            ++failures;
        }
    }
    std::cerr << "detect-edges: wrote " << (files.size() - failures) << "/" << files.size()
              << " edge maps to " << out_dir << "\n";
    return failures == 0 ? 0 : 2;
}

// ---- make-dataset ----------------------------------------------------------

// Scenario of a source image: its subdirectory below the scan root, or the
// fallback for images sitting directly in the root.
std::string scenario_of(const fs::path& root, const fs::path& file, const std::string& fallback) {
    const fs::path rel = fs::relative(file.parent_path(), root);
    if (rel.empty() || rel == ".") {
        return fallback;
    }
    return rel.generic_string();
}

std::vector<fs::path> list_pngs_recursive(const fs::path& dir) {
    std::vector<fs::path> files;
    for (const auto& entry : fs::recursive_directory_iterator(dir)) {
        if (entry.is_regular_file() && entry.path().extension() == ".png") {
            files.push_back(entry.path());
        }
    }
    std::sort(files.begin(), files.end());
    return files;
}

epan::DatasetManifest apply_split(epan::DatasetManifest manifest, const std::string& train_csv,
                                  int train_count, unsigned long long seed) {
    std::set<std::string> scenarios;
    for (const auto& rec : manifest.records) {
        scenarios.insert(rec.scenario);
    }
    if (!train_csv.empty()) {
        std::set<std::string> train_set;
        std::stringstream ss(train_csv);
        std::string item;
        while (std::getline(ss, item, ',')) {
            if (!item.empty()) {
                train_set.insert(item);
            }
        }
        return epan::split_by_scenario(manifest, train_set);
    }
    if (train_count > 0) {
        if (static_cast<std::size_t>(train_count) >= scenarios.size()) {
            throw epan::config_error("train scenario count " + std::to_string(train_count) +
                                     " must be below the scenario count " +
                                     std::to_string(scenarios.size()));
        }
        std::vector<std::string> all(scenarios.begin(), scenarios.end());
        std::mt19937_64 rng(seed);
        std::shuffle(all.begin(), all.end(), rng);
        std::set<std::string> train_set(all.begin(), all.begin() + train_count);
        return epan::split_by_scenario(manifest, train_set);
    }
    return manifest;
}

int cmd_make_dataset_kernel(const std::string& sharp_dir, const std::string& out_dir,
                            double length, double angle_deg, int size,
                            const std::string& scenario_fallback) {
    require_dir(sharp_dir, "sharp");
    const auto files = list_pngs_recursive(sharp_dir);
    if (files.empty()) {
        throw epan::data_error("make-dataset: no .png files under " + sharp_dir);
    }
    const auto kernel = epan::make_linear_kernel(length, angle_deg * kPi / 180.0, size);
    fs::create_directories(fs::path(out_dir) / "sharp");
    fs::create_directories(fs::path(out_dir) / "blurry");

    epan::DatasetManifest manifest;
    for (const auto& file : files) {
        const epan::Image sharp = epan::read_png(file.string());
        const epan::Image blurry = epan::blur_with_kernel(sharp, kernel);
        const std::string name = file.filename().string();
        epan::write_png((fs::path(out_dir) / "sharp" / name).string(), sharp);
        epan::write_png((fs::path(out_dir) / "blurry" / name).string(), blurry);
        epan::ManifestRecord rec;
        rec.sharp_path = "sharp/" + name;
        rec.blurry_path = "blurry/" + name;
        rec.scenario = scenario_of(sharp_dir, file, scenario_fallback);
        rec.split = "train";
        manifest.records.push_back(std::move(rec));
    }
    epan::write_manifest(manifest, (fs::path(out_dir) / "manifest.jsonl").string());
    std::cerr << "make-dataset: " << manifest.records.size() << " kernel-blurred pairs in "
              << out_dir << "\n";
    return 0;
}

int cmd_make_dataset_average(const std::string& frames_dir, const std::string& out_dir,
                             const std::string& scenario_fallback) {
    require_dir(frames_dir, "frames");
    // each clip is a subdirectory of frames_dir (optionally nested one level
    // deeper under a scenario directory)
    std::vector<fs::path> clips;
    for (const auto& entry : fs::recursive_directory_iterator(frames_dir)) {
        if (entry.is_directory() && !list_pngs(entry.path()).empty()) {
            clips.push_back(entry.path());
        }
    }
    std::sort(clips.begin(), clips.end());
    if (clips.empty()) {
        throw epan::data_error("make-dataset: no clip directories with .png frames under " +
                               frames_dir);
    }
    fs::create_directories(fs::path(out_dir) / "sharp");
    fs::create_directories(fs::path(out_dir) / "blurry");

    epan::DatasetManifest manifest;
    for (const auto& clip : clips) {
        const auto frame_files = list_pngs(clip);
        std::vector<epan::Image> frames;
        for (const auto& f : frame_files) {
            frames.push_back(epan::read_png(f.string()));
        }
        const epan::Image blurry = epan::blur_by_averaging(frames);
        const epan::Image& sharp = frames[frames.size() / 2]; // middle frame
        const std::string name = clip.filename().string() + ".png";
        epan::write_png((fs::path(out_dir) / "sharp" / name).string(), sharp);
        epan::write_png((fs::path(out_dir) / "blurry" / name).string(), blurry);
        epan::ManifestRecord rec;
        rec.sharp_path = "sharp/" + name;
        rec.blurry_path = "blurry/" + name;
        rec.scenario = scenario_of(frames_dir, clip / "x", scenario_fallback);
        rec.split = "train";
        manifest.records.push_back(std::move(rec));
    }
    epan::write_manifest(manifest, (fs::path(out_dir) / "manifest.jsonl").string());
    std::cerr << "make-dataset: " << manifest.records.size() << " frame-averaged pairs in "
              << out_dir << "\n";
    return 0;
}

int cmd_make_dataset_align(const std::string& sharp_dir, const std::string& blurry_dir,
                           const std::string& boxes_path, const std::string& out_dir,
                           double iou_threshold, double min_importance,
                           const std::string& scenario_fallback) {
    require_dir(sharp_dir, "sharp");
    require_dir(blurry_dir, "blurry");
    require_file(boxes_path, "boxes sidecar");
    const auto records = epan::read_boxes(boxes_path);
    if (records.empty()) {
        throw epan::data_error("make-dataset: boxes sidecar " + boxes_path + " is empty");
    }
    std::map<std::string, std::vector<epan::BoundingBox>> by_image;
    for (const auto& rec : records) {
        by_image[rec.image].push_back(rec.box);
    }
    fs::create_directories(fs::path(out_dir) / "sharp");
    fs::create_directories(fs::path(out_dir) / "blurry");

    epan::DatasetManifest manifest;
    for (const auto& [stem, boxes] : by_image) {
        const std::string sharp_path = (fs::path(sharp_dir) / (stem + ".png")).string();
        const std::string blurry_path = (fs::path(blurry_dir) / (stem + ".png")).string();
        require_file(sharp_path, "sharp image");
        require_file(blurry_path, "blurry image");
        const epan::Image sharp = epan::read_png(sharp_path);
        const epan::Image blurry = epan::read_png(blurry_path);

        auto kept = epan::nms(boxes, iou_threshold);
        kept = epan::importance_filter(kept, sharp.width, sharp.height, min_importance);
        int index = 0;
        for (const auto& box : kept) {
            const epan::Image sharp_crop = epan::crop_image(sharp, box.x, box.y, box.w, box.h);
            const auto alignment = epan::align_pair(sharp_crop, blurry, box);
            const epan::Image blurry_crop = epan::crop_image(
                blurry, box.x + alignment.offset_x, box.y + alignment.offset_y, box.w, box.h);
            const std::string name = stem + "_" + std::to_string(index++) + ".png";
            epan::write_png((fs::path(out_dir) / "sharp" / name).string(), sharp_crop);
            epan::write_png((fs::path(out_dir) / "blurry" / name).string(), blurry_crop);
            std::cerr << "align: " << stem << " box " << (index - 1) << " offset ("
                      << alignment.offset_x << ", " << alignment.offset_y << ") psnr "
                      << alignment.psnr << " dB\n";
            epan::ManifestRecord rec;
            rec.sharp_path = "sharp/" + name;
            rec.blurry_path = "blurry/" + name;
            const auto underscore = stem.find('_');
            rec.scenario = !scenario_fallback.empty() ? scenario_fallback
                           : underscore == std::string::npos ? stem
                                                             : stem.substr(0, underscore);
            rec.split = "train";
            manifest.records.push_back(std::move(rec));
        }
    }
    if (manifest.records.empty()) {
        throw epan::data_error("make-dataset: no boxes survived filtering");
    }
    epan::write_manifest(manifest, (fs::path(out_dir) / "manifest.jsonl").string());
    std::cerr << "make-dataset: " << manifest.records.size() << " aligned pairs in " << out_dir
              << "\n";
    return 0;
}

// ---- train -----------------------------------------------------------------

int cmd_train(const RunConfig& cfg, const std::string& manifest_path, const std::string& out_path,
              const std::string& log_path, int checkpoint_every, const std::string& data_root) {
    cfg.model.validate();
    cfg.train.validate();
    cfg.canny.validate();
    require_file(manifest_path, "manifest");
    const int divisor = cfg.model.spatial_divisor();
    if (cfg.train.crop_h % divisor != 0 || cfg.train.crop_w % divisor != 0) {
        throw epan::config_error("train: crop " + std::to_string(cfg.train.crop_w) + "x" +
                                 std::to_string(cfg.train.crop_h) + " must be divisible by " +
                                 std::to_string(divisor));
    }

    const auto manifest = epan::read_manifest(manifest_path);
    epan::verify_scenario_disjoint(manifest);
    const std::string root =
        data_root.empty() ? fs::path(manifest_path).parent_path().string() : data_root;
    const auto samples = epan::load_train_samples(manifest, "train", cfg.canny, root);

    auto net = epan::build_model<float>(cfg.model, cfg.train.seed);
    std::ofstream log;
    if (!log_path.empty()) {
        log.open(log_path, std::ios::trunc);
        if (!log) {
            throw epan::io_error("cannot open training log: " + log_path);
        }
    }
    const std::size_t total_params = net.parameter_count();
    const std::size_t een_params = net.een_parameter_count();
    {
        json header;
        header["event"] = "start";
        header["variant"] = epan::variant_name(cfg.model.variant);
        header["parameters"] = total_params;
        header["een_parameters"] = een_params;
        header["samples"] = samples.size();
        header["epochs"] = cfg.train.epochs;
        header["seed"] = cfg.train.seed;
        if (log) log << header.dump() << "\n";
        std::cerr << "train: variant " << epan::variant_name(cfg.model.variant) << ", "
                  << total_params << " parameters (" << een_params << " in EEN), "
                  << samples.size() << " samples\n";
    }

    std::vector<epan::AdamState<float>> adam(net.parameters().size());
    std::mt19937_64 rng(cfg.train.seed);
    for (int epoch = 0; epoch < cfg.train.epochs; ++epoch) {
        const auto stats = epan::train_epoch(net, adam, samples, cfg.train, epoch, rng);
        json line;
        line["event"] = "epoch";
        line["epoch"] = epoch;
        line["lr"] = epan::lr_at(epoch, cfg.train);
        line["loss"] = stats.mean_total;
        line["mse"] = stats.mean_mse;
        line["edge"] = stats.mean_edge;
        line["een"] = stats.mean_een;
        if (log) log << line.dump() << "\n";
        if ((epoch + 1) % 50 == 0 || epoch + 1 == cfg.train.epochs) {
            std::cerr << "train: epoch " << epoch << " loss " << stats.mean_total << "\n";
        }
        if (checkpoint_every > 0 && (epoch + 1) % checkpoint_every == 0 &&
            epoch + 1 < cfg.train.epochs) {
            epan::save_checkpoint(net, epoch + 1,
                                  out_path + ".epoch" + std::to_string(epoch + 1));
        }
    }

    epan::TrainerState state;
    state.adam = std::move(adam);
    std::ostringstream rng_text;
    rng_text << rng;
    state.rng_state = rng_text.str();
    epan::save_checkpoint(net, cfg.train.epochs, out_path, &state);
    std::cerr << "train: wrote checkpoint " << out_path << "\n";
    return 0;
}

// ---- infer -----------------------------------------------------------------

int cmd_infer(const std::string& checkpoint_path, const std::string& in_dir,
              const std::string& out_dir, const epan::CannyParams& params) {
    params.validate();
    require_file(checkpoint_path, "checkpoint");
    require_dir(in_dir, "input");
    auto ckpt = epan::load_checkpoint(checkpoint_path);
    const auto files = list_pngs(in_dir);
    fs::create_directories(out_dir);
    if (files.empty()) {
        std::cerr << "infer: no .png files in " << in_dir << " (nothing to do)\n";
        return 0;
    }
    int failures = 0;
    for (const auto& file : files) {
        try {
            const epan::Image blurry = epan::read_png(file.string());
            const epan::Image deblurred = epan::infer_image(ckpt.net, blurry, params);
            epan::write_png((fs::path(out_dir) / file.filename()).string(), deblurred);
        } catch (const std::exception& e) {
            std::cerr << "infer: " << file.string() << ": " << e.what() << "\n";
            ++failures;
        }
    }
    std::cerr << "infer: wrote " << (files.size() - failures) << "/" << files.size() << " images to "
              << out_dir << "\n";
    return failures == 0 ? 0 : 2;
}

// ---- eval ------------------------------------------------------------------

int cmd_eval(const std::vector<std::string>& checkpoints, const std::string& manifest_path,
             const std::string& split, const std::string& report_path,
             const std::string& table_path, const epan::CannyParams& params,
             const std::string& data_root) {
    params.validate();
    require_file(manifest_path, "manifest");
    for (const auto& c : checkpoints) {
        require_file(c, "checkpoint");
    }
    const auto manifest = epan::read_manifest(manifest_path);
    const std::string root =
        data_root.empty() ? fs::path(manifest_path).parent_path().string() : data_root;

    std::vector<std::string> labels;
    std::vector<epan::EvalReport> reports;
    for (const auto& path : checkpoints) {
        auto ckpt = epan::load_checkpoint(path);
        labels.push_back(fs::path(path).stem().string());
        reports.push_back(epan::evaluate(ckpt.net, manifest, split, params, root));
    }

    if (!report_path.empty()) {
        std::ofstream out(report_path, std::ios::trunc);
        if (!out) {
            throw epan::io_error("cannot write report: " + report_path);
        }
        if (reports.size() == 1) {
            out << epan::report_to_json(reports[0]) << "\n";
        } else {
            json all = json::object();
            for (std::size_t i = 0; i < reports.size(); ++i) {
                all[labels[i]] = json::parse(epan::report_to_json(reports[i]));
            }
            out << all.dump(2) << "\n";
        }
    }
    const std::string table = epan::report_table(labels, reports);
    if (!table_path.empty()) {
        std::ofstream out(table_path, std::ios::trunc);
        if (!out) {
            throw epan::io_error("cannot write table: " + table_path);
        }
        out << table;
    }
    std::cout << table;
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Edge-prior-augmented motion deblurring: dataset construction, training, "
                 "inference and evaluation"};
    app.require_subcommand(1);

    std::string config_path;
    app.add_option("--config", config_path, "JSON config file (model/train/canny sections)")
        ->envname("EPAN_CONFIG");

    // detect-edges
    auto* de = app.add_subcommand("detect-edges", "write Canny edge maps for a directory of PNGs");
    std::string de_in, de_out;
    double de_sigma = -1, de_low = -1, de_high = -1;
    bool de_soften = false;
    de->add_option("--in", de_in, "input image directory")->required();
    de->add_option("--out", de_out, "output directory")->required();
    de->add_option("--sigma", de_sigma, "Gaussian sigma");
    de->add_option("--low", de_low, "low hysteresis threshold in [0,1]");
    de->add_option("--high", de_high, "high hysteresis threshold in [0,1]");
    de->add_flag("--soften", de_soften, "blur the binary map into a soft mask");

    // make-dataset
    auto* md = app.add_subcommand("make-dataset", "build paired sharp/blurry data plus a manifest");
    std::string md_mode, md_sharp, md_blurry, md_frames, md_boxes, md_out, md_scenario;
    std::string md_train_scenarios;
    int md_train_count = 0;
    double md_kernel_length = 9.0, md_kernel_angle = 0.0;
    int md_kernel_size = 21;
    double md_iou = 0.5, md_min_importance = 0.1;
    unsigned long long md_seed = 0;
    bool md_seed_set = false;
    md->add_option("--mode", md_mode, "kernel | average | align")->required();
    md->add_option("--sharp", md_sharp, "sharp image directory (kernel, align)");
    md->add_option("--blurry", md_blurry, "blurry image directory (align)");
    md->add_option("--frames", md_frames, "clip directory (average)");
    md->add_option("--boxes", md_boxes, "line-delimited JSON box sidecar (align)");
    md->add_option("--out", md_out, "output dataset directory")->required();
    md->add_option("--scenario", md_scenario, "scenario id override");
    md->add_option("--kernel-length", md_kernel_length, "motion kernel length in pixels");
    md->add_option("--kernel-angle", md_kernel_angle, "motion kernel angle in degrees");
    md->add_option("--kernel-size", md_kernel_size, "odd kernel extent");
    md->add_option("--iou", md_iou, "NMS IoU threshold (align)");
    md->add_option("--min-importance", md_min_importance, "importance filter threshold (align)");
    md->add_option("--train-scenarios", md_train_scenarios, "comma-separated train scenario ids");
    md->add_option("--train-scenario-count", md_train_count,
                   "randomly pick this many scenarios for training");
    md->add_option("--seed", md_seed, "seed for the random scenario split")
        ->each([&](const std::string&) { md_seed_set = true; });

    // train
    auto* tr = app.add_subcommand("train", "train one variant on a manifest's train split");
    std::string tr_manifest, tr_out, tr_log, tr_data_root, tr_variant;
    int tr_checkpoint_every = 0;
    int tr_epochs = -1, tr_batch = -1, tr_levels = -1, tr_base = -1, tr_cpl = -1, tr_kernel = -1;
    int tr_crop = -1;
    double tr_lr_start = -1, tr_lr_end = -1, tr_decay = -1, tr_flip = -1, tr_rotate = -1;
    double tr_lambda_c = -1, tr_lambda_e = -1;
    unsigned long long tr_seed = 0;
    bool tr_seed_set = false;
    tr->add_option("--manifest", tr_manifest, "dataset manifest")->required();
    tr->add_option("--out", tr_out, "output checkpoint path")->required();
    tr->add_option("--log", tr_log, "line-delimited JSON training log");
    tr->add_option("--data-root", tr_data_root, "root for manifest-relative paths");
    tr->add_option("--checkpoint-every", tr_checkpoint_every, "periodic checkpoint interval");
    tr->add_option("--variant", tr_variant, "phi | phi_cat | phi_add | phi_att | phi_eal | epan");
    tr->add_option("--levels", tr_levels, "encoder/decoder levels");
    tr->add_option("--base-channels", tr_base, "CDN base channel width");
    tr->add_option("--convs-per-level", tr_cpl, "convolutions per stage");
    tr->add_option("--kernel-size", tr_kernel, "convolution kernel size");
    tr->add_option("--epochs", tr_epochs, "training epochs");
    tr->add_option("--batch-size", tr_batch, "batch size");
    tr->add_option("--crop", tr_crop, "square crop extent");
    tr->add_option("--lr-start", tr_lr_start, "initial learning rate");
    tr->add_option("--lr-end", tr_lr_end, "final learning rate");
    tr->add_option("--decay-power", tr_decay, "schedule warp exponent");
    tr->add_option("--flip-prob", tr_flip, "horizontal flip probability");
    tr->add_option("--rotate-prob", tr_rotate, "right-angle rotation probability");
    tr->add_option("--lambda-c", tr_lambda_c, "edge-guided loss weight");
    tr->add_option("--lambda-e", tr_lambda_e, "EEN loss weight");
    tr->add_option("--seed", tr_seed, "training seed")
        ->each([&](const std::string&) { tr_seed_set = true; });

    // infer
    auto* in = app.add_subcommand("infer", "deblur a directory of PNGs with a checkpoint");
    std::string in_ckpt, in_dir, in_out;
    in->add_option("--checkpoint", in_ckpt, "model checkpoint")->required();
    in->add_option("--in", in_dir, "input image directory")->required();
    in->add_option("--out", in_out, "output directory")->required();

    // eval
    auto* ev = app.add_subcommand("eval", "score checkpoints on a manifest split");
    std::vector<std::string> ev_ckpts;
    std::string ev_manifest, ev_split = "test", ev_report, ev_table, ev_data_root;
    ev->add_option("--checkpoint", ev_ckpts, "model checkpoint (repeatable)")->required();
    ev->add_option("--manifest", ev_manifest, "dataset manifest")->required();
    ev->add_option("--split", ev_split, "manifest split to score (default test)");
    ev->add_option("--report", ev_report, "JSON report path");
    ev->add_option("--table", ev_table, "plain-text table path");
    ev->add_option("--data-root", ev_data_root, "root for manifest-relative paths");

    CLI11_PARSE(app, argc, argv);

    try {
        RunConfig cfg = load_run_config(config_path);

        if (de->parsed()) {
            epan::CannyParams params = cfg.canny;
            if (de_sigma >= 0) params.gaussian_sigma = de_sigma;
            if (de_low >= 0) params.low_threshold = de_low;
            if (de_high >= 0) params.high_threshold = de_high;
            if (de_soften) params.soften = true;
            return cmd_detect_edges(de_in, de_out, params);
        }

        if (md->parsed()) {
            const std::string fallback = md_scenario.empty() ? "default" : md_scenario;
            int rc = 0;
            if (md_mode == "kernel") {
                if (md_sharp.empty()) {
                    throw epan::config_error("make-dataset kernel mode requires --sharp");
                }
                rc = cmd_make_dataset_kernel(md_sharp, md_out, md_kernel_length, md_kernel_angle,
                                             md_kernel_size, fallback);
            } else if (md_mode == "average") {
                if (md_frames.empty()) {
                    throw epan::config_error("make-dataset average mode requires --frames");
                }
                rc = cmd_make_dataset_average(md_frames, md_out, fallback);
            } else if (md_mode == "align") {
                if (md_sharp.empty() || md_blurry.empty() || md_boxes.empty()) {
                    throw epan::config_error(
                        "make-dataset align mode requires --sharp, --blurry and --boxes");
                }
                rc = cmd_make_dataset_align(md_sharp, md_blurry, md_boxes, md_out, md_iou,
                                            md_min_importance, md_scenario);
            } else {
                throw epan::config_error("make-dataset: unknown mode '" + md_mode +
                                         "' (kernel | average | align)");
            }
            if (rc == 0 && (!md_train_scenarios.empty() || md_train_count > 0)) {
                const auto manifest_path = (fs::path(md_out) / "manifest.jsonl").string();
                auto manifest = epan::read_manifest(manifest_path);
                const unsigned long long seed = md_seed_set ? md_seed : cfg.train.seed;
                manifest = apply_split(std::move(manifest), md_train_scenarios, md_train_count, seed);
                epan::write_manifest(manifest, manifest_path);
                std::cerr << "make-dataset: applied scenario split\n";
            }
            return rc;
        }

        if (tr->parsed()) {
            if (!tr_variant.empty()) cfg.model.variant = epan::variant_from_name(tr_variant);
            if (tr_levels > 0) cfg.model.levels = tr_levels;
            if (tr_base > 0) cfg.model.cdn_base_channels = tr_base;
            if (tr_cpl > 0) cfg.model.convs_per_level = tr_cpl;
            if (tr_kernel > 0) cfg.model.kernel_size = tr_kernel;
            if (tr_epochs >= 0) cfg.train.epochs = tr_epochs;
            if (tr_batch > 0) cfg.train.batch_size = tr_batch;
            if (tr_crop > 0) {
                cfg.train.crop_h = tr_crop;
                cfg.train.crop_w = tr_crop;
            }
            if (tr_lr_start > 0) cfg.train.lr_start = tr_lr_start;
            if (tr_lr_end > 0) cfg.train.lr_end = tr_lr_end;
            if (tr_decay > 0) cfg.train.decay_power = tr_decay;
            if (tr_flip >= 0) cfg.train.flip_prob = tr_flip;
            if (tr_rotate >= 0) cfg.train.rotate_prob = tr_rotate;
            if (tr_lambda_c >= 0) cfg.train.weights.lambda_c = tr_lambda_c;
            if (tr_lambda_e >= 0) cfg.train.weights.lambda_e = tr_lambda_e;
            if (tr_seed_set) cfg.train.seed = tr_seed;
            return cmd_train(cfg, tr_manifest, tr_out, tr_log, tr_checkpoint_every, tr_data_root);
        }

        if (in->parsed()) {
            return cmd_infer(in_ckpt, in_dir, in_out, cfg.canny);
        }

        if (ev->parsed()) {
            return cmd_eval(ev_ckpts, ev_manifest, ev_split, ev_report, ev_table, cfg.canny,
                            ev_data_root);
        }
    } catch (const epan::config_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const epan::parameter_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
