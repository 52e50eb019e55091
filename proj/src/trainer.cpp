#include "epan/trainer.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>

#include "epan/dataset.hpp"

namespace epan {

void TrainConfig::validate() const {
    if (batch_size < 1) {
        throw config_error("train: batch_size must be >= 1");
    }
    if (epochs < 0) {
        throw config_error("train: epochs must be >= 0");
    }
    if (!(lr_end < lr_start) || lr_start <= 0.0 || lr_end <= 0.0) {
        throw config_error("train: need 0 < lr_end < lr_start");
    }
    if (decay_power <= 0.0) {
        throw config_error("train: decay_power must be > 0");
    }
    if (crop_h < 1 || crop_w < 1) {
        throw config_error("train: crop extents must be positive");
    }
    if (flip_prob < 0.0 || flip_prob > 1.0 || rotate_prob < 0.0 || rotate_prob > 1.0) {
        throw config_error("train: flip/rotate probabilities must lie in [0,1]");
    }
    if (rotate_prob > 0.0 && crop_h != crop_w) {
        throw config_error("train: right-angle rotations need square crops, got " +
                           std::to_string(crop_w) + "x" + std::to_string(crop_h));
    }
    weights.validate();
}

std::string train_config_to_json(const TrainConfig& c) {
    nlohmann::json j;
    j["batch_size"] = c.batch_size;
    j["epochs"] = c.epochs;
    j["lr_start"] = c.lr_start;
    j["lr_end"] = c.lr_end;
    j["decay_power"] = c.decay_power;
    j["crop_h"] = c.crop_h;
    j["crop_w"] = c.crop_w;
    j["flip_prob"] = c.flip_prob;
    j["rotate_prob"] = c.rotate_prob;
    j["seed"] = c.seed;
    j["lambda_c"] = c.weights.lambda_c;
    j["lambda_e"] = c.weights.lambda_e;
    return j.dump();
}

TrainConfig train_config_from_json(const std::string& json_text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(json_text);
    } catch (const nlohmann::json::exception& e) {
        throw config_error(std::string("train config: invalid JSON: ") + e.what());
    }
    TrainConfig c;
    try {
        if (j.contains("batch_size")) c.batch_size = j["batch_size"].get<int>();
        if (j.contains("epochs")) c.epochs = j["epochs"].get<int>();
        if (j.contains("lr_start")) c.lr_start = j["lr_start"].get<double>();
        if (j.contains("lr_end")) c.lr_end = j["lr_end"].get<double>();
        if (j.contains("decay_power")) c.decay_power = j["decay_power"].get<double>();
        if (j.contains("crop_h")) c.crop_h = j["crop_h"].get<int>();
        if (j.contains("crop_w")) c.crop_w = j["crop_w"].get<int>();
        if (j.contains("flip_prob")) c.flip_prob = j["flip_prob"].get<double>();
        if (j.contains("rotate_prob")) c.rotate_prob = j["rotate_prob"].get<double>();
        if (j.contains("seed")) c.seed = j["seed"].get<unsigned long long>();
        if (j.contains("lambda_c")) c.weights.lambda_c = j["lambda_c"].get<double>();
        if (j.contains("lambda_e")) c.weights.lambda_e = j["lambda_e"].get<double>();
    } catch (const nlohmann::json::exception& e) {
        throw config_error(std::string("train config: bad field type: ") + e.what());
    }
    c.validate();
    return c;
}

double lr_at(int epoch, const TrainConfig& config) {
    if (epoch < 0 || epoch > config.epochs) {
        throw parameter_error("lr_at: epoch " + std::to_string(epoch) + " outside [0, " +
                              std::to_string(config.epochs) + "]");
    }
    if (config.epochs == 0) {
        return config.lr_start;
    }
    const double progress = static_cast<double>(epoch) / static_cast<double>(config.epochs);
    const double warped = std::pow(progress, config.decay_power);
    return config.lr_start * std::pow(config.lr_end / config.lr_start, warped);
}

TrainSample augment(const TrainSample& sample, int crop_h, int crop_w, double flip_prob,
                    double rotate_prob, std::mt19937_64& rng) {
    if (sample.blurry.height < crop_h || sample.blurry.width < crop_w) {
        throw data_error("augment: source " + std::to_string(sample.blurry.width) + "x" +
                         std::to_string(sample.blurry.height) + " is smaller than the crop " +
                         std::to_string(crop_w) + "x" + std::to_string(crop_h));
    }
    std::uniform_int_distribution<int> oy_dist(0, sample.blurry.height - crop_h);
    std::uniform_int_distribution<int> ox_dist(0, sample.blurry.width - crop_w);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const int oy = oy_dist(rng);
    const int ox = ox_dist(rng);
    const bool flip = unit(rng) < flip_prob;
    int quarter_turns = 0;
    if (unit(rng) < rotate_prob) {
        std::uniform_int_distribution<int> k_dist(1, 3);
        quarter_turns = k_dist(rng);
    }

    auto transform = [&](const Image& img) {
        Image out = crop_image(img, ox, oy, crop_w, crop_h);
        if (flip) {
            out = flip_horizontal(out);
        }
        if (quarter_turns != 0) {
            out = rotate90(out, quarter_turns);
        }
        return out;
    };
    TrainSample out;
    out.blurry = transform(sample.blurry);
    out.sharp = transform(sample.sharp);
    out.blurry_edges = transform(sample.blurry_edges);
    out.sharp_edges = transform(sample.sharp_edges);
    return out;
}

EpochStats train_epoch(Network<float>& net, std::vector<AdamState<float>>& adam,
                       const std::vector<TrainSample>& dataset, const TrainConfig& config,
                       int epoch, std::mt19937_64& rng) {
    if (dataset.empty()) {
        throw data_error("train_epoch: empty dataset");
    }
    const double lr = lr_at(epoch, config);
    const bool needs_een = variant_has_een(net.config.variant);
    auto params = net.parameters();
    if (adam.empty()) {
        adam.resize(params.size());
    }

    std::vector<std::size_t> order(dataset.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);

    EpochStats stats;
    double sum_total = 0.0, sum_mse = 0.0, sum_edge = 0.0, sum_een = 0.0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
        const std::size_t stop = std::min(order.size(), start + config.batch_size);
        std::vector<Image> blurry, sharp, blurry_edges, sharp_edges;
        for (std::size_t i = start; i < stop; ++i) {
            TrainSample s = augment(dataset[order[i]], config.crop_h, config.crop_w,
                                    config.flip_prob, config.rotate_prob, rng);
            blurry.push_back(std::move(s.blurry));
            sharp.push_back(std::move(s.sharp));
            blurry_edges.push_back(std::move(s.blurry_edges));
            sharp_edges.push_back(std::move(s.sharp_edges));
        }
        auto i_b = stack_images<float>(blurry);
        auto i_s = stack_images<float>(sharp);
        auto m_b = stack_images<float>(blurry_edges);
        auto m_s = stack_images<float>(sharp_edges);

        auto result = forward(net, i_b, m_b);
        auto mse = mse_loss(result.deblurred, i_s);
        TensorPtr<float> total;
        double edge_part = 0.0, een_part = 0.0;
        if (variant_uses_edge_loss(net.config.variant)) {
            auto edge = edge_guided_loss(result.deblurred, i_s, m_s);
            edge_part = static_cast<double>(edge->item());
            total = add(mse, scale(edge, static_cast<float>(config.weights.lambda_c)));
        } else {
            total = mse;
        }
        if (needs_een) {
            auto een = een_loss(result.edge_enhanced, m_s, config.weights.lambda_e);
            een_part = static_cast<double>(een->item());
            total = add(total, een);
        }
        const double total_value = static_cast<double>(total->item());
        if (!std::isfinite(total_value)) {
            throw training_error("training aborted: non-finite loss at epoch " +
                                 std::to_string(epoch) + ", batch " +
                                 std::to_string(stats.batches));
        }
        backward(total);
        adam_step(params, adam, lr, kAdamBeta1, kAdamBeta2, kAdamEps);
        net.zero_grad();

        sum_total += total_value;
        sum_mse += static_cast<double>(mse->item());
        sum_edge += edge_part;
        sum_een += een_part;
        stats.batches += 1;
    }
    stats.mean_total = sum_total / stats.batches;
    stats.mean_mse = sum_mse / stats.batches;
    stats.mean_edge = sum_edge / stats.batches;
    stats.mean_een = sum_een / stats.batches;
    return stats;
}

std::vector<TrainSample> load_train_samples(const DatasetManifest& manifest,
                                            const std::string& split,
                                            const CannyParams& edge_params,
                                            const std::string& data_root) {
    const std::string root = data_root.empty() ? std::string(".") : data_root;
    std::vector<TrainSample> samples;
    for (const ManifestRecord& rec : manifest.records) {
        if (rec.split != split) {
            continue;
        }
        TrainSample s;
        s.blurry = read_png(root + "/" + rec.blurry_path);
        s.sharp = read_png(root + "/" + rec.sharp_path);
        s.blurry_edges = canny(s.blurry, edge_params);
        s.sharp_edges = canny(s.sharp, edge_params);
        samples.push_back(std::move(s));
    }
    if (samples.empty()) {
        throw data_error("load_train_samples: split '" + split + "' holds no records");
    }
    return samples;
}

namespace {

constexpr char kMagic[8] = {'E', 'P', 'A', 'N', 'C', 'K', 'P', '1'};

void write_u32(std::ostream& out, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t read_u32(std::istream& in, const std::string& path) {
    unsigned char b[4];
    if (!in.read(reinterpret_cast<char*>(b), 4)) {
        throw io_error("truncated checkpoint: " + path);
    }
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

void write_tensor(std::ostream& out, const std::string& name, const std::vector<int>& shape,
                  const std::vector<float>& values) {
    write_u32(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_u32(out, static_cast<std::uint32_t>(shape.size()));
    for (int e : shape) {
        write_u32(out, static_cast<std::uint32_t>(e));
    }
    write_u32(out, static_cast<std::uint32_t>(values.size()));
    out.write(reinterpret_cast<const char*>(values.data()),
              static_cast<std::streamsize>(values.size() * sizeof(float)));
}

struct StoredTensor {
    std::string name;
    std::vector<int> shape;
    std::vector<float> values;
};

StoredTensor read_tensor(std::istream& in, const std::string& path) {
    StoredTensor t;
    const std::uint32_t name_len = read_u32(in, path);
    t.name.resize(name_len);
    if (!in.read(t.name.data(), name_len)) {
        throw io_error("truncated checkpoint: " + path);
    }
    const std::uint32_t ndim = read_u32(in, path);
    t.shape.resize(ndim);
    for (std::uint32_t i = 0; i < ndim; ++i) {
        t.shape[i] = static_cast<int>(read_u32(in, path));
    }
    const std::uint32_t count = read_u32(in, path);
    t.values.resize(count);
    if (!in.read(reinterpret_cast<char*>(t.values.data()),
                 static_cast<std::streamsize>(count * sizeof(float)))) {
        throw io_error("truncated checkpoint: " + path);
    }
    return t;
}

} // namespace

void save_checkpoint(const Network<float>& net, int epoch, const std::string& path,
                     const TrainerState* state) {
    if (state && state->adam.size() != net.parameters().size()) {
        throw contract_error("save_checkpoint: trainer state does not match the parameter list");
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw io_error("cannot write checkpoint: " + path);
    }
    out.write(kMagic, sizeof(kMagic));

    nlohmann::json meta;
    meta["config"] = nlohmann::json::parse(model_config_to_json(net.config));
    meta["epoch"] = epoch;
    meta["has_adam"] = state != nullptr;
    if (state) {
        meta["rng"] = state->rng_state;
    }
    const std::string meta_str = meta.dump();
    write_u32(out, static_cast<std::uint32_t>(meta_str.size()));
    out.write(meta_str.data(), static_cast<std::streamsize>(meta_str.size()));

    const auto params = net.parameters();
    const auto names = net.parameter_names();
    std::uint32_t tensor_count = static_cast<std::uint32_t>(params.size());
    if (state) {
        tensor_count *= 3;
    }
    write_u32(out, tensor_count);
    for (std::size_t i = 0; i < params.size(); ++i) {
        write_tensor(out, names[i], params[i]->shape, params[i]->data);
        if (state) {
            const AdamState<float>& s = state->adam[i];
            std::vector<float> m = s.first_moment, v = s.second_moment;
            if (m.empty()) m.assign(params[i]->numel(), 0.0f);
            if (v.empty()) v.assign(params[i]->numel(), 0.0f);
            std::vector<int> moment_shape = params[i]->shape;
            write_tensor(out, names[i] + ".adam_m", moment_shape, m);
            write_tensor(out, names[i] + ".adam_v", moment_shape, v);
        }
    }
    if (state) {
        // step counts, one u32 per parameter
        for (const AdamState<float>& s : state->adam) {
            write_u32(out, static_cast<std::uint32_t>(s.step_count));
        }
    }
    if (!out) {
        throw io_error("checkpoint write failed: " + path);
    }
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw io_error("cannot open checkpoint: " + path);
    }
    char magic[8];
    if (!in.read(magic, 8) || std::memcmp(magic, kMagic, 8) != 0) {
        throw io_error("not an EPAN checkpoint (bad magic / unsupported version): " + path);
    }
    const std::uint32_t meta_len = read_u32(in, path);
    std::string meta_str(meta_len, '\0');
    if (!in.read(meta_str.data(), meta_len)) {
        throw io_error("truncated checkpoint: " + path);
    }
    nlohmann::json meta;
    try {
        meta = nlohmann::json::parse(meta_str);
    } catch (const nlohmann::json::exception& e) {
        throw io_error("corrupt checkpoint metadata in " + path + ": " + e.what());
    }

    Checkpoint ckpt{.net = Network<float>{}, .epoch = 0, .state = {}, .has_state = false};
    const ModelConfig config = model_config_from_json(meta.at("config").dump());
    ckpt.net = build_model<float>(config, 0);
    ckpt.epoch = meta.value("epoch", 0);
    ckpt.has_state = meta.value("has_adam", false);
    if (meta.contains("rng")) {
        ckpt.state.rng_state = meta["rng"].get<std::string>();
    }

    const auto params = ckpt.net.parameters();
    const auto names = ckpt.net.parameter_names();
    const std::uint32_t tensor_count = read_u32(in, path);
    const std::uint32_t expected = static_cast<std::uint32_t>(params.size()) * (ckpt.has_state ? 3 : 1);
    if (tensor_count != expected) {
        throw io_error("checkpoint " + path + " holds " + std::to_string(tensor_count) +
                       " tensors, expected " + std::to_string(expected));
    }
    if (ckpt.has_state) {
        ckpt.state.adam.resize(params.size());
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        StoredTensor t = read_tensor(in, path);
        if (t.name != names[i] || t.shape != params[i]->shape) {
            throw io_error("checkpoint " + path + " tensor '" + t.name +
                           "' does not match expected '" + names[i] + "'");
        }
        params[i]->data = std::move(t.values);
        if (ckpt.has_state) {
            StoredTensor m = read_tensor(in, path);
            StoredTensor v = read_tensor(in, path);
            if (m.name != names[i] + ".adam_m" || v.name != names[i] + ".adam_v") {
                throw io_error("checkpoint " + path + " has malformed optimizer tensors");
            }
            ckpt.state.adam[i].first_moment = std::move(m.values);
            ckpt.state.adam[i].second_moment = std::move(v.values);
        }
    }
    if (ckpt.has_state) {
        for (AdamState<float>& s : ckpt.state.adam) {
            s.step_count = static_cast<long long>(read_u32(in, path));
        }
    }
    return ckpt;
}

} // namespace epan
