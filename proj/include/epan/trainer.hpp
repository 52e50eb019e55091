#pragma once

#include <random>
#include <string>
#include <vector>

#include "epan/dataset.hpp"
#include "epan/edge.hpp"
#include "epan/image.hpp"
#include "epan/losses.hpp"
#include "epan/model.hpp"

namespace epan {

// Fixed optimizer coefficients of the training protocol.
constexpr double kAdamBeta1 = 0.9;
constexpr double kAdamBeta2 = 0.999;
constexpr double kAdamEps = 1e-7;

struct TrainConfig {
    int batch_size = 4;
    int epochs = 1500;
    double lr_start = 1e-3;
    double lr_end = 1e-6;
    double decay_power = 0.3;
    int crop_h = 64;
    int crop_w = 64;
    double flip_prob = 0.5;
    double rotate_prob = 0.5;
    unsigned long long seed = 0;
    LossWeights weights;

    void validate() const;
};

std::string train_config_to_json(const TrainConfig& config);
TrainConfig train_config_from_json(const std::string& json_text);

// lr(e) = lr_start * (lr_end/lr_start)^((e/epochs)^decay_power): a log-linear
// sweep from lr_start to lr_end warped by the decay power. Monotone
// non-increasing with exact endpoints.
double lr_at(int epoch, const TrainConfig& config);

// One training example: blurry/sharp images and their precomputed edge maps,
// all geometrically locked together.
struct TrainSample {
    Image blurry;      // I_B
    Image sharp;       // I_S
    Image blurry_edges; // M_B
    Image sharp_edges;  // M_S
};

// One crop offset, one flip decision, one right-angle rotation, drawn once
// and applied to all four planes identically.
TrainSample augment(const TrainSample& sample, int crop_h, int crop_w, double flip_prob,
                    double rotate_prob, std::mt19937_64& rng);

struct EpochStats {
    double mean_total = 0.0;
    double mean_mse = 0.0;
    double mean_edge = 0.0;
    double mean_een = 0.0;
    int batches = 0;
};

// Reshuffles the queue, then per batch: forward, total loss, backward, Adam
// step at lr_at(epoch), gradient reset. Aborts with a diagnostic on a
// non-finite loss.
EpochStats train_epoch(Network<float>& net, std::vector<AdamState<float>>& adam,
                       const std::vector<TrainSample>& dataset, const TrainConfig& config,
                       int epoch, std::mt19937_64& rng);

// Loads manifest records of one split and precomputes edge maps once per
// image (crops are taken from these, never re-detected).
std::vector<TrainSample> load_train_samples(const DatasetManifest& manifest,
                                            const std::string& split,
                                            const CannyParams& edge_params,
                                            const std::string& data_root);

// Optimizer/rng state carried alongside the parameters so training can resume
// exactly where it stopped.
struct TrainerState {
    std::vector<AdamState<float>> adam;
    std::string rng_state; // serialized mt19937_64, empty if absent
};

// Versioned binary container: config JSON + named parameter tensors with
// shape headers (+ Adam moments when a TrainerState is given). Byte-stable
// for identical contents.
void save_checkpoint(const Network<float>& net, int epoch, const std::string& path,
                     const TrainerState* state = nullptr);

struct Checkpoint {
    Network<float> net;
    int epoch = 0;
    TrainerState state; // adam empty if the file carried none
    bool has_state = false;
};

Checkpoint load_checkpoint(const std::string& path);

} // namespace epan
