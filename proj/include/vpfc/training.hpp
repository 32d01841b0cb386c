#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vpfc/dataset.hpp"
#include "vpfc/models.hpp"

namespace vpfc::training {

struct TrainConfig {
    int batch_size = 32;
    double lr = 0.001;
    double weight_decay = 0.0005;
    int epochs = 500;
    std::uint64_t seed = 0;
    models::PredictorConfig predictor;
    // Nonempty: each training window gets a fresh center reduce mask per epoch with
    // k drawn from this list, so one model serves every k at evaluation time.
    std::vector<int> k_augment;

    void validate() const;
};

struct EpochRecord {
    int epoch = 0;
    double train_loss = 0.0;
    double val_loss = 0.0;
};

// Parameter state at the epoch of minimum validation loss, plus the run's
// configuration and per-epoch loss curve.
struct Checkpoint {
    TrainConfig train_config;
    int best_epoch = 0;
    double best_val_loss = 0.0;
    std::vector<nn::NamedArray> params;
    std::vector<EpochRecord> curve;
};

// Seeded mini-batch training: shuffled batches per epoch (last partial batch
// kept), MSE on canonical quaternion targets, one Adam step per batch, full
// validation loss after every epoch.
Checkpoint train(const std::vector<data::WindowSample>& train_set,
                 const std::vector<data::WindowSample>& val_set,
                 const data::FrameCatalog* catalog, const TrainConfig& cfg);

// Mean elementwise squared error of raw model outputs over a window set.
double evaluate_loss(const models::SequencePredictor& model,
                     const std::vector<data::WindowSample>& windows,
                     const data::FrameCatalog* catalog);

// best.ckpt = parameter blob followed by a key=value config block.
void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

models::SequencePredictor model_from_checkpoint(const Checkpoint& ckpt);

void write_curve_csv(const std::string& path, const std::vector<EpochRecord>& curve);

}  // namespace vpfc::training
