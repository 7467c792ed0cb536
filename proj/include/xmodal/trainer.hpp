#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "xmodal/model.hpp"
#include "xmodal/optim.hpp"

namespace xmodal {

// Everything needed to continue training bit-identically.
struct TrainState {
    RunConfig config;
    ModelDims dims;
    Model model;
    std::optional<Model> key_model;  // momentum towers, queue mode only
    NegativeQueue language_queue;    // key-encoder language embeddings
    NegativeQueue image_queue;       // key-encoder image embeddings
    Adam<float> optimizer;
    std::uint64_t epoch = 0;  // completed epochs
    std::uint64_t step = 0;   // completed optimizer steps
    std::uint64_t total_steps = 0;  // planned steps, for the lr schedule (0: unknown)

    static TrainState init(const RunConfig& config, const ModelDims& dims);
};

// Learning rate for the next step under the configured schedule.
double scheduled_lr(const RunConfig& config, std::uint64_t step, std::uint64_t total_steps);

struct StepReport {
    double loss = 0.0;
    double image_to_language = 0.0;
    double language_to_image = 0.0;
    double prediction = 0.0;
    double grad_norm = 0.0;
    double lr = 0.0;
    std::size_t queue_fill = 0;
};

// One optimizer step on the selected records. A non-finite value anywhere in
// the forward pass throws NumericError before any parameter changes.
StepReport train_step(TrainState& state, std::span<const PairedRecord> records, std::span<const std::size_t> batch);

struct TrainHistory {
    std::vector<double> epoch_loss;  // mean step loss per epoch
    std::vector<StepReport> steps;
};

using CheckpointSink = std::function<void(const TrainState&)>;

// Runs epochs state.epoch .. epochs-1. The sink is called after every
// config.checkpoint_every epochs (never when that is 0).
TrainHistory train_loop(TrainState& state, const PairedDataset& dataset, std::size_t epochs,
                        const CheckpointSink& sink = {});

}  // namespace xmodal
