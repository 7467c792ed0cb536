#include "xmodal/trainer.hpp"

#include <algorithm>
#include <cmath>

#include "xmodal/error.hpp"
#include "xmodal/ops.hpp"
#include "xmodal/rng.hpp"

namespace xmodal {

TrainState TrainState::init(const RunConfig& config, const ModelDims& dims) {
    config.validate();
    TrainState s{config, dims, Model::init(config, dims), std::nullopt, {}, {}, Adam<float>(AdamConfig{config.lr}),
                 0, 0, 0};
    if (config.mode == LossMode::queue) {
        s.key_model = s.model.key_copy();
        s.language_queue = NegativeQueue(config.queue_size, config.embed_dim);
        s.image_queue = NegativeQueue(config.queue_size, config.embed_dim);
    }
    return s;
}

double scheduled_lr(const RunConfig& config, std::uint64_t step, std::uint64_t total_steps) {
    if (step < config.warmup_steps) {
        return config.lr * static_cast<double>(step + 1) / static_cast<double>(config.warmup_steps);
    }
    if (!config.cosine_decay || total_steps == 0) return config.lr;
    const double t = std::min(1.0, static_cast<double>(step) / static_cast<double>(total_steps));
    return std::max(1e-3 * config.lr, 0.5 * config.lr * (1.0 + std::cos(std::acos(-1.0) * t)));
}

StepReport train_step(TrainState& state, std::span<const PairedRecord> records, std::span<const std::size_t> batch) {
    const RunConfig& cfg = state.config;
    if (batch.size() < 2) throw ValueError("train_step: batch of " + std::to_string(batch.size()) + " (need >= 2)");
    if (batch.size() > cfg.queue_size && cfg.mode == LossMode::queue) {
        throw ValueError("train_step: batch of " + std::to_string(batch.size()) + " exceeds queue_size " +
                         std::to_string(cfg.queue_size));
    }
    // Language sides of different layouts run as separate passes; images are
    // stacked in the same grouped order so rows stay paired.
    const auto groups = group_by_layout(records, batch);
    std::vector<std::size_t> order;
    std::vector<LanguageInput<float>> inputs;
    for (const auto& g : groups) {
        order.insert(order.end(), g.begin(), g.end());
        std::vector<const FeatureSequence*> seqs;
        for (auto i : g) seqs.push_back(&records[i].language);
        inputs.push_back(LanguageInput<float>::from_sequences(seqs));
    }
    const auto images = stack_images(records, order);

    Rng rng(derive_seed(cfg.seed, "step", state.step));
    const bool predict = cfg.pred_loss_weight > 0.0;
    Tape tape;
    auto image_z = state.model.image.encode(tape, images);
    std::vector<Tensor> language_parts;
    std::vector<Tensor> prediction_terms;
    for (const auto& input : inputs) {
        auto out = state.model.language.forward(tape, input, EncodeOptions{true, predict}, &rng);
        language_parts.push_back(out.embedding);
        if (!predict || input.unit_ids.empty()) continue;
        std::vector<std::int64_t> targets(input.unit_ids.size(), -1);
        bool any = false;
        for (std::size_t i = 0; i < targets.size(); ++i) {
            if (out.masked[i]) {
                targets[i] = input.unit_ids[i];
                any = true;
            }
        }
        if (any) {
            const std::size_t C = out.log_probs.shape().back();
            prediction_terms.push_back(
                ops::nll(tape, ops::reshape(tape, out.log_probs, {targets.size(), C}), targets));
        }
    }
    auto language_z = language_parts.size() == 1 ? language_parts.front() : ops::concat_rows(tape, language_parts);

    CxLossConfig loss_cfg{cfg.tau, cfg.mode, cfg.pred_loss_weight};
    QueueNegatives<float> negatives;
    if (cfg.mode == LossMode::queue) {
        negatives.language = state.language_queue.contents();
        negatives.image = state.image_queue.contents();
        negatives.language_full = state.language_queue.full();
        negatives.image_full = state.image_queue.full();
        Tape key_tape(false);
        negatives.image_keys = state.key_model->image.encode(key_tape, images);
        std::vector<Tensor> key_parts;
        for (const auto& input : inputs) {
            key_parts.push_back(state.key_model->language.forward(key_tape, input, EncodeOptions{}, nullptr).embedding);
        }
        negatives.language_keys =
            key_parts.size() == 1 ? key_parts.front() : ops::concat_rows(key_tape, key_parts);
    }
    const Mlp<float>* f = state.model.f ? &*state.model.f : nullptr;
    const Mlp<float>* g = state.model.g ? &*state.model.g : nullptr;
    auto terms = cx_loss(tape, image_z, language_z, loss_cfg, f, g,
                         cfg.mode == LossMode::queue ? &negatives : nullptr);

    StepReport report;
    Tensor total = terms.total;
    if (!prediction_terms.empty()) {
        auto pred = prediction_terms.front();
        for (std::size_t i = 1; i < prediction_terms.size(); ++i) pred = ops::add(tape, pred, prediction_terms[i]);
        pred = ops::scale(tape, pred, 1.0 / static_cast<double>(prediction_terms.size()));
        report.prediction = pred.item();
        total = ops::add(tape, total, ops::scale(tape, pred, cfg.pred_loss_weight));
    }
    report.loss = total.item();
    report.image_to_language = terms.image_to_language.item();
    report.language_to_image = terms.language_to_image.item();
    if (!std::isfinite(report.loss)) throw NumericError("train_step: non-finite loss");

    auto params = state.model.parameters();
    tape.backward(total);
    report.grad_norm = parameter_grad_norm(params);
    if (!std::isfinite(report.grad_norm)) throw NumericError("train_step: non-finite gradient norm");
    if (cfg.max_grad_norm > 0.0 && report.grad_norm > cfg.max_grad_norm) {
        const double s = cfg.max_grad_norm / report.grad_norm;
        for (auto& p : params) {
            for (auto& v : p.tensor.mutable_grad()) v = static_cast<float>(v * s);
        }
    }
    report.lr = scheduled_lr(cfg, state.step, state.total_steps);
    state.optimizer.set_learning_rate(report.lr);
    state.optimizer.step(params);
    ++state.step;

    if (cfg.mode == LossMode::queue) {
        auto key_params = state.key_model->parameters();
        auto query_tower_params = ParameterList<float>{};
        for (auto& p : params) {
            if (p.name.rfind("image.", 0) == 0 || p.name.rfind("language.", 0) == 0) query_tower_params.push_back(p);
        }
        momentum_update(key_params, query_tower_params, cfg.momentum);
        state.image_queue.push(negatives.image_keys);
        state.language_queue.push(negatives.language_keys);
        report.queue_fill = state.language_queue.fill();
    }
    return report;
}

TrainHistory train_loop(TrainState& state, const PairedDataset& dataset, std::size_t epochs,
                        const CheckpointSink& sink) {
    TrainHistory history;
    if (epochs == 0 || state.epoch >= epochs) return history;
    if (dataset.empty()) throw ValueError("train_loop: empty dataset");
    for (const auto& r : dataset.records) state.dims.check(r);
    state.total_steps = static_cast<std::uint64_t>(state.config.epochs) *
                        batch_iter(dataset.size(), state.config.batch_size, state.config.seed, 0).size();
    while (state.epoch < epochs) {
        const auto batches = batch_iter(dataset.size(), state.config.batch_size, state.config.seed, state.epoch);
        if (batches.empty()) throw ValueError("train_loop: dataset too small for a single batch");
        double sum = 0.0;
        for (const auto& b : batches) {
            auto report = train_step(state, dataset.records, b);
            sum += report.loss;
            history.steps.push_back(report);
        }
        history.epoch_loss.push_back(sum / static_cast<double>(batches.size()));
        ++state.epoch;
        if (sink && state.config.checkpoint_every > 0 && state.epoch % state.config.checkpoint_every == 0) {
            sink(state);
        }
    }
    return history;
}

}  // namespace xmodal
