#include <chrono>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <string>
#include <vector>

#include "xmodal/checkpoint.hpp"
#include "xmodal/config.hpp"
#include "xmodal/data.hpp"
#include "xmodal/evaluate.hpp"
#include "xmodal/language_encoder.hpp"
#include "xmodal/rng.hpp"
#include "xmodal/selfcheck.hpp"
#include "xmodal/trainer.hpp"

using namespace xmodal;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string fmt(const char* format, double value) {
    char buf[64];
    std::snprintf(buf, sizeof buf, format, value);
    return buf;
}

struct Outcome {
    bool passed = true;
    std::string detail;

    void require(bool ok, const std::string& what) {
        passed = passed && ok;
        if (!detail.empty()) detail += "; ";
        detail += what + (ok ? "" : " [below target]");
    }
};

bool report(int criterion, const Outcome& o) {
    std::printf("%s criterion %d: %s\n", o.passed ? "PASS" : "FAIL", criterion, o.detail.c_str());
    std::fflush(stdout);
    return o.passed;
}

Outcome from_checks(const std::vector<CheckResult>& checks) {
    Outcome o;
    for (const auto& c : checks) o.require(c.passed, c.name + ": " + c.detail);
    return o;
}

Outcome criterion_gradients() {
    const auto start = Clock::now();
    auto o = from_checks({check_gradients(20)});
    const double t = seconds_since(start);
    o.require(t < 30.0, "runtime " + fmt("%.1f", t) + " s < 30 s");
    return o;
}

struct TrainedRun {
    Model model;
    Outcome outcome;
};

TrainedRun criterion_end_to_end(const std::string& name, const RunConfig& config, const PairedDataset& dataset) {
    const auto start = Clock::now();
    const auto [train_raw, held_raw] = split_holdout(dataset, config.holdout);
    auto state = TrainState::init(config, ModelDims::from_dataset(dataset));
    train_loop(state, train_raw, config.epochs);
    const double train_time = seconds_since(start);

    const auto train = with_frames(train_raw);
    const auto held = with_frames(held_raw);
    const auto retrieval = evaluate_retrieval(state.model, held);
    const auto zero_shot =
        evaluate_zero_shot(state.model, class_descriptions(dataset, dataset.num_classes()), held, config.topk);
    const auto probe = evaluate_probe(state.model, train, held, dataset.num_classes(),
                                      ProbeOptions{config.probe_epochs, config.probe_lr, config.seed});
    const double total_time = seconds_since(start);

    Outcome o;
    o.require(retrieval.language_to_image >= 0.90,
              name + " MRR language->image " + fmt("%.4f", retrieval.language_to_image) + " >= 0.90");
    o.require(retrieval.image_to_language >= 0.90,
              name + " MRR image->language " + fmt("%.4f", retrieval.image_to_language) + " >= 0.90");
    o.require(zero_shot.accuracy >= 0.80, name + " zero-shot " + fmt("%.4f", zero_shot.accuracy) + " >= 0.80");
    o.require(probe.test_accuracy >= 0.95, name + " probe " + fmt("%.4f", probe.test_accuracy) + " >= 0.95");
    o.require(total_time < 120.0, name + " runtime " + fmt("%.1f", total_time) + " s (training " +
                                      fmt("%.1f", train_time) + " s) < 120 s");
    return {std::move(state.model), o};
}

Outcome criterion_rerank(const Model& trained, const RunConfig& config, const PairedDataset& dataset) {
    const auto held = with_frames(split_holdout(dataset, config.holdout).second);
    const std::size_t pool_size = 20, pools = 1000;
    Outcome o;
    const auto good = evaluate_rerank_recovery(trained, held, pool_size, pools, 7);
    o.require(good.recovery >= 0.95, "trained recovery " + fmt("%.4f", good.recovery) + " >= 0.95");

    const auto untrained_model = Model::init(config, ModelDims::from_dataset(dataset));
    const auto chance = evaluate_rerank_recovery(untrained_model, held, pool_size, pools, 7);
    const double p = 1.0 / pool_size;
    const double band = 3.0 * std::sqrt(p * (1.0 - p) / pools);
    o.require(std::abs(chance.recovery - p) <= band,
              "untrained recovery " + fmt("%.4f", chance.recovery) + " within " + fmt("%.4f", band) + " of 0.05");
    return o;
}

RunConfig small_config(LossMode mode) {
    RunConfig c;
    for (const auto* kv : {"embed_dim=8", "model_dim=8", "grid_size=2", "sa_layers=1", "speech_layers=1",
                           "shared_layers=1", "heads=2", "batch_size=8", "mask_len=3", "queue_size=16", "epochs=4"}) {
        const auto [k, v] = split_assignment(kv);
        c.set(k, v);
    }
    c.mode = mode;
    c.seed = 3;
    return c;
}

Outcome criterion_determinism() {
    SyntheticSpec spec;
    spec.n_pairs = 48;
    spec.n_classes = 4;
    spec.height = spec.width = 4;
    spec.channels = 3;
    spec.seq_len = 8;
    spec.feature_dim = 4;
    spec.n_units = 8;
    const auto data = generate_synthetic_pairs(spec);
    const auto dims = ModelDims::from_dataset(data);

    Outcome o;
    for (const auto mode : {LossMode::in_batch, LossMode::queue}) {
        const auto config = small_config(mode);
        const std::string name = mode == LossMode::queue ? "queue" : "in_batch";

        auto full = TrainState::init(config, dims);
        const auto full_history = train_loop(full, data, config.epochs);
        auto again = TrainState::init(config, dims);
        train_loop(again, data, config.epochs);
        o.require(encode_checkpoint(full) == encode_checkpoint(again), name + " double run byte-identical");

        auto first = TrainState::init(config, dims);
        const auto head = train_loop(first, data, 2);
        auto resumed = decode_checkpoint(encode_checkpoint(first), "memory");
        const auto tail = train_loop(resumed, data, config.epochs);
        std::vector<double> split;
        for (const auto& s : head.steps) split.push_back(s.loss);
        for (const auto& s : tail.steps) split.push_back(s.loss);
        double worst = split.size() == full_history.steps.size() ? 0.0 : INFINITY;
        for (std::size_t i = 0; std::isfinite(worst) && i < split.size(); ++i) {
            worst = std::max(worst, std::abs(split[i] - full_history.steps[i].loss));
        }
        o.require(worst <= 1e-6, name + " resume loss deviation " + fmt("%.2g", worst) + " <= 1e-6");
        o.require(encode_checkpoint(resumed) == encode_checkpoint(full), name + " resumed checkpoint byte-identical");
    }

    const RunConfig d;
    const bool defaults = d.tau == 0.07 && d.momentum == 0.99 && d.queue_size == 9600 && d.grid_size == 4 &&
                          d.topk == 1 && d.mask_prob == 0.08 && d.mask_len == 10 && d.tau_pred == 0.1 &&
                          d.sa_layers == 4 && d.swap_prob == 0.15;
    o.require(defaults, "config defaults tau 0.07, momentum 0.99, queue 9600, grid 4, topk 1, mask 0.08/10, "
                        "tau_pred 0.1, sa_layers 4, swap 0.15");
    return o;
}

Outcome criterion_masking() {
    const std::size_t T = 1000, seeds = 100;
    const double p = 0.08;
    double total = 0.0;
    bool disjoint = true;
    for (std::size_t seed = 0; seed < seeds; ++seed) {
        Rng rng(derive_seed(seed, "acceptance-mask"));
        const auto mask = draw_span_mask(T, p, 10, rng);
        total += static_cast<double>(mask.starts);
        const auto swaps = draw_swap_positions(mask.masked, 0.15, rng);
        for (std::size_t i = 0; i < T; ++i) disjoint = disjoint && !(mask.masked[i] && swaps[i]);
    }
    const double mean = total / seeds;
    const double sigma = std::sqrt(T * p * (1 - p) / seeds);
    Outcome o;
    o.require(std::abs(mean - p * T) <= 3 * sigma,
              "mean span starts " + fmt("%.2f", mean) + " vs 80 within " + fmt("%.2f", 3 * sigma));
    o.require(disjoint, "mask and swap positions disjoint on all draws");
    return o;
}

}  // namespace

int main() {
    bool ok = true;
    ok &= report(1, criterion_gradients());
    ok &= report(2, from_checks({check_loss_identities()}));
    ok &= report(3, from_checks({check_queue_momentum(10000)}));
    ok &= report(4, from_checks({check_metric_oracles(100)}));

    const std::string dir = XMODAL_SOURCE_DIR "/configs/";
    const auto in_batch = parse_config(dir + "acceptance.conf", {});
    const auto queue = parse_config(dir + "acceptance_queue.conf", {});
    const auto dataset = generate_synthetic_pairs(SyntheticSpec{});
    auto a = criterion_end_to_end("in_batch", in_batch, dataset);
    const auto b = criterion_end_to_end("queue", queue, dataset);
    const Outcome both{a.outcome.passed && b.outcome.passed, a.outcome.detail + "; " + b.outcome.detail};
    ok &= report(5, both);

    ok &= report(6, criterion_rerank(a.model, in_batch, dataset));
    ok &= report(7, criterion_determinism());
    ok &= report(8, criterion_masking());
    return ok ? 0 : 1;
}
