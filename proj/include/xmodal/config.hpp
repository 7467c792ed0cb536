#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "xmodal/contrastive.hpp"

namespace xmodal {

struct RunConfig {
    // model
    std::size_t embed_dim = 32;
    std::size_t model_dim = 32;
    std::size_t grid_size = 4;
    std::size_t sa_layers = 4;
    std::size_t speech_layers = 2;
    std::size_t shared_layers = 2;
    std::size_t heads = 4;
    bool projection_heads = false;  // f and g as 2-layer MLPs instead of identity

    // language-side training noise
    double mask_prob = 0.08;
    std::size_t mask_len = 10;
    double swap_prob = 0.15;
    double tau_pred = 0.1;

    // objective
    double tau = 0.07;
    double momentum = 0.99;
    std::size_t queue_size = 9600;
    LossMode mode = LossMode::in_batch;
    double pred_loss_weight = 0.0;

    // optimization
    std::size_t batch_size = 32;
    std::size_t epochs = 30;
    double lr = 1e-3;
    bool cosine_decay = false;  // anneal lr to 0 over the configured epochs
    std::size_t warmup_steps = 0;  // linear lr ramp over the first steps
    double max_grad_norm = 0.0;  // 0 disables clipping
    std::uint64_t seed = 0;
    std::size_t checkpoint_every = 0;  // epochs; 0 writes only the final checkpoint

    // evaluation
    std::size_t topk = 1;
    double holdout = 0.25;
    std::size_t probe_epochs = 100;
    double probe_lr = 1e-2;
    std::size_t pool_size = 20;
    std::size_t pools = 1000;

    // Sets one key from its textual value. Throws ValueError on an unknown
    // key, an unparsable value or an out-of-range value.
    void set(std::string_view key, std::string_view value);
    std::string get(std::string_view key) const;
    void validate() const;

    static const std::vector<std::string>& keys();
    // "key=value" lines for every key, in keys() order.
    std::string to_text() const;
};

// Applies "key=value" lines ('#' starts a comment, blank lines ignored).
// Errors name the source and the line number.
void apply_config_text(RunConfig& config, std::string_view text, const std::string& source);

// Defaults, then the file (when non-empty path), then each KEY=VALUE override.
RunConfig parse_config(const std::filesystem::path& path, const std::vector<std::string>& overrides);

std::pair<std::string, std::string> split_assignment(std::string_view text);

}  // namespace xmodal
