#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "xmodal/feature.hpp"
#include "xmodal/layers.hpp"

namespace xmodal {

struct LanguageEncoderConfig {
    std::size_t feature_dim = 8;  // frame width f_a
    std::size_t model_dim = 32;
    std::size_t embed_dim = 32;
    std::size_t speech_layers = 2;
    std::size_t shared_layers = 2;
    std::size_t heads = 4;
    std::size_t ffn_dim = 0;  // 0 selects 4 * model_dim
    std::size_t proj_hidden = 0;  // 0 selects model_dim
    std::size_t n_units = 32;  // text unit vocabulary, also the prediction classes
    std::size_t pred_dim = 0;  // 0 selects model_dim
    std::size_t max_length = 64;  // rows of the position table
    double mask_prob = 0.08;
    std::size_t mask_len = 10;
    double swap_prob = 0.15;
    double tau_pred = 0.1;
    double ln_eps = 1e-5;

    std::size_t ffn_width() const { return ffn_dim ? ffn_dim : 4 * model_dim; }
    std::size_t proj_width() const { return proj_hidden ? proj_hidden : model_dim; }
    std::size_t pred_width() const { return pred_dim ? pred_dim : model_dim; }
};

struct SpanMask {
    std::vector<std::uint8_t> masked;  // one flag per position
    std::size_t starts = 0;            // number of span starts drawn
};

// Each position starts a span with probability mask_prob; spans cover
// mask_len positions (truncated at the end) and overlapping spans merge.
SpanMask draw_span_mask(std::size_t length, double mask_prob, std::size_t mask_len, Rng& rng);

// Each unmasked position is selected with probability swap_prob. Masked
// positions are never selected.
std::vector<std::uint8_t> draw_swap_positions(std::span<const std::uint8_t> masked, double swap_prob, Rng& rng);

struct MaskedSequence {
    FeatureSequence sequence;
    SpanMask mask;
};

// Replaces the frames of masked positions with `mask_vector` ([f]).
MaskedSequence apply_span_mask(const FeatureSequence& seq, double mask_prob, std::size_t mask_len, Rng& rng,
                               const Tensor& mask_vector);

// Replaces rows of hidden ([T, c] or [B, T, c]) at selected positions with the
// unit embedding of that position. `swapped` receives the selection.
template <typename T>
BasicTensor<T> random_swap(BasicTape<T>& tape, const BasicTensor<T>& hidden, std::span<const std::uint32_t> unit_ids,
                           const BasicTensor<T>& unit_embeddings, std::span<const std::uint8_t> masked,
                           double swap_prob, Rng& rng, std::vector<std::uint8_t>* swapped = nullptr);

// Masked-prediction head: cosine similarity between K^P n_t and each class
// embedding e_c, softmax with temperature tau.
template <typename T>
struct PredictionHead {
    BasicTensor<T> projection;        // K^P, [c, p]
    BasicTensor<T> class_embeddings;  // e_c, [C, p]
    double tau = 0.1;

    void visit(const std::string& prefix, const ParameterVisitor<T>& fn);
};

// Cosine-similarity logits [.., T, C] before the temperature softmax.
template <typename T>
BasicTensor<T> prediction_logits(BasicTape<T>& tape, const BasicTensor<T>& hidden, const PredictionHead<T>& head);

template <typename T>
BasicTensor<T> masked_prediction_probs(BasicTape<T>& tape, const BasicTensor<T>& hidden, const PredictionHead<T>& head);

// Softmax-normalizes layer_logits, mixes the layer outputs with those weights,
// then averages over time: list of [.., T, c] -> [.., c].
template <typename T>
BasicTensor<T> layer_weighted_pool(BasicTape<T>& tape, const std::vector<BasicTensor<T>>& layer_outputs,
                                   const BasicTensor<T>& layer_logits);

// A batch of equal-length sequences of one modality.
template <typename T>
struct LanguageInput {
    Modality modality = Modality::audio;
    std::size_t batch = 0;
    std::size_t length = 0;
    BasicTensor<T> frames;  // [B, T, f]; undefined for text
    std::vector<std::uint32_t> unit_ids;  // B*T entries or empty

    static LanguageInput from_sequences(std::span<const FeatureSequence* const> seqs);
};

struct EncodeOptions {
    bool training = false;
    bool predictions = false;  // compute Eq.-style masked-prediction outputs
};

template <typename T>
struct LanguageOutput {
    BasicTensor<T> embedding;  // [B, d], unit rows
    BasicTensor<T> probs;      // [B, T, C] when predictions were requested
    BasicTensor<T> log_probs;  // [B, T, C]
    std::vector<std::uint8_t> masked;   // B*T
    std::vector<std::uint8_t> swapped;  // B*T
    std::vector<BasicTensor<T>> layer_outputs;
};

// Speech stack -> random swap at its output -> shared stack -> layer-weighted
// pool -> MLP projector -> L2 normalization. Text input enters the shared
// stack directly as unit embeddings.
template <typename T>
struct LanguageEncoder {
    LanguageEncoderConfig config;
    Linear<T> input_proj;
    BasicTensor<T> positions;       // [max_length, c]
    BasicTensor<T> mask_embedding;  // [f]
    std::vector<TransformerLayer<T>> speech;
    std::vector<TransformerLayer<T>> shared;
    BasicTensor<T> unit_embeddings;  // [n_units, c]
    BasicTensor<T> layer_logits;     // [shared_layers]
    PredictionHead<T> head;
    Mlp<T> projector;

    static LanguageEncoder init(const LanguageEncoderConfig& config, Rng& rng);

    // rng drives masking and swapping; it may be null outside training.
    LanguageOutput<T> forward(BasicTape<T>& tape, const LanguageInput<T>& input, const EncodeOptions& options,
                              Rng* rng) const;

    // Inference embedding of one sequence: [d].
    BasicTensor<T> encode(BasicTape<T>& tape, const FeatureSequence& seq) const;

    void visit(const std::string& prefix, const ParameterVisitor<T>& fn);
};

}  // namespace xmodal
