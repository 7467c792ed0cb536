#include "xmodal/language_encoder.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "xmodal/ops.hpp"

namespace xmodal {

SpanMask draw_span_mask(std::size_t length, double mask_prob, std::size_t mask_len, Rng& rng) {
    if (!(mask_prob >= 0.0 && mask_prob <= 1.0)) {
        throw ValueError("span mask: probability must lie in [0, 1], got " + std::to_string(mask_prob));
    }
    if (mask_len == 0) throw ValueError("span mask: span length must be at least 1");
    SpanMask mask;
    mask.masked.assign(length, 0);
    for (std::size_t i = 0; i < length; ++i) {
        if (!rng.bernoulli(mask_prob)) continue;
        ++mask.starts;
        const std::size_t end = std::min(length, i + mask_len);
        std::fill(mask.masked.begin() + static_cast<std::ptrdiff_t>(i),
                  mask.masked.begin() + static_cast<std::ptrdiff_t>(end), 1);
    }
    return mask;
}

std::vector<std::uint8_t> draw_swap_positions(std::span<const std::uint8_t> masked, double swap_prob, Rng& rng) {
    if (!(swap_prob >= 0.0 && swap_prob <= 1.0)) {
        throw ValueError("random swap: probability must lie in [0, 1], got " + std::to_string(swap_prob));
    }
    std::vector<std::uint8_t> swapped(masked.size(), 0);
    for (std::size_t i = 0; i < masked.size(); ++i) {
        if (!masked[i] && rng.bernoulli(swap_prob)) swapped[i] = 1;
    }
    return swapped;
}

MaskedSequence apply_span_mask(const FeatureSequence& seq, double mask_prob, std::size_t mask_len, Rng& rng,
                               const Tensor& mask_vector) {
    if (!seq.frames) throw ValueError("span mask: sequence has no frames");
    const std::size_t T = seq.length(), f = seq.feature_dim();
    if (mask_vector.shape() != Shape{f}) {
        throw ShapeError("span mask: mask vector " + shape_to_string(mask_vector.shape()) + " does not match width " +
                         std::to_string(f));
    }
    MaskedSequence out{seq, draw_span_mask(T, mask_prob, mask_len, rng)};
    std::vector<float> frames = seq.frames->values();
    for (std::size_t t = 0; t < T; ++t) {
        if (out.mask.masked[t]) std::copy_n(mask_vector.data().begin(), f, frames.begin() + t * f);
    }
    out.sequence.frames = Tensor(seq.frames->shape(), std::move(frames));
    return out;
}

template <typename T>
BasicTensor<T> random_swap(BasicTape<T>& tape, const BasicTensor<T>& hidden, std::span<const std::uint32_t> unit_ids,
                           const BasicTensor<T>& unit_embeddings, std::span<const std::uint8_t> masked,
                           double swap_prob, Rng& rng, std::vector<std::uint8_t>* swapped) {
    const std::size_t rows = hidden.size() / hidden.shape().back();
    if (masked.size() != rows) {
        throw ShapeError("random swap: mask covers " + std::to_string(masked.size()) + " of " + std::to_string(rows) +
                         " positions");
    }
    if (swap_prob > 0.0 && unit_ids.empty()) throw ValueError("random swap: sequence carries no unit ids");
    auto selection = draw_swap_positions(masked, swap_prob, rng);
    const bool any = std::any_of(selection.begin(), selection.end(), [](std::uint8_t s) { return s != 0; });
    if (swapped) *swapped = selection;
    if (!any) return hidden;
    if (unit_ids.size() != rows) {
        throw ShapeError("random swap: " + std::to_string(unit_ids.size()) + " unit ids for " + std::to_string(rows) +
                         " positions");
    }
    auto units = ops::reshape(tape, ops::gather_rows(tape, unit_embeddings, unit_ids), hidden.shape());
    return ops::select_rows(tape, std::span<const std::uint8_t>(selection), units, hidden);
}

template <typename T>
void PredictionHead<T>::visit(const std::string& prefix, const ParameterVisitor<T>& fn) {
    fn(prefix + "projection", projection);
    fn(prefix + "class_embeddings", class_embeddings);
}

template <typename T>
BasicTensor<T> prediction_logits(BasicTape<T>& tape, const BasicTensor<T>& hidden, const PredictionHead<T>& head) {
    auto projected = ops::l2_normalize(tape, ops::matmul(tape, hidden, head.projection));
    auto classes = ops::l2_normalize(tape, head.class_embeddings);
    if (projected.rank() == 3) {
        const Shape s = projected.shape();
        auto flat = ops::reshape(tape, projected, {s[0] * s[1], s[2]});
        auto logits = ops::matmul(tape, flat, classes, /*transpose_b=*/true);
        return ops::reshape(tape, logits, {s[0], s[1], classes.dim(0)});
    }
    return ops::matmul(tape, projected, classes, /*transpose_b=*/true);
}

template <typename T>
BasicTensor<T> masked_prediction_probs(BasicTape<T>& tape, const BasicTensor<T>& hidden, const PredictionHead<T>& head) {
    return ops::softmax_with_temperature(tape, prediction_logits(tape, hidden, head), head.tau);
}

template <typename T>
BasicTensor<T> layer_weighted_pool(BasicTape<T>& tape, const std::vector<BasicTensor<T>>& layer_outputs,
                                   const BasicTensor<T>& layer_logits) {
    if (layer_outputs.empty()) throw ShapeError("layer_weighted_pool: no layer outputs");
    auto weights = ops::softmax_with_temperature(tape, layer_logits, 1.0);
    return ops::mean_rows(tape, ops::weighted_sum(tape, layer_outputs, weights));
}

template <typename T>
LanguageInput<T> LanguageInput<T>::from_sequences(std::span<const FeatureSequence* const> seqs) {
    if (seqs.empty()) throw ShapeError("language input: empty batch");
    LanguageInput in;
    in.modality = seqs.front()->modality;
    in.batch = seqs.size();
    in.length = seqs.front()->length();
    const bool with_units = seqs.front()->has_units();
    const std::size_t f = seqs.front()->feature_dim();
    std::vector<T> frames;
    for (const auto* seq : seqs) {
        seq->validate();
        if (seq->modality != in.modality || seq->length() != in.length || seq->has_units() != with_units ||
            seq->feature_dim() != f) {
            throw ShapeError("language input: batch mixes modalities, lengths or widths");
        }
        if (seq->frames) {
            for (float v : seq->frames->data()) frames.push_back(static_cast<T>(v));
        }
        in.unit_ids.insert(in.unit_ids.end(), seq->unit_ids.begin(), seq->unit_ids.end());
    }
    if (in.modality != Modality::text) {
        in.frames = BasicTensor<T>({in.batch, in.length, f}, std::move(frames));
    }
    return in;
}

template <typename T>
LanguageEncoder<T> LanguageEncoder<T>::init(const LanguageEncoderConfig& config, Rng& rng) {
    if (config.model_dim % config.heads != 0) {
        throw ShapeError("language encoder: model_dim " + std::to_string(config.model_dim) + " not divisible by " +
                         std::to_string(config.heads) + " heads");
    }
    if (config.shared_layers == 0) throw ValueError("language encoder: needs at least one shared layer");
    if (!(config.tau_pred > 0.0)) throw ValueError("language encoder: tau_pred must be positive");
    LanguageEncoder enc;
    enc.config = config;
    const std::size_t c = config.model_dim;
    enc.input_proj = Linear<T>::init(config.feature_dim, c, rng);
    enc.positions = random_tensor<T>({config.max_length, c}, 0.02, rng);
    enc.mask_embedding = random_tensor<T>({config.feature_dim}, 1.0, rng);
    for (std::size_t i = 0; i < config.speech_layers; ++i) {
        enc.speech.push_back(TransformerLayer<T>::init(c, config.heads, config.ffn_width(), config.ln_eps, rng));
    }
    for (std::size_t i = 0; i < config.shared_layers; ++i) {
        enc.shared.push_back(TransformerLayer<T>::init(c, config.heads, config.ffn_width(), config.ln_eps, rng));
    }
    enc.unit_embeddings = random_tensor<T>({config.n_units, c}, 1.0, rng);
    enc.layer_logits = BasicTensor<T>::zeros({config.shared_layers}, true);
    enc.head.projection = random_tensor<T>({c, config.pred_width()}, 1.0 / std::sqrt(static_cast<double>(c)), rng);
    enc.head.class_embeddings = random_tensor<T>({config.n_units, config.pred_width()}, 1.0, rng);
    enc.head.tau = config.tau_pred;
    enc.projector = Mlp<T>::init(c, config.proj_width(), config.embed_dim, rng);
    return enc;
}

template <typename T>
LanguageOutput<T> LanguageEncoder<T>::forward(BasicTape<T>& tape, const LanguageInput<T>& input,
                                              const EncodeOptions& options, Rng* rng) const {
    const std::size_t B = input.batch, L = input.length, c = config.model_dim;
    if (B == 0 || L == 0) throw ShapeError("language encoder: empty sequence");
    if (!input.unit_ids.empty()) {
        if (input.unit_ids.size() != B * L) throw ShapeError("language encoder: unit ids do not cover the batch");
        for (auto id : input.unit_ids) {
            if (id >= config.n_units) {
                throw ValueError("language encoder: unit id " + std::to_string(id) + " outside the vocabulary of " +
                                 std::to_string(config.n_units));
            }
        }
    }
    LanguageOutput<T> out;
    out.masked.assign(B * L, 0);
    out.swapped.assign(B * L, 0);

    BasicTensor<T> hidden;
    if (input.modality == Modality::text) {
        if (input.unit_ids.empty()) throw ValueError("language encoder: text input needs unit ids");
        if (input.frames.defined()) throw ValueError("language encoder: text input must not carry frames");
        hidden = ops::reshape(tape, ops::gather_rows(tape, unit_embeddings, input.unit_ids), {B, L, c});
    } else {
        if (!input.frames.defined()) throw ValueError("language encoder: audio input needs frames");
        if (input.modality == Modality::fused && input.unit_ids.empty()) {
            throw ValueError("language encoder: fused input needs unit ids");
        }
        if (input.frames.shape() != Shape{B, L, config.feature_dim}) {
            throw ShapeError("language encoder: frames " + shape_to_string(input.frames.shape()) + " do not match [" +
                             std::to_string(B) + "x" + std::to_string(L) + "x" + std::to_string(config.feature_dim) +
                             "]");
        }
        if (L > config.max_length) {
            throw ShapeError("language encoder: length " + std::to_string(L) + " exceeds the position table (" +
                             std::to_string(config.max_length) + ")");
        }
        const bool training = options.training && rng != nullptr;
        BasicTensor<T> frames = input.frames;
        if (training && config.mask_prob > 0.0) {
            for (std::size_t b = 0; b < B; ++b) {
                auto span = draw_span_mask(L, config.mask_prob, config.mask_len, *rng);
                std::copy(span.masked.begin(), span.masked.end(), out.masked.begin() + b * L);
            }
            if (std::any_of(out.masked.begin(), out.masked.end(), [](std::uint8_t m) { return m != 0; })) {
                auto fill = ops::add_broadcast(tape, BasicTensor<T>::zeros(frames.shape()), mask_embedding);
                frames = ops::select_rows(tape, std::span<const std::uint8_t>(out.masked), fill, frames);
            }
        }
        std::vector<std::uint32_t> first_rows(L);
        std::iota(first_rows.begin(), first_rows.end(), 0u);
        hidden = ops::add_broadcast(tape, input_proj.forward(tape, frames),
                                    ops::gather_rows(tape, positions, std::span<const std::uint32_t>(first_rows)));
        for (const auto& layer : speech) hidden = layer.forward(tape, hidden);
        if (training && config.swap_prob > 0.0) {
            hidden = random_swap(tape, hidden, input.unit_ids, unit_embeddings, out.masked, config.swap_prob, *rng,
                                 &out.swapped);
        }
    }
    for (const auto& layer : shared) {
        hidden = layer.forward(tape, hidden);
        out.layer_outputs.push_back(hidden);
    }
    auto pooled = layer_weighted_pool(tape, out.layer_outputs, layer_logits);
    out.embedding = ops::l2_normalize(tape, projector.forward(tape, pooled));
    if (options.predictions) {
        auto logits = prediction_logits(tape, out.layer_outputs.back(), head);
        out.probs = ops::softmax_with_temperature(tape, logits, head.tau);
        out.log_probs = ops::log_softmax_with_temperature(tape, logits, head.tau);
    }
    return out;
}

template <typename T>
BasicTensor<T> LanguageEncoder<T>::encode(BasicTape<T>& tape, const FeatureSequence& seq) const {
    seq.validate(config.n_units);
    const FeatureSequence* ptr = &seq;
    auto input = LanguageInput<T>::from_sequences(std::span<const FeatureSequence* const>(&ptr, 1));
    auto out = forward(tape, input, EncodeOptions{}, nullptr);
    return ops::reshape(tape, out.embedding, {config.embed_dim});
}

template <typename T>
void LanguageEncoder<T>::visit(const std::string& prefix, const ParameterVisitor<T>& fn) {
    input_proj.visit(prefix + "input_proj.", fn);
    fn(prefix + "positions", positions);
    fn(prefix + "mask_embedding", mask_embedding);
    for (std::size_t i = 0; i < speech.size(); ++i) speech[i].visit(prefix + "speech." + std::to_string(i) + ".", fn);
    for (std::size_t i = 0; i < shared.size(); ++i) shared[i].visit(prefix + "shared." + std::to_string(i) + ".", fn);
    fn(prefix + "unit_embeddings", unit_embeddings);
    fn(prefix + "layer_logits", layer_logits);
    head.visit(prefix + "pred.", fn);
    projector.visit(prefix + "proj.", fn);
}

#define XMODAL_INSTANTIATE_LANGUAGE(T)                                                                              \
    template BasicTensor<T> random_swap(BasicTape<T>&, const BasicTensor<T>&, std::span<const std::uint32_t>,       \
                                        const BasicTensor<T>&, std::span<const std::uint8_t>, double, Rng&,         \
                                        std::vector<std::uint8_t>*);                                                \
    template struct PredictionHead<T>;                                                                              \
    template BasicTensor<T> prediction_logits(BasicTape<T>&, const BasicTensor<T>&, const PredictionHead<T>&);      \
    template BasicTensor<T> masked_prediction_probs(BasicTape<T>&, const BasicTensor<T>&, const PredictionHead<T>&); \
    template BasicTensor<T> layer_weighted_pool(BasicTape<T>&, const std::vector<BasicTensor<T>>&,                  \
                                                const BasicTensor<T>&);                                             \
    template struct LanguageInput<T>;                                                                               \
    template struct LanguageEncoder<T>;

XMODAL_INSTANTIATE_LANGUAGE(float)
XMODAL_INSTANTIATE_LANGUAGE(double)

#undef XMODAL_INSTANTIATE_LANGUAGE

}  // namespace xmodal
