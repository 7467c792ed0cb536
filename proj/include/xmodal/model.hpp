#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "xmodal/config.hpp"
#include "xmodal/data.hpp"
#include "xmodal/image_encoder.hpp"
#include "xmodal/language_encoder.hpp"

namespace xmodal {

// Input-side extents that the towers need but the run config does not carry.
struct ModelDims {
    std::size_t image_height = 0;
    std::size_t image_width = 0;
    std::size_t image_channels = 0;
    std::size_t feature_dim = 0;
    std::size_t n_units = 0;
    std::size_t max_length = 0;

    static ModelDims from_dataset(const PairedDataset& dataset);
    // Throws ValueError when a record does not fit these extents.
    void check(const PairedRecord& record) const;
};

ImageEncoderConfig image_encoder_config(const RunConfig& config, const ModelDims& dims);
LanguageEncoderConfig language_encoder_config(const RunConfig& config, const ModelDims& dims);

struct Model {
    ImageEncoder<float> image;
    LanguageEncoder<float> language;
    std::optional<Mlp<float>> f;  // applied to image embeddings in the image->language term
    std::optional<Mlp<float>> g;  // applied to language embeddings in the language->image term

    static Model init(const RunConfig& config, const ModelDims& dims);

    // Gradient-free deep copy of the two towers (no projection heads).
    Model key_copy() const;

    // f / g applied and re-normalized; identity when the heads are absent.
    Tensor project_image(const Tensor& image_z) const;
    Tensor project_language(const Tensor& language_z) const;

    ParameterList<float> parameters();
    void visit(const std::string& prefix, const ParameterVisitor<float>& fn);
};

// Splits the selected records into groups whose language sides can share one
// forward pass (same modality, length and frame width). Groups appear in
// order of first occurrence; indices keep their order within a group.
std::vector<std::vector<std::size_t>> group_by_layout(std::span<const PairedRecord> records,
                                                      std::span<const std::size_t> indices);

// [B, H, W, f] stack of the images of the selected records.
Tensor stack_images(std::span<const PairedRecord> records, std::span<const std::size_t> indices);

// Inference embeddings, one unit row per record: [N, d].
Tensor embed_images(const Model& model, std::span<const PairedRecord> records);
Tensor embed_language(const Model& model, std::span<const PairedRecord> records);
Tensor embed_sequences(const Model& model, std::span<const FeatureSequence> sequences);

}  // namespace xmodal
