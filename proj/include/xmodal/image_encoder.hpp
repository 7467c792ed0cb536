#pragma once

#include <cstddef>
#include <vector>

#include "xmodal/layers.hpp"

namespace xmodal {

struct ImageEncoderConfig {
    std::size_t feature_dim = 8;  // channels of the input feature map
    std::size_t model_dim = 32;   // patch width inside the attention block
    std::size_t embed_dim = 32;   // joint embedding size
    std::size_t grid_size = 4;    // patches per side
    std::size_t layers = 4;
    std::size_t heads = 4;
    std::size_t ffn_dim = 0;      // 0 selects 4 * model_dim
    std::size_t proj_hidden = 0;  // 0 selects model_dim
    double ln_eps = 1e-5;

    std::size_t ffn_width() const { return ffn_dim ? ffn_dim : 4 * model_dim; }
    std::size_t proj_width() const { return proj_hidden ? proj_hidden : model_dim; }
    std::size_t num_patches() const { return grid_size * grid_size; }
};

// Splits a [H, W, f] (or [B, H, W, f]) feature map into grid_size x grid_size
// sub-regions in raster order and returns the mean feature of each:
// [N_p, f] (or [B, N_p, f]). H and W must be divisible by grid_size.
template <typename T>
BasicTensor<T> extract_patches(BasicTape<T>& tape, const BasicTensor<T>& feature_map, std::size_t grid_size);

template <typename T>
BasicTensor<T> self_attention_block(BasicTape<T>& tape, const BasicTensor<T>& patches,
                                    const std::vector<TransformerLayer<T>>& layers,
                                    std::vector<BasicTensor<T>>* attention = nullptr);

// Mean over patches: [.., N_p, c] -> [.., c].
template <typename T>
BasicTensor<T> average_pool(BasicTape<T>& tape, const BasicTensor<T>& patches);

template <typename T>
BasicTensor<T> mlp_project(BasicTape<T>& tape, const BasicTensor<T>& pooled, const Mlp<T>& projector);

template <typename T>
struct ImageEncoder {
    ImageEncoderConfig config;
    Linear<T> patch_embed;  // feature_dim -> model_dim
    std::vector<TransformerLayer<T>> layers;
    Mlp<T> projector;  // model_dim -> embed_dim

    static ImageEncoder init(const ImageEncoderConfig& config, Rng& rng);

    // [H, W, f] -> [d] or [B, H, W, f] -> [B, d]; rows are L2-normalized.
    BasicTensor<T> encode(BasicTape<T>& tape, const BasicTensor<T>& feature_map,
                          std::vector<BasicTensor<T>>* attention = nullptr) const;

    void visit(const std::string& prefix, const ParameterVisitor<T>& fn);
};

}  // namespace xmodal
