#include "xmodal/image_encoder.hpp"

#include "xmodal/ops.hpp"

namespace xmodal {

template <typename T>
BasicTensor<T> extract_patches(BasicTape<T>& tape, const BasicTensor<T>& feature_map, std::size_t grid_size) {
    const Shape& s = feature_map.shape();
    if (s.size() != 3 && s.size() != 4) {
        throw ShapeError("extract_patches: needs [H, W, f] or [B, H, W, f], got " + shape_to_string(s));
    }
    const bool batched = s.size() == 4;
    const std::size_t B = batched ? s[0] : 1;
    const std::size_t H = s[s.size() - 3], W = s[s.size() - 2], f = s.back();
    if (grid_size == 0 || H % grid_size != 0 || W % grid_size != 0) {
        throw ShapeError("extract_patches: map " + std::to_string(H) + "x" + std::to_string(W) +
                         " is not divisible by grid " + std::to_string(grid_size));
    }
    const std::size_t ph = H / grid_size, pw = W / grid_size, np = grid_size * grid_size;
    const double inv = 1.0 / static_cast<double>(ph * pw);
    std::vector<T> out(B * np * f, T(0));
    const T* in = feature_map.data().data();
    for (std::size_t b = 0; b < B; ++b) {
        for (std::size_t gy = 0; gy < grid_size; ++gy) {
            for (std::size_t gx = 0; gx < grid_size; ++gx) {
                T* dst = out.data() + (b * np + gy * grid_size + gx) * f;
                for (std::size_t c = 0; c < f; ++c) {
                    double acc = 0.0;
                    for (std::size_t y = gy * ph; y < (gy + 1) * ph; ++y)
                        for (std::size_t x = gx * pw; x < (gx + 1) * pw; ++x) acc += in[((b * H + y) * W + x) * f + c];
                    dst[c] = static_cast<T>(acc * inv);
                }
            }
        }
    }
    Shape out_shape = batched ? Shape{B, np, f} : Shape{np, f};
    auto node = feature_map.storage();
    return tape.emit("extract_patches", std::move(out_shape), std::move(out), {&feature_map},
                     [=](const std::vector<T>& g) {
                         auto* dx = grad_sink(node);
                         if (!dx) return;
                         for (std::size_t b = 0; b < B; ++b)
                             for (std::size_t y = 0; y < H; ++y)
                                 for (std::size_t x = 0; x < W; ++x) {
                                     const std::size_t p = (y / ph) * grid_size + x / pw;
                                     const T* gp = g.data() + (b * np + p) * f;
                                     T* d = dx->data() + ((b * H + y) * W + x) * f;
                                     for (std::size_t c = 0; c < f; ++c) d[c] += static_cast<T>(gp[c] * inv);
                                 }
                     });
}

template <typename T>
BasicTensor<T> self_attention_block(BasicTape<T>& tape, const BasicTensor<T>& patches,
                                    const std::vector<TransformerLayer<T>>& layers,
                                    std::vector<BasicTensor<T>>* attention) {
    BasicTensor<T> s = patches;
    for (const auto& layer : layers) s = layer.forward(tape, s, attention);
    return s;
}

template <typename T>
BasicTensor<T> average_pool(BasicTape<T>& tape, const BasicTensor<T>& patches) {
    return ops::mean_rows(tape, patches);
}

template <typename T>
BasicTensor<T> mlp_project(BasicTape<T>& tape, const BasicTensor<T>& pooled, const Mlp<T>& projector) {
    return projector.forward(tape, pooled);
}

template <typename T>
ImageEncoder<T> ImageEncoder<T>::init(const ImageEncoderConfig& config, Rng& rng) {
    if (config.model_dim % config.heads != 0) {
        throw ShapeError("image encoder: model_dim " + std::to_string(config.model_dim) + " not divisible by " +
                         std::to_string(config.heads) + " heads");
    }
    ImageEncoder enc;
    enc.config = config;
    enc.patch_embed = Linear<T>::init(config.feature_dim, config.model_dim, rng);
    for (std::size_t i = 0; i < config.layers; ++i) {
        enc.layers.push_back(
            TransformerLayer<T>::init(config.model_dim, config.heads, config.ffn_width(), config.ln_eps, rng));
    }
    enc.projector = Mlp<T>::init(config.model_dim, config.proj_width(), config.embed_dim, rng);
    return enc;
}

template <typename T>
BasicTensor<T> ImageEncoder<T>::encode(BasicTape<T>& tape, const BasicTensor<T>& feature_map,
                                       std::vector<BasicTensor<T>>* attention) const {
    if (feature_map.shape().back() != config.feature_dim) {
        throw ShapeError("image encoder: expected " + std::to_string(config.feature_dim) + " channels, got map " +
                         shape_to_string(feature_map.shape()));
    }
    auto patches = patch_embed.forward(tape, extract_patches(tape, feature_map, config.grid_size));
    auto fused = self_attention_block(tape, patches, layers, attention);
    auto z = mlp_project(tape, average_pool(tape, fused), projector);
    return ops::l2_normalize(tape, z);
}

template <typename T>
void ImageEncoder<T>::visit(const std::string& prefix, const ParameterVisitor<T>& fn) {
    patch_embed.visit(prefix + "patch_embed.", fn);
    for (std::size_t i = 0; i < layers.size(); ++i) layers[i].visit(prefix + "sa." + std::to_string(i) + ".", fn);
    projector.visit(prefix + "proj.", fn);
}

template BasicTensor<float> extract_patches(BasicTape<float>&, const BasicTensor<float>&, std::size_t);
template BasicTensor<double> extract_patches(BasicTape<double>&, const BasicTensor<double>&, std::size_t);
template BasicTensor<float> self_attention_block(BasicTape<float>&, const BasicTensor<float>&,
                                                 const std::vector<TransformerLayer<float>>&,
                                                 std::vector<BasicTensor<float>>*);
template BasicTensor<double> self_attention_block(BasicTape<double>&, const BasicTensor<double>&,
                                                  const std::vector<TransformerLayer<double>>&,
                                                  std::vector<BasicTensor<double>>*);
template BasicTensor<float> average_pool(BasicTape<float>&, const BasicTensor<float>&);
template BasicTensor<double> average_pool(BasicTape<double>&, const BasicTensor<double>&);
template BasicTensor<float> mlp_project(BasicTape<float>&, const BasicTensor<float>&, const Mlp<float>&);
template BasicTensor<double> mlp_project(BasicTape<double>&, const BasicTensor<double>&, const Mlp<double>&);
template struct ImageEncoder<float>;
template struct ImageEncoder<double>;

}  // namespace xmodal
