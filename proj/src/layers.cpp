#include "xmodal/layers.hpp"

#include <cmath>

#include "xmodal/ops.hpp"

namespace xmodal {

template <typename T>
BasicTensor<T> random_tensor(Shape shape, double stddev, Rng& rng) {
    std::vector<T> data(shape_size(shape));
    for (auto& v : data) v = static_cast<T>(rng.normal() * stddev);
    return BasicTensor<T>(std::move(shape), std::move(data), true);
}

template <typename T>
Linear<T> Linear<T>::init(std::size_t in, std::size_t out, Rng& rng) {
    Linear layer;
    layer.weight = random_tensor<T>({in, out}, 1.0 / std::sqrt(static_cast<double>(in)), rng);
    layer.bias = BasicTensor<T>::zeros({out}, true);
    return layer;
}

template <typename T>
BasicTensor<T> Linear<T>::forward(BasicTape<T>& tape, const BasicTensor<T>& x) const {
    return ops::add_broadcast(tape, ops::matmul(tape, x, weight), bias);
}

template <typename T>
void Linear<T>::visit(const std::string& prefix, const ParameterVisitor<T>& fn) {
    fn(prefix + "weight", weight);
    fn(prefix + "bias", bias);
}

template <typename T>
LayerNorm<T> LayerNorm<T>::init(std::size_t width, double eps) {
    LayerNorm norm;
    norm.gain = BasicTensor<T>::full({width}, T(1), true);
    norm.bias = BasicTensor<T>::zeros({width}, true);
    norm.eps = eps;
    return norm;
}

template <typename T>
BasicTensor<T> LayerNorm<T>::forward(BasicTape<T>& tape, const BasicTensor<T>& x) const {
    return ops::layer_norm(tape, x, gain, bias, eps);
}

template <typename T>
void LayerNorm<T>::visit(const std::string& prefix, const ParameterVisitor<T>& fn) {
    fn(prefix + "gain", gain);
    fn(prefix + "bias", bias);
}

template <typename T>
Mlp<T> Mlp<T>::init(std::size_t in, std::size_t hidden_width, std::size_t out, Rng& rng) {
    Mlp mlp;
    mlp.hidden = Linear<T>::init(in, hidden_width, rng);
    mlp.output = Linear<T>::init(hidden_width, out, rng);
    return mlp;
}

template <typename T>
BasicTensor<T> Mlp<T>::forward(BasicTape<T>& tape, const BasicTensor<T>& x) const {
    return output.forward(tape, ops::relu(tape, hidden.forward(tape, x)));
}

template <typename T>
void Mlp<T>::visit(const std::string& prefix, const ParameterVisitor<T>& fn) {
    hidden.visit(prefix + "hidden.", fn);
    output.visit(prefix + "output.", fn);
}

template <typename T>
TransformerLayer<T> TransformerLayer<T>::init(std::size_t width, std::size_t heads, std::size_t ffn_width, double eps,
                                              Rng& rng) {
    if (heads == 0 || width % heads != 0) {
        throw ShapeError("transformer layer: width " + std::to_string(width) + " not divisible by " +
                         std::to_string(heads) + " heads");
    }
    TransformerLayer layer;
    layer.heads = heads;
    layer.query = Linear<T>::init(width, width, rng);
    layer.key = Linear<T>::init(width, width, rng);
    layer.value = Linear<T>::init(width, width, rng);
    layer.out = Linear<T>::init(width, width, rng);
    layer.norm1 = LayerNorm<T>::init(width, eps);
    layer.norm2 = LayerNorm<T>::init(width, eps);
    layer.ffn = Mlp<T>::init(width, ffn_width, width, rng);
    return layer;
}

template <typename T>
BasicTensor<T> TransformerLayer<T>::forward(BasicTape<T>& tape, const BasicTensor<T>& x,
                                            std::vector<BasicTensor<T>>* attention) const {
    if (x.rank() == 2) {
        auto y = forward(tape, ops::reshape(tape, x, {1, x.dim(0), x.dim(1)}), attention);
        return ops::reshape(tape, y, x.shape());
    }
    if (x.rank() != 3) throw ShapeError("transformer layer: needs [B, N, c], got " + shape_to_string(x.shape()));
    const std::size_t width = x.dim(2);
    if (width % heads != 0) {
        throw ShapeError("transformer layer: width " + std::to_string(width) + " not divisible by " +
                         std::to_string(heads) + " heads");
    }
    const double head_dim = static_cast<double>(width / heads);

    auto q = ops::split_heads(tape, query.forward(tape, x), heads);
    auto k = ops::split_heads(tape, key.forward(tape, x), heads);
    auto v = ops::split_heads(tape, value.forward(tape, x), heads);
    auto scores = ops::matmul(tape, q, k, /*transpose_b=*/true);
    // softmax(QK^T / sqrt(dh)) is softmax with temperature sqrt(dh).
    auto probs = ops::softmax_with_temperature(tape, scores, std::sqrt(head_dim));
    if (attention) attention->push_back(probs);
    auto context = ops::merge_heads(tape, ops::matmul(tape, probs, v), heads);
    auto attended = norm1.forward(tape, ops::add(tape, x, out.forward(tape, context)));
    return norm2.forward(tape, ops::add(tape, attended, ffn.forward(tape, attended)));
}

template <typename T>
void TransformerLayer<T>::visit(const std::string& prefix, const ParameterVisitor<T>& fn) {
    query.visit(prefix + "attn.query.", fn);
    key.visit(prefix + "attn.key.", fn);
    value.visit(prefix + "attn.value.", fn);
    out.visit(prefix + "attn.out.", fn);
    norm1.visit(prefix + "norm1.", fn);
    ffn.visit(prefix + "ffn.", fn);
    norm2.visit(prefix + "norm2.", fn);
}

template BasicTensor<float> random_tensor(Shape, double, Rng&);
template BasicTensor<double> random_tensor(Shape, double, Rng&);
template struct Linear<float>;
template struct Linear<double>;
template struct LayerNorm<float>;
template struct LayerNorm<double>;
template struct Mlp<float>;
template struct Mlp<double>;
template struct TransformerLayer<float>;
template struct TransformerLayer<double>;

}  // namespace xmodal
