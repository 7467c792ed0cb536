#pragma once

#include <functional>
#include <string>
#include <vector>

#include "xmodal/optim.hpp"
#include "xmodal/rng.hpp"
#include "xmodal/tensor.hpp"

namespace xmodal {

template <typename T>
using ParameterVisitor = std::function<void(const std::string& name, BasicTensor<T>& tensor)>;

// Gaussian init scaled by 1/sqrt(fan_in).
template <typename T>
BasicTensor<T> random_tensor(Shape shape, double stddev, Rng& rng);

// y = x W + b with W stored [in, out].
template <typename T>
struct Linear {
    BasicTensor<T> weight;
    BasicTensor<T> bias;

    static Linear init(std::size_t in, std::size_t out, Rng& rng);
    BasicTensor<T> forward(BasicTape<T>& tape, const BasicTensor<T>& x) const;
    void visit(const std::string& prefix, const ParameterVisitor<T>& fn);
};

template <typename T>
struct LayerNorm {
    BasicTensor<T> gain;
    BasicTensor<T> bias;
    double eps = 1e-5;

    static LayerNorm init(std::size_t width, double eps);
    BasicTensor<T> forward(BasicTape<T>& tape, const BasicTensor<T>& x) const;
    void visit(const std::string& prefix, const ParameterVisitor<T>& fn);
};

// Two fully connected layers with a ReLU between them.
template <typename T>
struct Mlp {
    Linear<T> hidden;
    Linear<T> output;

    static Mlp init(std::size_t in, std::size_t hidden_width, std::size_t out, Rng& rng);
    BasicTensor<T> forward(BasicTape<T>& tape, const BasicTensor<T>& x) const;
    void visit(const std::string& prefix, const ParameterVisitor<T>& fn);
};

// Post-norm encoder layer:
//   S' = LayerNorm(S + MHA(S));  S_out = LayerNorm(S' + FFN(S')).
// No positional information is added here.
template <typename T>
struct TransformerLayer {
    std::size_t heads = 1;
    Linear<T> query, key, value, out;
    LayerNorm<T> norm1, norm2;
    Mlp<T> ffn;

    static TransformerLayer init(std::size_t width, std::size_t heads, std::size_t ffn_width, double eps, Rng& rng);
    // x is [B, N, c] or [N, c]. When `attention` is given, the per-head
    // attention probabilities [B*heads, N, N] are appended to it.
    BasicTensor<T> forward(BasicTape<T>& tape, const BasicTensor<T>& x,
                           std::vector<BasicTensor<T>>* attention = nullptr) const;
    void visit(const std::string& prefix, const ParameterVisitor<T>& fn);
};

// Collects named handles to every parameter reachable through visit().
template <typename T, typename Module>
ParameterList<T> collect_parameters(Module& module, const std::string& prefix = "") {
    ParameterList<T> out;
    module.visit(prefix, [&](const std::string& name, BasicTensor<T>& t) { out.push_back({name, t}); });
    return out;
}

// Deep copy: every parameter gets its own storage.
template <typename T, typename Module>
Module deep_copy(const Module& module, bool requires_grad) {
    Module copy = module;
    copy.visit("", [&](const std::string&, BasicTensor<T>& t) { t = t.clone(requires_grad); });
    return copy;
}

}  // namespace xmodal
