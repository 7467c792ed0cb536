#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "xmodal/layers.hpp"

namespace xmodal {

// One-hidden-layer classifier over frozen embeddings. The hidden layer is as
// wide as the input, and at least 16 units.
struct ProbeClassifier {
    Mlp<float> mlp;
    std::size_t n_classes = 0;

    static ProbeClassifier init(std::size_t input_dim, std::size_t n_classes, std::uint64_t seed);

    Tensor logits(const Tensor& embeddings) const;  // [N, C]
    Tensor probabilities(const Tensor& embeddings) const;
    std::vector<std::size_t> predict(const Tensor& embeddings) const;
};

struct ProbeOptions {
    std::size_t epochs = 100;
    double lr = 1e-2;
    std::uint64_t seed = 0;
};

// Full-batch cross-entropy training with the adaptive-moment optimizer.
// Throws ValueError when fewer than two distinct labels are present.
ProbeClassifier train_linear_probe(const Tensor& embeddings, std::span<const std::size_t> labels,
                                   std::size_t n_classes, const ProbeOptions& options);

}  // namespace xmodal
