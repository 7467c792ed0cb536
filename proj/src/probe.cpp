#include "xmodal/probe.hpp"

#include <algorithm>
#include <set>

#include "xmodal/error.hpp"
#include "xmodal/ops.hpp"
#include "xmodal/optim.hpp"
#include "xmodal/rng.hpp"

namespace xmodal {

namespace {
constexpr std::size_t kMinProbeHidden = 16;
}  // namespace

ProbeClassifier ProbeClassifier::init(std::size_t input_dim, std::size_t n_classes, std::uint64_t seed) {
    if (input_dim == 0 || n_classes == 0) throw ValueError("probe: input width and class count must be positive");
    Rng rng(derive_seed(seed, "probe"));
    const std::size_t hidden = std::max<std::size_t>(input_dim, kMinProbeHidden);
    return ProbeClassifier{Mlp<float>::init(input_dim, hidden, n_classes, rng), n_classes};
}

Tensor ProbeClassifier::logits(const Tensor& embeddings) const {
    Tape tape(false);
    return mlp.forward(tape, embeddings);
}

Tensor ProbeClassifier::probabilities(const Tensor& embeddings) const {
    Tape tape(false);
    return ops::softmax_with_temperature(tape, mlp.forward(tape, embeddings), 1.0);
}

std::vector<std::size_t> ProbeClassifier::predict(const Tensor& embeddings) const {
    const auto l = logits(embeddings);
    const auto v = l.data();
    std::vector<std::size_t> out(l.dim(0));
    for (std::size_t i = 0; i < out.size(); ++i) {
        const auto r = v.subspan(i * n_classes, n_classes);
        out[i] = static_cast<std::size_t>(std::max_element(r.begin(), r.end()) - r.begin());
    }
    return out;
}

ProbeClassifier train_linear_probe(const Tensor& embeddings, std::span<const std::size_t> labels,
                                   std::size_t n_classes, const ProbeOptions& options) {
    if (!embeddings.defined() || embeddings.rank() != 2 || embeddings.dim(0) != labels.size()) {
        throw ShapeError("probe: embeddings must be [N, d] with one label per row");
    }
    std::set<std::size_t> distinct(labels.begin(), labels.end());
    if (distinct.size() < 2) throw ValueError("probe: need at least two classes, got " +
                                              std::to_string(distinct.size()));
    if (*distinct.rbegin() >= n_classes) throw ValueError("probe: label outside [0, n_classes)");
    auto probe = ProbeClassifier::init(embeddings.dim(1), n_classes, options.seed);
    auto params = collect_parameters<float>(probe.mlp);
    Adam<float> adam(AdamConfig{options.lr});
    std::vector<std::int64_t> targets(labels.begin(), labels.end());
    const Tensor x = embeddings.detach();
    for (std::size_t e = 0; e < options.epochs; ++e) {
        Tape tape;
        auto logp = ops::log_softmax_with_temperature(tape, probe.mlp.forward(tape, x), 1.0);
        auto loss = ops::nll(tape, logp, targets);
        tape.backward(loss);
        adam.step(params);
    }
    return probe;
}

}  // namespace xmodal
