#pragma once

#include <cstdint>
#include <vector>

#include "xmodal/model.hpp"
#include "xmodal/probe.hpp"

namespace xmodal {

struct RetrievalReport {
    double language_to_image = 0.0;  // MRR, language queries against the image index
    double image_to_language = 0.0;
    std::size_t queries = 0;
};

RetrievalReport evaluate_retrieval(const Model& model, const PairedDataset& dataset);

// One text-modality sequence per class label: the unit ids of the first
// record of that class. Classes without unit ids are an error.
std::vector<FeatureSequence> class_descriptions(const PairedDataset& dataset, std::size_t n_classes);

struct ZeroShotReport {
    double accuracy = 0.0;  // true label among the topk predictions
    std::size_t samples = 0;
    std::vector<std::vector<std::size_t>> predictions;
};

// Image embeddings of `dataset` against language-tower prototypes of the
// class descriptions.
ZeroShotReport evaluate_zero_shot(const Model& model, const std::vector<FeatureSequence>& descriptions,
                                  const PairedDataset& dataset, std::size_t topk);

struct ProbeReport {
    double train_accuracy = 0.0;
    double test_accuracy = 0.0;
    double test_map = 0.0;
    std::size_t train_samples = 0;
    std::size_t test_samples = 0;
};

// Probe on frozen language embeddings: fit on `train`, score on `test`.
ProbeReport evaluate_probe(const Model& model, const PairedDataset& train, const PairedDataset& test,
                           std::size_t n_classes, const ProbeOptions& options);

struct RecoveryReport {
    double recovery = 0.0;  // fraction of pools whose top-1 is the planted partner
    std::size_t pools = 0;
    std::size_t pool_size = 0;
};

// Each pool holds the image of one random query record plus pool_size - 1
// other images of the dataset; the query is that record's language side.
RecoveryReport evaluate_rerank_recovery(const Model& model, const PairedDataset& dataset, std::size_t pool_size,
                                        std::size_t pools, std::uint64_t seed);

}  // namespace xmodal
