#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "xmodal/tensor.hpp"

namespace xmodal {

// Unit-norm embedding rows with unique ids.
struct RetrievalIndex {
    Tensor embeddings;  // [N, d]
    std::vector<std::uint64_t> ids;
    std::string modality;

    RetrievalIndex() = default;
    RetrievalIndex(Tensor embeddings, std::vector<std::uint64_t> ids, std::string modality);

    std::size_t size() const { return ids.size(); }
    std::size_t dim() const { return embeddings.dim(1); }
};

double accuracy(std::span<const std::size_t> predictions, std::span<const std::size_t> labels);

// Rows are true labels, columns predictions.
std::vector<std::vector<std::size_t>> confusion_matrix(std::span<const std::size_t> predictions,
                                                       std::span<const std::size_t> labels, std::size_t n_classes);

struct MapResult {
    double map = 0.0;
    std::vector<std::size_t> excluded_classes;  // classes without positives
};

double average_precision(std::span<const double> scores, std::span<const std::uint8_t> positives);

// scores and labels are row-major [N, C]; labels are 0/1.
MapResult mean_average_precision(std::span<const double> scores, std::span<const std::uint8_t> labels,
                                 std::size_t n_classes);

// 1-based rank of `target` among the index rows when sorted by descending
// cosine similarity to `query`; equal scores rank the lower id first.
std::size_t retrieval_rank(std::span<const float> query, const RetrievalIndex& index, std::uint64_t target);

// Mean of 1 / rank over queries [Q, d]; targets[q] is the id of the true
// partner of query q, which must be present in the index.
double mean_reciprocal_rank(const Tensor& queries, const RetrievalIndex& index,
                            std::span<const std::uint64_t> targets);

// Per sample, the classes of the topk highest cosine similarities, best
// first; equal similarities favour the lower class id.
std::vector<std::vector<std::size_t>> zero_shot_classify(const Tensor& samples, const Tensor& prototypes,
                                                         std::size_t topk);

struct SegmentEvent {
    double onset = 0.0;
    double offset = 0.0;
    std::size_t event_class = 0;
};

struct SegmentF1 {
    double f1 = 1.0;
    std::size_t tp = 0;
    std::size_t fp = 0;
    std::size_t fn = 0;
};

// Segment-based, micro-averaged over segments and classes. An event is active
// in segment [k*len, (k+1)*len) when its interval overlaps it.
SegmentF1 segment_f1(std::span<const SegmentEvent> predicted, std::span<const SegmentEvent> reference,
                     double segment_length = 1.0);

}  // namespace xmodal
