#pragma once

#include <cstdint>
#include <deque>
#include <span>
#include <vector>

#include "xmodal/metrics.hpp"
#include "xmodal/tensor.hpp"

// Brute-force reference implementations. They recompute each metric straight
// from its definition and share no code with the library versions.
namespace xmodal::oracle {

double accuracy(std::span<const std::size_t> predictions, std::span<const std::size_t> labels);

// Each positive's rank is counted directly: items with a higher score, or an
// equal score and a lower index, precede it.
double average_precision(std::span<const double> scores, std::span<const std::uint8_t> positives);
double mean_average_precision(std::span<const double> scores, std::span<const std::uint8_t> labels,
                              std::size_t n_classes);

// Sorts every (similarity, id) pair of the index and reads off the target
// position.
double mean_reciprocal_rank(const Tensor& queries, const Tensor& index, std::span<const std::uint64_t> index_ids,
                            std::span<const std::uint64_t> targets);

// Enumerates every (segment, class) cell up to the last event end.
SegmentF1 segment_f1(std::span<const SegmentEvent> predicted, std::span<const SegmentEvent> reference,
                     double segment_length);

// FIFO of rows with a fixed capacity, kept in a std::deque.
class DequeQueue {
public:
    DequeQueue(std::size_t capacity, std::size_t dim) : capacity_(capacity), dim_(dim) {}
    void push(std::span<const float> rows);
    std::vector<float> values() const;
    std::size_t fill() const { return rows_.size(); }

private:
    std::size_t capacity_;
    std::size_t dim_;
    std::deque<std::vector<float>> rows_;
};

}  // namespace xmodal::oracle
