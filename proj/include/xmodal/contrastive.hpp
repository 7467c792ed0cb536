#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "xmodal/layers.hpp"

namespace xmodal {

enum class LossMode : std::uint8_t { in_batch = 0, queue = 1 };

std::string_view loss_mode_name(LossMode mode);
LossMode parse_loss_mode(std::string_view text);

// Rows whose L2 norm deviates from 1 by more than this violate the unit-norm
// contract of the contrastive losses.
inline constexpr double kUnitNormTolerance = 1e-3;

// Mean over rows r of -log softmax(logits[r, allowed] / tau)[targets[r]]
// where only columns with allowed[r * M + j] != 0 take part in the
// normalizer. Accumulated in double.
template <typename T>
BasicTensor<T> masked_cross_entropy(BasicTape<T>& tape, const BasicTensor<T>& logits,
                                    std::span<const std::uint8_t> allowed, std::span<const std::size_t> targets,
                                    double tau);

// InfoNCE over unit-norm rows. Row i of `queries` is paired with row i of
// `positives`; every query is contrasted with all rows of `negatives` (may be
// undefined) and, when in_batch_negatives is set, with the other positives.
template <typename T>
BasicTensor<T> info_nce(BasicTape<T>& tape, const BasicTensor<T>& queries, const BasicTensor<T>& positives,
                        const BasicTensor<T>& negatives, double tau, bool in_batch_negatives);

struct CxLossConfig {
    double tau = 0.07;
    LossMode mode = LossMode::in_batch;
    double pred_loss_weight = 0.0;
};

// Momentum-encoder side of queue mode. The queues supply negatives; an
// underfull queue (`*_full` unset) is topped up with in-batch negatives. When
// the key embeddings of the current batch are given they replace the
// query-tower embeddings as positives (and as in-batch negatives).
template <typename T>
struct QueueNegatives {
    BasicTensor<T> language;
    BasicTensor<T> image;
    bool language_full = false;
    bool image_full = false;
    BasicTensor<T> language_keys;  // [B, d]
    BasicTensor<T> image_keys;     // [B, d]
};

template <typename T>
struct CxLossTerms {
    BasicTensor<T> total;
    BasicTensor<T> image_to_language;
    BasicTensor<T> language_to_image;
};

// L(f(image), language) + L(g(language), image). f and g are optional
// projection heads (identity when null); their outputs are re-normalized.
template <typename T>
CxLossTerms<T> cx_loss(BasicTape<T>& tape, const BasicTensor<T>& image_z, const BasicTensor<T>& language_z,
                       const CxLossConfig& config, const Mlp<T>* f, const Mlp<T>* g,
                       const QueueNegatives<T>* negatives = nullptr);

// Fixed-capacity FIFO ring of unit-norm embeddings.
class NegativeQueue {
public:
    NegativeQueue() = default;
    NegativeQueue(std::size_t capacity, std::size_t dim);

    std::size_t capacity() const { return capacity_; }
    std::size_t dim() const { return dim_; }
    std::size_t fill() const { return fill_; }
    std::size_t head() const { return head_; }
    bool full() const { return fill_ == capacity_; }

    // Appends the rows of batch [B, d]; the oldest rows are evicted once the
    // queue is full.
    void push(const Tensor& batch);
    void push_rows(std::span<const float> rows);
    // Stored rows, oldest first, as [fill, d]; undefined when empty.
    Tensor contents() const;
    std::vector<float> ordered_values() const;

private:
    std::size_t capacity_ = 0;
    std::size_t dim_ = 0;
    std::size_t head_ = 0;  // next write slot
    std::size_t fill_ = 0;
    std::vector<float> buffer_;
};

// key <- m * key + (1 - m) * query for every parameter pair.
template <typename T>
void momentum_update(ParameterList<T>& key, const ParameterList<T>& query, double momentum);

}  // namespace xmodal
