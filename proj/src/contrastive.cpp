#include "xmodal/contrastive.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "xmodal/ops.hpp"

namespace xmodal {

std::string_view loss_mode_name(LossMode mode) { return mode == LossMode::queue ? "queue" : "in_batch"; }

LossMode parse_loss_mode(std::string_view text) {
    if (text == "in_batch") return LossMode::in_batch;
    if (text == "queue") return LossMode::queue;
    throw ValueError("unknown loss mode '" + std::string(text) + "' (expected in_batch or queue)");
}

namespace {

template <typename T>
void require_unit_rows(const char* what, const BasicTensor<T>& x) {
    if (!x.defined()) return;
    if (x.rank() != 2) throw ShapeError(std::string(what) + " must be [N, d], got " + shape_to_string(x.shape()));
    const std::size_t d = x.dim(1);
    for (std::size_t r = 0; r < x.dim(0); ++r) {
        double ss = 0.0;
        for (std::size_t j = 0; j < d; ++j) ss += static_cast<double>(x[r * d + j]) * x[r * d + j];
        if (std::abs(std::sqrt(ss) - 1.0) > kUnitNormTolerance) {
            throw ValueError(std::string(what) + ": row " + std::to_string(r) + " has norm " +
                             std::to_string(std::sqrt(ss)) + ", expected unit norm");
        }
    }
}

}  // namespace

template <typename T>
BasicTensor<T> masked_cross_entropy(BasicTape<T>& tape, const BasicTensor<T>& logits,
                                    std::span<const std::uint8_t> allowed, std::span<const std::size_t> targets,
                                    double tau) {
    if (!(tau > 0.0)) throw ValueError("contrastive loss: temperature must be positive, got " + std::to_string(tau));
    if (logits.rank() != 2) throw ShapeError("contrastive loss: logits must be [B, M]");
    const std::size_t B = logits.dim(0), M = logits.dim(1);
    if (allowed.size() != B * M || targets.size() != B) throw ShapeError("contrastive loss: mask/target size mismatch");
    auto probs = std::make_shared<std::vector<double>>(B * M, 0.0);
    double total = 0.0;
    for (std::size_t r = 0; r < B; ++r) {
        const std::size_t t = targets[r];
        if (t >= M || !allowed[r * M + t]) throw ValueError("contrastive loss: target column is masked out");
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < M; ++j) {
            if (allowed[r * M + j]) mx = std::max(mx, static_cast<double>(logits[r * M + j]) / tau);
        }
        double z = 0.0;
        for (std::size_t j = 0; j < M; ++j) {
            if (allowed[r * M + j]) z += std::exp(logits[r * M + j] / tau - mx);
        }
        const double lse = mx + std::log(z);
        total += lse - logits[r * M + t] / tau;
        for (std::size_t j = 0; j < M; ++j) {
            if (allowed[r * M + j]) (*probs)[r * M + j] = std::exp(logits[r * M + j] / tau - lse);
        }
    }
    auto node = logits.storage();
    std::vector<std::size_t> tv(targets.begin(), targets.end());
    return tape.emit("masked_cross_entropy", Shape{}, std::vector<T>{static_cast<T>(total / B)}, {&logits},
                     [=](const std::vector<T>& g) {
                         auto* dl = grad_sink(node);
                         if (!dl) return;
                         const double w = static_cast<double>(g[0]) / (static_cast<double>(B) * tau);
                         for (std::size_t r = 0; r < B; ++r) {
                             for (std::size_t j = 0; j < M; ++j) {
                                 double grad = (*probs)[r * M + j];
                                 if (j == tv[r]) grad -= 1.0;
                                 (*dl)[r * M + j] += static_cast<T>(w * grad);
                             }
                         }
                     });
}

template <typename T>
BasicTensor<T> info_nce(BasicTape<T>& tape, const BasicTensor<T>& queries, const BasicTensor<T>& positives,
                        const BasicTensor<T>& negatives, double tau, bool in_batch_negatives) {
    require_unit_rows("info_nce queries", queries);
    require_unit_rows("info_nce positives", positives);
    require_unit_rows("info_nce negatives", negatives);
    if (queries.shape() != positives.shape()) {
        throw ShapeError("info_nce: queries " + shape_to_string(queries.shape()) + " and positives " +
                         shape_to_string(positives.shape()) + " differ");
    }
    const std::size_t B = queries.dim(0);
    const std::size_t K = negatives.defined() ? negatives.dim(0) : 0;
    if (negatives.defined() && negatives.dim(1) != queries.dim(1)) {
        throw ShapeError("info_nce: negatives have width " + std::to_string(negatives.dim(1)) + ", queries " +
                         std::to_string(queries.dim(1)));
    }
    if (K == 0 && !(in_batch_negatives && B >= 2)) throw ValueError("info_nce: no negatives available");

    auto keys = K ? ops::concat_rows(tape, std::vector<BasicTensor<T>>{positives, negatives}) : positives;
    auto logits = ops::matmul(tape, queries, keys, /*transpose_b=*/true);
    const std::size_t M = B + K;
    std::vector<std::uint8_t> allowed(B * M, 0);
    std::vector<std::size_t> targets(B);
    for (std::size_t r = 0; r < B; ++r) {
        targets[r] = r;
        for (std::size_t j = 0; j < M; ++j) allowed[r * M + j] = (j == r || j >= B || in_batch_negatives) ? 1 : 0;
    }
    return masked_cross_entropy(tape, logits, allowed, targets, tau);
}

template <typename T>
CxLossTerms<T> cx_loss(BasicTape<T>& tape, const BasicTensor<T>& image_z, const BasicTensor<T>& language_z,
                       const CxLossConfig& config, const Mlp<T>* f, const Mlp<T>* g,
                       const QueueNegatives<T>* negatives) {
    if (image_z.shape() != language_z.shape()) {
        throw ShapeError("cx_loss: image " + shape_to_string(image_z.shape()) + " and language " +
                         shape_to_string(language_z.shape()) + " batches are not aligned");
    }
    const std::size_t B = image_z.dim(0);
    auto f_image = f ? ops::l2_normalize(tape, f->forward(tape, image_z)) : image_z;
    auto g_language = g ? ops::l2_normalize(tape, g->forward(tape, language_z)) : language_z;

    BasicTensor<T> language_neg, image_neg;
    BasicTensor<T> language_pos = language_z, image_pos = image_z;
    bool language_in_batch = true, image_in_batch = true;
    if (config.mode == LossMode::queue) {
        if (!negatives) throw ValueError("cx_loss: queue mode needs both negative queues");
        language_neg = negatives->language;
        image_neg = negatives->image;
        language_in_batch = !negatives->language_full;
        image_in_batch = !negatives->image_full;
        if (negatives->language_keys.defined()) language_pos = negatives->language_keys;
        if (negatives->image_keys.defined()) image_pos = negatives->image_keys;
        if (language_pos.shape() != language_z.shape() || image_pos.shape() != image_z.shape()) {
            throw ShapeError("cx_loss: key embeddings do not match the batch");
        }
    }
    if (B < 2 && (config.mode == LossMode::in_batch || !language_neg.defined() || !image_neg.defined())) {
        throw ValueError("cx_loss: in-batch negatives need a batch of at least 2, got " + std::to_string(B));
    }
    CxLossTerms<T> terms;
    terms.image_to_language = info_nce(tape, f_image, language_pos, language_neg, config.tau, language_in_batch);
    terms.language_to_image = info_nce(tape, g_language, image_pos, image_neg, config.tau, image_in_batch);
    terms.total = ops::add(tape, terms.image_to_language, terms.language_to_image);
    return terms;
}

NegativeQueue::NegativeQueue(std::size_t capacity, std::size_t dim)
    : capacity_(capacity), dim_(dim), buffer_(capacity * dim, 0.0f) {
    if (capacity == 0 || dim == 0) throw ValueError("negative queue: capacity and width must be positive");
}

void NegativeQueue::push(const Tensor& batch) {
    if (batch.rank() != 2 || batch.dim(1) != dim_) {
        throw ShapeError("negative queue: batch " + shape_to_string(batch.shape()) + " does not match width " +
                         std::to_string(dim_));
    }
    push_rows(batch.data());
}

void NegativeQueue::push_rows(std::span<const float> rows) {
    if (dim_ == 0 || rows.size() % dim_ != 0) throw ShapeError("negative queue: ragged rows");
    const std::size_t B = rows.size() / dim_;
    if (B > capacity_) {
        throw ValueError("negative queue: batch of " + std::to_string(B) + " exceeds capacity " +
                         std::to_string(capacity_));
    }
    for (std::size_t r = 0; r < B; ++r) {
        double ss = 0.0;
        for (std::size_t j = 0; j < dim_; ++j) ss += static_cast<double>(rows[r * dim_ + j]) * rows[r * dim_ + j];
        if (std::abs(std::sqrt(ss) - 1.0) > 1e-5) {
            throw ValueError("negative queue: row " + std::to_string(r) + " has norm " + std::to_string(std::sqrt(ss)));
        }
    }
    for (std::size_t r = 0; r < B; ++r) {
        std::copy_n(rows.begin() + r * dim_, dim_, buffer_.begin() + head_ * dim_);
        head_ = (head_ + 1) % capacity_;
    }
    fill_ = std::min(capacity_, fill_ + B);
}

std::vector<float> NegativeQueue::ordered_values() const {
    std::vector<float> out;
    out.reserve(fill_ * dim_);
    const std::size_t start = (head_ + capacity_ - fill_) % std::max<std::size_t>(capacity_, 1);
    for (std::size_t i = 0; i < fill_; ++i) {
        const std::size_t slot = (start + i) % capacity_;
        out.insert(out.end(), buffer_.begin() + slot * dim_, buffer_.begin() + (slot + 1) * dim_);
    }
    return out;
}

Tensor NegativeQueue::contents() const {
    if (fill_ == 0) return Tensor();
    return Tensor({fill_, dim_}, ordered_values());
}

template <typename T>
void momentum_update(ParameterList<T>& key, const ParameterList<T>& query, double momentum) {
    if (key.size() != query.size()) {
        throw ShapeError("momentum update: key has " + std::to_string(key.size()) + " parameters, query " +
                         std::to_string(query.size()));
    }
    for (std::size_t i = 0; i < key.size(); ++i) {
        if (key[i].tensor.shape() != query[i].tensor.shape()) {
            throw ShapeError("momentum update: '" + key[i].name + "' " + shape_to_string(key[i].tensor.shape()) +
                             " vs '" + query[i].name + "' " + shape_to_string(query[i].tensor.shape()));
        }
    }
    const double rest = 1.0 - momentum;
    for (std::size_t i = 0; i < key.size(); ++i) {
        auto k = key[i].tensor.mutable_data();
        auto q = query[i].tensor.data();
        for (std::size_t j = 0; j < k.size(); ++j) k[j] = static_cast<T>(momentum * k[j] + rest * q[j]);
    }
}

#define XMODAL_INSTANTIATE_CONTRASTIVE(T)                                                                          \
    template BasicTensor<T> masked_cross_entropy(BasicTape<T>&, const BasicTensor<T>&,                             \
                                                 std::span<const std::uint8_t>, std::span<const std::size_t>,      \
                                                 double);                                                          \
    template BasicTensor<T> info_nce(BasicTape<T>&, const BasicTensor<T>&, const BasicTensor<T>&,                  \
                                     const BasicTensor<T>&, double, bool);                                         \
    template CxLossTerms<T> cx_loss(BasicTape<T>&, const BasicTensor<T>&, const BasicTensor<T>&,                   \
                                    const CxLossConfig&, const Mlp<T>*, const Mlp<T>*, const QueueNegatives<T>*); \
    template void momentum_update(ParameterList<T>&, const ParameterList<T>&, double);

XMODAL_INSTANTIATE_CONTRASTIVE(float)
XMODAL_INSTANTIATE_CONTRASTIVE(double)

#undef XMODAL_INSTANTIATE_CONTRASTIVE

}  // namespace xmodal
