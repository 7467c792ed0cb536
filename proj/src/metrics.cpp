#include "xmodal/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <unordered_set>

#include "xmodal/error.hpp"

namespace xmodal {

namespace {

double norm(std::span<const float> v) {
    double ss = 0.0;
    for (float x : v) ss += static_cast<double>(x) * x;
    return std::sqrt(ss);
}

double cosine(std::span<const float> a, std::span<const float> b, double norm_a, double norm_b) {
    double dot = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) dot += static_cast<double>(a[i]) * b[i];
    return dot / (norm_a * norm_b);
}

std::span<const float> row(const Tensor& t, std::size_t r) {
    const std::size_t d = t.dim(1);
    return t.data().subspan(r * d, d);
}

void require_matrix(const Tensor& t, const char* what) {
    if (!t.defined() || t.rank() != 2) throw ShapeError(std::string(what) + " must be a [N, d] matrix");
}

// Active (class, segment) cells of an event list.
std::set<std::pair<std::size_t, std::int64_t>> active_cells(std::span<const SegmentEvent> events, double len) {
    std::set<std::pair<std::size_t, std::int64_t>> cells;
    for (const auto& e : events) {
        if (!(e.onset >= 0.0) || !(e.offset >= 0.0)) throw ValueError("segment_f1: negative event time");
        if (!(e.onset < e.offset)) throw ValueError("segment_f1: event onset must precede its offset");
        auto first = static_cast<std::int64_t>(std::floor(e.onset / len));
        auto last = static_cast<std::int64_t>(std::ceil(e.offset / len)) - 1;
        // Guard the division against rounding at segment edges.
        while (first > 0 && e.onset < static_cast<double>(first) * len) --first;
        while (!(e.onset < static_cast<double>(first + 1) * len)) ++first;
        while (!(e.offset > static_cast<double>(last) * len)) --last;
        while (e.offset > static_cast<double>(last + 1) * len) ++last;
        for (auto k = first; k <= last; ++k) cells.insert({e.event_class, k});
    }
    return cells;
}

}  // namespace

RetrievalIndex::RetrievalIndex(Tensor embeddings_, std::vector<std::uint64_t> ids_, std::string modality_)
    : embeddings(std::move(embeddings_)), ids(std::move(ids_)), modality(std::move(modality_)) {
    require_matrix(embeddings, "retrieval index embeddings");
    if (embeddings.dim(0) != ids.size()) {
        throw ShapeError("retrieval index: " + std::to_string(embeddings.dim(0)) + " rows but " +
                         std::to_string(ids.size()) + " ids");
    }
    std::unordered_set<std::uint64_t> seen;
    for (std::size_t r = 0; r < ids.size(); ++r) {
        if (!seen.insert(ids[r]).second) throw ValueError("retrieval index: duplicate id " + std::to_string(ids[r]));
        if (std::abs(norm(row(embeddings, r)) - 1.0) > 1e-3) {
            throw ValueError("retrieval index: row " + std::to_string(r) + " is not unit-norm");
        }
    }
}

double accuracy(std::span<const std::size_t> predictions, std::span<const std::size_t> labels) {
    if (predictions.size() != labels.size()) {
        throw ShapeError("accuracy: " + std::to_string(predictions.size()) + " predictions vs " +
                         std::to_string(labels.size()) + " labels");
    }
    if (labels.empty()) throw ValueError("accuracy: empty input");
    std::size_t hits = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) hits += predictions[i] == labels[i];
    return static_cast<double>(hits) / static_cast<double>(labels.size());
}

std::vector<std::vector<std::size_t>> confusion_matrix(std::span<const std::size_t> predictions,
                                                       std::span<const std::size_t> labels, std::size_t n_classes) {
    if (predictions.size() != labels.size()) throw ShapeError("confusion_matrix: length mismatch");
    std::vector<std::vector<std::size_t>> m(n_classes, std::vector<std::size_t>(n_classes, 0));
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] >= n_classes || predictions[i] >= n_classes) {
            throw ValueError("confusion_matrix: class id outside [0, " + std::to_string(n_classes) + ")");
        }
        ++m[labels[i]][predictions[i]];
    }
    return m;
}

double average_precision(std::span<const double> scores, std::span<const std::uint8_t> positives) {
    if (scores.size() != positives.size()) throw ShapeError("average_precision: length mismatch");
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    double sum = 0.0;
    std::size_t hits = 0;
    for (std::size_t r = 0; r < order.size(); ++r) {
        if (positives[order[r]]) {
            ++hits;
            sum += static_cast<double>(hits) / static_cast<double>(r + 1);
        }
    }
    if (hits == 0) throw ValueError("average_precision: no positives");
    return sum / static_cast<double>(hits);
}

MapResult mean_average_precision(std::span<const double> scores, std::span<const std::uint8_t> labels,
                                 std::size_t n_classes) {
    if (n_classes == 0 || scores.size() != labels.size() || scores.size() % n_classes != 0) {
        throw ShapeError("mean_average_precision: scores and labels must both be [N, C]");
    }
    const std::size_t n = scores.size() / n_classes;
    MapResult result;
    double sum = 0.0;
    std::size_t included = 0;
    std::vector<double> s(n);
    std::vector<std::uint8_t> p(n);
    for (std::size_t c = 0; c < n_classes; ++c) {
        bool any = false;
        for (std::size_t i = 0; i < n; ++i) {
            s[i] = scores[i * n_classes + c];
            p[i] = labels[i * n_classes + c] ? 1 : 0;
            any = any || p[i];
        }
        if (!any) {
            result.excluded_classes.push_back(c);
            continue;
        }
        sum += average_precision(s, p);
        ++included;
    }
    if (included == 0) throw ValueError("mean_average_precision: no class has a positive label");
    result.map = sum / static_cast<double>(included);
    return result;
}

std::size_t retrieval_rank(std::span<const float> query, const RetrievalIndex& index, std::uint64_t target) {
    if (query.size() != index.dim()) {
        throw ShapeError("retrieval: query width " + std::to_string(query.size()) + " vs index width " +
                         std::to_string(index.dim()));
    }
    const double qn = norm(query);
    if (!(qn > 0.0)) throw DegenerateVectorError("retrieval: zero-norm query");
    const auto it = std::find(index.ids.begin(), index.ids.end(), target);
    if (it == index.ids.end()) throw ValueError("retrieval: target id " + std::to_string(target) + " not in index");
    const std::size_t t = static_cast<std::size_t>(it - index.ids.begin());
    std::vector<double> sims(index.size());
    for (std::size_t r = 0; r < index.size(); ++r) {
        const auto v = row(index.embeddings, r);
        sims[r] = cosine(query, v, qn, norm(v));
    }
    std::size_t rank = 1;
    for (std::size_t r = 0; r < index.size(); ++r) {
        if (r == t) continue;
        if (sims[r] > sims[t] || (sims[r] == sims[t] && index.ids[r] < target)) ++rank;
    }
    return rank;
}

double mean_reciprocal_rank(const Tensor& queries, const RetrievalIndex& index,
                            std::span<const std::uint64_t> targets) {
    require_matrix(queries, "mrr queries");
    if (queries.dim(0) != targets.size()) throw ShapeError("mrr: one target per query required");
    if (targets.empty()) throw ValueError("mrr: no queries");
    double sum = 0.0;
    for (std::size_t q = 0; q < targets.size(); ++q) {
        sum += 1.0 / static_cast<double>(retrieval_rank(row(queries, q), index, targets[q]));
    }
    return sum / static_cast<double>(targets.size());
}

std::vector<std::vector<std::size_t>> zero_shot_classify(const Tensor& samples, const Tensor& prototypes,
                                                         std::size_t topk) {
    require_matrix(samples, "zero-shot samples");
    if (!prototypes.defined() || prototypes.rank() != 2 || prototypes.dim(0) == 0) {
        throw ValueError("zero-shot: empty prototype set");
    }
    if (samples.dim(1) != prototypes.dim(1)) throw ShapeError("zero-shot: sample and prototype widths differ");
    const std::size_t C = prototypes.dim(0);
    if (topk < 1 || topk > C) throw ValueError("zero-shot: topk must lie in [1, " + std::to_string(C) + "]");
    std::vector<double> proto_norms(C);
    for (std::size_t c = 0; c < C; ++c) {
        proto_norms[c] = norm(row(prototypes, c));
        if (!(proto_norms[c] > 0.0)) throw DegenerateVectorError("zero-shot: zero-norm prototype");
    }
    std::vector<std::vector<std::size_t>> out;
    out.reserve(samples.dim(0));
    std::vector<double> sims(C);
    std::vector<std::size_t> order(C);
    for (std::size_t i = 0; i < samples.dim(0); ++i) {
        const auto s = row(samples, i);
        const double sn = norm(s);
        if (!(sn > 0.0)) throw DegenerateVectorError("zero-shot: zero-norm sample " + std::to_string(i));
        for (std::size_t c = 0; c < C; ++c) sims[c] = cosine(s, row(prototypes, c), sn, proto_norms[c]);
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return sims[a] > sims[b]; });
        out.emplace_back(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(topk));
    }
    return out;
}

SegmentF1 segment_f1(std::span<const SegmentEvent> predicted, std::span<const SegmentEvent> reference,
                     double segment_length) {
    if (!(segment_length > 0.0)) throw ValueError("segment_f1: segment length must be > 0");
    const auto pred = active_cells(predicted, segment_length);
    const auto ref = active_cells(reference, segment_length);
    SegmentF1 out;
    for (const auto& cell : pred) (ref.count(cell) ? out.tp : out.fp) += 1;
    for (const auto& cell : ref) out.fn += pred.count(cell) ? 0 : 1;
    const std::size_t denom = 2 * out.tp + out.fp + out.fn;
    out.f1 = denom == 0 ? 1.0 : 2.0 * static_cast<double>(out.tp) / static_cast<double>(denom);
    return out;
}

}  // namespace xmodal
