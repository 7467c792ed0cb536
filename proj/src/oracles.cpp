#include "xmodal/oracles.hpp"

#include <algorithm>
#include <cmath>
#include <tuple>

#include "xmodal/error.hpp"

namespace xmodal::oracle {

double accuracy(std::span<const std::size_t> predictions, std::span<const std::size_t> labels) {
    if (predictions.size() != labels.size() || labels.empty()) throw ShapeError("oracle accuracy: bad lengths");
    std::size_t correct = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) correct += predictions[i] == labels[i];
    return static_cast<double>(correct) / static_cast<double>(labels.size());
}

double average_precision(std::span<const double> scores, std::span<const std::uint8_t> positives) {
    const std::size_t n = scores.size();
    auto rank_of = [&](std::size_t i) {
        std::size_t r = 1;
        for (std::size_t j = 0; j < n; ++j) {
            if (scores[j] > scores[i] || (scores[j] == scores[i] && j < i)) ++r;
        }
        return r;
    };
    // (rank, precision at that rank) per positive, summed best rank first.
    std::vector<std::pair<std::size_t, double>> terms;
    for (std::size_t i = 0; i < n; ++i) {
        if (!positives[i]) continue;
        const std::size_t r = rank_of(i);
        std::size_t above = 0;
        for (std::size_t j = 0; j < n; ++j) above += positives[j] && rank_of(j) <= r;
        terms.emplace_back(r, static_cast<double>(above) / static_cast<double>(r));
    }
    if (terms.empty()) throw ValueError("oracle average_precision: no positives");
    std::sort(terms.begin(), terms.end());
    double sum = 0.0;
    for (const auto& t : terms) sum += t.second;
    return sum / static_cast<double>(terms.size());
}

double mean_average_precision(std::span<const double> scores, std::span<const std::uint8_t> labels,
                              std::size_t n_classes) {
    const std::size_t n = scores.size() / n_classes;
    double sum = 0.0;
    std::size_t classes = 0;
    for (std::size_t c = 0; c < n_classes; ++c) {
        std::vector<double> s;
        std::vector<std::uint8_t> p;
        for (std::size_t i = 0; i < n; ++i) {
            s.push_back(scores[i * n_classes + c]);
            p.push_back(labels[i * n_classes + c] ? 1 : 0);
        }
        if (std::find(p.begin(), p.end(), 1) == p.end()) continue;
        sum += average_precision(s, p);
        ++classes;
    }
    if (classes == 0) throw ValueError("oracle mAP: no positives");
    return sum / static_cast<double>(classes);
}

double mean_reciprocal_rank(const Tensor& queries, const Tensor& index, std::span<const std::uint64_t> index_ids,
                            std::span<const std::uint64_t> targets) {
    const std::size_t d = index.dim(1);
    auto cosine = [d](std::span<const float> a, std::span<const float> b) {
        double ab = 0.0, aa = 0.0, bb = 0.0;
        for (std::size_t k = 0; k < d; ++k) ab += static_cast<double>(a[k]) * b[k];
        for (std::size_t k = 0; k < d; ++k) aa += static_cast<double>(a[k]) * a[k];
        for (std::size_t k = 0; k < d; ++k) bb += static_cast<double>(b[k]) * b[k];
        return ab / (std::sqrt(aa) * std::sqrt(bb));
    };
    double sum = 0.0;
    for (std::size_t q = 0; q < targets.size(); ++q) {
        const auto qv = queries.data().subspan(q * d, d);
        std::vector<std::tuple<double, std::uint64_t>> ranked;
        for (std::size_t r = 0; r < index_ids.size(); ++r) {
            ranked.emplace_back(-cosine(qv, index.data().subspan(r * d, d)), index_ids[r]);
        }
        std::sort(ranked.begin(), ranked.end());
        std::size_t pos = 0;
        while (std::get<1>(ranked[pos]) != targets[q]) ++pos;
        sum += 1.0 / static_cast<double>(pos + 1);
    }
    return sum / static_cast<double>(targets.size());
}

SegmentF1 segment_f1(std::span<const SegmentEvent> predicted, std::span<const SegmentEvent> reference,
                     double segment_length) {
    double end = 0.0;
    std::size_t classes = 0;
    for (auto list : {predicted, reference}) {
        for (const auto& e : list) {
            end = std::max(end, e.offset);
            classes = std::max(classes, e.event_class + 1);
        }
    }
    auto active = [segment_length](std::span<const SegmentEvent> list, std::size_t k, std::size_t c) {
        const double lo = static_cast<double>(k) * segment_length;
        const double hi = static_cast<double>(k + 1) * segment_length;
        return std::any_of(list.begin(), list.end(), [&](const SegmentEvent& e) {
            return e.event_class == c && e.onset < hi && e.offset > lo;
        });
    };
    SegmentF1 out;
    for (std::size_t k = 0; static_cast<double>(k) * segment_length < end; ++k) {
        for (std::size_t c = 0; c < classes; ++c) {
            const bool p = active(predicted, k, c), r = active(reference, k, c);
            out.tp += p && r;
            out.fp += p && !r;
            out.fn += !p && r;
        }
    }
    const double denom = static_cast<double>(2 * out.tp + out.fp + out.fn);
    out.f1 = denom == 0.0 ? 1.0 : 2.0 * static_cast<double>(out.tp) / denom;
    return out;
}

void DequeQueue::push(std::span<const float> rows) {
    for (std::size_t r = 0; r < rows.size() / dim_; ++r) {
        rows_.emplace_back(rows.begin() + static_cast<std::ptrdiff_t>(r * dim_),
                           rows.begin() + static_cast<std::ptrdiff_t>((r + 1) * dim_));
        if (rows_.size() > capacity_) rows_.pop_front();
    }
}

std::vector<float> DequeQueue::values() const {
    std::vector<float> out;
    for (const auto& r : rows_) out.insert(out.end(), r.begin(), r.end());
    return out;
}

}  // namespace xmodal::oracle
