#include "xmodal/rerank.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "xmodal/error.hpp"

namespace xmodal {

namespace {

double norm(std::span<const float> v) {
    double ss = 0.0;
    for (float x : v) ss += static_cast<double>(x) * x;
    return std::sqrt(ss);
}

}  // namespace

CandidatePool::CandidatePool(Tensor embeddings_, std::vector<std::uint64_t> ids_, std::string source_)
    : embeddings(std::move(embeddings_)), ids(std::move(ids_)), source(std::move(source_)) {
    if (!embeddings.defined() || embeddings.rank() != 2) throw ShapeError("candidate pool: embeddings must be [M, d]");
    if (ids.empty()) throw ValueError("candidate pool: empty pool");
    if (embeddings.dim(0) != ids.size()) throw ShapeError("candidate pool: one id per embedding row required");
    if (std::set<std::uint64_t>(ids.begin(), ids.end()).size() != ids.size()) {
        throw ValueError("candidate pool: duplicate candidate id");
    }
    const std::size_t d = embeddings.dim(1);
    for (std::size_t r = 0; r < ids.size(); ++r) {
        if (std::abs(norm(embeddings.data().subspan(r * d, d)) - 1.0) > 1e-3) {
            throw ValueError("candidate pool: row " + std::to_string(r) + " is not unit-norm");
        }
    }
}

std::vector<double> matching_scores(const Tensor& query, const CandidatePool& pool) {
    const std::size_t d = pool.embeddings.dim(1);
    if (query.size() != d) {
        throw ShapeError("matching_scores: query width " + std::to_string(query.size()) + " vs pool width " +
                         std::to_string(d));
    }
    const auto q = query.data();
    if (std::abs(norm(q) - 1.0) > 1e-3) throw ValueError("matching_scores: query is not unit-norm");
    std::vector<double> scores(pool.size());
    for (std::size_t r = 0; r < pool.size(); ++r) {
        const auto c = pool.embeddings.data().subspan(r * d, d);
        double dot = 0.0;
        for (std::size_t j = 0; j < d; ++j) dot += static_cast<double>(q[j]) * c[j];
        scores[r] = dot;
    }
    return scores;
}

std::vector<std::uint64_t> rank_and_select(std::span<const double> scores, std::span<const std::uint64_t> ids,
                                           std::size_t topk) {
    if (scores.size() != ids.size()) throw ShapeError("rank_and_select: one id per score required");
    if (topk < 1 || topk > scores.size()) {
        throw ValueError("rank_and_select: topk " + std::to_string(topk) + " outside [1, " +
                         std::to_string(scores.size()) + "]");
    }
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (scores[a] != scores[b]) return scores[a] > scores[b];
        return ids[a] < ids[b];
    });
    std::vector<std::uint64_t> out(topk);
    for (std::size_t i = 0; i < topk; ++i) out[i] = ids[order[i]];
    return out;
}

std::vector<RankedCandidate> rerank(const Tensor& query, const CandidatePool& pool, std::size_t topk) {
    const auto scores = matching_scores(query, pool);
    const auto chosen = rank_and_select(scores, pool.ids, topk);
    std::vector<RankedCandidate> out;
    for (auto id : chosen) {
        const auto pos = static_cast<std::size_t>(std::find(pool.ids.begin(), pool.ids.end(), id) - pool.ids.begin());
        out.push_back({id, scores[pos]});
    }
    return out;
}

}  // namespace xmodal
