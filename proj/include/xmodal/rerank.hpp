#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "xmodal/tensor.hpp"

namespace xmodal {

struct CandidatePool {
    Tensor embeddings;  // [M, d], unit rows
    std::vector<std::uint64_t> ids;
    std::string source;

    CandidatePool() = default;
    CandidatePool(Tensor embeddings, std::vector<std::uint64_t> ids, std::string source);
    std::size_t size() const { return ids.size(); }
};

// Cosine similarity of a unit query ([d]) to every candidate, in pool order.
std::vector<double> matching_scores(const Tensor& query, const CandidatePool& pool);

// Ids of the topk best scores, best first; equal scores favour the lower id.
std::vector<std::uint64_t> rank_and_select(std::span<const double> scores, std::span<const std::uint64_t> ids,
                                           std::size_t topk);

struct RankedCandidate {
    std::uint64_t id = 0;
    double score = 0.0;
};

// The topk candidates of a pool with their scores.
std::vector<RankedCandidate> rerank(const Tensor& query, const CandidatePool& pool, std::size_t topk);

}  // namespace xmodal
