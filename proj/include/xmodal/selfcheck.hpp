#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace xmodal {

struct CheckResult {
    std::string name;
    bool passed = false;
    std::string detail;
};

// Finite-difference gradient check of every differentiable op and of both
// encoder pipelines (d=8, T=12, grid 2) in double precision, over `seeds`
// seeds. Passes when the worst relative error stays below 1e-4.
CheckResult check_gradients(std::size_t seeds = 20);

// InfoNCE at uniform similarity (K = 1, 7, 255), the two-negative worked value
// and the symmetry of the cross-projected loss.
CheckResult check_loss_identities();

// Negative queue against a deque reference over 10k random operations, and
// the geometric decay of momentum updates towards a frozen query.
CheckResult check_queue_momentum(std::size_t operations = 10000);

// accuracy, mAP, MRR and segment F1 against brute-force references on
// `instances` random instances each (N <= 20), compared exactly.
CheckResult check_metric_oracles(std::size_t instances = 100);

std::vector<CheckResult> run_selfcheck();

}  // namespace xmodal
