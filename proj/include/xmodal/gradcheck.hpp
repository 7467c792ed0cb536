#pragma once

#include <functional>
#include <span>
#include <vector>

#include "xmodal/tensor.hpp"

namespace xmodal {

// Builds a scalar loss on the given tape.
template <typename T>
using LossFn = std::function<BasicTensor<T>(BasicTape<T>&)>;

// Compares reverse-mode gradients of fn with respect to every tensor in
// `points` against central differences of step h. The tensors must require
// gradients; they are perturbed in place and restored. Returns the maximum over
// coordinates of |analytic - numeric| / max(1, |analytic|).
// Throws ValueError when fn is not deterministic (two evaluations at the same
// point differ).
template <typename T>
double finite_diff_check(const LossFn<T>& fn, std::span<BasicTensor<T>> points, double h);

// Single-input form: fn receives a tape and the point.
template <typename T>
double finite_diff_check(const std::function<BasicTensor<T>(BasicTape<T>&, const BasicTensor<T>&)>& fn,
                         const BasicTensor<T>& point, double h);

}  // namespace xmodal
