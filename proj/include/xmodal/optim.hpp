#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "xmodal/tensor.hpp"

namespace xmodal {

template <typename T>
struct NamedParameter {
    std::string name;
    BasicTensor<T> tensor;
};

template <typename T>
using ParameterList = std::vector<NamedParameter<T>>;

template <typename T>
double parameter_grad_norm(const ParameterList<T>& params);

template <typename T>
void zero_grads(ParameterList<T>& params);

// FNV-1a over the raw bytes of every parameter value; used to assert that an
// evaluation pass left parameters untouched.
template <typename T>
std::uint64_t parameter_checksum(const ParameterList<T>& params);

struct AdamConfig {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

// Bias-corrected adaptive-moment optimizer. Moment buffers are created on the
// first step and must keep matching the parameter shapes afterwards.
template <typename T>
class Adam {
public:
    explicit Adam(AdamConfig config = {});

    const AdamConfig& config() const { return config_; }
    std::uint64_t step_count() const { return step_count_; }
    void set_learning_rate(double lr);

    // Applies one update from the accumulated gradients, then zeroes them.
    void step(ParameterList<T>& params);

    // Moment buffers, aligned with the parameter list of the last step.
    const std::vector<std::vector<T>>& first_moments() const { return m_; }
    const std::vector<std::vector<T>>& second_moments() const { return v_; }
    void restore(std::uint64_t step_count, std::vector<std::vector<T>> m, std::vector<std::vector<T>> v);

private:
    AdamConfig config_;
    std::uint64_t step_count_ = 0;
    std::vector<std::vector<T>> m_;
    std::vector<std::vector<T>> v_;
};

using ParameterListF = ParameterList<float>;

}  // namespace xmodal
