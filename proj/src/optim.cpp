#include "xmodal/optim.hpp"

#include <cmath>
#include <cstring>

namespace xmodal {

template <typename T>
double parameter_grad_norm(const ParameterList<T>& params) {
    double ss = 0.0;
    for (const auto& p : params) {
        if (!p.tensor.has_grad()) continue;
        for (T g : p.tensor.grad()) ss += static_cast<double>(g) * g;
    }
    return std::sqrt(ss);
}

template <typename T>
void zero_grads(ParameterList<T>& params) {
    for (auto& p : params) p.tensor.zero_grad();
}

template <typename T>
std::uint64_t parameter_checksum(const ParameterList<T>& params) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const auto& p : params) {
        for (T v : p.tensor.data()) {
            unsigned char bytes[sizeof(T)];
            std::memcpy(bytes, &v, sizeof(T));
            for (unsigned char b : bytes) {
                h ^= b;
                h *= 0x100000001b3ULL;
            }
        }
    }
    return h;
}

template <typename T>
Adam<T>::Adam(AdamConfig config) : config_(config) {
    if (!(config_.learning_rate > 0.0)) throw ValueError("adam: learning rate must be positive");
}

template <typename T>
void Adam<T>::set_learning_rate(double lr) {
    if (!(lr > 0.0)) throw ValueError("adam: learning rate must be positive");
    config_.learning_rate = lr;
}

template <typename T>
void Adam<T>::step(ParameterList<T>& params) {
    if (m_.empty() && step_count_ == 0) {
        for (const auto& p : params) {
            m_.emplace_back(p.tensor.size(), T(0));
            v_.emplace_back(p.tensor.size(), T(0));
        }
    }
    if (m_.size() != params.size()) {
        throw ShapeError("adam: optimizer tracks " + std::to_string(m_.size()) + " parameters, got " +
                         std::to_string(params.size()));
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (!params[i].tensor.requires_grad() || !params[i].tensor.has_grad()) {
            throw ValueError("adam: parameter '" + params[i].name + "' has no gradient");
        }
        if (m_[i].size() != params[i].tensor.size()) {
            throw ShapeError("adam: moment buffer of '" + params[i].name + "' does not match its shape " +
                             shape_to_string(params[i].tensor.shape()));
        }
    }
    ++step_count_;
    const double b1 = config_.beta1, b2 = config_.beta2;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(step_count_));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(step_count_));
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto& t = params[i].tensor;
        auto data = t.mutable_data();
        auto grad = t.mutable_grad();
        auto& m = m_[i];
        auto& v = v_[i];
        for (std::size_t j = 0; j < data.size(); ++j) {
            const double g = grad[j];
            m[j] = static_cast<T>(b1 * m[j] + (1.0 - b1) * g);
            v[j] = static_cast<T>(b2 * v[j] + (1.0 - b2) * g * g);
            const double mhat = m[j] / c1;
            const double vhat = v[j] / c2;
            data[j] = static_cast<T>(data[j] - config_.learning_rate * mhat / (std::sqrt(vhat) + config_.epsilon));
        }
        t.zero_grad();
    }
}

template <typename T>
void Adam<T>::restore(std::uint64_t step_count, std::vector<std::vector<T>> m, std::vector<std::vector<T>> v) {
    if (m.size() != v.size()) throw ShapeError("adam: moment lists differ in length");
    step_count_ = step_count;
    m_ = std::move(m);
    v_ = std::move(v);
}

template double parameter_grad_norm(const ParameterList<float>&);
template double parameter_grad_norm(const ParameterList<double>&);
template void zero_grads(ParameterList<float>&);
template void zero_grads(ParameterList<double>&);
template std::uint64_t parameter_checksum(const ParameterList<float>&);
template std::uint64_t parameter_checksum(const ParameterList<double>&);
template class Adam<float>;
template class Adam<double>;

}  // namespace xmodal
