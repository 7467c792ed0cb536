#include "xmodal/tensor.hpp"

#include <cmath>
#include <sstream>

namespace xmodal {

std::size_t shape_size(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_to_string(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << 'x';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

std::uint64_t next_node_id() {
    static std::atomic<std::uint64_t> counter{1};
    return counter.fetch_add(1, std::memory_order_relaxed);
}

template <typename T>
BasicTensor<T> BasicTape<T>::emit(std::string_view op, Shape shape, std::vector<T> data,
                                  std::initializer_list<const BasicTensor<T>*> inputs, BackwardFn backward) {
    return emit(op, std::move(shape), std::move(data), std::vector<const BasicTensor<T>*>(inputs), std::move(backward));
}

template <typename T>
BasicTensor<T> BasicTape<T>::emit(std::string_view op, Shape shape, std::vector<T> data,
                                  const std::vector<const BasicTensor<T>*>& inputs, BackwardFn backward) {
    if (consumed_) throw TapeError("op '" + std::string(op) + "' recorded on a consumed tape");
    for (std::size_t i = 0; i < data.size(); ++i) {
        if (!std::isfinite(data[i])) {
            throw NumericError("non-finite value produced by op '" + std::string(op) + "' at flat index " +
                               std::to_string(i) + " of output " + shape_to_string(shape));
        }
    }
    bool needs_grad = false;
    if (recording_) {
        for (const auto* in : inputs) needs_grad = needs_grad || in->requires_grad();
    }
    auto out = BasicTensor<T>(std::move(shape), std::move(data), false);
    if (needs_grad) {
        out.storage()->requires_grad = true;
        Entry entry;
        entry.op = std::string(op);
        entry.input_ids.reserve(inputs.size());
        for (const auto* in : inputs) entry.input_ids.push_back(in->id());
        entry.output = out.storage();
        entry.backward = std::move(backward);
        entries_.push_back(std::move(entry));
    }
    return out;
}

template <typename T>
void BasicTape<T>::backward(const BasicTensor<T>& loss) {
    if (consumed_) throw TapeError("backward called twice on the same tape");
    if (loss.size() != 1) throw TapeError("backward needs a scalar loss, got shape " + shape_to_string(loss.shape()));
    consumed_ = true;
    if (!loss.requires_grad()) {
        entries_.clear();
        return;
    }
    loss.storage()->ensure_grad()[0] += T(1);
    for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
        auto& out = it->output;
        if (out->grad.size() != out->data.size()) continue;  // not on the loss path
        it->backward(out->grad);
        // Intermediate buffers are not needed once propagated.
        if (out.get() != loss.storage().get()) {
            out->grad.clear();
            out->grad.shrink_to_fit();
        }
    }
    entries_.clear();
}

template class BasicTape<float>;
template class BasicTape<double>;

}  // namespace xmodal
