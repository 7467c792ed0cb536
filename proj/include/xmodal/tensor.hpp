#pragma once

#include <atomic>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <numeric>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "xmodal/error.hpp"

namespace xmodal {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_to_string(const Shape& shape);

template <typename T>
struct TensorStorage {
    Shape shape;
    std::vector<T> data;
    // Empty when no gradient has been accumulated yet.
    std::vector<T> grad;
    bool requires_grad = false;
    std::uint64_t id = 0;

    std::vector<T>& ensure_grad() {
        if (grad.size() != data.size()) grad.assign(data.size(), T(0));
        return grad;
    }
};

std::uint64_t next_node_id();

// Dense row-major tensor handle. Copies share storage; use clone() for a deep
// copy. Scalars have rank 0 (empty shape, one element).
template <typename T>
class BasicTensor {
public:
    using value_type = T;

    BasicTensor() = default;

    BasicTensor(Shape shape, std::vector<T> data, bool requires_grad = false)
        : storage_(std::make_shared<TensorStorage<T>>()) {
        for (std::size_t extent : shape) {
            if (extent == 0) throw ShapeError("tensor extents must be positive, got " + shape_to_string(shape));
        }
        if (shape_size(shape) != data.size()) {
            throw ShapeError("tensor data has " + std::to_string(data.size()) + " values but shape " +
                             shape_to_string(shape) + " needs " + std::to_string(shape_size(shape)));
        }
        storage_->shape = std::move(shape);
        storage_->data = std::move(data);
        storage_->requires_grad = requires_grad;
        storage_->id = next_node_id();
        if (requires_grad) storage_->ensure_grad();
    }

    static BasicTensor zeros(Shape shape, bool requires_grad = false) {
        const std::size_t n = shape_size(shape);
        return BasicTensor(std::move(shape), std::vector<T>(n, T(0)), requires_grad);
    }
    static BasicTensor full(Shape shape, T value, bool requires_grad = false) {
        const std::size_t n = shape_size(shape);
        return BasicTensor(std::move(shape), std::vector<T>(n, value), requires_grad);
    }
    static BasicTensor scalar(T value, bool requires_grad = false) {
        return BasicTensor(Shape{}, std::vector<T>{value}, requires_grad);
    }

    bool defined() const { return storage_ != nullptr; }
    const Shape& shape() const { return storage_->shape; }
    std::size_t rank() const { return storage_->shape.size(); }
    std::size_t dim(std::size_t axis) const { return storage_->shape.at(axis); }
    std::size_t size() const { return storage_->data.size(); }
    std::uint64_t id() const { return storage_->id; }

    std::span<const T> data() const { return storage_->data; }
    std::span<T> mutable_data() { return storage_->data; }
    const std::vector<T>& values() const { return storage_->data; }

    bool requires_grad() const { return storage_->requires_grad; }
    bool has_grad() const { return storage_->grad.size() == storage_->data.size(); }
    std::span<const T> grad() const { return storage_->grad; }
    std::span<T> mutable_grad() { return storage_->ensure_grad(); }
    void zero_grad() {
        if (storage_->requires_grad) storage_->grad.assign(storage_->data.size(), T(0));
        else storage_->grad.clear();
    }

    T item() const {
        if (size() != 1) throw ShapeError("item() needs a single-element tensor, got " + shape_to_string(shape()));
        return storage_->data[0];
    }
    T operator[](std::size_t i) const { return storage_->data[i]; }

    // Deep copy with fresh identity.
    BasicTensor clone(bool requires_grad) const { return BasicTensor(shape(), storage_->data, requires_grad); }
    BasicTensor detach() const { return clone(false); }

    const std::shared_ptr<TensorStorage<T>>& storage() const { return storage_; }

    static BasicTensor from_storage(std::shared_ptr<TensorStorage<T>> s) {
        BasicTensor t;
        t.storage_ = std::move(s);
        return t;
    }

private:
    std::shared_ptr<TensorStorage<T>> storage_;
};

// Ordered record of differentiable ops for one forward pass. Ops append entries
// as they execute, so entries are always in topological order. backward() may
// run once; the tape is consumed afterwards.
template <typename T>
class BasicTape {
public:
    using Node = std::shared_ptr<TensorStorage<T>>;
    // Receives the output gradient; accumulates into the captured inputs.
    using BackwardFn = std::function<void(const std::vector<T>& out_grad)>;

    struct Entry {
        std::string op;
        std::vector<std::uint64_t> input_ids;
        Node output;
        BackwardFn backward;
    };

    explicit BasicTape(bool recording = true) : recording_(recording) {}
    BasicTape(const BasicTape&) = delete;
    BasicTape& operator=(const BasicTape&) = delete;

    bool recording() const { return recording_; }
    bool consumed() const { return consumed_; }
    std::size_t size() const { return entries_.size(); }
    const std::vector<Entry>& entries() const { return entries_; }

    // Builds the output tensor of an op, checks it for non-finite values and
    // records the backward closure when any input requires gradients.
    BasicTensor<T> emit(std::string_view op, Shape shape, std::vector<T> data,
                        std::initializer_list<const BasicTensor<T>*> inputs, BackwardFn backward);
    BasicTensor<T> emit(std::string_view op, Shape shape, std::vector<T> data,
                        const std::vector<const BasicTensor<T>*>& inputs, BackwardFn backward);

    void backward(const BasicTensor<T>& loss);

private:
    bool recording_;
    bool consumed_ = false;
    std::vector<Entry> entries_;
};

using Tensor = BasicTensor<float>;
using Tape = BasicTape<float>;

// Returns the input gradient buffer to accumulate into, or nullptr when the
// input does not take part in differentiation.
template <typename T>
std::vector<T>* grad_sink(const std::shared_ptr<TensorStorage<T>>& node) {
    return node->requires_grad ? &node->ensure_grad() : nullptr;
}

}  // namespace xmodal
