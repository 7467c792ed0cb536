#include "xmodal/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace xmodal {
namespace {

template <typename T>
double evaluate(const LossFn<T>& fn) {
    BasicTape<T> tape(false);
    const auto loss = fn(tape);
    if (loss.size() != 1) throw TapeError("finite_diff_check: function must return a scalar");
    return static_cast<double>(loss.item());
}

}  // namespace

template <typename T>
double finite_diff_check(const LossFn<T>& fn, std::span<BasicTensor<T>> points, double h) {
    if (!(h > 0.0)) throw ValueError("finite_diff_check: step must be positive");
    for (auto& p : points) {
        if (!p.requires_grad()) throw ValueError("finite_diff_check: point does not require gradients");
        p.zero_grad();
    }
    if (evaluate(fn) != evaluate(fn)) {
        throw ValueError("finite_diff_check: function is not deterministic");
    }
    {
        BasicTape<T> tape;
        const auto loss = fn(tape);
        tape.backward(loss);
    }
    double worst = 0.0;
    for (auto& p : points) {
        std::vector<T> analytic(p.grad().begin(), p.grad().end());
        auto data = p.mutable_data();
        for (std::size_t i = 0; i < data.size(); ++i) {
            const T saved = data[i];
            data[i] = static_cast<T>(saved + h);
            const double up = evaluate(fn);
            data[i] = static_cast<T>(saved - h);
            const double down = evaluate(fn);
            data[i] = saved;
            const double numeric = (up - down) / (2.0 * h);
            const double a = analytic[i];
            worst = std::max(worst, std::abs(a - numeric) / std::max(1.0, std::abs(a)));
        }
        p.zero_grad();
    }
    return worst;
}

template <typename T>
double finite_diff_check(const std::function<BasicTensor<T>(BasicTape<T>&, const BasicTensor<T>&)>& fn,
                         const BasicTensor<T>& point, double h) {
    BasicTensor<T> x = point.clone(true);
    std::vector<BasicTensor<T>> points{x};
    return finite_diff_check<T>([&](BasicTape<T>& tape) { return fn(tape, x); }, std::span<BasicTensor<T>>(points), h);
}

template double finite_diff_check(const LossFn<float>&, std::span<BasicTensor<float>>, double);
template double finite_diff_check(const LossFn<double>&, std::span<BasicTensor<double>>, double);
template double finite_diff_check(const std::function<BasicTensor<float>(BasicTape<float>&, const BasicTensor<float>&)>&,
                                  const BasicTensor<float>&, double);
template double finite_diff_check(
    const std::function<BasicTensor<double>(BasicTape<double>&, const BasicTensor<double>&)>&,
    const BasicTensor<double>&, double);

}  // namespace xmodal
