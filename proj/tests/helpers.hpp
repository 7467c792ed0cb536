#pragma once

#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include "xmodal/rng.hpp"
#include "xmodal/tensor.hpp"

namespace xmodal::test {

template <typename T = float>
BasicTensor<T> normal_tensor(Shape shape, Rng& rng, double scale = 1.0, bool grad = false) {
    std::vector<T> v(shape_size(shape));
    for (auto& x : v) x = static_cast<T>(rng.normal() * scale);
    return BasicTensor<T>(std::move(shape), std::move(v), grad);
}

template <typename T = float>
BasicTensor<T> unit_rows(std::size_t n, std::size_t d, Rng& rng) {
    std::vector<T> v(n * d);
    for (std::size_t r = 0; r < n; ++r) {
        double ss = 0.0;
        for (std::size_t k = 0; k < d; ++k) {
            const double x = rng.normal();
            v[r * d + k] = static_cast<T>(x);
            ss += x * x;
        }
        for (std::size_t k = 0; k < d; ++k) v[r * d + k] = static_cast<T>(v[r * d + k] / std::sqrt(ss));
    }
    return BasicTensor<T>({n, d}, std::move(v));
}

template <typename T>
double max_abs_diff(std::span<const T> a, std::span<const T> b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(static_cast<double>(a[i]) - b[i]));
    return m;
}

// Fresh directory under the build tree's temp area, removed on destruction.
struct TempDir {
    std::filesystem::path path;
    explicit TempDir(const std::string& name)
        : path(std::filesystem::temp_directory_path() / ("xmodal_test_" + name)) {
        std::filesystem::remove_all(path);
        std::filesystem::create_directories(path);
    }
    ~TempDir() { std::filesystem::remove_all(path); }
    std::string file(const std::string& name) const { return (path / name).string(); }
};

}  // namespace xmodal::test
