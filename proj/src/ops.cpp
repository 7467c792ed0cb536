#include "xmodal/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace xmodal::ops {
namespace {

template <typename T>
using Node = std::shared_ptr<TensorStorage<T>>;

std::size_t last_dim(const Shape& s) { return s.empty() ? 1 : s.back(); }

void require_same_shape(const char* op, const Shape& a, const Shape& b) {
    if (a != b) {
        throw ShapeError(std::string(op) + ": shape mismatch " + shape_to_string(a) + " vs " + shape_to_string(b));
    }
}

void require_rank(const char* op, const Shape& s, std::size_t min_rank) {
    if (s.size() < min_rank) {
        throw ShapeError(std::string(op) + ": needs rank >= " + std::to_string(min_rank) + ", got " +
                         shape_to_string(s));
    }
}

}  // namespace

template <typename T>
BasicTensor<T> matmul(BasicTape<T>& tape, const BasicTensor<T>& a, const BasicTensor<T>& b, bool transpose_b) {
    const Shape& as = a.shape();
    const Shape& bs = b.shape();
    auto mismatch = [&] {
        return ShapeError("matmul: incompatible shapes " + shape_to_string(as) + " and " + shape_to_string(bs) +
                          (transpose_b ? " (b transposed)" : ""));
    };
    if (as.empty() || bs.size() < 2) throw mismatch();

    const bool batched = bs.size() == 3;
    if (bs.size() > 3) throw mismatch();
    const std::size_t k = as.back();
    const std::size_t b_rows = bs[bs.size() - 2];
    const std::size_t b_cols = bs.back();
    const std::size_t inner = transpose_b ? b_cols : b_rows;
    const std::size_t n = transpose_b ? b_rows : b_cols;
    if (inner != k) throw mismatch();

    std::size_t batches = 1;
    std::size_t m = a.size() / k;
    Shape out_shape(as.begin(), as.end() - 1);
    if (batched) {
        if (as.size() != 3 || as[0] != bs[0]) throw mismatch();
        batches = as[0];
        m = as[1];
    }
    out_shape.push_back(n);

    const std::size_t a_stride = m * k;
    const std::size_t b_stride = batched ? k * n : 0;
    const std::size_t c_stride = m * n;
    const T* A = a.data().data();
    const T* B = b.data().data();
    std::vector<T> C(batches * c_stride, T(0));
    for (std::size_t bt = 0; bt < batches; ++bt) {
        const T* Ab = A + bt * a_stride;
        const T* Bb = B + bt * b_stride;
        T* Cb = C.data() + bt * c_stride;
        for (std::size_t i = 0; i < m; ++i) {
            const T* ai = Ab + i * k;
            T* ci = Cb + i * n;
            if (transpose_b) {
                for (std::size_t j = 0; j < n; ++j) {
                    const T* bj = Bb + j * k;
                    T acc = 0;
                    for (std::size_t p = 0; p < k; ++p) acc += ai[p] * bj[p];
                    ci[j] = acc;
                }
            } else {
                for (std::size_t p = 0; p < k; ++p) {
                    const T av = ai[p];
                    const T* bp = Bb + p * n;
                    for (std::size_t j = 0; j < n; ++j) ci[j] += av * bp[j];
                }
            }
        }
    }

    Node<T> an = a.storage(), bn = b.storage();
    return tape.emit("matmul", std::move(out_shape), std::move(C), {&a, &b},
                     [=](const std::vector<T>& dC) {
                         auto* dA = grad_sink(an);
                         auto* dB = grad_sink(bn);
                         const T* A = an->data.data();
                         const T* B = bn->data.data();
                         for (std::size_t bt = 0; bt < batches; ++bt) {
                             const T* Ab = A + bt * a_stride;
                             const T* Bb = B + bt * b_stride;
                             const T* dCb = dC.data() + bt * c_stride;
                             for (std::size_t i = 0; i < m; ++i) {
                                 const T* dci = dCb + i * n;
                                 const T* ai = Ab + i * k;
                                 if (dA) {
                                     T* dai = dA->data() + bt * a_stride + i * k;
                                     if (transpose_b) {
                                         for (std::size_t j = 0; j < n; ++j) {
                                             const T g = dci[j];
                                             const T* bj = Bb + j * k;
                                             for (std::size_t p = 0; p < k; ++p) dai[p] += g * bj[p];
                                         }
                                     } else {
                                         for (std::size_t p = 0; p < k; ++p) {
                                             const T* bp = Bb + p * n;
                                             T acc = 0;
                                             for (std::size_t j = 0; j < n; ++j) acc += dci[j] * bp[j];
                                             dai[p] += acc;
                                         }
                                     }
                                 }
                                 if (dB) {
                                     T* dBb = dB->data() + bt * b_stride;
                                     if (transpose_b) {
                                         for (std::size_t j = 0; j < n; ++j) {
                                             const T g = dci[j];
                                             T* dbj = dBb + j * k;
                                             for (std::size_t p = 0; p < k; ++p) dbj[p] += g * ai[p];
                                         }
                                     } else {
                                         for (std::size_t p = 0; p < k; ++p) {
                                             const T av = ai[p];
                                             T* dbp = dBb + p * n;
                                             for (std::size_t j = 0; j < n; ++j) dbp[j] += av * dci[j];
                                         }
                                     }
                                 }
                             }
                         }
                     });
}

template <typename T>
BasicTensor<T> add(BasicTape<T>& tape, const BasicTensor<T>& a, const BasicTensor<T>& b) {
    require_same_shape("add", a.shape(), b.shape());
    std::vector<T> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + b[i];
    Node<T> an = a.storage(), bn = b.storage();
    return tape.emit("add", a.shape(), std::move(out), {&a, &b}, [=](const std::vector<T>& g) {
        for (const auto& node : {an, bn}) {
            if (auto* d = grad_sink(node)) {
                for (std::size_t i = 0; i < g.size(); ++i) (*d)[i] += g[i];
            }
        }
    });
}

template <typename T>
BasicTensor<T> add_broadcast(BasicTape<T>& tape, const BasicTensor<T>& x, const BasicTensor<T>& b) {
    const Shape& xs = x.shape();
    const Shape& bs = b.shape();
    if (bs.size() > xs.size() || !std::equal(bs.rbegin(), bs.rend(), xs.rbegin())) {
        throw ShapeError("add_broadcast: " + shape_to_string(bs) + " is not a trailing suffix of " +
                         shape_to_string(xs));
    }
    const std::size_t inner = b.size();
    std::vector<T> out(x.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] + b[i % inner];
    Node<T> xn = x.storage(), bn = b.storage();
    return tape.emit("add_broadcast", xs, std::move(out), {&x, &b}, [=](const std::vector<T>& g) {
        if (auto* dx = grad_sink(xn)) {
            for (std::size_t i = 0; i < g.size(); ++i) (*dx)[i] += g[i];
        }
        if (auto* db = grad_sink(bn)) {
            for (std::size_t i = 0; i < g.size(); ++i) (*db)[i % inner] += g[i];
        }
    });
}

template <typename T>
BasicTensor<T> scale(BasicTape<T>& tape, const BasicTensor<T>& x, double factor) {
    const T f = static_cast<T>(factor);
    std::vector<T> out(x.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * f;
    Node<T> xn = x.storage();
    return tape.emit("scale", x.shape(), std::move(out), {&x}, [=](const std::vector<T>& g) {
        if (auto* dx = grad_sink(xn)) {
            for (std::size_t i = 0; i < g.size(); ++i) (*dx)[i] += g[i] * f;
        }
    });
}

template <typename T>
BasicTensor<T> mul(BasicTape<T>& tape, const BasicTensor<T>& a, const BasicTensor<T>& b) {
    require_same_shape("mul", a.shape(), b.shape());
    std::vector<T> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * b[i];
    Node<T> an = a.storage(), bn = b.storage();
    return tape.emit("mul", a.shape(), std::move(out), {&a, &b}, [=](const std::vector<T>& g) {
        if (auto* da = grad_sink(an)) {
            for (std::size_t i = 0; i < g.size(); ++i) (*da)[i] += g[i] * bn->data[i];
        }
        if (auto* db = grad_sink(bn)) {
            for (std::size_t i = 0; i < g.size(); ++i) (*db)[i] += g[i] * an->data[i];
        }
    });
}

template <typename T>
BasicTensor<T> relu(BasicTape<T>& tape, const BasicTensor<T>& x) {
    std::vector<T> out(x.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] > T(0) ? x[i] : T(0);
    Node<T> xn = x.storage();
    return tape.emit("relu", x.shape(), std::move(out), {&x}, [=](const std::vector<T>& g) {
        if (auto* dx = grad_sink(xn)) {
            for (std::size_t i = 0; i < g.size(); ++i) {
                if (xn->data[i] > T(0)) (*dx)[i] += g[i];
            }
        }
    });
}

template <typename T>
BasicTensor<T> layer_norm(BasicTape<T>& tape, const BasicTensor<T>& x, const BasicTensor<T>& gain,
                          const BasicTensor<T>& bias, double eps) {
    if (x.rank() == 0) throw ShapeError("layer_norm: empty normalization axis");
    if (!(eps > 0.0)) throw ValueError("layer_norm: eps must be positive, got " + std::to_string(eps));
    const std::size_t d = x.shape().back();
    if (gain.shape() != Shape{d} || bias.shape() != Shape{d}) {
        throw ShapeError("layer_norm: gain/bias must be [" + std::to_string(d) + "], got " +
                         shape_to_string(gain.shape()) + " and " + shape_to_string(bias.shape()));
    }
    const std::size_t rows = x.size() / d;
    auto xhat = std::make_shared<std::vector<T>>(x.size());
    auto inv_std = std::make_shared<std::vector<T>>(rows);
    std::vector<T> out(x.size());
    const T* xv = x.data().data();
    for (std::size_t r = 0; r < rows; ++r) {
        const T* xr = xv + r * d;
        double mean = 0.0;
        for (std::size_t j = 0; j < d; ++j) mean += xr[j];
        mean /= static_cast<double>(d);
        double var = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
            const double c = xr[j] - mean;
            var += c * c;
        }
        var /= static_cast<double>(d);
        const double inv = 1.0 / std::sqrt(var + eps);
        (*inv_std)[r] = static_cast<T>(inv);
        for (std::size_t j = 0; j < d; ++j) {
            const T h = static_cast<T>((xr[j] - mean) * inv);
            (*xhat)[r * d + j] = h;
            out[r * d + j] = gain[j] * h + bias[j];
        }
    }
    Node<T> xn = x.storage(), gn = gain.storage(), bn = bias.storage();
    return tape.emit("layer_norm", x.shape(), std::move(out), {&x, &gain, &bias}, [=](const std::vector<T>& g) {
        auto* dx = grad_sink(xn);
        auto* dg = grad_sink(gn);
        auto* db = grad_sink(bn);
        std::vector<T> dh(d);
        for (std::size_t r = 0; r < rows; ++r) {
            const T* gr = g.data() + r * d;
            const T* hr = xhat->data() + r * d;
            double sum_dh = 0.0, sum_dh_h = 0.0;
            for (std::size_t j = 0; j < d; ++j) {
                dh[j] = gr[j] * gn->data[j];
                sum_dh += dh[j];
                sum_dh_h += static_cast<double>(dh[j]) * hr[j];
                if (dg) (*dg)[j] += gr[j] * hr[j];
                if (db) (*db)[j] += gr[j];
            }
            if (dx) {
                const double inv = (*inv_std)[r];
                const double dd = static_cast<double>(d);
                for (std::size_t j = 0; j < d; ++j) {
                    (*dx)[r * d + j] += static_cast<T>(inv / dd * (dd * dh[j] - sum_dh - hr[j] * sum_dh_h));
                }
            }
        }
    });
}

template <typename T>
BasicTensor<T> softmax_with_temperature(BasicTape<T>& tape, const BasicTensor<T>& logits, double tau) {
    if (!(tau > 0.0)) throw ValueError("softmax: temperature must be positive, got " + std::to_string(tau));
    const std::size_t c = last_dim(logits.shape());
    const std::size_t rows = logits.size() / c;
    std::vector<T> out(logits.size());
    const T* lv = logits.data().data();
    for (std::size_t r = 0; r < rows; ++r) {
        const T* lr = lv + r * c;
        const T mx = *std::max_element(lr, lr + c);
        double total = 0.0;
        for (std::size_t j = 0; j < c; ++j) total += std::exp((static_cast<double>(lr[j]) - mx) / tau);
        for (std::size_t j = 0; j < c; ++j) {
            out[r * c + j] = static_cast<T>(std::exp((static_cast<double>(lr[j]) - mx) / tau) / total);
        }
    }
    Node<T> ln = logits.storage();
    auto probs = std::make_shared<std::vector<T>>(out);
    return tape.emit("softmax", logits.shape(), std::move(out), {&logits}, [=](const std::vector<T>& g) {
        auto* dl = grad_sink(ln);
        if (!dl) return;
        for (std::size_t r = 0; r < rows; ++r) {
            const T* pr = probs->data() + r * c;
            const T* gr = g.data() + r * c;
            double dotp = 0.0;
            for (std::size_t j = 0; j < c; ++j) dotp += static_cast<double>(gr[j]) * pr[j];
            for (std::size_t j = 0; j < c; ++j) {
                (*dl)[r * c + j] += static_cast<T>(pr[j] * (gr[j] - dotp) / tau);
            }
        }
    });
}

template <typename T>
BasicTensor<T> log_softmax_with_temperature(BasicTape<T>& tape, const BasicTensor<T>& logits, double tau) {
    if (!(tau > 0.0)) throw ValueError("log_softmax: temperature must be positive, got " + std::to_string(tau));
    const std::size_t c = last_dim(logits.shape());
    const std::size_t rows = logits.size() / c;
    std::vector<T> out(logits.size());
    auto probs = std::make_shared<std::vector<T>>(logits.size());
    const T* lv = logits.data().data();
    for (std::size_t r = 0; r < rows; ++r) {
        const T* lr = lv + r * c;
        const double mx = *std::max_element(lr, lr + c);
        double total = 0.0;
        for (std::size_t j = 0; j < c; ++j) total += std::exp((lr[j] - mx) / tau);
        const double lse = std::log(total);
        for (std::size_t j = 0; j < c; ++j) {
            const double z = (lr[j] - mx) / tau - lse;
            out[r * c + j] = static_cast<T>(z);
            (*probs)[r * c + j] = static_cast<T>(std::exp(z));
        }
    }
    Node<T> ln = logits.storage();
    return tape.emit("log_softmax", logits.shape(), std::move(out), {&logits}, [=](const std::vector<T>& g) {
        auto* dl = grad_sink(ln);
        if (!dl) return;
        for (std::size_t r = 0; r < rows; ++r) {
            const T* gr = g.data() + r * c;
            double total = 0.0;
            for (std::size_t j = 0; j < c; ++j) total += gr[j];
            for (std::size_t j = 0; j < c; ++j) {
                (*dl)[r * c + j] += static_cast<T>((gr[j] - (*probs)[r * c + j] * total) / tau);
            }
        }
    });
}

template <typename T>
BasicTensor<T> l2_normalize(BasicTape<T>& tape, const BasicTensor<T>& x) {
    const std::size_t c = last_dim(x.shape());
    const std::size_t rows = x.size() / c;
    auto norms = std::make_shared<std::vector<T>>(rows);
    std::vector<T> out(x.size());
    for (std::size_t r = 0; r < rows; ++r) {
        double ss = 0.0;
        for (std::size_t j = 0; j < c; ++j) ss += static_cast<double>(x[r * c + j]) * x[r * c + j];
        const double norm = std::sqrt(ss);
        if (!(norm > 1e-30)) {
            throw DegenerateVectorError("l2_normalize: row " + std::to_string(r) + " of " +
                                        shape_to_string(x.shape()) + " has zero norm");
        }
        (*norms)[r] = static_cast<T>(norm);
        for (std::size_t j = 0; j < c; ++j) out[r * c + j] = static_cast<T>(x[r * c + j] / norm);
    }
    Node<T> xn = x.storage();
    auto y = std::make_shared<std::vector<T>>(out);
    return tape.emit("l2_normalize", x.shape(), std::move(out), {&x}, [=](const std::vector<T>& g) {
        auto* dx = grad_sink(xn);
        if (!dx) return;
        for (std::size_t r = 0; r < rows; ++r) {
            const T* yr = y->data() + r * c;
            const T* gr = g.data() + r * c;
            double proj = 0.0;
            for (std::size_t j = 0; j < c; ++j) proj += static_cast<double>(yr[j]) * gr[j];
            const double inv = 1.0 / (*norms)[r];
            for (std::size_t j = 0; j < c; ++j) (*dx)[r * c + j] += static_cast<T>((gr[j] - yr[j] * proj) * inv);
        }
    });
}

template <typename T>
BasicTensor<T> mean_rows(BasicTape<T>& tape, const BasicTensor<T>& x) {
    require_rank("mean_rows", x.shape(), 2);
    const Shape& xs = x.shape();
    const std::size_t c = xs.back();
    const std::size_t n = xs[xs.size() - 2];
    const std::size_t groups = x.size() / (n * c);
    Shape out_shape(xs.begin(), xs.end() - 2);
    out_shape.push_back(c);
    std::vector<T> out(groups * c, T(0));
    for (std::size_t gidx = 0; gidx < groups; ++gidx) {
        for (std::size_t j = 0; j < c; ++j) {
            double acc = 0.0;
            for (std::size_t i = 0; i < n; ++i) acc += x[(gidx * n + i) * c + j];
            out[gidx * c + j] = static_cast<T>(acc / static_cast<double>(n));
        }
    }
    Node<T> xn = x.storage();
    return tape.emit("mean_rows", std::move(out_shape), std::move(out), {&x}, [=](const std::vector<T>& g) {
        auto* dx = grad_sink(xn);
        if (!dx) return;
        const T inv = T(1) / static_cast<T>(n);
        for (std::size_t gidx = 0; gidx < groups; ++gidx) {
            for (std::size_t i = 0; i < n; ++i) {
                for (std::size_t j = 0; j < c; ++j) (*dx)[(gidx * n + i) * c + j] += g[gidx * c + j] * inv;
            }
        }
    });
}

template <typename T>
BasicTensor<T> sum(BasicTape<T>& tape, const BasicTensor<T>& x) {
    double acc = 0.0;
    for (T v : x.data()) acc += v;
    Node<T> xn = x.storage();
    return tape.emit("sum", Shape{}, std::vector<T>{static_cast<T>(acc)}, {&x}, [=](const std::vector<T>& g) {
        if (auto* dx = grad_sink(xn)) {
            for (auto& v : *dx) v += g[0];
        }
    });
}

template <typename T>
BasicTensor<T> dot(BasicTape<T>& tape, const BasicTensor<T>& a, const BasicTensor<T>& b) {
    if (a.size() != b.size()) {
        throw ShapeError("dot: size mismatch " + shape_to_string(a.shape()) + " vs " + shape_to_string(b.shape()));
    }
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += static_cast<double>(a[i]) * b[i];
    Node<T> an = a.storage(), bn = b.storage();
    return tape.emit("dot", Shape{}, std::vector<T>{static_cast<T>(acc)}, {&a, &b}, [=](const std::vector<T>& g) {
        if (auto* da = grad_sink(an)) {
            for (std::size_t i = 0; i < da->size(); ++i) (*da)[i] += g[0] * bn->data[i];
        }
        if (auto* db = grad_sink(bn)) {
            for (std::size_t i = 0; i < db->size(); ++i) (*db)[i] += g[0] * an->data[i];
        }
    });
}

template <typename T>
BasicTensor<T> cosine_similarity(BasicTape<T>& tape, const BasicTensor<T>& a, const BasicTensor<T>& b) {
    if (a.shape() != b.shape() || a.rank() != 1) {
        throw ShapeError("cosine_similarity: needs two equal-length vectors, got " + shape_to_string(a.shape()) +
                         " and " + shape_to_string(b.shape()));
    }
    return dot(tape, l2_normalize(tape, a), l2_normalize(tape, b));
}

template <typename T>
BasicTensor<T> reshape(BasicTape<T>& tape, const BasicTensor<T>& x, Shape shape) {
    if (shape_size(shape) != x.size()) {
        throw ShapeError("reshape: cannot view " + shape_to_string(x.shape()) + " as " + shape_to_string(shape));
    }
    Node<T> xn = x.storage();
    return tape.emit("reshape", std::move(shape), x.values(), {&x}, [=](const std::vector<T>& g) {
        if (auto* dx = grad_sink(xn)) {
            for (std::size_t i = 0; i < g.size(); ++i) (*dx)[i] += g[i];
        }
    });
}

template <typename T>
BasicTensor<T> concat_rows(BasicTape<T>& tape, const std::vector<BasicTensor<T>>& parts) {
    if (parts.empty()) throw ShapeError("concat_rows: nothing to concatenate");
    const Shape& first = parts.front().shape();
    require_rank("concat_rows", first, 1);
    Shape out_shape = first;
    out_shape[0] = 0;
    std::vector<T> out;
    std::vector<const BasicTensor<T>*> inputs;
    std::vector<Node<T>> nodes;
    for (const auto& p : parts) {
        const Shape& s = p.shape();
        if (s.size() != first.size() || !std::equal(s.begin() + 1, s.end(), first.begin() + 1)) {
            throw ShapeError("concat_rows: trailing shape mismatch " + shape_to_string(first) + " vs " +
                             shape_to_string(s));
        }
        out_shape[0] += s[0];
        out.insert(out.end(), p.data().begin(), p.data().end());
        inputs.push_back(&p);
        nodes.push_back(p.storage());
    }
    return tape.emit("concat_rows", std::move(out_shape), std::move(out), inputs, [=](const std::vector<T>& g) {
        std::size_t offset = 0;
        for (const auto& node : nodes) {
            if (auto* d = grad_sink(node)) {
                for (std::size_t i = 0; i < d->size(); ++i) (*d)[i] += g[offset + i];
            }
            offset += node->data.size();
        }
    });
}

template <typename T>
BasicTensor<T> split_heads(BasicTape<T>& tape, const BasicTensor<T>& x, std::size_t heads) {
    if (x.rank() != 3) throw ShapeError("split_heads: needs [B, N, c], got " + shape_to_string(x.shape()));
    const std::size_t B = x.dim(0), N = x.dim(1), c = x.dim(2);
    if (heads == 0 || c % heads != 0) {
        throw ShapeError("split_heads: width " + std::to_string(c) + " not divisible by " + std::to_string(heads) +
                         " heads");
    }
    const std::size_t dh = c / heads;
    std::vector<T> out(x.size());
    auto index = [=](std::size_t b, std::size_t h, std::size_t n, std::size_t j) {
        return ((b * heads + h) * N + n) * dh + j;
    };
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t n = 0; n < N; ++n)
            for (std::size_t h = 0; h < heads; ++h)
                for (std::size_t j = 0; j < dh; ++j) out[index(b, h, n, j)] = x[(b * N + n) * c + h * dh + j];
    Node<T> xn = x.storage();
    return tape.emit("split_heads", Shape{B * heads, N, dh}, std::move(out), {&x}, [=](const std::vector<T>& g) {
        auto* dx = grad_sink(xn);
        if (!dx) return;
        for (std::size_t b = 0; b < B; ++b)
            for (std::size_t n = 0; n < N; ++n)
                for (std::size_t h = 0; h < heads; ++h)
                    for (std::size_t j = 0; j < dh; ++j) (*dx)[(b * N + n) * c + h * dh + j] += g[index(b, h, n, j)];
    });
}

template <typename T>
BasicTensor<T> merge_heads(BasicTape<T>& tape, const BasicTensor<T>& x, std::size_t heads) {
    if (x.rank() != 3 || heads == 0 || x.dim(0) % heads != 0) {
        throw ShapeError("merge_heads: needs [B*heads, N, dh], got " + shape_to_string(x.shape()));
    }
    const std::size_t B = x.dim(0) / heads, N = x.dim(1), dh = x.dim(2);
    const std::size_t c = dh * heads;
    std::vector<T> out(x.size());
    auto index = [=](std::size_t b, std::size_t h, std::size_t n, std::size_t j) {
        return ((b * heads + h) * N + n) * dh + j;
    };
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t n = 0; n < N; ++n)
            for (std::size_t h = 0; h < heads; ++h)
                for (std::size_t j = 0; j < dh; ++j) out[(b * N + n) * c + h * dh + j] = x[index(b, h, n, j)];
    Node<T> xn = x.storage();
    return tape.emit("merge_heads", Shape{B, N, c}, std::move(out), {&x}, [=](const std::vector<T>& g) {
        auto* dx = grad_sink(xn);
        if (!dx) return;
        for (std::size_t b = 0; b < B; ++b)
            for (std::size_t n = 0; n < N; ++n)
                for (std::size_t h = 0; h < heads; ++h)
                    for (std::size_t j = 0; j < dh; ++j) (*dx)[index(b, h, n, j)] += g[(b * N + n) * c + h * dh + j];
    });
}

template <typename T>
BasicTensor<T> gather_rows(BasicTape<T>& tape, const BasicTensor<T>& table, std::span<const std::uint32_t> ids) {
    if (table.rank() != 2) throw ShapeError("gather_rows: table must be [V, c], got " + shape_to_string(table.shape()));
    if (ids.empty()) throw ShapeError("gather_rows: empty id list");
    const std::size_t V = table.dim(0), c = table.dim(1);
    std::vector<T> out(ids.size() * c);
    for (std::size_t r = 0; r < ids.size(); ++r) {
        if (ids[r] >= V) {
            throw ValueError("gather_rows: id " + std::to_string(ids[r]) + " out of range for table of " +
                             std::to_string(V) + " rows");
        }
        std::copy_n(table.data().begin() + ids[r] * c, c, out.begin() + r * c);
    }
    Node<T> tn = table.storage();
    std::vector<std::uint32_t> idv(ids.begin(), ids.end());
    return tape.emit("gather_rows", Shape{ids.size(), c}, std::move(out), {&table}, [=](const std::vector<T>& g) {
        auto* dt = grad_sink(tn);
        if (!dt) return;
        for (std::size_t r = 0; r < idv.size(); ++r)
            for (std::size_t j = 0; j < c; ++j) (*dt)[idv[r] * c + j] += g[r * c + j];
    });
}

template <typename T>
BasicTensor<T> select_rows(BasicTape<T>& tape, std::span<const std::uint8_t> mask, const BasicTensor<T>& when_true,
                           const BasicTensor<T>& when_false) {
    require_same_shape("select_rows", when_true.shape(), when_false.shape());
    const std::size_t c = last_dim(when_true.shape());
    const std::size_t rows = when_true.size() / c;
    if (mask.size() != rows) {
        throw ShapeError("select_rows: mask has " + std::to_string(mask.size()) + " entries for " +
                         std::to_string(rows) + " rows");
    }
    std::vector<T> out(when_true.size());
    for (std::size_t r = 0; r < rows; ++r) {
        const auto& src = mask[r] ? when_true : when_false;
        std::copy_n(src.data().begin() + r * c, c, out.begin() + r * c);
    }
    Node<T> tn = when_true.storage(), fn = when_false.storage();
    std::vector<std::uint8_t> m(mask.begin(), mask.end());
    return tape.emit("select_rows", when_true.shape(), std::move(out), {&when_true, &when_false},
                     [=](const std::vector<T>& g) {
                         auto* dt = grad_sink(tn);
                         auto* df = grad_sink(fn);
                         for (std::size_t r = 0; r < rows; ++r) {
                             auto* d = m[r] ? dt : df;
                             if (!d) continue;
                             for (std::size_t j = 0; j < c; ++j) (*d)[r * c + j] += g[r * c + j];
                         }
                     });
}

template <typename T>
BasicTensor<T> weighted_sum(BasicTape<T>& tape, const std::vector<BasicTensor<T>>& xs, const BasicTensor<T>& weights) {
    if (xs.empty()) throw ShapeError("weighted_sum: empty input list");
    if (weights.size() != xs.size()) {
        throw ShapeError("weighted_sum: " + std::to_string(weights.size()) + " weights for " +
                         std::to_string(xs.size()) + " inputs");
    }
    const Shape& shape = xs.front().shape();
    std::vector<T> out(xs.front().size(), T(0));
    std::vector<const BasicTensor<T>*> inputs{&weights};
    std::vector<Node<T>> nodes;
    for (std::size_t l = 0; l < xs.size(); ++l) {
        require_same_shape("weighted_sum", shape, xs[l].shape());
        const T w = weights[l];
        for (std::size_t i = 0; i < out.size(); ++i) out[i] += w * xs[l][i];
        inputs.push_back(&xs[l]);
        nodes.push_back(xs[l].storage());
    }
    Node<T> wn = weights.storage();
    return tape.emit("weighted_sum", shape, std::move(out), inputs, [=](const std::vector<T>& g) {
        auto* dw = grad_sink(wn);
        for (std::size_t l = 0; l < nodes.size(); ++l) {
            const auto& xl = nodes[l]->data;
            if (dw) {
                double acc = 0.0;
                for (std::size_t i = 0; i < g.size(); ++i) acc += static_cast<double>(g[i]) * xl[i];
                (*dw)[l] += static_cast<T>(acc);
            }
            if (auto* dx = grad_sink(nodes[l])) {
                const T w = wn->data[l];
                for (std::size_t i = 0; i < g.size(); ++i) (*dx)[i] += w * g[i];
            }
        }
    });
}

template <typename T>
BasicTensor<T> nll(BasicTape<T>& tape, const BasicTensor<T>& logp, std::span<const std::int64_t> targets) {
    const std::size_t c = last_dim(logp.shape());
    const std::size_t rows = logp.size() / c;
    if (targets.size() != rows) {
        throw ShapeError("nll: " + std::to_string(targets.size()) + " targets for " + std::to_string(rows) + " rows");
    }
    double acc = 0.0;
    std::size_t count = 0;
    for (std::size_t r = 0; r < rows; ++r) {
        if (targets[r] < 0) continue;
        if (static_cast<std::size_t>(targets[r]) >= c) {
            throw ValueError("nll: target " + std::to_string(targets[r]) + " out of range for " + std::to_string(c) +
                             " classes");
        }
        acc -= logp[r * c + static_cast<std::size_t>(targets[r])];
        ++count;
    }
    const double mean = count ? acc / static_cast<double>(count) : 0.0;
    Node<T> ln = logp.storage();
    std::vector<std::int64_t> tv(targets.begin(), targets.end());
    return tape.emit("nll", Shape{}, std::vector<T>{static_cast<T>(mean)}, {&logp}, [=](const std::vector<T>& g) {
        auto* dl = grad_sink(ln);
        if (!dl || count == 0) return;
        const T w = g[0] / static_cast<T>(count);
        for (std::size_t r = 0; r < rows; ++r) {
            if (tv[r] >= 0) (*dl)[r * c + static_cast<std::size_t>(tv[r])] -= w;
        }
    });
}

#define XMODAL_INSTANTIATE_OPS(T)                                                                                   \
    template BasicTensor<T> matmul(BasicTape<T>&, const BasicTensor<T>&, const BasicTensor<T>&, bool);              \
    template BasicTensor<T> add(BasicTape<T>&, const BasicTensor<T>&, const BasicTensor<T>&);                       \
    template BasicTensor<T> add_broadcast(BasicTape<T>&, const BasicTensor<T>&, const BasicTensor<T>&);             \
    template BasicTensor<T> scale(BasicTape<T>&, const BasicTensor<T>&, double);                                    \
    template BasicTensor<T> mul(BasicTape<T>&, const BasicTensor<T>&, const BasicTensor<T>&);                       \
    template BasicTensor<T> relu(BasicTape<T>&, const BasicTensor<T>&);                                             \
    template BasicTensor<T> layer_norm(BasicTape<T>&, const BasicTensor<T>&, const BasicTensor<T>&,                 \
                                       const BasicTensor<T>&, double);                                              \
    template BasicTensor<T> softmax_with_temperature(BasicTape<T>&, const BasicTensor<T>&, double);                 \
    template BasicTensor<T> log_softmax_with_temperature(BasicTape<T>&, const BasicTensor<T>&, double);             \
    template BasicTensor<T> l2_normalize(BasicTape<T>&, const BasicTensor<T>&);                                     \
    template BasicTensor<T> mean_rows(BasicTape<T>&, const BasicTensor<T>&);                                        \
    template BasicTensor<T> sum(BasicTape<T>&, const BasicTensor<T>&);                                              \
    template BasicTensor<T> dot(BasicTape<T>&, const BasicTensor<T>&, const BasicTensor<T>&);                       \
    template BasicTensor<T> cosine_similarity(BasicTape<T>&, const BasicTensor<T>&, const BasicTensor<T>&);         \
    template BasicTensor<T> reshape(BasicTape<T>&, const BasicTensor<T>&, Shape);                                   \
    template BasicTensor<T> concat_rows(BasicTape<T>&, const std::vector<BasicTensor<T>>&);                         \
    template BasicTensor<T> split_heads(BasicTape<T>&, const BasicTensor<T>&, std::size_t);                         \
    template BasicTensor<T> merge_heads(BasicTape<T>&, const BasicTensor<T>&, std::size_t);                         \
    template BasicTensor<T> gather_rows(BasicTape<T>&, const BasicTensor<T>&, std::span<const std::uint32_t>);      \
    template BasicTensor<T> select_rows(BasicTape<T>&, std::span<const std::uint8_t>, const BasicTensor<T>&,        \
                                        const BasicTensor<T>&);                                                     \
    template BasicTensor<T> weighted_sum(BasicTape<T>&, const std::vector<BasicTensor<T>>&, const BasicTensor<T>&); \
    template BasicTensor<T> nll(BasicTape<T>&, const BasicTensor<T>&, std::span<const std::int64_t>);

XMODAL_INSTANTIATE_OPS(float)
XMODAL_INSTANTIATE_OPS(double)

#undef XMODAL_INSTANTIATE_OPS

}  // namespace xmodal::ops
