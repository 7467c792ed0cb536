#include "xmodal/selfcheck.hpp"

#include <cmath>
#include <functional>
#include <sstream>

#include "xmodal/contrastive.hpp"
#include "xmodal/error.hpp"
#include "xmodal/gradcheck.hpp"
#include "xmodal/image_encoder.hpp"
#include "xmodal/language_encoder.hpp"
#include "xmodal/metrics.hpp"
#include "xmodal/ops.hpp"
#include "xmodal/oracles.hpp"
#include "xmodal/rng.hpp"

namespace xmodal {

namespace {

using TD = BasicTensor<double>;
using TapeD = BasicTape<double>;
using OutFn = std::function<TD(TapeD&)>;

constexpr double kStep = 1e-6;
constexpr double kGradTolerance = 1e-4;

TD rnd(Shape shape, Rng& rng, double scale = 1.0, bool grad = true) {
    std::vector<double> v(shape_size(shape));
    for (auto& x : v) x = rng.normal() * scale;
    return TD(std::move(shape), std::move(v), grad);
}

// Normal draws kept away from the ReLU kink.
TD rnd_off_zero(Shape shape, Rng& rng) {
    std::vector<double> v(shape_size(shape));
    for (auto& x : v) {
        do x = rng.normal();
        while (std::abs(x) < 0.05);
    }
    return TD(std::move(shape), std::move(v), true);
}

std::vector<TD> params_of(auto& module) {
    std::vector<TD> out;
    module.visit("", [&](const std::string&, TD& t) { out.push_back(t); });
    return out;
}

struct Tracker {
    double worst = 0.0;
    std::string where;
    std::size_t checks = 0;

    void add(const std::string& name, double err) {
        ++checks;
        if (!(err <= worst)) {
            worst = err;
            where = name;
        }
    }
};

// Checks d/dpoints of sum(w * f(points)) for a fixed random weighting w.
void check_op(Tracker& tr, const std::string& name, std::vector<TD> points, const OutFn& f, Rng& rng) {
    TapeD shape_tape(false);
    const TD w = rnd(f(shape_tape).shape(), rng, 1.0, false);
    const LossFn<double> loss = [&](TapeD& t) { return ops::sum(t, ops::mul(t, f(t), w)); };
    tr.add(name, finite_diff_check<double>(loss, std::span<TD>(points), kStep));
}

void gradient_seed(Tracker& tr, std::uint64_t seed) {
    Rng rng(derive_seed(seed, "gradcheck"));
    const double tau = 0.5;

    {
        auto a = rnd({2, 3, 4}, rng), b = rnd({4, 5}, rng);
        check_op(tr, "matmul", {a, b}, [&](TapeD& t) { return ops::matmul(t, a, b); }, rng);
        auto c = rnd({2, 5, 4}, rng);
        check_op(tr, "matmul(batched, transpose_b)", {a, c}, [&](TapeD& t) { return ops::matmul(t, a, c, true); }, rng);
    }
    {
        auto a = rnd({3, 4}, rng), b = rnd({3, 4}, rng), bias = rnd({4}, rng);
        check_op(tr, "add", {a, b}, [&](TapeD& t) { return ops::add(t, a, b); }, rng);
        check_op(tr, "mul", {a, b}, [&](TapeD& t) { return ops::mul(t, a, b); }, rng);
        check_op(tr, "add_broadcast", {a, bias}, [&](TapeD& t) { return ops::add_broadcast(t, a, bias); }, rng);
        check_op(tr, "scale", {a}, [&](TapeD& t) { return ops::scale(t, a, -1.7); }, rng);
        auto r = rnd_off_zero({3, 4}, rng);
        check_op(tr, "relu", {r}, [&](TapeD& t) { return ops::relu(t, r); }, rng);
    }
    {
        auto x = rnd({3, 8}, rng), gain = rnd({8}, rng), bias = rnd({8}, rng);
        check_op(tr, "layer_norm", {x, gain, bias}, [&](TapeD& t) { return ops::layer_norm(t, x, gain, bias, 1e-5); },
                 rng);
        check_op(tr, "softmax_with_temperature", {x},
                 [&](TapeD& t) { return ops::softmax_with_temperature(t, x, tau); }, rng);
        check_op(tr, "log_softmax_with_temperature", {x},
                 [&](TapeD& t) { return ops::log_softmax_with_temperature(t, x, tau); }, rng);
        check_op(tr, "l2_normalize", {x}, [&](TapeD& t) { return ops::l2_normalize(t, x); }, rng);
    }
    {
        auto x = rnd({2, 3, 4}, rng);
        check_op(tr, "mean_rows", {x}, [&](TapeD& t) { return ops::mean_rows(t, x); }, rng);
        check_op(tr, "sum", {x}, [&](TapeD& t) { return ops::sum(t, x); }, rng);
        check_op(tr, "reshape", {x}, [&](TapeD& t) { return ops::reshape(t, x, {6, 4}); }, rng);
        auto a = rnd({8}, rng), b = rnd({8}, rng);
        check_op(tr, "dot", {a, b}, [&](TapeD& t) { return ops::dot(t, a, b); }, rng);
        check_op(tr, "cosine_similarity", {a, b}, [&](TapeD& t) { return ops::cosine_similarity(t, a, b); }, rng);
        auto p = rnd({2, 4}, rng), q = rnd({3, 4}, rng);
        check_op(tr, "concat_rows", {p, q}, [&](TapeD& t) { return ops::concat_rows(t, std::vector<TD>{p, q}); }, rng);
    }
    {
        auto x = rnd({2, 12, 8}, rng);
        check_op(tr, "split_heads", {x}, [&](TapeD& t) { return ops::split_heads(t, x, 2); }, rng);
        auto y = rnd({4, 12, 4}, rng);
        check_op(tr, "merge_heads", {y}, [&](TapeD& t) { return ops::merge_heads(t, y, 2); }, rng);
        auto table = rnd({5, 4}, rng);
        const std::vector<std::uint32_t> ids{3, 0, 3, 4};
        check_op(tr, "gather_rows", {table}, [&](TapeD& t) { return ops::gather_rows(t, table, ids); }, rng);
        auto a = rnd({4, 4}, rng), b = rnd({4, 4}, rng);
        const std::vector<std::uint8_t> mask{1, 0, 0, 1};
        check_op(tr, "select_rows", {a, b}, [&](TapeD& t) { return ops::select_rows(t, mask, a, b); }, rng);
        auto l0 = rnd({2, 4}, rng), l1 = rnd({2, 4}, rng), l2 = rnd({2, 4}, rng), wts = rnd({3}, rng);
        check_op(tr, "weighted_sum", {l0, l1, l2, wts},
                 [&](TapeD& t) { return ops::weighted_sum(t, std::vector<TD>{l0, l1, l2}, wts); }, rng);
    }
    {
        auto logits = rnd({4, 5}, rng);
        const std::vector<std::int64_t> targets{1, -1, 4, 0};
        check_op(tr, "nll", {logits},
                 [&](TapeD& t) { return ops::nll(t, ops::log_softmax_with_temperature(t, logits, 1.0), targets); },
                 rng);
        const std::vector<std::uint8_t> allowed{1, 1, 0, 1, 1, 1, 1, 1, 1, 0, 0, 1, 1, 1, 0, 1, 1, 1, 1, 1};
        const std::vector<std::size_t> picks{0, 3, 2, 4};
        check_op(tr, "masked_cross_entropy", {logits},
                 [&](TapeD& t) { return masked_cross_entropy(t, logits, allowed, picks, tau); }, rng);
    }
    {
        auto q = rnd({3, 8}, rng), p = rnd({3, 8}, rng), n = rnd({5, 8}, rng);
        check_op(tr, "info_nce(in_batch)", {q, p}, [&](TapeD& t) {
            return info_nce(t, ops::l2_normalize(t, q), ops::l2_normalize(t, p), TD(), tau, true);
        }, rng);
        check_op(tr, "info_nce(negatives)", {q, p, n}, [&](TapeD& t) {
            return info_nce(t, ops::l2_normalize(t, q), ops::l2_normalize(t, p), ops::l2_normalize(t, n), tau, false);
        }, rng);

        auto f = Mlp<double>::init(8, 8, 8, rng);
        auto g = Mlp<double>::init(8, 8, 8, rng);
        std::vector<TD> pts{q, p};
        for (auto& v : params_of(f)) pts.push_back(v);
        for (auto& v : params_of(g)) pts.push_back(v);
        const CxLossConfig in_batch{tau, LossMode::in_batch, 0.0};
        check_op(tr, "cx_loss(in_batch, heads)", pts, [&](TapeD& t) {
            return cx_loss(t, ops::l2_normalize(t, q), ops::l2_normalize(t, p), in_batch, &f, &g).total;
        }, rng);

        TapeD prep(false);
        QueueNegatives<double> neg;
        neg.language = ops::l2_normalize(prep, rnd({6, 8}, rng, 1.0, false));
        neg.image = ops::l2_normalize(prep, rnd({6, 8}, rng, 1.0, false));
        neg.language_full = neg.image_full = true;
        neg.language_keys = ops::l2_normalize(prep, rnd({3, 8}, rng, 1.0, false));
        neg.image_keys = ops::l2_normalize(prep, rnd({3, 8}, rng, 1.0, false));
        const CxLossConfig queue{tau, LossMode::queue, 0.0};
        check_op(tr, "cx_loss(queue)", {q, p}, [&](TapeD& t) {
            return cx_loss(t, ops::l2_normalize(t, q), ops::l2_normalize(t, p), queue, static_cast<const Mlp<double>*>(nullptr), static_cast<const Mlp<double>*>(nullptr), &neg).total;
        }, rng);
    }
    {
        auto map = rnd({2, 4, 4, 3}, rng);
        check_op(tr, "extract_patches", {map}, [&](TapeD& t) { return extract_patches(t, map, 2); }, rng);
        auto patches = rnd({2, 4, 8}, rng);
        check_op(tr, "average_pool", {patches}, [&](TapeD& t) { return average_pool(t, patches); }, rng);
        auto layer = TransformerLayer<double>::init(8, 2, 16, 1e-5, rng);
        std::vector<TD> pts{patches};
        for (auto& v : params_of(layer)) pts.push_back(v);
        const std::vector<TransformerLayer<double>> stack{layer};
        check_op(tr, "self_attention_block", pts, [&](TapeD& t) { return self_attention_block(t, patches, stack); },
                 rng);
        auto proj = Mlp<double>::init(8, 8, 8, rng);
        auto pooled = rnd({2, 8}, rng);
        std::vector<TD> mpts{pooled};
        for (auto& v : params_of(proj)) mpts.push_back(v);
        check_op(tr, "mlp_project", mpts, [&](TapeD& t) { return mlp_project(t, pooled, proj); }, rng);
    }
    {
        PredictionHead<double> head{rnd({8, 8}, rng, 0.3), rnd({6, 8}, rng), 0.1};
        auto hidden = rnd({12, 8}, rng);
        std::vector<TD> pts{hidden};
        for (auto& v : params_of(head)) pts.push_back(v);
        check_op(tr, "masked_prediction_probs", pts,
                 [&](TapeD& t) { return masked_prediction_probs(t, hidden, head); }, rng);
        auto a = rnd({12, 8}, rng), b = rnd({12, 8}, rng), logits = rnd({2}, rng);
        check_op(tr, "layer_weighted_pool", {a, b, logits},
                 [&](TapeD& t) { return layer_weighted_pool(t, std::vector<TD>{a, b}, logits); }, rng);
        auto units = rnd({6, 8}, rng);
        const std::vector<std::uint32_t> unit_ids{0, 1, 2, 3, 4, 5, 0, 1, 2, 3, 4, 5};
        const std::vector<std::uint8_t> masked{0, 0, 1, 1, 0, 0, 0, 0, 0, 1, 0, 0};
        check_op(tr, "random_swap", {hidden, units}, [&](TapeD& t) {
            Rng swap_rng(derive_seed(seed, "gradcheck.swap"));
            return random_swap(t, hidden, unit_ids, units, masked, 0.5, swap_rng);
        }, rng);
    }
    {
        ImageEncoderConfig ic;
        ic.feature_dim = 3;
        ic.model_dim = 8;
        ic.embed_dim = 8;
        ic.grid_size = 2;
        ic.layers = 2;
        ic.heads = 2;
        ic.ffn_dim = 16;
        auto enc = ImageEncoder<double>::init(ic, rng);
        auto map = rnd({2, 4, 4, 3}, rng);
        std::vector<TD> pts{map};
        for (auto& v : params_of(enc)) pts.push_back(v);
        check_op(tr, "image encoder", pts, [&](TapeD& t) { return enc.encode(t, map); }, rng);
    }
    {
        LanguageEncoderConfig lc;
        lc.feature_dim = 4;
        lc.model_dim = 8;
        lc.embed_dim = 8;
        lc.speech_layers = 1;
        lc.shared_layers = 2;
        lc.heads = 2;
        lc.n_units = 6;
        lc.max_length = 12;
        lc.mask_prob = 0.2;
        lc.mask_len = 3;
        lc.swap_prob = 0.3;
        lc.ffn_dim = 16;
        auto enc = LanguageEncoder<double>::init(lc, rng);
        LanguageInput<double> audio;
        audio.modality = Modality::fused;
        audio.batch = 2;
        audio.length = 12;
        audio.frames = rnd({2, 12, 4}, rng);
        std::vector<std::int64_t> targets;
        for (std::size_t i = 0; i < 24; ++i) {
            audio.unit_ids.push_back(static_cast<std::uint32_t>(rng.uniform_int(6)));
            targets.push_back(audio.unit_ids.back());
        }
        std::vector<TD> pts{audio.frames};
        for (auto& v : params_of(enc)) pts.push_back(v);
        const TD w = rnd({2, 8}, rng, 1.0, false);
        const LossFn<double> loss = [&](TapeD& t) {
            Rng step_rng(derive_seed(seed, "gradcheck.language"));
            const auto out = enc.forward(t, audio, EncodeOptions{true, true}, &step_rng);
            const auto emb = ops::sum(t, ops::mul(t, out.embedding, w));
            const auto pred = ops::nll(t, ops::reshape(t, out.log_probs, {24, 6}), targets);
            return ops::add(t, emb, pred);
        };
        tr.add("language encoder (training)", finite_diff_check<double>(loss, std::span<TD>(pts), kStep));

        LanguageInput<double> text;
        text.modality = Modality::text;
        text.batch = 2;
        text.length = 12;
        text.unit_ids = audio.unit_ids;
        std::vector<TD> tpts;
        enc.visit("", [&](const std::string& name, TD& v) {
            if (name.starts_with("input_proj.") || name.starts_with("speech.") || name.starts_with("pred.") ||
                name == "mask_embedding")
                return;
            tpts.push_back(v);
        });
        check_op(tr, "language encoder (text)", tpts, [&](TapeD& t) {
            return enc.forward(t, text, EncodeOptions{}, nullptr).embedding;
        }, rng);
    }
}

std::string fmt(double v) {
    std::ostringstream os;
    os.precision(6);
    os << v;
    return os.str();
}

Tensor unit_rows(std::size_t n, std::size_t d, Rng& rng) {
    std::vector<float> v(n * d);
    for (std::size_t r = 0; r < n; ++r) {
        double ss = 0.0;
        for (std::size_t k = 0; k < d; ++k) {
            v[r * d + k] = static_cast<float>(rng.normal());
            ss += static_cast<double>(v[r * d + k]) * v[r * d + k];
        }
        for (std::size_t k = 0; k < d; ++k) v[r * d + k] = static_cast<float>(v[r * d + k] / std::sqrt(ss));
    }
    return Tensor({n, d}, std::move(v));
}

Tensor repeat_row(const Tensor& row, std::size_t n) {
    std::vector<float> v;
    for (std::size_t i = 0; i < n; ++i) v.insert(v.end(), row.data().begin(), row.data().end());
    return Tensor({n, row.dim(1)}, std::move(v));
}

}  // namespace

CheckResult check_gradients(std::size_t seeds) {
    Tracker tr;
    try {
        for (std::size_t s = 0; s < seeds; ++s) gradient_seed(tr, s);
    } catch (const Error& e) {
        return {"gradients", false, e.what()};
    }
    const bool ok = tr.worst < kGradTolerance;
    return {"gradients", ok,
            std::to_string(tr.checks) + " checks over " + std::to_string(seeds) + " seeds, max relative error " +
                fmt(tr.worst) + " (" + tr.where + ")"};
}

CheckResult check_loss_identities() {
    Rng rng(derive_seed(0, "selfcheck.loss"));
    Tape tape(false);
    std::ostringstream detail;
    bool ok = true;
    for (std::size_t K : {1, 7, 255}) {
        const auto q = unit_rows(1, 8, rng);
        const double loss = info_nce(tape, q, q, repeat_row(q, K), 0.07, false).item();
        const double err = std::abs(loss - std::log(static_cast<double>(K + 1)));
        ok = ok && err <= 1e-6;
        detail << "K=" << K << " err " << fmt(err) << "; ";
    }
    {
        const Tensor q({1, 3}, {1.0f, 0.0f, 0.0f});
        const Tensor p({1, 3}, {0.2f, static_cast<float>(std::sqrt(0.96)), 0.0f});
        const Tensor n({2, 3}, {0.0f, 1.0f, 0.0f, 0.0f, 0.0f, 1.0f});
        const double loss = info_nce(tape, q, p, n, 0.1, false).item();
        const double err = std::abs(loss - std::log1p(2.0 * std::exp(-2.0)));
        ok = ok && err <= 1e-5;
        detail << "worked value " << fmt(loss) << " err " << fmt(err) << "; ";
    }
    {
        const auto image = unit_rows(6, 8, rng), language = unit_rows(6, 8, rng);
        const auto f = Mlp<float>::init(8, 8, 8, rng), g = Mlp<float>::init(8, 8, 8, rng);
        const CxLossConfig cfg{0.07, LossMode::in_batch, 0.0};
        double worst = 0.0;
        auto total = [&](const Tensor& a, const Tensor& b, const Mlp<float>* fa, const Mlp<float>* fb,
                         const CxLossConfig& c, const QueueNegatives<float>* neg) {
            return static_cast<double>(cx_loss(tape, a, b, c, fa, fb, neg).total.item());
        };
        worst = std::max(worst, std::abs(total(image, language, nullptr, nullptr, cfg, static_cast<const QueueNegatives<float>*>(nullptr)) -
                                         total(language, image, nullptr, nullptr, cfg, static_cast<const QueueNegatives<float>*>(nullptr))));
        worst = std::max(worst, std::abs(total(image, language, &f, &g, cfg, nullptr) -
                                         total(language, image, &g, &f, cfg, nullptr)));
        QueueNegatives<float> neg{unit_rows(10, 8, rng), unit_rows(10, 8, rng), true, true, unit_rows(6, 8, rng),
                                  unit_rows(6, 8, rng)};
        QueueNegatives<float> swapped{neg.image, neg.language, true, true, neg.image_keys, neg.language_keys};
        const CxLossConfig qcfg{0.07, LossMode::queue, 0.0};
        worst = std::max(worst, std::abs(total(image, language, &f, &g, qcfg, &neg) -
                                         total(language, image, &g, &f, qcfg, &swapped)));
        ok = ok && worst <= 1e-6;
        detail << "cx symmetry err " << fmt(worst);
    }
    return {"loss identities", ok, detail.str()};
}

CheckResult check_queue_momentum(std::size_t operations) {
    Rng rng(derive_seed(0, "selfcheck.queue"));
    std::size_t mismatches = 0;
    std::size_t ops_done = 0;
    while (ops_done < operations) {
        const std::size_t capacity = 1 + rng.uniform_int(40);
        const std::size_t d = 1 + rng.uniform_int(6);
        NegativeQueue queue(capacity, d);
        oracle::DequeQueue reference(capacity, d);
        for (std::size_t i = 0; i < 500 && ops_done < operations; ++i, ++ops_done) {
            const std::size_t b = 1 + rng.uniform_int(capacity);
            const auto rows = unit_rows(b, d, rng);
            queue.push(rows);
            reference.push(rows.data());
            if (queue.fill() != reference.fill() || queue.ordered_values() != reference.values()) ++mismatches;
        }
        bool rejected = false;
        try {
            queue.push(unit_rows(capacity + 1, d, rng));
        } catch (const ValueError&) {
            rejected = true;
        }
        if (!rejected) ++mismatches;
    }

    ParameterList<double> key{{"w", rnd({20}, rng, 1.0, false)}};
    const ParameterList<double> query{{"w", rnd({20}, rng, 1.0, false)}};
    auto distance = [&] {
        double ss = 0.0;
        for (std::size_t i = 0; i < 20; ++i) {
            const double diff = key[0].tensor[i] - query[0].tensor[i];
            ss += diff * diff;
        }
        return std::sqrt(ss);
    };
    const double d0 = distance();
    double worst = 0.0;
    for (int k = 1; k <= 100; ++k) {
        momentum_update(key, query, 0.99);
        worst = std::max(worst, std::abs(distance() - std::pow(0.99, k) * d0));
    }
    const bool ok = mismatches == 0 && worst <= 1e-6;
    return {"queue/momentum", ok,
            std::to_string(ops_done) + " queue ops, " + std::to_string(mismatches) + " mismatches; momentum decay err " +
                fmt(worst)};
}

CheckResult check_metric_oracles(std::size_t instances) {
    Rng rng(derive_seed(0, "selfcheck.metrics"));
    std::size_t acc_bad = 0, map_bad = 0, mrr_bad = 0, f1_bad = 0;
    for (std::size_t it = 0; it < instances; ++it) {
        {
            const std::size_t n = 1 + rng.uniform_int(20), c = 2 + rng.uniform_int(4);
            std::vector<std::size_t> pred(n), label(n);
            for (std::size_t i = 0; i < n; ++i) {
                pred[i] = rng.uniform_int(c);
                label[i] = rng.uniform_int(c);
            }
            acc_bad += accuracy(pred, label) != oracle::accuracy(pred, label);
        }
        {
            const std::size_t n = 1 + rng.uniform_int(20), c = 1 + rng.uniform_int(4);
            std::vector<double> scores(n * c);
            std::vector<std::uint8_t> labels(n * c);
            for (auto& s : scores) s = static_cast<double>(rng.uniform_int(5)) / 4.0;
            for (auto& l : labels) l = rng.bernoulli(0.4);
            labels[rng.uniform_int(n * c)] = 1;
            map_bad += mean_average_precision(scores, labels, c).map != oracle::mean_average_precision(scores, labels, c);
        }
        {
            const std::size_t n = 1 + rng.uniform_int(20), d = 3;
            auto small_unit_rows = [&](std::size_t rows) {
                std::vector<float> v(rows * d);
                for (std::size_t r = 0; r < rows; ++r) {
                    double ss = 0.0;
                    while (ss == 0.0) {
                        ss = 0.0;
                        for (std::size_t k = 0; k < d; ++k) {
                            v[r * d + k] = static_cast<float>(static_cast<int>(rng.uniform_int(3)) - 1);
                            ss += static_cast<double>(v[r * d + k]) * v[r * d + k];
                        }
                    }
                    for (std::size_t k = 0; k < d; ++k) v[r * d + k] = static_cast<float>(v[r * d + k] / std::sqrt(ss));
                }
                return Tensor({rows, d}, std::move(v));
            };
            const auto index = small_unit_rows(n);
            std::vector<std::uint64_t> ids(n);
            for (std::size_t i = 0; i < n; ++i) ids[i] = 100 + i;
            for (std::size_t i = n; i > 1; --i) std::swap(ids[i - 1], ids[rng.uniform_int(i)]);
            const std::size_t q = 1 + rng.uniform_int(n);
            const auto queries = small_unit_rows(q);
            std::vector<std::uint64_t> targets(q);
            for (auto& t : targets) t = ids[rng.uniform_int(n)];
            const double lib = mean_reciprocal_rank(queries, RetrievalIndex(index, ids, "index"), targets);
            mrr_bad += lib != oracle::mean_reciprocal_rank(queries, index, ids, targets);
        }
        {
            auto events = [&] {
                std::vector<SegmentEvent> out(rng.uniform_int(11));
                for (auto& e : out) {
                    e.onset = 0.25 * static_cast<double>(rng.uniform_int(40));
                    e.offset = e.onset + 0.25 * static_cast<double>(1 + rng.uniform_int(12));
                    e.event_class = rng.uniform_int(3);
                }
                return out;
            };
            const auto pred = events(), ref = events();
            const double len = std::vector<double>{0.5, 0.75, 1.0}[rng.uniform_int(3)];
            const auto a = segment_f1(pred, ref, len), b = oracle::segment_f1(pred, ref, len);
            f1_bad += a.f1 != b.f1 || a.tp != b.tp || a.fp != b.fp || a.fn != b.fn;
        }
    }
    const bool ok = acc_bad + map_bad + mrr_bad + f1_bad == 0;
    return {"metric oracles", ok,
            std::to_string(instances) + " instances each; mismatches accuracy " + std::to_string(acc_bad) + ", mAP " +
                std::to_string(map_bad) + ", MRR " + std::to_string(mrr_bad) + ", segment F1 " +
                std::to_string(f1_bad)};
}

std::vector<CheckResult> run_selfcheck() {
    return {check_gradients(), check_loss_identities(), check_queue_momentum(), check_metric_oracles()};
}

}  // namespace xmodal
