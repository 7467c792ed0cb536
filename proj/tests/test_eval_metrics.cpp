#include <doctest.h>

#include <cmath>

#include "helpers.hpp"
#include "xmodal/error.hpp"
#include "xmodal/evaluate.hpp"
#include "xmodal/metrics.hpp"
#include "xmodal/oracles.hpp"
#include "xmodal/probe.hpp"
#include "xmodal/trainer.hpp"

using namespace xmodal;

namespace {

Tensor normalize_rows(std::vector<float> v, std::size_t d) {
    const std::size_t n = v.size() / d;
    for (std::size_t r = 0; r < n; ++r) {
        double ss = 0.0;
        for (std::size_t k = 0; k < d; ++k) ss += static_cast<double>(v[r * d + k]) * v[r * d + k];
        for (std::size_t k = 0; k < d; ++k) v[r * d + k] = static_cast<float>(v[r * d + k] / std::sqrt(ss));
    }
    return Tensor({n, d}, std::move(v));
}

// Small-integer rows so that cosine ties occur.
Tensor tied_unit_rows(std::size_t n, std::size_t d, Rng& rng) {
    std::vector<float> v(n * d);
    for (std::size_t r = 0; r < n; ++r) {
        bool nonzero = false;
        while (!nonzero) {
            for (std::size_t k = 0; k < d; ++k) {
                v[r * d + k] = static_cast<float>(static_cast<int>(rng.uniform_int(3)) - 1);
                nonzero = nonzero || v[r * d + k] != 0.0f;
            }
        }
    }
    return normalize_rows(std::move(v), d);
}

std::vector<SegmentEvent> random_events(Rng& rng) {
    std::vector<SegmentEvent> out(rng.uniform_int(11));
    for (auto& e : out) {
        e.onset = 0.25 * static_cast<double>(rng.uniform_int(40));
        e.offset = e.onset + 0.25 * static_cast<double>(1 + rng.uniform_int(12));
        e.event_class = rng.uniform_int(3);
    }
    return out;
}

}  // namespace

TEST_CASE("accuracy examples") {
    const std::vector<std::size_t> a{0, 1, 2, 3}, b{1, 2, 3, 0}, c{0, 1, 2, 0};
    CHECK(accuracy(a, a) == 1.0);
    CHECK(accuracy(a, b) == 0.0);
    CHECK(accuracy(a, c) == 0.75);
    CHECK_THROWS(accuracy(a, std::vector<std::size_t>{0}));
}

TEST_CASE("average precision examples") {
    CHECK(average_precision(std::vector<double>{0.9, 0.8, 0.3, 0.1}, std::vector<std::uint8_t>{1, 1, 0, 0}) == 1.0);
    const double ap = average_precision(std::vector<double>{0.9, 0.8, 0.3, 0.1}, std::vector<std::uint8_t>{1, 0, 1, 0});
    CHECK(ap == doctest::Approx((1.0 + 2.0 / 3.0) / 2.0));
    // Ties keep the original index order.
    CHECK(average_precision(std::vector<double>{0.5, 0.5}, std::vector<std::uint8_t>{0, 1}) == 0.5);

    const auto r = mean_average_precision(std::vector<double>{0.9, 0.1, 0.2, 0.8}, std::vector<std::uint8_t>{1, 0, 0, 0},
                                          2);
    CHECK(r.map == 1.0);
    CHECK(r.excluded_classes == std::vector<std::size_t>{1});
    CHECK_THROWS(mean_average_precision(std::vector<double>{0.1, 0.2}, std::vector<std::uint8_t>{0, 0}, 2));
}

TEST_CASE("mean reciprocal rank examples") {
    const Tensor index({4, 2}, {1, 0, 0, 1, -1, 0, 0, -1});
    const RetrievalIndex idx(index, {10, 11, 12, 13}, "image");
    CHECK(mean_reciprocal_rank(index, idx, std::vector<std::uint64_t>{10, 11, 12, 13}) == 1.0);

    const float s = static_cast<float>(std::sqrt(0.5));
    // Query 0 ranks 10 first; query 1 ties 10 and 11 so 11 comes second;
    // query 2 points away from 10 so it is last.
    const Tensor queries({3, 2}, {1, 0, s, s, -1, 0});
    const double mrr = mean_reciprocal_rank(queries, idx, std::vector<std::uint64_t>{10, 11, 10});
    CHECK(mrr == doctest::Approx((1.0 + 0.5 + 0.25) / 3.0));

    CHECK_THROWS(mean_reciprocal_rank(queries, idx, std::vector<std::uint64_t>{10, 11, 99}));
    CHECK_THROWS(RetrievalIndex(index, {1, 1, 2, 3}, "image"));
}

TEST_CASE("metrics match brute-force references exactly") {
    Rng rng(derive_seed(42, "metrics"));
    for (int it = 0; it < 100; ++it) {
        {
            const std::size_t n = 1 + rng.uniform_int(20), c = 2 + rng.uniform_int(4);
            std::vector<std::size_t> p(n), l(n);
            for (std::size_t i = 0; i < n; ++i) {
                p[i] = rng.uniform_int(c);
                l[i] = rng.uniform_int(c);
            }
            CHECK(accuracy(p, l) == oracle::accuracy(p, l));
        }
        {
            const std::size_t n = 1 + rng.uniform_int(20), c = 1 + rng.uniform_int(4);
            std::vector<double> scores(n * c);
            std::vector<std::uint8_t> labels(n * c);
            for (auto& s : scores) s = static_cast<double>(rng.uniform_int(5)) / 4.0;
            for (auto& l : labels) l = rng.bernoulli(0.4);
            labels[rng.uniform_int(n * c)] = 1;
            CHECK(mean_average_precision(scores, labels, c).map == oracle::mean_average_precision(scores, labels, c));
        }
        {
            const std::size_t n = 1 + rng.uniform_int(20);
            const auto index = tied_unit_rows(n, 3, rng);
            std::vector<std::uint64_t> ids(n);
            for (std::size_t i = 0; i < n; ++i) ids[i] = 1000 - 7 * i;
            const std::size_t q = 1 + rng.uniform_int(n);
            const auto queries = tied_unit_rows(q, 3, rng);
            std::vector<std::uint64_t> targets(q);
            for (auto& t : targets) t = ids[rng.uniform_int(n)];
            CHECK(mean_reciprocal_rank(queries, RetrievalIndex(index, ids, "i"), targets) ==
                  oracle::mean_reciprocal_rank(queries, index, ids, targets));
        }
        {
            const auto pred = random_events(rng), ref = random_events(rng);
            const double len = rng.bernoulli(0.5) ? 0.5 : 1.0;
            const auto a = segment_f1(pred, ref, len), b = oracle::segment_f1(pred, ref, len);
            CHECK(a.f1 == b.f1);
            CHECK(a.tp == b.tp);
            CHECK(a.fp == b.fp);
            CHECK(a.fn == b.fn);
        }
    }
}

TEST_CASE("metrics depend on ranks only and stay in [0, 1]") {
    Rng rng(7);
    for (int it = 0; it < 20; ++it) {
        std::vector<double> scores(30), warped(30);
        std::vector<std::uint8_t> labels(30);
        for (std::size_t i = 0; i < 30; ++i) {
            scores[i] = rng.normal();
            warped[i] = std::exp(3.0 * scores[i]) + 1.0;
            labels[i] = rng.bernoulli(0.3);
        }
        labels[0] = 1;
        const double a = mean_average_precision(scores, labels, 3).map;
        CHECK(a == mean_average_precision(warped, labels, 3).map);
        CHECK(a >= 0.0);
        CHECK(a <= 1.0);
    }
}

TEST_CASE("zero-shot classification examples") {
    const Tensor protos({3, 2}, {1, 0, 0, 1, -1, 0});
    CHECK(zero_shot_classify(Tensor({1, 2}, {0, 1}), protos, 1)[0] == std::vector<std::size_t>{1});
    const float s = static_cast<float>(std::sqrt(0.5));
    CHECK(zero_shot_classify(Tensor({1, 2}, {s, s}), protos, 1)[0] == std::vector<std::size_t>{0});
    CHECK(zero_shot_classify(Tensor({1, 2}, {s, s}), protos, 3)[0] == std::vector<std::size_t>{0, 1, 2});
    CHECK(zero_shot_classify(Tensor({1, 2}, {5 * s, 5 * s}), protos, 1)[0] == std::vector<std::size_t>{0});
}

TEST_CASE("zero-shot on raw planted features is perfect") {
    SyntheticSpec spec;
    SyntheticPrototypes protos;
    const auto ds = generate_synthetic_pairs(spec, &protos);
    const std::size_t d = protos.images[0].size();
    std::vector<float> p, x;
    for (const auto& t : protos.images) p.insert(p.end(), t.data().begin(), t.data().end());
    for (const auto& r : ds.records) x.insert(x.end(), r.image.data().begin(), r.image.data().end());
    const auto preds = zero_shot_classify(normalize_rows(x, d), normalize_rows(p, d), 1);
    std::vector<std::size_t> top, labels;
    for (std::size_t i = 0; i < preds.size(); ++i) {
        top.push_back(preds[i][0]);
        labels.push_back(ds.records[i].class_label);
    }
    CHECK(accuracy(top, labels) == 1.0);
}

TEST_CASE("segment F1 examples") {
    const std::vector<SegmentEvent> ref{{0.0, 2.0, 0}, {3.0, 4.0, 1}};
    CHECK(segment_f1(ref, ref).f1 == 1.0);
    CHECK(segment_f1({}, {}).f1 == 1.0);

    // Reference: class 0 in [0,2) and [3,4). Prediction hits [0,1) and
    // [3,4), adds a false [5,6) and misses [1,2).
    const std::vector<SegmentEvent> truth{{0.0, 2.0, 0}, {3.0, 4.0, 0}};
    const std::vector<SegmentEvent> pred{{0.0, 1.0, 0}, {3.0, 4.0, 0}, {5.0, 6.0, 0}};
    const auto r = segment_f1(pred, truth);
    CHECK(r.tp == 2);
    CHECK(r.fp == 1);
    CHECK(r.fn == 1);
    CHECK(r.f1 == doctest::Approx(4.0 / 6.0));

    CHECK_THROWS(segment_f1(std::vector<SegmentEvent>{{-1.0, 1.0, 0}}, ref));
    CHECK_THROWS(segment_f1(ref, ref, 0.0));
}

TEST_CASE("linear probe examples") {
    Rng rng(3);
    std::vector<float> v;
    std::vector<std::size_t> labels;
    for (int i = 0; i < 40; ++i) {
        const std::size_t y = i % 2;
        v.push_back(static_cast<float>((y ? 1.0 : -1.0) + 0.2 * rng.normal()));
        v.push_back(static_cast<float>(rng.normal()));
        labels.push_back(y);
    }
    const Tensor x({40, 2}, v);
    const auto probe = train_linear_probe(x, labels, 2, ProbeOptions{100, 1e-2, 0});
    CHECK(accuracy(probe.predict(x), labels) == 1.0);

    const auto untouched = train_linear_probe(x, labels, 2, ProbeOptions{0, 1e-2, 5});
    const auto fresh = ProbeClassifier::init(2, 2, 5);
    CHECK(untouched.logits(x).values() == fresh.logits(x).values());

    const std::vector<std::size_t> single(40, 1);
    CHECK_THROWS_AS(train_linear_probe(x, single, 2, ProbeOptions{}), ValueError);
}

TEST_CASE("relabeling permutes confusion-matrix rows") {
    const std::vector<std::size_t> pred{0, 1, 2, 2, 1, 0, 0}, label{0, 2, 2, 1, 1, 0, 2};
    const std::vector<std::size_t> perm{2, 0, 1};
    std::vector<std::size_t> relabeled;
    for (auto l : label) relabeled.push_back(perm[l]);
    const auto a = confusion_matrix(pred, label, 3), b = confusion_matrix(pred, relabeled, 3);
    for (std::size_t c = 0; c < 3; ++c) CHECK(b[perm[c]] == a[c]);
}

TEST_CASE("probe evaluation leaves the towers untouched") {
    SyntheticSpec spec;
    spec.n_classes = 4;
    spec.n_pairs = 64;
    spec.height = spec.width = 4;
    spec.channels = 3;
    spec.seq_len = 8;
    spec.feature_dim = 4;
    spec.n_units = 6;
    const auto ds = generate_synthetic_pairs(spec);
    RunConfig cfg;
    cfg.embed_dim = cfg.model_dim = 8;
    cfg.grid_size = 2;
    cfg.sa_layers = cfg.speech_layers = cfg.shared_layers = 1;
    cfg.heads = 2;
    auto model = Model::init(cfg, ModelDims::from_dataset(ds));
    const auto before = parameter_checksum(model.parameters());
    const auto [train, held] = split_holdout(ds, 0.25);
    const auto r = evaluate_probe(model, with_frames(train), with_frames(held), 4, ProbeOptions{20, 1e-2, 0});
    CHECK(parameter_checksum(model.parameters()) == before);
    CHECK(r.test_accuracy >= 0.0);
    CHECK(r.test_accuracy <= 1.0);
}
