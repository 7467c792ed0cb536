#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "helpers.hpp"
#include "xmodal/error.hpp"
#include "xmodal/gradcheck.hpp"
#include "xmodal/image_encoder.hpp"
#include "xmodal/language_encoder.hpp"
#include "xmodal/ops.hpp"

using namespace xmodal;
using test::normal_tensor;

namespace {

ImageEncoderConfig toy_image_config() {
    ImageEncoderConfig c;
    c.feature_dim = 3;
    c.model_dim = 8;
    c.embed_dim = 8;
    c.grid_size = 2;
    c.layers = 2;
    c.heads = 2;
    return c;
}

LanguageEncoderConfig toy_language_config() {
    LanguageEncoderConfig c;
    c.feature_dim = 4;
    c.model_dim = 8;
    c.embed_dim = 8;
    c.speech_layers = 1;
    c.shared_layers = 2;
    c.heads = 2;
    c.n_units = 6;
    c.max_length = 12;
    return c;
}

FeatureSequence fused_sequence(std::size_t T, std::size_t f, std::size_t n_units, Rng& rng) {
    FeatureSequence s;
    s.modality = Modality::fused;
    s.frames = normal_tensor({T, f}, rng);
    for (std::size_t t = 0; t < T; ++t) s.unit_ids.push_back(static_cast<std::uint32_t>(rng.uniform_int(n_units)));
    return s;
}

double norm(std::span<const float> v) {
    double ss = 0.0;
    for (float x : v) ss += static_cast<double>(x) * x;
    return std::sqrt(ss);
}

}  // namespace

TEST_CASE("extract_patches examples") {
    Tape tape(false);
    const auto ones = extract_patches(tape, Tensor::full({4, 4, 1}, 1.0f), 4);
    CHECK(ones.shape() == Shape{16, 1});
    for (float v : ones.data()) CHECK(v == 1.0f);

    Rng rng(1);
    const auto map = normal_tensor({3, 6, 2}, rng);
    const auto global = extract_patches(tape, map, 1);
    for (std::size_t ch = 0; ch < 2; ++ch) {
        double mean = 0.0;
        for (std::size_t i = 0; i < 18; ++i) mean += map[i * 2 + ch];
        CHECK(std::abs(global[ch] - mean / 18.0) < 1e-6);
    }
    CHECK_THROWS_AS(extract_patches(tape, Tensor::zeros({6, 6, 1}), 4), ShapeError);
}

TEST_CASE("extract_patches equals 2x2 block means on an 8x8 map") {
    Rng rng(2);
    Tape tape(false);
    const auto map = normal_tensor({8, 8, 1}, rng);
    const auto patches = extract_patches(tape, map, 4);
    REQUIRE(patches.shape() == Shape{16, 1});
    for (std::size_t pi = 0; pi < 4; ++pi) {
        for (std::size_t pj = 0; pj < 4; ++pj) {
            double mean = 0.0;
            for (std::size_t di = 0; di < 2; ++di) {
                for (std::size_t dj = 0; dj < 2; ++dj) mean += map[(2 * pi + di) * 8 + (2 * pj + dj)];
            }
            CHECK(std::abs(patches[pi * 4 + pj] - mean / 4.0) < 1e-6);
        }
    }
}

TEST_CASE("self-attention over a single patch puts all weight on it") {
    Rng rng(3);
    Tape tape(false);
    const auto layer = TransformerLayer<float>::init(8, 2, 16, 1e-5, rng);
    std::vector<Tensor> attention;
    const auto x = normal_tensor({1, 8}, rng);
    layer.forward(tape, x, &attention);
    REQUIRE(attention.size() == 1);
    for (float w : attention[0].data()) CHECK(w == doctest::Approx(1.0));

    // With one token the attention output is the value projection of that token.
    const auto v = layer.value.forward(tape, x);
    const auto mha = layer.out.forward(tape, v);
    const auto h1 = layer.norm1.forward(tape, ops::add(tape, x, mha));
    const auto expected = layer.norm2.forward(tape, ops::add(tape, h1, layer.ffn.forward(tape, h1)));
    const auto got = layer.forward(tape, x);
    CHECK(test::max_abs_diff(got.data(), expected.data()) < 1e-6);
}

TEST_CASE("self-attention block is permutation equivariant") {
    Rng rng(4);
    Tape tape(false);
    std::vector<TransformerLayer<float>> layers{TransformerLayer<float>::init(8, 2, 16, 1e-5, rng),
                                                TransformerLayer<float>::init(8, 2, 16, 1e-5, rng)};
    const auto x = normal_tensor({5, 8}, rng);
    const std::vector<std::uint32_t> perm{3, 0, 4, 1, 2};
    const auto y = self_attention_block(tape, x, layers);
    const auto yp = self_attention_block(tape, ops::gather_rows(tape, x, perm), layers);
    const auto expected = ops::gather_rows(tape, y, perm);
    CHECK(test::max_abs_diff(yp.data(), expected.data()) < 1e-5);
}

TEST_CASE("attention rows sum to one") {
    Rng rng(5);
    Tape tape(false);
    std::vector<TransformerLayer<float>> layers{TransformerLayer<float>::init(8, 2, 16, 1e-5, rng)};
    std::vector<Tensor> attention;
    self_attention_block(tape, normal_tensor({4, 8}, rng), layers, &attention);
    REQUIRE(attention.size() == 1);
    const auto& a = attention[0];
    REQUIRE(a.shape() == Shape{2, 4, 4});
    for (std::size_t r = 0; r < 8; ++r) {
        double s = 0.0;
        for (std::size_t c = 0; c < 4; ++c) s += a[r * 4 + c];
        CHECK(std::abs(s - 1.0) < 1e-6);
    }
}

TEST_CASE("average_pool examples") {
    Tape tape(false);
    CHECK(average_pool(tape, Tensor({2, 2}, {1, 3, 2, 4})).values() == std::vector<float>{1.5f, 3.5f});
    // Patches are rows: columns [1,2] and [3,4] of a [2, 2] layout pool to [2, 3].
    CHECK(average_pool(tape, Tensor({2, 2}, {1, 2, 3, 4})).values() == std::vector<float>{2, 3});
    const auto same = average_pool(tape, Tensor({3, 2}, {0.5f, -1, 0.5f, -1, 0.5f, -1}));
    CHECK(same.values() == std::vector<float>{0.5f, -1});

    Rng rng(6);
    const auto x = normal_tensor({16, 5}, rng);
    const auto pooled = average_pool(tape, x);
    for (std::size_t c = 0; c < 5; ++c) {
        double mean = 0.0;
        for (std::size_t p = 0; p < 16; ++p) mean += x[p * 5 + c];
        CHECK(std::abs(pooled[c] - mean / 16.0) < 1e-6);
    }
}

TEST_CASE("mlp_project examples") {
    Tape tape(false);
    Mlp<float> identity;
    identity.hidden = {Tensor({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1}), Tensor::zeros({3})};
    identity.output = {Tensor({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1}), Tensor::zeros({3})};
    const Tensor r({1, 3}, {0.5f, 2.0f, 1.0f});
    CHECK(mlp_project(tape, r, identity).values() == r.values());

    Rng rng(7);
    auto zero_bias = Mlp<float>::init(3, 4, 2, rng);
    zero_bias.hidden.bias = Tensor::zeros({4});
    zero_bias.output.bias = Tensor::zeros({2});
    const auto zero_out = mlp_project(tape, Tensor::zeros({1, 3}), zero_bias);
    for (float v : zero_out.data()) CHECK(v == 0.0f);

    const auto mlp = Mlp<float>::init(3, 4, 2, rng);
    const auto x = normal_tensor({2, 3}, rng);
    const auto y = mlp_project(tape, x, mlp);
    for (std::size_t b = 0; b < 2; ++b) {
        std::vector<double> h(4);
        for (std::size_t j = 0; j < 4; ++j) {
            h[j] = mlp.hidden.bias[j];
            for (std::size_t i = 0; i < 3; ++i) h[j] += static_cast<double>(x[b * 3 + i]) * mlp.hidden.weight[i * 4 + j];
            h[j] = std::max(0.0, h[j]);
        }
        for (std::size_t k = 0; k < 2; ++k) {
            double z = mlp.output.bias[k];
            for (std::size_t j = 0; j < 4; ++j) z += h[j] * mlp.output.weight[j * 2 + k];
            CHECK(std::abs(y[b * 2 + k] - z) < 1e-6);
        }
    }
}

TEST_CASE("image encoder output is unit norm and deterministic") {
    Rng rng(8);
    const auto enc = ImageEncoder<float>::init(toy_image_config(), rng);
    Tape tape(false);
    for (int trial = 0; trial < 5; ++trial) {
        const auto map = normal_tensor({4, 4, 3}, rng, 2.0);
        const auto a = enc.encode(tape, map), b = enc.encode(tape, map.clone(false));
        CHECK(a.shape() == Shape{8});
        CHECK(std::abs(norm(a.data()) - 1.0) < 1e-6);
        CHECK(a.values() == b.values());
    }
}

TEST_CASE("image encoder pipeline matches finite differences") {
    Rng rng(9);
    auto enc = ImageEncoder<double>::init(toy_image_config(), rng);
    auto map = normal_tensor<double>({4, 4, 3}, rng, 1.0, true);
    std::vector<BasicTensor<double>> points{map};
    enc.visit("", [&](const std::string&, BasicTensor<double>& t) { points.push_back(t); });
    const auto w = normal_tensor<double>({8}, rng);
    const LossFn<double> fn = [&](BasicTape<double>& t) { return ops::dot(t, enc.encode(t, map), w); };
    CHECK(finite_diff_check<double>(fn, std::span(points), 1e-6) < 1e-4);
}

TEST_CASE("span mask examples") {
    Rng rng(10);
    const auto none = draw_span_mask(20, 0.0, 10, rng);
    CHECK(none.starts == 0);
    for (auto m : none.masked) CHECK(m == 0);
    const auto all = draw_span_mask(20, 1.0, 25, rng);
    for (auto m : all.masked) CHECK(m == 1);

    FeatureSequence s = fused_sequence(10, 3, 4, rng);
    const auto unchanged = apply_span_mask(s, 0.0, 10, rng, Tensor::full({3}, 9.0f));
    CHECK(unchanged.sequence.frames->values() == s.frames->values());
}

TEST_CASE("span starts follow the binomial model") {
    const std::size_t T = 1000, seeds = 100;
    const double p = 0.08;
    double total = 0.0;
    for (std::size_t seed = 0; seed < seeds; ++seed) {
        Rng rng(derive_seed(seed, "mask"));
        total += static_cast<double>(draw_span_mask(T, p, 10, rng).starts);
    }
    const double mean = total / seeds;
    const double sigma_of_mean = std::sqrt(T * p * (1 - p) / seeds);
    CHECK(std::abs(mean - p * T) < 3.0 * sigma_of_mean);
}

TEST_CASE("random swap examples") {
    Rng rng(11);
    Tape tape(false);
    const auto hidden = normal_tensor({6, 4}, rng);
    const auto units = normal_tensor({3, 4}, rng);
    const std::vector<std::uint32_t> ids{0, 1, 2, 2, 1, 0};
    const std::vector<std::uint8_t> none(6, 0);
    CHECK(random_swap(tape, hidden, ids, units, none, 0.0, rng).values() == hidden.values());

    std::vector<std::uint8_t> swapped;
    const auto all = random_swap(tape, hidden, ids, units, none, 1.0, rng, &swapped);
    for (std::size_t t = 0; t < 6; ++t) {
        CHECK(swapped[t] == 1);
        for (std::size_t k = 0; k < 4; ++k) CHECK(all[t * 4 + k] == units[ids[t] * 4 + k]);
    }
}

TEST_CASE("masked positions are never swapped") {
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        Rng rng(derive_seed(seed, "swap"));
        const auto mask = draw_span_mask(64, 0.08, 10, rng);
        const auto swapped = draw_swap_positions(mask.masked, 0.5, rng);
        for (std::size_t t = 0; t < 64; ++t) CHECK_FALSE((mask.masked[t] && swapped[t]));
    }
}

TEST_CASE("masked prediction probabilities") {
    Tape tape(false);
    PredictionHead<float> uniform{Tensor({2, 2}, {1, 0, 0, 1}), Tensor({3, 2}, {1, 1, 1, 1, 1, 1}), 0.1};
    const auto p = masked_prediction_probs(tape, Tensor({2, 2}, {0.3f, -1.0f, 2.0f, 0.5f}), uniform);
    for (float v : p.data()) CHECK(v == doctest::Approx(1.0 / 3.0));

    PredictionHead<float> two{Tensor({2, 2}, {1, 0, 0, 1}), Tensor({2, 2}, {1, 0, 0, 1}), 0.1};
    const auto q = masked_prediction_probs(tape, Tensor({1, 2}, {1, 0}), two);
    const double e10 = std::exp(10.0);
    CHECK(std::abs(q[0] - e10 / (e10 + 1)) < 1e-7);
    CHECK(std::abs(q[1] - 1 / (e10 + 1)) < 1e-7);

    Rng rng(12);
    PredictionHead<float> head{normal_tensor({4, 5}, rng), normal_tensor({7, 5}, rng), 0.1};
    const auto r = masked_prediction_probs(tape, normal_tensor({2, 3, 4}, rng), head);
    for (std::size_t row = 0; row < 6; ++row) {
        double s = 0.0;
        for (std::size_t c = 0; c < 7; ++c) s += r[row * 7 + c];
        CHECK(std::abs(s - 1.0) < 1e-6);
    }
}

TEST_CASE("layer_weighted_pool examples") {
    Rng rng(13);
    Tape tape(false);
    const auto a = normal_tensor({5, 3}, rng), b = normal_tensor({5, 3}, rng);
    const auto mean_a = ops::mean_rows(tape, a);
    CHECK(test::max_abs_diff(layer_weighted_pool(tape, {a}, Tensor::zeros({1})).data(), mean_a.data()) < 1e-6);

    const auto both = layer_weighted_pool(tape, {a, b}, Tensor::zeros({2}));
    const auto expected = ops::mean_rows(tape, ops::scale(tape, ops::add(tape, a, b), 0.5));
    CHECK(test::max_abs_diff(both.data(), expected.data()) < 1e-6);

    const auto pick = layer_weighted_pool(tape, {a, b}, Tensor({2}, {20.0f, -20.0f}));
    CHECK(test::max_abs_diff(pick.data(), mean_a.data()) < 1e-4);
}

TEST_CASE("language encoder inference is deterministic and unit norm") {
    Rng rng(14);
    const auto enc = LanguageEncoder<float>::init(toy_language_config(), rng);
    Tape tape(false);
    const auto seq = fused_sequence(12, 4, 6, rng);
    const auto a = enc.encode(tape, seq), b = enc.encode(tape, seq);
    CHECK(a.values() == b.values());
    CHECK(std::abs(norm(a.data()) - 1.0) < 1e-6);

    FeatureSequence text;
    text.modality = Modality::text;
    text.unit_ids = {0, 5, 2};
    CHECK(std::abs(norm(enc.encode(tape, text).data()) - 1.0) < 1e-6);
}

TEST_CASE("fully swapped audio matches the text path") {
    auto cfg = toy_language_config();
    cfg.mask_prob = 0.0;
    cfg.swap_prob = 1.0;
    Rng rng(15);
    const auto enc = LanguageEncoder<float>::init(cfg, rng);
    const auto seq = fused_sequence(12, 4, 6, rng);
    const FeatureSequence* audio_ptr = &seq;
    const auto audio = LanguageInput<float>::from_sequences(std::span<const FeatureSequence* const>(&audio_ptr, 1));

    FeatureSequence text;
    text.modality = Modality::text;
    text.unit_ids = seq.unit_ids;

    Tape tape(false);
    Rng step_rng(16);
    const auto swapped = enc.forward(tape, audio, EncodeOptions{true, false}, &step_rng).embedding;
    const auto direct = enc.encode(tape, text);
    CHECK(test::max_abs_diff(swapped.data(), direct.data()) < 1e-5);
}

TEST_CASE("language encoder pipeline matches finite differences") {
    auto cfg = toy_language_config();
    cfg.mask_prob = 0.2;
    cfg.mask_len = 3;
    cfg.swap_prob = 0.3;
    Rng rng(17);
    auto enc = LanguageEncoder<double>::init(cfg, rng);
    LanguageInput<double> input;
    input.modality = Modality::fused;
    input.batch = 2;
    input.length = 12;
    input.frames = normal_tensor<double>({2, 12, 4}, rng, 1.0, true);
    for (int i = 0; i < 24; ++i) input.unit_ids.push_back(static_cast<std::uint32_t>(rng.uniform_int(6)));
    std::vector<BasicTensor<double>> points{input.frames};
    enc.visit("", [&](const std::string&, BasicTensor<double>& t) { points.push_back(t); });
    const auto w = normal_tensor<double>({2, 8}, rng);
    const LossFn<double> fn = [&](BasicTape<double>& t) {
        Rng step_rng(18);
        const auto out = enc.forward(t, input, EncodeOptions{true, true}, &step_rng);
        return ops::add(t, ops::sum(t, ops::mul(t, out.embedding, w)), ops::sum(t, out.probs));
    };
    CHECK(finite_diff_check<double>(fn, std::span(points), 1e-6) < 1e-4);
}

TEST_CASE("language encoder rejects malformed input") {
    Rng rng(19);
    const auto enc = LanguageEncoder<float>::init(toy_language_config(), rng);
    Tape tape(false);
    FeatureSequence text;
    text.modality = Modality::text;
    text.unit_ids = {0, 6};
    CHECK_THROWS_AS(enc.encode(tape, text), ValueError);
    auto longer = fused_sequence(13, 4, 6, rng);
    CHECK_THROWS_AS(enc.encode(tape, longer), ShapeError);
}
