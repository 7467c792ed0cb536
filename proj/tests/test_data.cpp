#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>

#include "helpers.hpp"
#include "xmodal/binary_io.hpp"
#include "xmodal/data.hpp"
#include "xmodal/error.hpp"

using namespace xmodal;

namespace {

bool same_record(const PairedRecord& a, const PairedRecord& b) {
    if (a.pair_id != b.pair_id || a.class_label != b.class_label) return false;
    if (a.image.shape() != b.image.shape() || a.image.values() != b.image.values()) return false;
    if (a.language.modality != b.language.modality || a.language.unit_ids != b.language.unit_ids) return false;
    if (a.language.frames.has_value() != b.language.frames.has_value()) return false;
    if (a.language.frames) {
        return a.language.frames->shape() == b.language.frames->shape() &&
               a.language.frames->values() == b.language.frames->values();
    }
    return true;
}

bool same_dataset(const PairedDataset& a, const PairedDataset& b) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (!same_record(a.records[i], b.records[i])) return false;
    }
    return true;
}

double sq_dist(std::span<const float> a, std::span<const float> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += std::pow(static_cast<double>(a[i]) - b[i], 2);
    return s;
}

std::size_t nearest(std::span<const float> x, const std::vector<Tensor>& protos) {
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < protos.size(); ++c) {
        const double d = sq_dist(x, protos[c].data());
        if (d < best_d) {
            best_d = d;
            best = c;
        }
    }
    return best;
}

std::vector<std::uint8_t> read_bytes(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

void write_bytes(const std::string& path, const std::vector<std::uint8_t>& bytes) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace

TEST_CASE("synthetic generation with zero noise repeats each class exactly") {
    SyntheticSpec spec;
    spec.noise_sigma = 0.0;
    spec.n_pairs = 64;
    const auto ds = generate_synthetic_pairs(spec);
    for (const auto& a : ds.records) {
        for (const auto& b : ds.records) {
            if (a.class_label != b.class_label) continue;
            CHECK(a.image.values() == b.image.values());
            if (a.language.modality == b.language.modality) {
                CHECK(a.language.unit_ids == b.language.unit_ids);
                if (a.language.frames) CHECK(a.language.frames->values() == b.language.frames->values());
            }
        }
    }
}

TEST_CASE("synthetic generation is deterministic per seed") {
    SyntheticSpec spec;
    spec.seed = 11;
    CHECK(same_dataset(generate_synthetic_pairs(spec), generate_synthetic_pairs(spec)));
    auto other = spec;
    other.seed = 12;
    CHECK_FALSE(same_dataset(generate_synthetic_pairs(spec), generate_synthetic_pairs(other)));
}

TEST_CASE("synthetic records carry balanced labels and unique ids") {
    SyntheticSpec spec;
    const auto ds = generate_synthetic_pairs(spec);
    CHECK(ds.size() == spec.n_pairs);
    CHECK(ds.num_classes() == spec.n_classes);
    std::vector<std::size_t> counts(spec.n_classes);
    std::set<std::uint64_t> ids;
    for (const auto& r : ds.records) {
        ++counts[r.class_label];
        ids.insert(r.pair_id);
        CHECK_NOTHROW(r.language.validate(spec.n_units));
    }
    CHECK(ids.size() == ds.size());
    for (auto c : counts) CHECK(c == spec.n_pairs / spec.n_classes);
}

TEST_CASE("raw features are classified perfectly by the nearest prototype") {
    for (std::uint64_t seed : {0, 1, 2}) {
        SyntheticSpec spec;
        spec.seed = seed;
        SyntheticPrototypes protos;
        const auto ds = generate_synthetic_pairs(spec, &protos);
        REQUIRE(protos.images.size() == spec.n_classes);
        for (const auto& r : ds.records) {
            CHECK(nearest(r.image.data(), protos.images) == r.class_label);
            if (r.language.frames) CHECK(nearest(r.language.frames->data(), protos.frames) == r.class_label);
        }
    }
}

TEST_CASE("class prototypes are separated by more than four noise widths") {
    SyntheticSpec spec;
    spec.noise_sigma = 0.1;
    SyntheticPrototypes protos;
    generate_synthetic_pairs(spec, &protos);
    for (std::size_t a = 0; a < protos.images.size(); ++a) {
        for (std::size_t b = a + 1; b < protos.images.size(); ++b) {
            CHECK(std::sqrt(sq_dist(protos.images[a].data(), protos.images[b].data())) > 4 * spec.noise_sigma);
        }
    }
}

TEST_CASE("degenerate specs are rejected") {
    SyntheticSpec spec;
    spec.height = 0;
    CHECK_THROWS_AS(generate_synthetic_pairs(spec), ValueError);
    spec = SyntheticSpec{};
    spec.n_classes = 1;
    CHECK_THROWS_AS(generate_synthetic_pairs(spec), ValueError);
    spec = SyntheticSpec{};
    spec.n_pairs = 4;
    CHECK_THROWS_AS(generate_synthetic_pairs(spec), ValueError);
}

TEST_CASE("FEAT round trip, empty file and truncation") {
    test::TempDir dir("feat");
    SyntheticSpec spec;
    spec.n_pairs = 40;
    const auto ds = generate_synthetic_pairs(spec);
    const auto path = dir.file("d.feat");
    write_feature_file(ds, path);
    CHECK(same_dataset(read_feature_file(path), ds));

    const auto empty_path = dir.file("empty.feat");
    write_feature_file(PairedDataset{}, empty_path);
    const auto header = read_bytes(empty_path);
    CHECK(header == std::vector<std::uint8_t>{'F', 'E', 'A', 'T', 1, 0, 0, 0, 0, 0, 0, 0});
    CHECK(read_feature_file(empty_path).empty());

    auto bytes = read_bytes(path);
    bytes.resize(bytes.size() - 7);
    write_bytes(dir.file("cut.feat"), bytes);
    try {
        read_feature_file(dir.file("cut.feat"));
        FAIL("truncated file was accepted");
    } catch (const FormatError& e) {
        CHECK(std::string(e.what()).find("offset") != std::string::npos);
    }
}

TEST_CASE("FEAT reader distinguishes bad magic and version") {
    SyntheticSpec spec;
    spec.n_pairs = 16;
    auto bytes = encode_feature_file(generate_synthetic_pairs(spec));
    auto bad_magic = bytes;
    bad_magic[0] = 'X';
    CHECK_THROWS_WITH_AS(decode_feature_file(bad_magic), doctest::Contains("magic"), FormatError);
    auto bad_version = bytes;
    bad_version[4] = 9;
    CHECK_THROWS_WITH_AS(decode_feature_file(bad_version), doctest::Contains("version"), FormatError);
}

TEST_CASE("FEAT layout is explicit little-endian") {
    PairedDataset ds;
    PairedRecord r;
    r.pair_id = 0x0102030405060708ull;
    r.class_label = 3;
    r.image = Tensor({1, 1, 1}, {1.0f});
    r.language.modality = Modality::text;
    r.language.unit_ids = {7};
    ds.records.push_back(r);
    const auto b = encode_feature_file(ds);
    const std::vector<std::uint8_t> expected{
        'F', 'E', 'A', 'T', 1, 0, 0, 0, 1, 0, 0, 0,  // header
        8, 7, 6, 5, 4, 3, 2, 1,                      // pair_id
        3, 0, 0, 0,                                  // class
        1, 0, 0, 0, 1, 0, 0, 0, 1, 0, 0, 0,          // image dims
        0x00, 0x00, 0x80, 0x3f,                      // 1.0f
        1,                                           // modality text
        1, 0, 0, 0, 0, 0, 0, 0,                      // T = 1, f_a = 0
        1, 7, 0, 0, 0};                              // unit ids
    CHECK(b == expected);
    CHECK(same_dataset(decode_feature_file(b), ds));
}

TEST_CASE("batch_iter examples and properties") {
    const auto one = batch_iter(10, 16, 3, 0);
    REQUIRE(one.size() == 1);
    auto sorted = one[0];
    std::sort(sorted.begin(), sorted.end());
    for (std::size_t i = 0; i < 10; ++i) CHECK(sorted[i] == i);

    for (std::size_t n : {17, 32, 33, 50}) {
        for (std::size_t bs : {1, 2, 8, 16}) {
            const auto batches = batch_iter(n, bs, 5, 2);
            std::vector<std::size_t> seen;
            for (const auto& b : batches) {
                CHECK(b.size() >= std::min<std::size_t>(2, bs));
                seen.insert(seen.end(), b.begin(), b.end());
            }
            std::set<std::size_t> unique(seen.begin(), seen.end());
            CHECK(unique.size() == seen.size());
            const std::size_t tail = n % bs;
            const std::size_t dropped = (bs >= 2 && tail == 1) ? 1 : 0;
            CHECK(seen.size() == n - dropped);
            CHECK(batches == batch_iter(n, bs, 5, 2));
        }
    }
    CHECK(batch_iter(40, 8, 5, 0) != batch_iter(40, 8, 5, 1));
    CHECK_THROWS_AS(batch_iter(10, 0, 0, 0), ValueError);
}

TEST_CASE("split_holdout keeps every class on both sides") {
    SyntheticSpec spec;
    const auto ds = generate_synthetic_pairs(spec);
    const auto [train, held] = split_holdout(ds, 0.125);
    CHECK(train.size() + held.size() == ds.size());
    CHECK(held.size() == 64);
    std::set<std::uint64_t> ids;
    for (const auto& r : train.records) ids.insert(r.pair_id);
    for (const auto& r : held.records) CHECK(ids.count(r.pair_id) == 0);
    CHECK(held.num_classes() == spec.n_classes);
}
