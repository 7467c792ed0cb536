#include "xmodal/data.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <string>

#include "xmodal/binary_io.hpp"
#include "xmodal/rng.hpp"

namespace xmodal {

std::size_t PairedDataset::num_classes() const {
    std::size_t n = 0;
    for (const auto& r : records) n = std::max<std::size_t>(n, r.class_label + 1);
    return n;
}

namespace {

std::vector<float> normal_vector(std::size_t n, double stddev, Rng& rng) {
    std::vector<float> v(n);
    for (auto& x : v) x = static_cast<float>(rng.normal() * stddev);
    return v;
}

double distance(std::span<const float> a, std::span<const float> b) {
    double ss = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) ss += (static_cast<double>(a[i]) - b[i]) * (a[i] - b[i]);
    return std::sqrt(ss);
}

bool separated(const std::vector<std::vector<float>>& protos, double min_distance) {
    for (std::size_t i = 0; i < protos.size(); ++i)
        for (std::size_t j = i + 1; j < protos.size(); ++j)
            if (!(distance(protos[i], protos[j]) > min_distance)) return false;
    return true;
}

// (M z) with M [n, k] drawn row-major.
std::vector<float> project(const std::vector<float>& m, const std::vector<double>& z, std::size_t n) {
    const std::size_t k = z.size();
    std::vector<float> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        double acc = 0.0;
        for (std::size_t j = 0; j < k; ++j) acc += m[i * k + j] * z[j];
        out[i] = static_cast<float>(acc);
    }
    return out;
}

}  // namespace

PairedDataset generate_synthetic_pairs(const SyntheticSpec& spec, SyntheticPrototypes* prototypes) {
    if (spec.height == 0 || spec.width == 0 || spec.channels == 0 || spec.seq_len == 0 || spec.feature_dim == 0 ||
        spec.n_units == 0) {
        throw ValueError("synthetic spec: every dimension must be positive");
    }
    if (spec.n_classes < 2 || spec.n_pairs < spec.n_classes) {
        throw ValueError("synthetic spec: needs n_pairs >= n_classes >= 2, got " + std::to_string(spec.n_pairs) +
                         " pairs / " + std::to_string(spec.n_classes) + " classes");
    }
    if (!(spec.text_fraction >= 0.0 && spec.text_fraction < 1.0)) {
        throw ValueError("synthetic spec: text_fraction must lie in [0, 1)");
    }
    if (!(spec.prototype_scale > 0.0)) throw ValueError("synthetic spec: prototype_scale must be > 0");
    if (!(spec.noise_sigma >= 0.0) || !(spec.shared_noise >= 0.0 && spec.shared_noise <= 1.0)) {
        throw ValueError("synthetic spec: sigma must be >= 0 and shared_noise in [0, 1]");
    }
    const std::size_t image_size = spec.height * spec.width * spec.channels;
    const std::size_t frame_size = spec.seq_len * spec.feature_dim;
    const double min_distance = 4.0 * spec.noise_sigma;

    Rng rng(derive_seed(spec.seed, "data"));
    std::vector<float> unit_table;
    std::vector<std::vector<float>> image_protos, frame_protos;
    std::vector<std::vector<std::uint32_t>> unit_seqs;
    // Prototypes are redrawn until every pair of classes is separated in both
    // modalities; with unit-variance draws this almost never repeats.
    for (int attempt = 0;; ++attempt) {
        if (attempt == 100) throw ValueError("synthetic spec: could not draw separated class prototypes");
        unit_table = normal_vector(spec.n_units * spec.feature_dim, spec.prototype_scale, rng);
        image_protos.clear();
        frame_protos.clear();
        unit_seqs.clear();
        for (std::size_t c = 0; c < spec.n_classes; ++c) {
            image_protos.push_back(normal_vector(image_size, spec.prototype_scale, rng));
            std::vector<std::uint32_t> ids(spec.seq_len);
            for (auto& id : ids) id = static_cast<std::uint32_t>(rng.uniform_int(spec.n_units));
            std::vector<float> frames(frame_size);
            for (std::size_t t = 0; t < spec.seq_len; ++t) {
                std::copy_n(unit_table.begin() + ids[t] * spec.feature_dim, spec.feature_dim,
                            frames.begin() + t * spec.feature_dim);
            }
            unit_seqs.push_back(std::move(ids));
            frame_protos.push_back(std::move(frames));
        }
        if (separated(image_protos, min_distance) && separated(frame_protos, min_distance)) break;
    }

    // The shared latent moves every pixel of a channel (every frame of a
    // feature) together, so it survives patch and time averaging.
    const std::size_t k = spec.latent_dim;
    const double latent_scale = k ? 1.0 / std::sqrt(static_cast<double>(k)) : 0.0;
    const auto image_mix = normal_vector(spec.channels * k, latent_scale, rng);
    const auto frame_mix = normal_vector(spec.feature_dim * k, latent_scale, rng);
    const double shared = k ? std::sqrt(spec.shared_noise) : 0.0;
    const double own = k ? std::sqrt(1.0 - spec.shared_noise) : 1.0;

    PairedDataset ds;
    ds.records.reserve(spec.n_pairs);
    for (std::size_t i = 0; i < spec.n_pairs; ++i) {
        const std::size_t c = i % spec.n_classes;
        std::vector<double> z(k);
        for (auto& v : z) v = rng.normal();
        const auto image_latent = project(image_mix, z, spec.channels);
        const auto frame_latent = project(frame_mix, z, spec.feature_dim);
        std::vector<float> image(image_size), frames(frame_size);
        for (std::size_t j = 0; j < image_size; ++j) {
            image[j] = static_cast<float>(image_protos[c][j] +
                                          spec.noise_sigma * (shared * image_latent[j % spec.channels] +
                                                              own * rng.normal()));
        }
        for (std::size_t j = 0; j < frame_size; ++j) {
            frames[j] = static_cast<float>(frame_protos[c][j] +
                                           spec.noise_sigma * (shared * frame_latent[j % spec.feature_dim] +
                                                               own * rng.normal()));
        }
        PairedRecord rec;
        rec.pair_id = i;
        rec.class_label = static_cast<std::uint32_t>(c);
        rec.image = Tensor({spec.height, spec.width, spec.channels}, std::move(image));
        // Within a class, record r is text when (r + 1) * fraction passes an integer.
        const double r = static_cast<double>(i / spec.n_classes);
        const bool text = std::floor((r + 1.0) * spec.text_fraction) > std::floor(r * spec.text_fraction);
        if (text) {
            // A caption names only the class, so its image is the noise-free prototype.
            rec.image = Tensor({spec.height, spec.width, spec.channels}, image_protos[c]);
            rec.language.modality = Modality::text;
        } else {
            rec.language.modality = Modality::audio;
            rec.language.frames = Tensor({spec.seq_len, spec.feature_dim}, std::move(frames));
        }
        rec.language.unit_ids = unit_seqs[c];
        ds.records.push_back(std::move(rec));
    }
    if (prototypes) {
        prototypes->images.clear();
        prototypes->frames.clear();
        for (std::size_t c = 0; c < spec.n_classes; ++c) {
            prototypes->images.emplace_back(Shape{spec.height, spec.width, spec.channels}, image_protos[c]);
            prototypes->frames.emplace_back(Shape{spec.seq_len, spec.feature_dim}, frame_protos[c]);
        }
        prototypes->unit_ids = unit_seqs;
    }
    return ds;
}

std::vector<std::uint8_t> encode_feature_file(const PairedDataset& dataset) {
    ByteWriter w;
    w.raw("FEAT");
    w.u32(kFeatVersion);
    w.u32(static_cast<std::uint32_t>(dataset.size()));
    for (const auto& r : dataset.records) {
        if (r.image.rank() != 3) throw ShapeError("feature file: image must be [H, W, f]");
        r.language.validate();
        w.u64(r.pair_id);
        w.u32(r.class_label);
        for (std::size_t d : r.image.shape()) w.u32(static_cast<std::uint32_t>(d));
        w.f32s(r.image.data());
        w.u8(static_cast<std::uint8_t>(r.language.modality));
        w.u32(static_cast<std::uint32_t>(r.language.length()));
        w.u32(static_cast<std::uint32_t>(r.language.feature_dim()));
        if (r.language.frames) w.f32s(r.language.frames->data());
        w.u8(r.language.has_units() ? 1 : 0);
        for (auto id : r.language.unit_ids) w.u32(id);
    }
    return w.bytes();
}

void write_feature_file(const PairedDataset& dataset, const std::filesystem::path& path) {
    write_file_bytes(path, encode_feature_file(dataset));
}

PairedDataset decode_feature_file(std::vector<std::uint8_t> bytes, const std::string& source) {
    ByteReader r(std::move(bytes), source);
    if (r.raw(4) != "FEAT") {
        throw FormatError(source + ": bad magic (expected FEAT)");
    }
    const std::uint32_t version = r.u32();
    if (version != kFeatVersion) {
        throw FormatError(source + ": unsupported FEAT version " + std::to_string(version) + " (expected " +
                          std::to_string(kFeatVersion) + ")");
    }
    const std::uint32_t n = r.u32();
    PairedDataset ds;
    ds.records.reserve(std::min<std::uint32_t>(n, 1u << 20));
    for (std::uint32_t i = 0; i < n; ++i) {
        PairedRecord rec;
        rec.pair_id = r.u64();
        rec.class_label = r.u32();
        Shape image_shape{r.u32(), r.u32(), r.u32()};
        if (shape_size(image_shape) == 0) r.fail("record " + std::to_string(i) + " has an empty image");
        rec.image = Tensor(image_shape, r.f32s(shape_size(image_shape)));
        const std::uint8_t modality = r.u8();
        if (modality > 2) r.fail("unknown modality tag " + std::to_string(modality));
        rec.language.modality = static_cast<Modality>(modality);
        const std::uint32_t T = r.u32();
        const std::uint32_t f = r.u32();
        if (T == 0) r.fail("record " + std::to_string(i) + " has an empty sequence");
        if (f > 0) rec.language.frames = Tensor({T, f}, r.f32s(std::size_t{T} * f));
        const std::uint8_t has_units = r.u8();
        if (has_units > 1) r.fail("bad unit-id flag " + std::to_string(has_units));
        if (has_units) {
            rec.language.unit_ids.resize(T);
            for (auto& id : rec.language.unit_ids) id = r.u32();
        }
        try {
            rec.language.validate();
        } catch (const Error& e) {
            r.fail(std::string("invalid record ") + std::to_string(i) + ": " + e.what());
        }
        ds.records.push_back(std::move(rec));
    }
    if (!r.at_end()) r.fail("trailing bytes after the last record");
    return ds;
}

PairedDataset read_feature_file(const std::filesystem::path& path) {
    return decode_feature_file(read_file_bytes(path), path.string());
}

PairedDataset with_frames(const PairedDataset& dataset) {
    PairedDataset out;
    for (const auto& r : dataset.records) {
        if (r.language.frames) out.records.push_back(r);
    }
    return out;
}

std::vector<std::vector<std::size_t>> batch_iter(std::size_t n_records, std::size_t batch_size, std::uint64_t seed,
                                                 std::uint64_t epoch) {
    if (batch_size == 0) throw ValueError("batch_iter: batch size must be at least 1");
    std::vector<std::size_t> order(n_records);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(derive_seed(seed, "shuffle", epoch));
    for (std::size_t i = n_records; i > 1; --i) {
        const std::size_t j = rng.uniform_int(i);
        std::swap(order[i - 1], order[j]);
    }
    std::vector<std::vector<std::size_t>> batches;
    for (std::size_t start = 0; start < n_records; start += batch_size) {
        const std::size_t end = std::min(n_records, start + batch_size);
        if (end - start < batch_size && end - start < 2) break;
        batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                             order.begin() + static_cast<std::ptrdiff_t>(end));
    }
    return batches;
}

std::pair<PairedDataset, PairedDataset> split_holdout(const PairedDataset& dataset, double fraction) {
    if (!(fraction >= 0.0 && fraction < 1.0)) throw ValueError("split_holdout: fraction must lie in [0, 1)");
    std::map<std::uint32_t, std::vector<std::size_t>> by_class;
    for (std::size_t i = 0; i < dataset.size(); ++i) by_class[dataset.records[i].class_label].push_back(i);
    std::vector<std::uint8_t> held(dataset.size(), 0);
    for (const auto& [label, idx] : by_class) {
        std::size_t take = static_cast<std::size_t>(std::lround(fraction * static_cast<double>(idx.size())));
        if (fraction > 0.0 && idx.size() >= 2) take = std::max<std::size_t>(take, 1);
        take = std::min(take, idx.size() - 1);
        for (std::size_t j = idx.size() - take; j < idx.size(); ++j) held[idx[j]] = 1;
    }
    std::pair<PairedDataset, PairedDataset> out;
    for (std::size_t i = 0; i < dataset.size(); ++i) {
        (held[i] ? out.second : out.first).records.push_back(dataset.records[i]);
    }
    return out;
}

}  // namespace xmodal
