#pragma once

#include <cstdint>
#include <filesystem>
#include <utility>
#include <vector>

#include "xmodal/feature.hpp"

namespace xmodal {

struct PairedRecord {
    std::uint64_t pair_id = 0;
    std::uint32_t class_label = 0;
    Tensor image;  // [H, W, f]
    FeatureSequence language;
};

struct PairedDataset {
    std::vector<PairedRecord> records;

    std::size_t size() const { return records.size(); }
    bool empty() const { return records.empty(); }
    // 1 + largest class label (0 when empty).
    std::size_t num_classes() const;
};

// Planted-structure generator. Each class owns an image prototype and a unit
// sequence whose frames are looked up in a shared unit feature table. Each
// record adds sigma-scaled noise to both prototypes; part of that noise comes
// from a per-pair latent vector mapped into both modalities, so paired
// records are identifiable at instance level. A fraction of each class is
// emitted as text records (the class unit sequence, no frames), which pair an
// image with a text description instead of audio.
struct SyntheticSpec {
    std::size_t n_classes = 8;
    std::size_t n_pairs = 512;
    std::size_t height = 8;
    std::size_t width = 8;
    std::size_t channels = 8;
    std::size_t seq_len = 16;
    std::size_t feature_dim = 8;
    std::size_t n_units = 32;
    std::size_t latent_dim = 2;    // per-pair shared latent
    double shared_noise = 1.0;     // fraction of noise variance from the shared latent
    double noise_sigma = 0.1;
    double prototype_scale = 0.5;  // standard deviation of prototype entries
    double text_fraction = 0.25;   // share of each class emitted as text records
    std::uint64_t seed = 0;
};

struct SyntheticPrototypes {
    std::vector<Tensor> images;                           // per class, [H, W, f]
    std::vector<Tensor> frames;                           // per class, [T, f_a]
    std::vector<std::vector<std::uint32_t>> unit_ids;     // per class
};

PairedDataset generate_synthetic_pairs(const SyntheticSpec& spec, SyntheticPrototypes* prototypes = nullptr);

// FEAT format, little-endian:
//   "FEAT", version u32, n_records u32, then per record:
//   pair_id u64, class_label u32, H u32, W u32, f u32, H*W*f f32,
//   modality u8, T u32, f_a u32, T*f_a f32, has_units u8, [T u32].
inline constexpr std::uint32_t kFeatVersion = 1;

void write_feature_file(const PairedDataset& dataset, const std::filesystem::path& path);
PairedDataset read_feature_file(const std::filesystem::path& path);
std::vector<std::uint8_t> encode_feature_file(const PairedDataset& dataset);
PairedDataset decode_feature_file(std::vector<std::uint8_t> bytes, const std::string& source = "<memory>");

// Records whose language side carries frames (audio or fused).
PairedDataset with_frames(const PairedDataset& dataset);

// Index batches for one epoch. The permutation depends only on (seed, epoch);
// a trailing partial batch smaller than 2 is dropped.
std::vector<std::vector<std::size_t>> batch_iter(std::size_t n_records, std::size_t batch_size, std::uint64_t seed,
                                                 std::uint64_t epoch);

// Per class, the last round(fraction * count) records (at least one when the
// class has two or more) go to the held-out split.
std::pair<PairedDataset, PairedDataset> split_holdout(const PairedDataset& dataset, double fraction);

}  // namespace xmodal
