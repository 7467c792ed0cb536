#pragma once

#include <cstdint>
#include <optional>
#include <string_view>
#include <vector>

#include "xmodal/tensor.hpp"

namespace xmodal {

// audio: frames, unit ids optional. text: unit ids only.
// fused: frames plus frame-aligned unit ids, both required.
enum class Modality : std::uint8_t { audio = 0, text = 1, fused = 2 };

std::string_view modality_name(Modality m);

struct FeatureSequence {
    Modality modality = Modality::audio;
    std::optional<Tensor> frames;  // [T, f]
    std::vector<std::uint32_t> unit_ids;

    std::size_t length() const;
    std::size_t feature_dim() const { return frames ? frames->dim(1) : 0; }
    bool has_units() const { return !unit_ids.empty(); }

    // Checks the modality/field contract; n_units bounds the unit ids when
    // nonzero.
    void validate(std::size_t n_units = 0) const;
};

}  // namespace xmodal
