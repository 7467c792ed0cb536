#include "xmodal/feature.hpp"

#include <string>

namespace xmodal {

std::string_view modality_name(Modality m) {
    switch (m) {
        case Modality::audio: return "audio";
        case Modality::text: return "text";
        case Modality::fused: return "fused";
    }
    return "unknown";
}

std::size_t FeatureSequence::length() const {
    if (frames) return frames->dim(0);
    return unit_ids.size();
}

void FeatureSequence::validate(std::size_t n_units) const {
    const std::string tag(modality_name(modality));
    if (frames && frames->rank() != 2) {
        throw ShapeError(tag + " sequence: frames must be [T, f], got " + shape_to_string(frames->shape()));
    }
    switch (modality) {
        case Modality::text:
            if (frames) throw ValueError("text sequence must not carry frames");
            if (unit_ids.empty()) throw ValueError("text sequence needs unit ids");
            break;
        case Modality::fused:
            if (!frames || unit_ids.empty()) throw ValueError("fused sequence needs both frames and unit ids");
            break;
        case Modality::audio:
            if (!frames) throw ValueError("audio sequence needs frames");
            break;
    }
    if (frames && !unit_ids.empty() && unit_ids.size() != frames->dim(0)) {
        throw ShapeError(tag + " sequence: " + std::to_string(unit_ids.size()) + " unit ids for " +
                         std::to_string(frames->dim(0)) + " frames");
    }
    if (length() == 0) throw ShapeError(tag + " sequence is empty");
    if (n_units) {
        for (auto id : unit_ids) {
            if (id >= n_units) {
                throw ValueError(tag + " sequence: unit id " + std::to_string(id) + " outside [0, " +
                                 std::to_string(n_units) + ")");
            }
        }
    }
}

}  // namespace xmodal
