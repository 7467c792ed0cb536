#include "xmodal/model.hpp"

#include <algorithm>
#include <numeric>

#include "xmodal/error.hpp"
#include "xmodal/ops.hpp"
#include "xmodal/rng.hpp"

namespace xmodal {

namespace {

constexpr std::size_t kInferenceChunk = 64;

Tensor stack_rows(const std::vector<Tensor>& parts, std::size_t total, std::size_t d) {
    if (total == 0) throw ValueError("nothing to embed");
    std::vector<float> out;
    out.reserve(total * d);
    for (const auto& p : parts) out.insert(out.end(), p.data().begin(), p.data().end());
    return Tensor({total, d}, std::move(out));
}

Tensor embed_sequence_ptrs(const Model& model, const std::vector<const FeatureSequence*>& seqs) {
    const std::size_t d = model.language.config.embed_dim;
    std::vector<Tensor> parts;
    std::size_t i = 0;
    while (i < seqs.size()) {
        // Batch consecutive sequences that share modality, length and layout.
        std::size_t j = i + 1;
        while (j < seqs.size() && j - i < kInferenceChunk && seqs[j]->modality == seqs[i]->modality &&
               seqs[j]->length() == seqs[i]->length() && seqs[j]->feature_dim() == seqs[i]->feature_dim() &&
               seqs[j]->has_units() == seqs[i]->has_units()) {
            ++j;
        }
        for (std::size_t k = i; k < j; ++k) seqs[k]->validate(model.language.config.n_units);
        auto input = LanguageInput<float>::from_sequences(
            std::span<const FeatureSequence* const>(seqs.data() + i, j - i));
        Tape tape(false);
        parts.push_back(model.language.forward(tape, input, EncodeOptions{}, nullptr).embedding);
        i = j;
    }
    return stack_rows(parts, seqs.size(), d);
}

}  // namespace

ModelDims ModelDims::from_dataset(const PairedDataset& dataset) {
    if (dataset.empty()) throw ValueError("cannot size a model from an empty dataset");
    ModelDims dims;
    const auto& first = dataset.records.front();
    if (first.image.rank() != 3) throw ShapeError("image features must be [H, W, f]");
    dims.image_height = first.image.dim(0);
    dims.image_width = first.image.dim(1);
    dims.image_channels = first.image.dim(2);
    dims.n_units = 1;
    for (const auto& r : dataset.records) {
        dims.feature_dim = std::max(dims.feature_dim, r.language.feature_dim());
        dims.max_length = std::max(dims.max_length, r.language.length());
        for (auto id : r.language.unit_ids) dims.n_units = std::max<std::size_t>(dims.n_units, id + 1);
    }
    dims.feature_dim = std::max<std::size_t>(dims.feature_dim, 1);
    for (const auto& r : dataset.records) dims.check(r);
    return dims;
}

void ModelDims::check(const PairedRecord& record) const {
    if (record.image.shape() != Shape{image_height, image_width, image_channels}) {
        throw ShapeError("record " + std::to_string(record.pair_id) + ": image " +
                         shape_to_string(record.image.shape()) + " does not match the model input [" +
                         std::to_string(image_height) + "x" + std::to_string(image_width) + "x" +
                         std::to_string(image_channels) + "]");
    }
    const auto& seq = record.language;
    if (seq.frames && seq.feature_dim() != feature_dim) {
        throw ShapeError("record " + std::to_string(record.pair_id) + ": frame width " +
                         std::to_string(seq.feature_dim()) + " does not match the model (" +
                         std::to_string(feature_dim) + ")");
    }
    if (seq.length() > max_length) {
        throw ShapeError("record " + std::to_string(record.pair_id) + ": sequence longer than the position table");
    }
    seq.validate(n_units);
}

ImageEncoderConfig image_encoder_config(const RunConfig& config, const ModelDims& dims) {
    ImageEncoderConfig c;
    c.feature_dim = dims.image_channels;
    c.model_dim = config.model_dim;
    c.embed_dim = config.embed_dim;
    c.grid_size = config.grid_size;
    c.layers = config.sa_layers;
    c.heads = config.heads;
    return c;
}

LanguageEncoderConfig language_encoder_config(const RunConfig& config, const ModelDims& dims) {
    LanguageEncoderConfig c;
    c.feature_dim = dims.feature_dim;
    c.model_dim = config.model_dim;
    c.embed_dim = config.embed_dim;
    c.speech_layers = config.speech_layers;
    c.shared_layers = config.shared_layers;
    c.heads = config.heads;
    c.n_units = dims.n_units;
    c.max_length = dims.max_length;
    c.mask_prob = config.mask_prob;
    c.mask_len = config.mask_len;
    c.swap_prob = config.swap_prob;
    c.tau_pred = config.tau_pred;
    return c;
}

Model Model::init(const RunConfig& config, const ModelDims& dims) {
    config.validate();
    if (dims.image_height % config.grid_size != 0 || dims.image_width % config.grid_size != 0) {
        throw ShapeError("image " + std::to_string(dims.image_height) + "x" + std::to_string(dims.image_width) +
                         " is not divisible by grid_size " + std::to_string(config.grid_size));
    }
    Model m;
    Rng image_rng(derive_seed(config.seed, "init.image"));
    Rng language_rng(derive_seed(config.seed, "init.language"));
    m.image = ImageEncoder<float>::init(image_encoder_config(config, dims), image_rng);
    m.language = LanguageEncoder<float>::init(language_encoder_config(config, dims), language_rng);
    if (config.projection_heads) {
        Rng head_rng(derive_seed(config.seed, "init.heads"));
        m.f = Mlp<float>::init(config.embed_dim, config.embed_dim, config.embed_dim, head_rng);
        m.g = Mlp<float>::init(config.embed_dim, config.embed_dim, config.embed_dim, head_rng);
    }
    return m;
}

Model Model::key_copy() const {
    Model k;
    k.image = deep_copy<float>(image, false);
    k.language = deep_copy<float>(language, false);
    return k;
}

Tensor Model::project_image(const Tensor& image_z) const {
    if (!f) return image_z;
    Tape tape(false);
    return ops::l2_normalize(tape, f->forward(tape, image_z));
}

Tensor Model::project_language(const Tensor& language_z) const {
    if (!g) return language_z;
    Tape tape(false);
    return ops::l2_normalize(tape, g->forward(tape, language_z));
}

ParameterList<float> Model::parameters() { return collect_parameters<float>(*this); }

void Model::visit(const std::string& prefix, const ParameterVisitor<float>& fn) {
    image.visit(prefix + "image.", fn);
    language.visit(prefix + "language.", fn);
    if (f) f->visit(prefix + "f.", fn);
    if (g) g->visit(prefix + "g.", fn);
}

std::vector<std::vector<std::size_t>> group_by_layout(std::span<const PairedRecord> records,
                                                      std::span<const std::size_t> indices) {
    std::vector<std::vector<std::size_t>> groups;
    auto same = [&](std::size_t a, std::size_t b) {
        const auto& x = records[a].language;
        const auto& y = records[b].language;
        return x.modality == y.modality && x.length() == y.length() && x.feature_dim() == y.feature_dim() &&
               x.has_units() == y.has_units();
    };
    for (auto i : indices) {
        auto it = std::find_if(groups.begin(), groups.end(), [&](const auto& g) { return same(g.front(), i); });
        if (it == groups.end()) {
            groups.push_back({i});
        } else {
            it->push_back(i);
        }
    }
    return groups;
}

Tensor stack_images(std::span<const PairedRecord> records, std::span<const std::size_t> indices) {
    if (indices.empty()) throw ShapeError("stack_images: empty selection");
    const Shape shape = records[indices.front()].image.shape();
    std::vector<float> out;
    out.reserve(indices.size() * shape_size(shape));
    for (auto i : indices) {
        const auto& img = records[i].image;
        if (img.shape() != shape) throw ShapeError("stack_images: records have different image shapes");
        out.insert(out.end(), img.data().begin(), img.data().end());
    }
    Shape stacked{indices.size()};
    stacked.insert(stacked.end(), shape.begin(), shape.end());
    return Tensor(stacked, std::move(out));
}

Tensor embed_images(const Model& model, std::span<const PairedRecord> records) {
    const std::size_t d = model.image.config.embed_dim;
    std::vector<Tensor> parts;
    for (std::size_t start = 0; start < records.size(); start += kInferenceChunk) {
        std::vector<std::size_t> idx(std::min(kInferenceChunk, records.size() - start));
        std::iota(idx.begin(), idx.end(), start);
        Tape tape(false);
        parts.push_back(model.image.encode(tape, stack_images(records, idx)));
    }
    return stack_rows(parts, records.size(), d);
}

Tensor embed_language(const Model& model, std::span<const PairedRecord> records) {
    std::vector<const FeatureSequence*> seqs;
    seqs.reserve(records.size());
    for (const auto& r : records) seqs.push_back(&r.language);
    return embed_sequence_ptrs(model, seqs);
}

Tensor embed_sequences(const Model& model, std::span<const FeatureSequence> sequences) {
    std::vector<const FeatureSequence*> seqs;
    seqs.reserve(sequences.size());
    for (const auto& s : sequences) seqs.push_back(&s);
    return embed_sequence_ptrs(model, seqs);
}

}  // namespace xmodal
