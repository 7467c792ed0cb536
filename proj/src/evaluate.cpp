#include "xmodal/evaluate.hpp"

#include <algorithm>

#include "xmodal/error.hpp"
#include "xmodal/metrics.hpp"
#include "xmodal/rerank.hpp"
#include "xmodal/rng.hpp"

namespace xmodal {

namespace {

std::vector<std::uint64_t> pair_ids(const PairedDataset& dataset) {
    std::vector<std::uint64_t> ids;
    for (const auto& r : dataset.records) ids.push_back(r.pair_id);
    return ids;
}

std::vector<std::size_t> class_labels(const PairedDataset& dataset) {
    std::vector<std::size_t> labels;
    for (const auto& r : dataset.records) labels.push_back(r.class_label);
    return labels;
}

Tensor row_of(const Tensor& m, std::size_t r) {
    const std::size_t d = m.dim(1);
    const auto v = m.data().subspan(r * d, d);
    return Tensor({d}, std::vector<float>(v.begin(), v.end()));
}

}  // namespace

RetrievalReport evaluate_retrieval(const Model& model, const PairedDataset& dataset) {
    if (dataset.empty()) throw ValueError("retrieval: empty dataset");
    const auto ids = pair_ids(dataset);
    const auto image = embed_images(model, dataset.records);
    const auto language = embed_language(model, dataset.records);
    RetrievalReport out;
    out.queries = dataset.size();
    out.language_to_image =
        mean_reciprocal_rank(model.project_language(language), RetrievalIndex(image, ids, "image"), ids);
    out.image_to_language =
        mean_reciprocal_rank(model.project_image(image), RetrievalIndex(language, ids, "language"), ids);
    return out;
}

std::vector<FeatureSequence> class_descriptions(const PairedDataset& dataset, std::size_t n_classes) {
    std::vector<FeatureSequence> out(n_classes);
    std::vector<std::uint8_t> found(n_classes, 0);
    for (const auto& r : dataset.records) {
        if (r.class_label >= n_classes || found[r.class_label]) continue;
        if (!r.language.has_units()) {
            throw ValueError("class descriptions: record " + std::to_string(r.pair_id) + " carries no unit ids");
        }
        out[r.class_label].modality = Modality::text;
        out[r.class_label].unit_ids = r.language.unit_ids;
        found[r.class_label] = 1;
    }
    for (std::size_t c = 0; c < n_classes; ++c) {
        if (!found[c]) throw ValueError("class descriptions: no record of class " + std::to_string(c));
    }
    return out;
}

ZeroShotReport evaluate_zero_shot(const Model& model, const std::vector<FeatureSequence>& descriptions,
                                  const PairedDataset& dataset, std::size_t topk) {
    if (dataset.empty()) throw ValueError("zero-shot: empty dataset");
    const auto prototypes = embed_sequences(model, descriptions);
    const auto samples = model.project_image(embed_images(model, dataset.records));
    ZeroShotReport out;
    out.predictions = zero_shot_classify(samples, prototypes, topk);
    out.samples = dataset.size();
    std::size_t hits = 0;
    for (std::size_t i = 0; i < dataset.size(); ++i) {
        const auto& p = out.predictions[i];
        hits += std::find(p.begin(), p.end(), dataset.records[i].class_label) != p.end();
    }
    out.accuracy = static_cast<double>(hits) / static_cast<double>(dataset.size());
    return out;
}

ProbeReport evaluate_probe(const Model& model, const PairedDataset& train, const PairedDataset& test,
                           std::size_t n_classes, const ProbeOptions& options) {
    if (train.empty() || test.empty()) throw ValueError("probe: empty split");
    const auto train_x = embed_language(model, train.records);
    const auto test_x = embed_language(model, test.records);
    const auto train_y = class_labels(train);
    const auto test_y = class_labels(test);
    const auto probe = train_linear_probe(train_x, train_y, n_classes, options);
    ProbeReport out;
    out.train_samples = train.size();
    out.test_samples = test.size();
    out.train_accuracy = accuracy(probe.predict(train_x), train_y);
    out.test_accuracy = accuracy(probe.predict(test_x), test_y);
    const auto probs = probe.probabilities(test_x);
    std::vector<double> scores(probs.data().begin(), probs.data().end());
    std::vector<std::uint8_t> onehot(test.size() * n_classes, 0);
    for (std::size_t i = 0; i < test.size(); ++i) onehot[i * n_classes + test_y[i]] = 1;
    out.test_map = mean_average_precision(scores, onehot, n_classes).map;
    return out;
}

RecoveryReport evaluate_rerank_recovery(const Model& model, const PairedDataset& dataset, std::size_t pool_size,
                                        std::size_t pools, std::uint64_t seed) {
    if (pool_size < 1 || pool_size > dataset.size()) {
        throw ValueError("rerank: pool size " + std::to_string(pool_size) + " needs 1..." +
                         std::to_string(dataset.size()) + " records");
    }
    const auto ids = pair_ids(dataset);
    const auto image = embed_images(model, dataset.records);
    const auto language = model.project_language(embed_language(model, dataset.records));
    const std::size_t d = image.dim(1);
    Rng rng(derive_seed(seed, "pools"));
    RecoveryReport out;
    out.pools = pools;
    out.pool_size = pool_size;
    std::size_t hits = 0;
    for (std::size_t p = 0; p < pools; ++p) {
        const std::size_t query = rng.uniform_int(dataset.size());
        std::vector<std::size_t> members{query};
        while (members.size() < pool_size) {
            const std::size_t c = rng.uniform_int(dataset.size());
            if (std::find(members.begin(), members.end(), c) == members.end()) members.push_back(c);
        }
        // Pool order is shuffled so the planted partner has no fixed slot.
        for (std::size_t i = members.size(); i > 1; --i) std::swap(members[i - 1], members[rng.uniform_int(i)]);
        std::vector<float> rows;
        std::vector<std::uint64_t> pool_ids;
        for (auto m : members) {
            const auto v = image.data().subspan(m * d, d);
            rows.insert(rows.end(), v.begin(), v.end());
            pool_ids.push_back(ids[m]);
        }
        CandidatePool pool(Tensor({pool_size, d}, std::move(rows)), std::move(pool_ids), "pool" + std::to_string(p));
        const auto best = rerank(row_of(language, query), pool, 1);
        hits += best.front().id == ids[query];
    }
    out.recovery = pools ? static_cast<double>(hits) / static_cast<double>(pools) : 0.0;
    return out;
}

}  // namespace xmodal
