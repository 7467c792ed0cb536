#include "xmodal/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <optional>

#include "xmodal/checkpoint.hpp"
#include "xmodal/config.hpp"
#include "xmodal/data.hpp"
#include "xmodal/error.hpp"
#include "xmodal/evaluate.hpp"
#include "xmodal/model.hpp"
#include "xmodal/report.hpp"
#include "xmodal/rerank.hpp"
#include "xmodal/selfcheck.hpp"
#include "xmodal/trainer.hpp"

namespace xmodal {

namespace {

struct Options {
    std::string config_path;
    std::vector<std::string> sets;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> epochs;
    std::optional<std::size_t> stop_after;
    std::string data;
    std::string checkpoint;
    std::string out;
    std::string history;
    std::string resume;
    std::string query;
    std::string pool;
    SyntheticSpec spec;
};

RunConfig build_config(const Options& o) {
    std::vector<std::string> overrides = o.sets;
    if (o.seed) overrides.push_back("seed=" + std::to_string(*o.seed));
    if (o.epochs) overrides.push_back("epochs=" + std::to_string(*o.epochs));
    return parse_config(o.config_path, overrides);
}

// Evaluation keys may be overridden on top of the checkpoint's config.
RunConfig eval_config(const Options& o, RunConfig config) {
    static const std::vector<std::string> allowed{"topk", "holdout", "probe_epochs", "probe_lr", "pool_size", "pools"};
    if (!o.config_path.empty()) throw ValueError("--config is not accepted here; the checkpoint carries the config");
    for (const auto& s : o.sets) {
        const auto [key, value] = split_assignment(s);
        if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
            throw ValueError("--set " + key + ": only evaluation keys may be overridden here");
        }
        config.set(key, value);
    }
    config.validate();
    return config;
}

void require(const std::string& value, const char* flag) {
    if (value.empty()) throw ValueError(std::string("missing required flag ") + flag);
}

int cmd_gen_data(const Options& o, std::ostream& out) {
    require(o.out, "--out");
    const auto dataset = generate_synthetic_pairs(o.spec);
    write_feature_file(dataset, o.out);
    out << "records=" << dataset.size() << "\nclasses=" << dataset.num_classes() << "\n";
    return exit_ok;
}

std::string history_header() { return "step\tepoch\tloss\tlr\tgrad_norm\tqueue_fill\n"; }

std::string history_lines(const TrainHistory& history, std::uint64_t first_step, std::size_t steps_per_epoch,
                          std::uint64_t first_epoch) {
    std::string text;
    for (std::size_t i = 0; i < history.steps.size(); ++i) {
        const auto& s = history.steps[i];
        const std::uint64_t epoch = first_epoch + (steps_per_epoch ? i / steps_per_epoch : 0);
        text += std::to_string(first_step + i + 1) + "\t" + std::to_string(epoch + 1) + "\t" + format_number(s.loss) +
                "\t" + format_number(s.lr) + "\t" + format_number(s.grad_norm) + "\t" +
                std::to_string(s.queue_fill) + "\n";
    }
    return text;
}

int cmd_train(const Options& o, std::ostream& out) {
    require(o.data, "--data");
    require(o.out, "--out");
    const auto dataset = read_feature_file(o.data);
    std::optional<TrainState> state;
    if (!o.resume.empty()) {
        if (!o.config_path.empty() || !o.sets.empty() || o.seed) {
            throw ValueError("--resume continues the stored config; --config, --set and --seed are not accepted");
        }
        state = load_checkpoint(o.resume);
        if (o.epochs) {
            state->config.set("epochs", std::to_string(*o.epochs));
            state->config.validate();
        }
    } else {
        const auto config = build_config(o);
        state = TrainState::init(config, ModelDims::from_dataset(dataset));
    }
    const auto train = split_holdout(dataset, state->config.holdout).first;
    const std::size_t target = std::min<std::size_t>(state->config.epochs, o.stop_after.value_or(state->config.epochs));
    const std::uint64_t first_step = state->step, first_epoch = state->epoch;
    const std::size_t steps_per_epoch = batch_iter(train.size(), state->config.batch_size, 0, 0).size();

    const auto history = train_loop(*state, train, target, [&](const TrainState& s) { save_checkpoint(s, o.out); });
    save_checkpoint(*state, o.out);
    const std::string history_path = o.history.empty() ? o.out + ".history" : o.history;
    write_text_file(history_path, history_header() + history_lines(history, first_step, steps_per_epoch, first_epoch));

    out << "epochs=" << state->epoch << "\nsteps=" << state->step << "\n";
    if (!history.epoch_loss.empty()) out << "final_loss=" << format_number(history.epoch_loss.back()) << "\n";
    return exit_ok;
}

struct Evaluation {
    TrainState state;
    RunConfig config;
    PairedDataset dataset;
    PairedDataset train;
    PairedDataset held;
};

Evaluation load_evaluation(const Options& o) {
    require(o.checkpoint, "--checkpoint");
    require(o.data, "--data");
    auto state = load_checkpoint(o.checkpoint);
    auto config = eval_config(o, state.config);
    auto dataset = read_feature_file(o.data);
    auto [train, held] = split_holdout(dataset, config.holdout);
    return {std::move(state), std::move(config), std::move(dataset), with_frames(train), with_frames(held)};
}

int emit(const Options& o, const Report& report, std::ostream& out) {
    out << report.to_text();
    if (!o.out.empty()) write_metr(report, o.out);
    return exit_ok;
}

int cmd_probe(const Options& o, std::ostream& out) {
    const auto ev = load_evaluation(o);
    const ProbeOptions options{ev.config.probe_epochs, ev.config.probe_lr, ev.config.seed};
    const auto r = evaluate_probe(ev.state.model, ev.train, ev.held, ev.dataset.num_classes(), options);
    Report report{"probe", {}};
    report.add("train_accuracy", r.train_accuracy);
    report.add("test_accuracy", r.test_accuracy);
    report.add("test_map", r.test_map);
    report.add("train_samples", static_cast<std::uint64_t>(r.train_samples));
    report.add("test_samples", static_cast<std::uint64_t>(r.test_samples));
    return emit(o, report, out);
}

int cmd_zero_shot(const Options& o, std::ostream& out) {
    const auto ev = load_evaluation(o);
    const auto descriptions = class_descriptions(ev.dataset, ev.dataset.num_classes());
    const auto r = evaluate_zero_shot(ev.state.model, descriptions, ev.held, ev.config.topk);
    Report report{"zero-shot", {}};
    report.add("accuracy", r.accuracy);
    report.add("samples", static_cast<std::uint64_t>(r.samples));
    report.add("topk", static_cast<std::uint64_t>(ev.config.topk));
    return emit(o, report, out);
}

int cmd_retrieve(const Options& o, std::ostream& out) {
    const auto ev = load_evaluation(o);
    const auto r = evaluate_retrieval(ev.state.model, ev.held);
    Report report{"retrieve", {}};
    report.add("mrr_language_to_image", r.language_to_image);
    report.add("mrr_image_to_language", r.image_to_language);
    report.add("queries", static_cast<std::uint64_t>(r.queries));
    return emit(o, report, out);
}

int cmd_rerank(const Options& o, std::ostream& out) {
    require(o.checkpoint, "--checkpoint");
    require(o.query, "--query");
    require(o.pool, "--pool");
    const auto state = load_checkpoint(o.checkpoint);
    const auto config = eval_config(o, state.config);
    const auto queries = read_feature_file(o.query);
    const auto pool_data = read_feature_file(o.pool);
    if (queries.empty() || pool_data.empty()) throw ValueError("rerank: query and pool files must be non-empty");

    std::vector<std::uint64_t> ids;
    for (const auto& r : pool_data.records) ids.push_back(r.pair_id);
    const CandidatePool pool(embed_images(state.model, pool_data.records), ids, o.pool);
    const auto query_z = embed_language(state.model, queries.records);
    const std::size_t d = query_z.dim(1);

    std::vector<RerankResult> results;
    for (std::size_t q = 0; q < queries.size(); ++q) {
        const Tensor row({d}, std::vector<float>(query_z.data().begin() + q * d, query_z.data().begin() + (q + 1) * d));
        results.push_back({queries.records[q].pair_id, rerank(row, pool, config.topk)});
    }
    const auto text = rerank_report_text(results);
    if (o.out.empty()) {
        out << text;
    } else {
        write_text_file(o.out, text);
        out << "queries=" << results.size() << "\n";
    }
    return exit_ok;
}

int cmd_selfcheck(std::ostream& out) {
    bool ok = true;
    for (const auto& r : run_selfcheck()) {
        out << (r.passed ? "PASS " : "FAIL ") << r.name << ": " << r.detail << "\n";
        ok = ok && r.passed;
    }
    return ok ? exit_ok : exit_selfcheck;
}

void add_config_flags(CLI::App* cmd, Options& o) {
    cmd->add_option("--config", o.config_path, "key=value config file");
    cmd->add_option("--set", o.sets, "KEY=VALUE override (repeatable)")->take_all();
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Dual-tower audio/language/image embedding toolkit", "xmodal"};
    app.require_subcommand(1, 1);
    Options o;

    auto* gen = app.add_subcommand("gen-data", "Write a synthetic paired FEAT file");
    gen->add_option("--out", o.out, "output FEAT path")->required();
    gen->add_option("--seed", o.spec.seed, "generator seed");
    gen->add_option("--n-classes", o.spec.n_classes);
    gen->add_option("--n-pairs", o.spec.n_pairs);
    gen->add_option("--sigma", o.spec.noise_sigma, "noise standard deviation");
    gen->add_option("--height", o.spec.height);
    gen->add_option("--width", o.spec.width);
    gen->add_option("--channels", o.spec.channels);
    gen->add_option("--seq-len", o.spec.seq_len);
    gen->add_option("--feature-dim", o.spec.feature_dim);
    gen->add_option("--n-units", o.spec.n_units);
    gen->add_option("--latent-dim", o.spec.latent_dim);
    gen->add_option("--shared-noise", o.spec.shared_noise);
    gen->add_option("--prototype-scale", o.spec.prototype_scale);
    gen->add_option("--text-fraction", o.spec.text_fraction);

    auto* train = app.add_subcommand("train", "Train both towers; write a UBVL checkpoint and loss history");
    add_config_flags(train, o);
    train->add_option("--data", o.data, "training FEAT file");
    train->add_option("--out", o.out, "checkpoint path");
    train->add_option("--seed", o.seed, "root seed");
    train->add_option("--epochs", o.epochs, "epoch count (same as --set epochs=N)");
    train->add_option("--stop-after", o.stop_after, "stop once this many epochs are complete");
    train->add_option("--resume", o.resume, "continue from this checkpoint");
    train->add_option("--history", o.history, "loss history path (default: <out>.history)");

    std::vector<CLI::App*> evals;
    for (const auto& [name, help] : std::vector<std::pair<std::string, std::string>>{
             {"probe", "Linear probe on frozen language embeddings"},
             {"zero-shot", "Zero-shot image classification against class descriptions"},
             {"retrieve", "Cross-modal retrieval MRR on the held-out split"}}) {
        auto* cmd = app.add_subcommand(name, help);
        add_config_flags(cmd, o);
        cmd->add_option("--checkpoint", o.checkpoint, "UBVL checkpoint");
        cmd->add_option("--data", o.data, "FEAT file");
        cmd->add_option("--out", o.out, "METR report path");
        evals.push_back(cmd);
    }
    auto* rr = app.add_subcommand("rerank", "Rank pool images for each query's language side");
    add_config_flags(rr, o);
    rr->add_option("--checkpoint", o.checkpoint, "UBVL checkpoint");
    rr->add_option("--query", o.query, "query FEAT file");
    rr->add_option("--pool", o.pool, "candidate FEAT file");
    rr->add_option("--out", o.out, "rerank report path (default: stdout)");
    auto* self = app.add_subcommand("selfcheck", "Gradient, loss, queue and metric-oracle suites");

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return exit_ok;
    } catch (const CLI::ParseError& e) {
        err << "usage error: " << e.what() << "\n" << app.help();
        return exit_usage;
    }

    try {
        if (gen->parsed()) return cmd_gen_data(o, out);
        if (train->parsed()) return cmd_train(o, out);
        if (evals[0]->parsed()) return cmd_probe(o, out);
        if (evals[1]->parsed()) return cmd_zero_shot(o, out);
        if (evals[2]->parsed()) return cmd_retrieve(o, out);
        if (rr->parsed()) return cmd_rerank(o, out);
        if (self->parsed()) return cmd_selfcheck(out);
    } catch (const FormatError& e) {
        err << "error: " << e.what() << "\n";
        return exit_io;
    } catch (const NumericError& e) {
        err << "numeric failure: " << e.what() << "\n";
        return exit_numeric;
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return exit_usage;
    }
    return exit_usage;
}

}  // namespace xmodal
