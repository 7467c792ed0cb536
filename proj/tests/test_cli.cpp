#include <doctest.h>

#include <cmath>
#include <fstream>
#include <sstream>

#include "helpers.hpp"
#include "xmodal/checkpoint.hpp"
#include "xmodal/cli.hpp"
#include "xmodal/config.hpp"
#include "xmodal/error.hpp"
#include "xmodal/trainer.hpp"

using namespace xmodal;

namespace {

struct Run {
    int code;
    std::string out;
    std::string err;
};

Run cli(const std::vector<std::string>& args) {
    std::ostringstream out, err;
    const int code = run_cli(args, out, err);
    return {code, out.str(), err.str()};
}

std::string slurp(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

void spit(const std::string& path, const std::string& text) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    os << text;
}

const std::vector<std::string> small_model{
    "embed_dim=8", "model_dim=8", "grid_size=2", "sa_layers=1", "speech_layers=1", "shared_layers=1",
    "heads=2",     "batch_size=8", "mask_len=3", "holdout=0.25", "probe_epochs=5", "pools=20",
    "pool_size=5"};

std::string make_data(const test::TempDir& dir) {
    const auto path = dir.file("d.feat");
    REQUIRE(cli({"gen-data", "--out", path, "--n-pairs", "48", "--n-classes", "4", "--height", "4", "--width", "4",
                 "--channels", "3", "--seq-len", "8", "--feature-dim", "4", "--n-units", "8"})
                .code == exit_ok);
    return path;
}

std::vector<std::string> train_args(const std::string& data, const std::string& out, const std::string& mode,
                                    std::size_t epochs) {
    std::vector<std::string> args{"train", "--data", data, "--out", out, "--seed", "3", "--set"};
    args.insert(args.end(), small_model.begin(), small_model.end());
    args.push_back("mode=" + mode);
    args.push_back("queue_size=16");
    args.push_back("epochs=" + std::to_string(epochs));
    return args;
}

std::vector<double> history_losses(const std::string& path) {
    std::istringstream is(slurp(path));
    std::string line;
    std::getline(is, line);
    CHECK(line == "step\tepoch\tloss\tlr\tgrad_norm\tqueue_fill");
    std::vector<double> losses;
    while (std::getline(is, line)) {
        std::istringstream fields(line);
        double step, epoch, loss;
        fields >> step >> epoch >> loss;
        losses.push_back(loss);
    }
    return losses;
}

}  // namespace

TEST_CASE("config defaults carry the published hyperparameters") {
    const RunConfig c;
    CHECK(c.tau == 0.07);
    CHECK(c.momentum == 0.99);
    CHECK(c.queue_size == 9600);
    CHECK(c.grid_size == 4);
    CHECK(c.topk == 1);
    CHECK(c.mask_prob == 0.08);
    CHECK(c.mask_len == 10);
    CHECK(c.tau_pred == 0.1);
    CHECK(c.sa_layers == 4);
    CHECK(c.swap_prob == 0.15);
    CHECK(c.mode == LossMode::in_batch);
}

TEST_CASE("config files and overrides") {
    test::TempDir dir("config");
    spit(dir.file("empty.conf"), "");
    CHECK(parse_config(dir.file("empty.conf"), {}).to_text() == RunConfig{}.to_text());

    spit(dir.file("q.conf"), "# queue run\nmode=queue\n\nqueue_size=256\n");
    const auto c = parse_config(dir.file("q.conf"), {"embed_dim=8", "model_dim=8"});
    CHECK(c.queue_size == 256);
    const auto state = TrainState::init(c, ModelDims{8, 8, 8, 8, 32, 16});
    CHECK(state.language_queue.capacity() == 256);
    CHECK(state.image_queue.capacity() == 256);

    spit(dir.file("bad.conf"), "epochs=2\ntau=0\n");
    CHECK_THROWS_WITH_AS(parse_config(dir.file("bad.conf"), {}), doctest::Contains("bad.conf:2:"), ValueError);
    spit(dir.file("unknown.conf"), "temperature=0.1\n");
    CHECK_THROWS_WITH_AS(parse_config(dir.file("unknown.conf"), {}), doctest::Contains("temperature"), ValueError);
    CHECK_THROWS_AS(parse_config(dir.file("missing.conf"), {}), FormatError);

    RunConfig round;
    round.set("tau", "0.2");
    round.set("mode", "queue");
    RunConfig back;
    apply_config_text(back, round.to_text(), "text");
    CHECK(back.to_text() == round.to_text());
}

TEST_CASE("checkpoint save, load, save is byte-identical") {
    test::TempDir dir("ckpt");
    const auto data = make_data(dir);
    for (const std::string mode : {"in_batch", "queue"}) {
        const auto path = dir.file(mode + ".ubvl");
        REQUIRE(cli(train_args(data, path, mode, 2)).code == exit_ok);
        const auto bytes = slurp(path);
        save_checkpoint(load_checkpoint(path), dir.file("again.ubvl"));
        CHECK(slurp(dir.file("again.ubvl")) == bytes);
    }
}

TEST_CASE("split-run resume reproduces the uninterrupted loss sequence") {
    test::TempDir dir("resume");
    const auto data = make_data(dir);
    for (const std::string mode : {"in_batch", "queue"}) {
        const auto full = dir.file(mode + "_full.ubvl");
        const auto split = dir.file(mode + "_split.ubvl");
        REQUIRE(cli(train_args(data, full, mode, 4)).code == exit_ok);
        auto first = train_args(data, split, mode, 4);
        first.insert(first.begin() + 1, {"--stop-after", "2", "--history", dir.file("a.history")});
        REQUIRE(cli(first).code == exit_ok);
        REQUIRE(cli({"train", "--data", data, "--out", split, "--resume", split, "--history", dir.file("b.history")})
                    .code == exit_ok);

        const auto expected = history_losses(full + ".history");
        auto got = history_losses(dir.file("a.history"));
        const auto rest = history_losses(dir.file("b.history"));
        got.insert(got.end(), rest.begin(), rest.end());
        REQUIRE(got.size() == expected.size());
        REQUIRE(!expected.empty());
        for (std::size_t i = 0; i < got.size(); ++i) CHECK(std::abs(got[i] - expected[i]) <= 1e-6);
        CHECK(slurp(split) == slurp(full));
    }
}

TEST_CASE("repeated runs produce byte-identical artifacts") {
    test::TempDir dir("double");
    const auto data = make_data(dir);
    REQUIRE(cli(train_args(data, dir.file("a.ubvl"), "queue", 2)).code == exit_ok);
    REQUIRE(cli(train_args(data, dir.file("b.ubvl"), "queue", 2)).code == exit_ok);
    CHECK(slurp(dir.file("a.ubvl")) == slurp(dir.file("b.ubvl")));
    CHECK(slurp(dir.file("a.ubvl.history")) == slurp(dir.file("b.ubvl.history")));

    for (const std::string cmd : {"retrieve", "zero-shot", "probe"}) {
        const auto r1 = cli({cmd, "--checkpoint", dir.file("a.ubvl"), "--data", data, "--out", dir.file("1.metr")});
        const auto r2 = cli({cmd, "--checkpoint", dir.file("a.ubvl"), "--data", data, "--out", dir.file("2.metr")});
        REQUIRE(r1.code == exit_ok);
        REQUIRE(r2.code == exit_ok);
        CHECK(slurp(dir.file("1.metr")).rfind("METR", 0) == 0);
        CHECK(slurp(dir.file("1.metr")) == slurp(dir.file("2.metr")));
    }
    const auto rr1 = cli({"rerank", "--checkpoint", dir.file("a.ubvl"), "--query", data, "--pool", data});
    const auto rr2 = cli({"rerank", "--checkpoint", dir.file("a.ubvl"), "--query", data, "--pool", data});
    REQUIRE(rr1.code == exit_ok);
    CHECK(rr1.out.rfind("query\t", 0) == 0);
    CHECK(rr1.out == rr2.out);
}

TEST_CASE("zero epochs writes the initial checkpoint and an empty history") {
    test::TempDir dir("zero");
    const auto data = make_data(dir);
    const auto path = dir.file("m.ubvl");
    REQUIRE(cli(train_args(data, path, "in_batch", 0)).code == exit_ok);
    const auto state = load_checkpoint(path);
    CHECK(state.step == 0);
    CHECK(state.epoch == 0);
    CHECK(history_losses(path + ".history").empty());
}

TEST_CASE("exit codes and diagnostics") {
    test::TempDir dir("exit");
    const auto data = make_data(dir);
    CHECK(cli({"bogus"}).code == exit_usage);
    CHECK(cli({"train", "--data", data, "--out", dir.file("m.ubvl"), "--set", "tau=0"}).code == exit_usage);
    CHECK(cli({"train", "--data", dir.file("missing.feat"), "--out", dir.file("m.ubvl")}).code == exit_io);
    CHECK(cli({"retrieve", "--checkpoint", dir.file("missing.ubvl"), "--data", data}).code == exit_io);

    const auto path = dir.file("m.ubvl");
    REQUIRE(cli(train_args(data, path, "in_batch", 1)).code == exit_ok);
    CHECK(cli({"retrieve", "--checkpoint", path, "--data", data, "--config", dir.file("x.conf")}).code == exit_usage);
    CHECK(cli({"train", "--data", data, "--out", path, "--resume", path, "--seed", "4"}).code == exit_usage);

    auto bytes = slurp(path);
    bytes[bytes.size() / 2] = static_cast<char>(bytes[bytes.size() / 2] ^ 0x5a);
    spit(dir.file("bad.ubvl"), bytes);
    const auto r = cli({"retrieve", "--checkpoint", dir.file("bad.ubvl"), "--data", data});
    CHECK(r.code == exit_io);
    CHECK(r.err.find("offset") != std::string::npos);
}
