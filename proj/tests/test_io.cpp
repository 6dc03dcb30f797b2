#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <unistd.h>

#include "pefnn/io.hpp"
#include "test_util.hpp"

using namespace pefnn;
using namespace pefnn::test;

namespace {

struct TempDir {
    std::filesystem::path path;
    TempDir() {
        path = std::filesystem::temp_directory_path() /
               ("pefnn_test_" + std::to_string(::getpid()) + "_" +
                std::to_string(counter()++));
        std::filesystem::create_directories(path);
    }
    ~TempDir() { std::filesystem::remove_all(path); }
    std::string file(const std::string& name) const { return (path / name).string(); }
    static int& counter() {
        static int c = 0;
        return c;
    }
};

Dataset small_dataset(int n_traj, int t, int h, int w, std::uint64_t seed) {
    Dataset data;
    for (int k = 0; k < n_traj; ++k) {
        Trajectory traj(t, 1, h, w);
        traj.dt_record = 0.5;
        traj.dx = traj.dy = 0.25;
        traj.channel_names = {"depth"};
        Rng rng(Rng::derive(seed, k));
        for (auto& v : traj.data) v = rng.uniform(-1, 1);
        data.push_back(std::move(traj));
    }
    return data;
}

} // namespace

TEST_SUITE("io") {

TEST_CASE("crc32 matches known vectors") {
    // standard zlib test vector
    const char* s = "123456789";
    CHECK(crc32(s, 9) == 0xCBF43926u);
    CHECK(crc32("", 0) == 0x00000000u);
}

TEST_CASE("dataset round trip is bit-exact in both dtypes") {
    TempDir dir;
    Dataset data = small_dataset(3, 4, 6, 8, 9);

    const std::string p64 = dir.file("data64.pefn");
    write_dataset(p64, data, true);
    Dataset back = read_dataset(p64);
    REQUIRE(back.size() == data.size());
    for (std::size_t k = 0; k < data.size(); ++k) {
        CHECK(back[k].data == data[k].data); // bit-exact
        CHECK(back[k].dt_record == data[k].dt_record);
        CHECK(back[k].dx == data[k].dx);
        CHECK(back[k].channel_names == data[k].channel_names);
    }

    // f32 storage: round trip reproduces the f32 image of the data exactly
    const std::string p32 = dir.file("data32.pefn");
    write_dataset(p32, data, false);
    Dataset back32 = read_dataset(p32);
    for (std::size_t k = 0; k < data.size(); ++k)
        for (std::size_t i = 0; i < data[k].data.size(); ++i)
            CHECK(back32[k].data[i] ==
                  static_cast<double>(static_cast<float>(data[k].data[i])));

    const DatasetInfo info = peek_dataset(p32);
    CHECK(info.n_trajectories == 3);
    CHECK(info.t == 4);
    CHECK(info.channels == 1);
    CHECK(info.h == 6);
    CHECK(info.w == 8);
    CHECK_FALSE(info.f64);
}

TEST_CASE("a corrupted payload byte fails the CRC") {
    TempDir dir;
    const std::string path = dir.file("corrupt.pefn");
    write_dataset(path, small_dataset(1, 2, 4, 4, 3), true);

    std::string bytes = read_text(path);
    bytes[36 + 17] ^= 0x01; // flip one payload bit
    write_text_atomic(path, bytes);
    CHECK_THROWS_AS(read_dataset(path), DataError);
}

TEST_CASE("checkpoint round trip reproduces every parameter bit-exactly") {
    TempDir dir;
    ModelConfig cfg;
    cfg.n_layers = 2;
    cfg.d_z = 3;
    cfg.m = 2;
    cfg.kernel_mode = KernelMode::MultipleRotation;
    Model model(cfg);
    model.init_params(31);

    AdamState opt;
    opt.init(model.params().size());
    Rng rng(5);
    for (auto& v : opt.m) v = rng.uniform(-1, 1);
    for (auto& v : opt.v) v = rng.uniform(0, 1);
    opt.steps = 17;

    const std::string path = dir.file("model.ckpt");
    save_checkpoint(path, model, &opt, 42, "final=0.125");
    Checkpoint ckpt = load_checkpoint(path);
    CHECK(ckpt.values == model.params().values);
    CHECK(ckpt.config == cfg);
    CHECK(ckpt.epochs_done == 42);
    CHECK(ckpt.history_digest == "final=0.125");
    REQUIRE(ckpt.optimizer.has_value());
    CHECK(ckpt.optimizer->m == opt.m);
    CHECK(ckpt.optimizer->v == opt.v);
    CHECK(ckpt.optimizer->steps == 17);

    Model loaded = model_from_checkpoint(ckpt);
    CHECK(loaded.params().values == model.params().values);
}

TEST_CASE("config differences are reported field by field") {
    ModelConfig a, b;
    b.d_z = 7;
    b.kernel_mode = KernelMode::Dense;
    const std::string diff = diff_configs(a, b);
    CHECK(diff.find("d_z") != std::string::npos);
    CHECK(diff.find("kernel_mode") != std::string::npos);
    CHECK(diff.find("n_layers") == std::string::npos);
    CHECK(diff_configs(a, a).empty());
}

TEST_CASE("run config parses key = value with comments") {
    RunConfig rc = RunConfig::from_text(
        "# a comment\n"
        "model.layers = 3\n"
        "model.dt = 0.5   # trailing comment\n"
        "train.strategy = recurrent\n"
        "flag = true\n");
    CHECK(rc.get_int("model.layers", 0) == 3);
    CHECK(rc.get_double("model.dt", 0) == 0.5);
    CHECK(rc.get("train.strategy", "") == "recurrent");
    CHECK(rc.get_bool("flag", false));
    CHECK(rc.get_int("missing", 17) == 17);
    rc.ensure_all_consumed();
}

TEST_CASE("unknown config keys are a hard error") {
    RunConfig rc = RunConfig::from_text("model.layesr = 3\n"); // typo
    rc.get_int("model.layers", 4);
    CHECK_THROWS_AS(rc.ensure_all_consumed(), ConfigError);

    CHECK_THROWS_AS(RunConfig::from_text("novalue\n"), ConfigError);
    CHECK_THROWS_AS(RunConfig::from_text("a = 1\na = 2\n"), ConfigError);
    RunConfig bad = RunConfig::from_text("x = abc\n");
    CHECK_THROWS_AS(bad.get_int("x", 0), ConfigError);
}

TEST_CASE("model and train config blocks read from run config") {
    RunConfig rc = RunConfig::from_text(
        "model.layers = 2\n"
        "model.d_z = 5\n"
        "model.modes = 4\n"
        "model.kernel = multiple\n"
        "model.group = 4\n"
        "train.strategy = markov\n"
        "train.epochs = 7\n"
        "train.lr0 = 0.01\n");
    const ModelConfig mc = read_model_config(rc);
    CHECK(mc.n_layers == 2);
    CHECK(mc.d_z == 5);
    CHECK(mc.m == 4);
    CHECK(mc.kernel_mode == KernelMode::MultipleRotation);
    CHECK(mc.d_g == 4);
    const TrainConfig tc = read_train_config(rc);
    CHECK(tc.epochs == 7);
    CHECK(tc.lr0 == 0.01);
    rc.ensure_all_consumed();
}

} // TEST_SUITE
