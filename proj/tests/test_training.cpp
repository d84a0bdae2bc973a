#include "doctest.h"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "tasks.hpp"
#include "threading.hpp"
#include "training.hpp"

using namespace dmrf;
using tasks::ImageBuffer;
using training::Checkpoint;
using training::Corpus;
using training::TrainConfig;

namespace {

std::string temp_path(const std::string& name) {
    return (std::filesystem::temp_directory_path() / name).string();
}

ImageBuffer constant_image(int h, int w, float value) {
    ImageBuffer img(h, w, 1);
    for (auto& v : img.samples) v = value;
    return img;
}

std::vector<char> slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    return std::vector<char>((std::istreambuf_iterator<char>(in)),
                             std::istreambuf_iterator<char>());
}

TrainConfig tiny_config() {
    TrainConfig cfg;
    cfg.patch_size = 6;
    cfg.batch_size = 2;
    cfg.epochs = 2;
    cfg.steps_per_epoch = 3;
    cfg.d = 3;
    cfg.K = 2;
    cfg.seed = 7;
    cfg.threads = 1;
    return cfg;
}

} // namespace

TEST_CASE("config validation") {
    TrainConfig cfg = tiny_config();
    cfg.patch_size = 4;
    CHECK_THROWS_AS(cfg.validate(), Error);
    cfg = tiny_config();
    cfg.patch_size = 65;
    CHECK_THROWS_AS(cfg.validate(), Error);
    cfg = tiny_config();
    cfg.rms_decay = 1.0f;
    CHECK_THROWS_AS(cfg.validate(), Error);
    cfg = tiny_config();
    cfg.momentum = 1.0f;
    CHECK_THROWS_AS(cfg.validate(), Error);
    cfg = tiny_config();
    cfg.learning_rate = -1e-3f;
    CHECK_THROWS_AS(cfg.validate(), Error);
}

TEST_CASE("sample_patches basics") {
    Corpus corpus;
    corpus.targets.push_back(constant_image(8, 8, 0.25f));
    numerics::RngStream rng(3);

    const auto empty = training::sample_patches(corpus, 6, 0, rng);
    CHECK(empty.patches.empty());

    // A corpus whose one image equals the patch size yields the unique patch.
    Corpus exact;
    ImageBuffer img(6, 6, 1);
    for (std::size_t i = 0; i < img.sample_count(); ++i)
        img.samples[i] = static_cast<float>(i) / 36.0f;
    exact.targets.push_back(img);
    for (int trial = 0; trial < 5; ++trial) {
        const auto batch = training::sample_patches(exact, 6, 1, rng);
        CHECK(batch.patches[0].pixels == img.samples);
    }

    // Same seed, same corners.
    numerics::RngStream r1(11), r2(11);
    const auto b1 = training::sample_patches(corpus, 6, 4, r1);
    const auto b2 = training::sample_patches(corpus, 6, 4, r2);
    for (int i = 0; i < 4; ++i) CHECK(b1.patches[i].pixels == b2.patches[i].pixels);

    // Undersized image rejected with its index in the message.
    Corpus bad;
    bad.targets.push_back(constant_image(8, 8, 0.0f));
    bad.targets.push_back(constant_image(4, 4, 0.0f));
    try {
        training::sample_patches(bad, 6, 1, rng);
        FAIL("expected rejection");
    } catch (const Error& e) {
        CHECK(std::string(e.what()).find("image 1") != std::string::npos);
    }
}

TEST_CASE("rmsprop hand-computed step") {
    // theta=0, g=1, fresh state, rho=0.95, mu=0, lr=0.1, eps=1e-8:
    // n=0.05, gbar=0.05, delta = -0.1/sqrt(0.0475 + 1e-8) = -0.45883...
    TrainConfig cfg = tiny_config();
    cfg.rms_decay = 0.95f;
    cfg.momentum = 0.0f;
    cfg.learning_rate = 0.1f;
    cfg.epsilon = 1e-8f;

    numerics::RngStream rng(0);
    auto params = model::init_params<float>(1, 1, 1, 0, numerics::Activation::Sigmoid, rng);
    params.W(0, 0) = 0.0f;
    training::OptimizerState opt(params);
    model::Grads<float> g(params);
    g.W(0, 0) = 1.0f;
    g.R.fill(0.0f);
    g.Q.fill(0.0f);
    training::rmsprop_step(params, g, opt, cfg);
    CHECK(opt.sq.W(0, 0) == doctest::Approx(0.05f));
    CHECK(opt.mean.W(0, 0) == doctest::Approx(0.05f));
    CHECK(params.W(0, 0) == doctest::Approx(-0.458831445f).epsilon(1e-5));
}

TEST_CASE("rmsprop zero gradient and momentum decay") {
    TrainConfig cfg = tiny_config();
    cfg.momentum = 0.95f;
    cfg.learning_rate = 0.1f;
    numerics::RngStream rng(4);
    auto params = model::init_params<float>(2, 1, 1, 0, numerics::Activation::Sigmoid, rng);
    const auto before = params.W.data;
    training::OptimizerState opt(params);
    model::Grads<float> zero(params);

    // Zero gradient from a fresh state leaves parameters untouched.
    training::rmsprop_step(params, zero, opt, cfg);
    CHECK(params.W.data == before);

    // After one real step, zero-gradient steps decay delta geometrically.
    model::Grads<float> g(params);
    g.W(0, 0) = 0.5f;
    training::rmsprop_step(params, g, opt, cfg);
    const float d1 = opt.delta.W(0, 0);
    training::rmsprop_step(params, zero, opt, cfg);
    CHECK(opt.delta.W(0, 0) == doctest::Approx(0.95f * d1));
    training::rmsprop_step(params, zero, opt, cfg);
    CHECK(opt.delta.W(0, 0) == doctest::Approx(0.95f * 0.95f * d1));
}

TEST_CASE("rmsprop rejects non-finite gradients") {
    TrainConfig cfg = tiny_config();
    numerics::RngStream rng(4);
    auto params = model::init_params<float>(2, 1, 1, 0, numerics::Activation::Sigmoid, rng);
    training::OptimizerState opt(params);
    model::Grads<float> g(params);
    g.W(0, 0) = std::numeric_limits<float>::quiet_NaN();
    CHECK_THROWS_AS(training::rmsprop_step(params, g, opt, cfg), Error);
}

TEST_CASE("training on a constant corpus converges toward the constant") {
    const float c = 0.7f;
    Corpus corpus;
    corpus.targets.push_back(constant_image(12, 12, c));

    TrainConfig cfg;
    cfg.patch_size = 6;
    cfg.batch_size = 4;
    cfg.epochs = 10;
    cfg.steps_per_epoch = 20;
    cfg.d = 4;
    cfg.K = 2;
    cfg.learning_rate = 5e-3f;
    cfg.seed = 13;
    cfg.threads = 1;

    Checkpoint ckpt = training::init_checkpoint(cfg, 1, 0);
    const auto records = training::train(corpus, cfg, ckpt);
    REQUIRE(records.size() == 200);
    for (const auto& r : records) CHECK(std::isfinite(r.loss));

    // 5-epoch moving average decreases between the start and the end.
    auto epoch_mean = [&](int e0, int e1) {
        double acc = 0.0;
        int n = 0;
        for (const auto& r : records)
            if (r.epoch >= e0 && r.epoch < e1) {
                acc += r.loss;
                ++n;
            }
        return acc / n;
    };
    CHECK(epoch_mean(5, 10) < epoch_mean(0, 5));

    // Emission means drift toward the constant: evaluate on one patch.
    const lattice::GridSpec grid(6, 6);
    const auto decomp = lattice::decompose(grid, lattice::build_zigzag_order(grid));
    std::vector<float> x(36, c);
    const auto tape = model::cap_infer<float>(std::span<const float>(x), {}, decomp, ckpt.params, 1);
    const auto& fin = tape.passes.back();
    double err = 0.0;
    for (lattice::NodeId u = 0; u < 36; ++u) {
        std::vector<float> nsum(ckpt.params.d, 0.0f);
        for (auto v : lattice::neighbors4(grid, u))
            for (int k = 0; k < ckpt.params.d; ++k) nsum[k] += fin.state(v, ckpt.params.d)[k];
        const auto e = model::emission_project(fin.state(u, ckpt.params.d), ckpt.params);
        const auto mu = model::shifted_means(e, std::span<const float>(nsum), ckpt.params.R);
        double mean = 0.0;
        for (int comp = 0; comp < e.K; ++comp) mean += e.weights[comp] * mu[comp];
        err += std::abs(mean - c);
    }
    CHECK(err / 36.0 < 0.1);
}

TEST_CASE("zero learning rate leaves parameters bit-identical") {
    Corpus corpus;
    corpus.targets.push_back(constant_image(10, 10, 0.4f));
    TrainConfig cfg = tiny_config();
    cfg.learning_rate = 0.0f;
    Checkpoint ckpt = training::init_checkpoint(cfg, 1, 0);
    const auto w0 = ckpt.params.W.data;
    const auto q0 = ckpt.params.Q.data;
    training::train(corpus, cfg, ckpt);
    CHECK(ckpt.params.W.data == w0);
    CHECK(ckpt.params.Q.data == q0);
}

TEST_CASE("checkpoint save/load/save is byte-identical") {
    TrainConfig cfg = tiny_config();
    Checkpoint ckpt = training::init_checkpoint(cfg, 1, 0);
    ckpt.epoch = 3;
    ckpt.step = 42;
    const std::string p1 = temp_path("dmrf_ckpt_a.dmrf");
    const std::string p2 = temp_path("dmrf_ckpt_b.dmrf");
    training::save_checkpoint(ckpt, p1);
    const Checkpoint loaded = training::load_checkpoint(p1);
    CHECK(loaded.epoch == 3);
    CHECK(loaded.step == 42);
    CHECK(loaded.params.W.data == ckpt.params.W.data);
    CHECK(loaded.params.kind == ckpt.params.kind);
    training::save_checkpoint(loaded, p2);
    CHECK(slurp(p1) == slurp(p2));
    std::filesystem::remove(p1);
    std::filesystem::remove(p2);
}

TEST_CASE("checkpoint version and corruption are distinct errors") {
    TrainConfig cfg = tiny_config();
    Checkpoint ckpt = training::init_checkpoint(cfg, 1, 0);
    const std::string path = temp_path("dmrf_ckpt_bad.dmrf");
    training::save_checkpoint(ckpt, path);

    auto bytes = slurp(path);
    auto write_back = [&](const std::vector<char>& b) {
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        out.write(b.data(), static_cast<std::streamsize>(b.size()));
    };

    // Bump the version field (offset 8, little-endian).
    auto versioned = bytes;
    versioned[8] = 99;
    write_back(versioned);
    try {
        training::load_checkpoint(path);
        FAIL("expected version error");
    } catch (const Error& e) {
        CHECK(e.code() == Status::Version);
    }

    // Truncation is corruption.
    auto truncated = bytes;
    truncated.resize(truncated.size() - 7);
    write_back(truncated);
    try {
        training::load_checkpoint(path);
        FAIL("expected corruption error");
    } catch (const Error& e) {
        CHECK(e.code() == Status::Corrupt);
    }

    // Bad magic is corruption too.
    auto garbled = bytes;
    garbled[0] = 'X';
    write_back(garbled);
    try {
        training::load_checkpoint(path);
        FAIL("expected corruption error");
    } catch (const Error& e) {
        CHECK(e.code() == Status::Corrupt);
    }
    std::filesystem::remove(path);
}

TEST_CASE("resume from checkpoint equals the uninterrupted run") {
    Corpus corpus;
    ImageBuffer img(12, 12, 1);
    for (std::size_t i = 0; i < img.sample_count(); ++i)
        img.samples[i] = static_cast<float>((i * 29) % 97) / 97.0f;
    corpus.targets.push_back(img);

    TrainConfig cfg = tiny_config();
    cfg.epochs = 4;

    Checkpoint full = training::init_checkpoint(cfg, 1, 0);
    const auto full_records = training::train(corpus, cfg, full);

    TrainConfig half = cfg;
    half.epochs = 2;
    Checkpoint part = training::init_checkpoint(half, 1, 0);
    const auto first_half = training::train(corpus, half, part);
    const std::string path = temp_path("dmrf_resume.dmrf");
    training::save_checkpoint(part, path);
    Checkpoint resumed = training::load_checkpoint(path);
    const auto second_half = training::train(corpus, cfg, resumed);

    REQUIRE(first_half.size() + second_half.size() == full_records.size());
    for (std::size_t i = 0; i < first_half.size(); ++i)
        CHECK(first_half[i].loss == full_records[i].loss);
    for (std::size_t i = 0; i < second_half.size(); ++i)
        CHECK(second_half[i].loss == full_records[first_half.size() + i].loss);
    CHECK(resumed.params.W.data == full.params.W.data);
    CHECK(resumed.params.Q.data == full.params.Q.data);
    CHECK(resumed.rng_counter == full.rng_counter);
    std::filesystem::remove(path);
}

TEST_CASE("step results are independent of the worker count") {
    Corpus corpus;
    ImageBuffer img(16, 16, 1);
    for (std::size_t i = 0; i < img.sample_count(); ++i)
        img.samples[i] = static_cast<float>((i * 13) % 51) / 51.0f;
    corpus.targets.push_back(img);

    TrainConfig cfg = tiny_config();
    cfg.batch_size = 4;
    cfg.epochs = 2;

    TrainConfig cfg1 = cfg, cfg4 = cfg;
    cfg1.threads = 1;
    cfg4.threads = 4;
    Checkpoint a = training::init_checkpoint(cfg1, 1, 0);
    Checkpoint b = training::init_checkpoint(cfg4, 1, 0);
    const auto ra = training::train(corpus, cfg1, a);
    const auto rb = training::train(corpus, cfg4, b);
    REQUIRE(ra.size() == rb.size());
    for (std::size_t i = 0; i < ra.size(); ++i) CHECK(ra[i].loss == rb[i].loss);
    CHECK(a.params.W.data == b.params.W.data);
    CHECK(a.params.Q.data == b.params.Q.data);
}

TEST_CASE("loss csv is written with one row per step") {
    Corpus corpus;
    corpus.targets.push_back(constant_image(8, 8, 0.5f));
    TrainConfig cfg = tiny_config();
    cfg.loss_csv_path = temp_path("dmrf_loss.csv");
    Checkpoint ckpt = training::init_checkpoint(cfg, 1, 0);
    training::train(corpus, cfg, ckpt);
    std::ifstream in(cfg.loss_csv_path);
    std::string line;
    int lines = 0;
    while (std::getline(in, line)) ++lines;
    CHECK(lines == 1 + cfg.epochs * cfg.steps_per_epoch);
    std::filesystem::remove(cfg.loss_csv_path);
}

TEST_CASE("thread resolution honors DMRF_THREADS") {
    CHECK(resolve_threads(3) == 3);
    setenv("DMRF_THREADS", "5", 1);
    CHECK(resolve_threads(0) == 5);
    setenv("DMRF_THREADS", "garbage", 1);
    CHECK(resolve_threads(0) >= 1);
    unsetenv("DMRF_THREADS");
    CHECK(resolve_threads(0) >= 1);
}

TEST_CASE("checkpoint rejects trailing bytes") {
    TrainConfig cfg = tiny_config();
    Checkpoint ckpt = training::init_checkpoint(cfg, 1, 0);
    const std::string path = temp_path("dmrf_ckpt_trailing.dmrf");
    training::save_checkpoint(ckpt, path);
    {
        std::ofstream out(path, std::ios::binary | std::ios::app);
        out.write("xx", 2);
    }
    try {
        training::load_checkpoint(path);
        FAIL("expected corruption error");
    } catch (const Error& e) {
        CHECK(e.code() == Status::Corrupt);
    }
    std::filesystem::remove(path);
}

TEST_CASE("checkpoint header layout is frozen") {
    TrainConfig cfg = tiny_config();
    cfg.kind = numerics::Activation::Relu;
    Checkpoint ckpt = training::init_checkpoint(cfg, 1, 0);
    ckpt.epoch = 1;
    const std::string path = temp_path("dmrf_ckpt_layout.dmrf");
    training::save_checkpoint(ckpt, path);
    const auto bytes = slurp(path);
    REQUIRE(bytes.size() > 64);
    // magic
    CHECK(std::string(bytes.begin(), bytes.begin() + 8) == "DMRFCKPT");
    // u32 version = 1, little-endian
    CHECK(bytes[8] == 1);
    CHECK(bytes[9] == 0);
    // i32 d, K, p, d_c
    CHECK(bytes[12] == 3);
    CHECK(bytes[16] == 2);
    CHECK(bytes[20] == 1);
    CHECK(bytes[24] == 0);
    // kind byte: relu = 1; fixed_variance byte: 0; task byte: texture = 0
    CHECK(bytes[28] == 1);
    CHECK(bytes[29] == 0);
    CHECK(bytes[30] == 0);
    // Total size: 76-byte header + 4 copies (params + 3 optimizer buffers)
    // of (W: d*d + R: d*p + Q: d*K*(1+2p)) float32 entries.
    const std::size_t entries = 3 * 3 + 3 * 1 + 3 * 2 * 3;
    CHECK(bytes.size() == 76 + 4 * entries * 4);
    std::filesystem::remove(path);
}

TEST_CASE("color corpus trains end to end") {
    tasks::ImageBuffer tex(12, 12, 3);
    for (int r = 0; r < 12; ++r)
        for (int c = 0; c < 12; ++c) {
            tex.at(r, c, 0) = (c % 2) ? 0.8f : 0.2f;
            tex.at(r, c, 1) = 0.5f;
            tex.at(r, c, 2) = (r % 2) ? 0.7f : 0.3f;
        }
    TrainConfig cfg = tiny_config();
    cfg.patch_size = 6;
    cfg.epochs = 2;
    cfg.steps_per_epoch = 10;
    Corpus corpus;
    corpus.targets.push_back(tex);
    Checkpoint ckpt = training::init_checkpoint(cfg, 3, 0);
    const auto hist = training::train(corpus, cfg, ckpt);
    for (const auto& rec : hist) CHECK(std::isfinite(rec.loss));

    numerics::RngStream rng(4);
    const auto sample = dmrf::tasks::synthesize_texture(ckpt, 8, 8, rng);
    CHECK(sample.channels == 3);
    for (float v : sample.samples) {
        CHECK(v >= 0.0f);
        CHECK(v <= 1.0f);
    }
}
