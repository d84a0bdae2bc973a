// Exercises the shared-library surface exactly as an external client would:
// only dmrf.h, opaque handles and status codes.

#include "doctest.h"

#include <cmath>
#include <cstring>
#include <filesystem>
#include <string>
#include <vector>

#include "dmrf.h"

namespace {

std::string temp_path(const std::string& name) {
    return (std::filesystem::temp_directory_path() / name).string();
}

struct ImageGuard {
    dmrf_image* ptr = nullptr;
    ~ImageGuard() { dmrf_image_free(ptr); }
};

struct ModelGuard {
    dmrf_model* ptr = nullptr;
    ~ModelGuard() { dmrf_model_free(ptr); }
};

} // namespace

TEST_CASE("status names and version string") {
    CHECK(std::string(dmrf_status_name(DMRF_OK)) == "ok");
    CHECK(std::string(dmrf_status_name(DMRF_ERR_VERSION)) == "version mismatch");
    CHECK(std::strlen(dmrf_version()) > 0);
}

TEST_CASE("image lifecycle and error reporting") {
    ImageGuard img;
    std::vector<float> samples(6 * 4, 0.5f);
    REQUIRE(dmrf_image_create(6, 4, 1, samples.data(), &img.ptr) == DMRF_OK);
    CHECK(dmrf_image_height(img.ptr) == 6);
    CHECK(dmrf_image_width(img.ptr) == 4);
    CHECK(dmrf_image_channels(img.ptr) == 1);
    CHECK(dmrf_image_data(img.ptr)[0] == 0.5f);

    const std::string path = temp_path("dmrf_capi_img.png");
    REQUIRE(dmrf_image_save(img.ptr, path.c_str()) == DMRF_OK);
    ImageGuard back;
    REQUIRE(dmrf_image_load(path.c_str(), &back.ptr) == DMRF_OK);
    CHECK(dmrf_image_height(back.ptr) == 6);
    std::filesystem::remove(path);

    ImageGuard missing;
    CHECK(dmrf_image_load("/nonexistent/nowhere.pgm", &missing.ptr) == DMRF_ERR_IO);
    CHECK(std::strlen(dmrf_last_error()) > 0);

    ImageGuard bad;
    CHECK(dmrf_image_create(0, 4, 1, nullptr, &bad.ptr) == DMRF_ERR_INVALID_ARG);
    CHECK(dmrf_image_create(4, 4, 2, nullptr, &bad.ptr) == DMRF_ERR_INVALID_ARG);
}

TEST_CASE("model create, describe, save, load") {
    dmrf_model_desc desc;
    dmrf_model_desc_init(&desc, DMRF_TASK_TEXTURE);
    CHECK(desc.mixture_count == 20);
    desc.hidden_dim = 5;
    desc.mixture_count = 3;
    desc.seed = 17;

    ModelGuard model;
    REQUIRE(dmrf_model_create(&desc, &model.ptr) == DMRF_OK);
    CHECK(dmrf_model_epoch(model.ptr) == 0);

    dmrf_model_desc got;
    REQUIRE(dmrf_model_describe(model.ptr, &got) == DMRF_OK);
    CHECK(got.hidden_dim == 5);
    CHECK(got.mixture_count == 3);
    CHECK(got.task == DMRF_TASK_TEXTURE);

    const std::string path = temp_path("dmrf_capi_model.dmrf");
    REQUIRE(dmrf_model_save(model.ptr, path.c_str()) == DMRF_OK);
    ModelGuard loaded;
    REQUIRE(dmrf_model_load(path.c_str(), &loaded.ptr) == DMRF_OK);
    dmrf_model_desc desc2;
    REQUIRE(dmrf_model_describe(loaded.ptr, &desc2) == DMRF_OK);
    CHECK(desc2.hidden_dim == 5);
    std::filesystem::remove(path);

    ModelGuard none;
    CHECK(dmrf_model_load("/nonexistent/model.dmrf", &none.ptr) == DMRF_ERR_IO);
}

TEST_CASE("train + synthesize through the C API") {
    // Tiny alternating texture, tiny model; determinism is the contract here.
    std::vector<float> tex(16 * 16);
    for (int r = 0; r < 16; ++r)
        for (int c = 0; c < 16; ++c) tex[r * 16 + c] = (r / 2 + c / 2) % 2 ? 0.8f : 0.2f;
    ImageGuard img;
    REQUIRE(dmrf_image_create(16, 16, 1, tex.data(), &img.ptr) == DMRF_OK);

    dmrf_model_desc desc;
    dmrf_model_desc_init(&desc, DMRF_TASK_TEXTURE);
    desc.hidden_dim = 4;
    desc.mixture_count = 2;
    desc.seed = 5;
    ModelGuard model;
    REQUIRE(dmrf_model_create(&desc, &model.ptr) == DMRF_OK);

    dmrf_train_options opt;
    dmrf_train_options_init(&opt, DMRF_TASK_TEXTURE);
    opt.patch_size = 8;
    opt.batch_size = 2;
    opt.epochs = 2;
    opt.steps_per_epoch = 10;
    opt.threads = 2;
    const dmrf_image* targets[1] = {img.ptr};
    REQUIRE(dmrf_train(model.ptr, targets, nullptr, 1, &opt) == DMRF_OK);
    CHECK(dmrf_model_epoch(model.ptr) == 2);
    CHECK(dmrf_model_step(model.ptr) == 20);

    ImageGuard s1, s2;
    REQUIRE(dmrf_synthesize(model.ptr, 12, 12, 99, 0, &s1.ptr) == DMRF_OK);
    REQUIRE(dmrf_synthesize(model.ptr, 12, 12, 99, 0, &s2.ptr) == DMRF_OK);
    CHECK(std::memcmp(dmrf_image_data(s1.ptr), dmrf_image_data(s2.ptr),
                      12 * 12 * sizeof(float)) == 0);

    // Conditioning is rejected for an unconditioned model.
    const dmrf_image* cond[1] = {img.ptr};
    CHECK(dmrf_train(model.ptr, targets, cond, 1, &opt) == DMRF_ERR_INVALID_ARG);
}

TEST_CASE("sr preparation, psnr and resize through the C API") {
    std::vector<float> smooth(24 * 24);
    for (int r = 0; r < 24; ++r)
        for (int c = 0; c < 24; ++c)
            smooth[r * 24 + c] =
                0.5f + 0.3f * std::sin(0.3f * r) * std::cos(0.21f * c);
    ImageGuard hires;
    REQUIRE(dmrf_image_create(24, 24, 1, smooth.data(), &hires.ptr) == DMRF_OK);

    ImageGuard low, target;
    REQUIRE(dmrf_sr_prepare(hires.ptr, 2, &low.ptr, &target.ptr) == DMRF_OK);
    CHECK(dmrf_image_height(low.ptr) == 24);

    double db = 0.0;
    int infinite = 0;
    REQUIRE(dmrf_psnr(low.ptr, target.ptr, 2, &db, &infinite) == DMRF_OK);
    CHECK(infinite == 0);
    CHECK(db > 25.0);

    REQUIRE(dmrf_psnr(target.ptr, target.ptr, 2, &db, &infinite) == DMRF_OK);
    CHECK(infinite == 1);

    ImageGuard small;
    REQUIRE(dmrf_bicubic_resize(hires.ptr, 12, 12, &small.ptr) == DMRF_OK);
    CHECK(dmrf_image_width(small.ptr) == 12);

    ImageGuard lum;
    CHECK(dmrf_luminance(hires.ptr, &lum.ptr) == DMRF_ERR_INVALID_ARG);  // 1-channel input
    CHECK(dmrf_sr_prepare(hires.ptr, 7, &low.ptr, &target.ptr) == DMRF_ERR_INVALID_ARG);
}

TEST_CASE("diagnose through the C API") {
    dmrf_diag_result result{};
    REQUIRE(dmrf_diagnose("etasigma", 3, nullptr, &result) == DMRF_OK);
    CHECK(result.passed == 1);
    CHECK(result.metric < result.threshold);

    const std::string csv = temp_path("dmrf_capi_diag.csv");
    REQUIRE(dmrf_diagnose("mapopt", 3, csv.c_str(), &result) == DMRF_OK);
    CHECK(std::filesystem::exists(csv));
    std::filesystem::remove(csv);

    CHECK(dmrf_diagnose("bogus", 0, nullptr, &result) == DMRF_ERR_INVALID_ARG);
}
