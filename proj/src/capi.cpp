#include "dmrf.h"

#include <algorithm>
#include <cstring>
#include <memory>
#include <string>

#include "diagnostics.hpp"
#include "error.hpp"
#include "tasks.hpp"
#include "training.hpp"

using dmrf::Error;
using dmrf::Status;

struct dmrf_image {
    dmrf::tasks::ImageBuffer buf;
};

struct dmrf_model {
    dmrf::training::Checkpoint ckpt;
};

namespace {

thread_local std::string g_last_error;

dmrf_status set_error(Status code, const char* what) {
    g_last_error = what;
    return static_cast<dmrf_status>(static_cast<int>(code));
}

// Every API entry funnels through this so exceptions never cross the ABI.
template <typename Fn>
dmrf_status guarded(Fn&& fn) {
    try {
        fn();
        g_last_error.clear();
        return DMRF_OK;
    } catch (const Error& e) {
        return set_error(e.code(), e.what());
    } catch (const std::exception& e) {
        return set_error(Status::Internal, e.what());
    } catch (...) {
        return set_error(Status::Internal, "unknown error");
    }
}

void check_arg(bool cond, const char* what) {
    if (!cond) throw Error(Status::InvalidArg, what);
}

dmrf::training::Task to_task(int task) {
    check_arg(task == DMRF_TASK_TEXTURE || task == DMRF_TASK_SR, "unknown task id");
    return task == DMRF_TASK_TEXTURE ? dmrf::training::Task::Texture : dmrf::training::Task::Sr;
}

dmrf::numerics::Activation to_activation(int activation) {
    check_arg(activation == DMRF_ACT_SIGMOID || activation == DMRF_ACT_RELU,
              "unknown activation id");
    return activation == DMRF_ACT_SIGMOID ? dmrf::numerics::Activation::Sigmoid
                                          : dmrf::numerics::Activation::Relu;
}

} // namespace

extern "C" {

const char* dmrf_status_name(dmrf_status status) {
    switch (status) {
        case DMRF_OK: return "ok";
        case DMRF_ERR_INVALID_ARG: return "invalid argument";
        case DMRF_ERR_IO: return "i/o error";
        case DMRF_ERR_FORMAT: return "unsupported format";
        case DMRF_ERR_VERSION: return "version mismatch";
        case DMRF_ERR_CORRUPT: return "corrupt data";
        case DMRF_ERR_DIMENSION: return "dimension mismatch";
        case DMRF_ERR_NONFINITE: return "non-finite values";
        case DMRF_ERR_THRESHOLD: return "diagnostic threshold failure";
        case DMRF_ERR_INTERNAL: return "internal error";
    }
    return "unknown status";
}

const char* dmrf_last_error(void) { return g_last_error.c_str(); }

const char* dmrf_version(void) { return "0.1.0"; }

dmrf_status dmrf_image_create(int height, int width, int channels, const float* samples,
                              dmrf_image** out) {
    return guarded([&] {
        check_arg(out != nullptr, "null output pointer");
        auto img = std::make_unique<dmrf_image>();
        img->buf = dmrf::tasks::ImageBuffer(height, width, channels);
        if (samples)
            std::memcpy(img->buf.samples.data(), samples,
                        img->buf.sample_count() * sizeof(float));
        *out = img.release();
    });
}

dmrf_status dmrf_image_load(const char* path, dmrf_image** out) {
    return guarded([&] {
        check_arg(path != nullptr && out != nullptr, "null argument");
        auto img = std::make_unique<dmrf_image>();
        img->buf = dmrf::tasks::read_image(path);
        *out = img.release();
    });
}

dmrf_status dmrf_image_save(const dmrf_image* img, const char* path) {
    return guarded([&] {
        check_arg(img != nullptr && path != nullptr, "null argument");
        dmrf::tasks::write_image(img->buf, path);
    });
}

void dmrf_image_free(dmrf_image* img) { delete img; }

int dmrf_image_height(const dmrf_image* img) { return img ? img->buf.height : 0; }
int dmrf_image_width(const dmrf_image* img) { return img ? img->buf.width : 0; }
int dmrf_image_channels(const dmrf_image* img) { return img ? img->buf.channels : 0; }
const float* dmrf_image_data(const dmrf_image* img) {
    return img ? img->buf.samples.data() : nullptr;
}

void dmrf_model_desc_init(dmrf_model_desc* desc, int task) {
    if (!desc) return;
    desc->hidden_dim = 32;
    desc->mixture_count = task == DMRF_TASK_SR ? 1 : 20;
    desc->pixel_channels = 1;
    desc->conditioning_dim = task == DMRF_TASK_SR ? 1 : 0;
    desc->activation = DMRF_ACT_SIGMOID;
    desc->task = task;
    desc->sr_factor = task == DMRF_TASK_SR ? 2 : 0;
    desc->n_cycles = 1;
    desc->seed = 0;
}

dmrf_status dmrf_model_create(const dmrf_model_desc* desc, dmrf_model** out) {
    return guarded([&] {
        check_arg(desc != nullptr && out != nullptr, "null argument");
        dmrf::training::TrainConfig cfg =
            dmrf::training::TrainConfig::defaults_for(to_task(desc->task));
        cfg.d = desc->hidden_dim;
        cfg.K = desc->mixture_count;
        cfg.kind = to_activation(desc->activation);
        cfg.n_cycles = desc->n_cycles;
        cfg.seed = desc->seed;
        auto model = std::make_unique<dmrf_model>(dmrf_model{dmrf::training::init_checkpoint(
            cfg, desc->pixel_channels, desc->conditioning_dim, desc->sr_factor)});
        *out = model.release();
    });
}

dmrf_status dmrf_model_load(const char* path, dmrf_model** out) {
    return guarded([&] {
        check_arg(path != nullptr && out != nullptr, "null argument");
        auto model = std::make_unique<dmrf_model>(dmrf_model{dmrf::training::load_checkpoint(path)});
        *out = model.release();
    });
}

dmrf_status dmrf_model_save(const dmrf_model* model, const char* path) {
    return guarded([&] {
        check_arg(model != nullptr && path != nullptr, "null argument");
        dmrf::training::save_checkpoint(model->ckpt, path);
    });
}

void dmrf_model_free(dmrf_model* model) { delete model; }

dmrf_status dmrf_model_describe(const dmrf_model* model, dmrf_model_desc* out) {
    return guarded([&] {
        check_arg(model != nullptr && out != nullptr, "null argument");
        const auto& p = model->ckpt.params;
        out->hidden_dim = p.d;
        out->mixture_count = p.K;
        out->pixel_channels = p.p;
        out->conditioning_dim = p.d_c;
        out->activation = p.kind == dmrf::numerics::Activation::Sigmoid ? DMRF_ACT_SIGMOID
                                                                        : DMRF_ACT_RELU;
        out->task = model->ckpt.task == dmrf::training::Task::Texture ? DMRF_TASK_TEXTURE
                                                                      : DMRF_TASK_SR;
        out->sr_factor = model->ckpt.sr_factor;
        out->n_cycles = model->ckpt.n_cycles;
        out->seed = 0;
    });
}

long long dmrf_model_epoch(const dmrf_model* model) { return model ? model->ckpt.epoch : -1; }
long long dmrf_model_step(const dmrf_model* model) { return model ? model->ckpt.step : -1; }

void dmrf_train_options_init(dmrf_train_options* opt, int task) {
    if (!opt) return;
    const dmrf::training::TrainConfig cfg = dmrf::training::TrainConfig::defaults_for(
        task == DMRF_TASK_SR ? dmrf::training::Task::Sr : dmrf::training::Task::Texture);
    opt->patch_size = cfg.patch_size;
    opt->batch_size = cfg.batch_size;
    opt->epochs = cfg.epochs;
    opt->steps_per_epoch = cfg.steps_per_epoch;
    opt->learning_rate = cfg.learning_rate;
    opt->rms_decay = cfg.rms_decay;
    opt->momentum = cfg.momentum;
    opt->epsilon = cfg.epsilon;
    opt->grad_clip = cfg.grad_clip;
    opt->threads = 0;
    opt->checkpoint_every = 0;
    opt->checkpoint_path = nullptr;
    opt->loss_csv_path = nullptr;
}

dmrf_status dmrf_train(dmrf_model* model, const dmrf_image* const* targets,
                       const dmrf_image* const* conditioning, size_t n_images,
                       const dmrf_train_options* opt) {
    return guarded([&] {
        check_arg(model != nullptr && targets != nullptr && opt != nullptr, "null argument");
        check_arg(n_images > 0, "empty corpus");
        dmrf::training::Corpus corpus;
        for (size_t i = 0; i < n_images; ++i) {
            check_arg(targets[i] != nullptr, "null target image");
            corpus.targets.push_back(targets[i]->buf);
            if (conditioning) {
                check_arg(conditioning[i] != nullptr, "null conditioning image");
                corpus.cond.push_back(conditioning[i]->buf);
            }
        }
        dmrf::training::TrainConfig cfg =
            dmrf::training::TrainConfig::defaults_for(model->ckpt.task);
        cfg.patch_size = opt->patch_size;
        cfg.batch_size = opt->batch_size;
        cfg.epochs = opt->epochs;
        cfg.steps_per_epoch = opt->steps_per_epoch;
        cfg.learning_rate = opt->learning_rate;
        cfg.rms_decay = opt->rms_decay;
        cfg.momentum = opt->momentum;
        cfg.epsilon = opt->epsilon;
        cfg.grad_clip = opt->grad_clip;
        cfg.threads = opt->threads;
        cfg.checkpoint_every = opt->checkpoint_every;
        if (opt->checkpoint_path) cfg.checkpoint_path = opt->checkpoint_path;
        if (opt->loss_csv_path) cfg.loss_csv_path = opt->loss_csv_path;
        cfg.n_cycles = model->ckpt.n_cycles;
        cfg.K = model->ckpt.params.K;
        cfg.d = model->ckpt.params.d;
        cfg.kind = model->ckpt.params.kind;
        dmrf::training::train(corpus, cfg, model->ckpt);
    });
}

dmrf_status dmrf_synthesize(const dmrf_model* model, int height, int width,
                            unsigned long long seed, int refine_cycles, dmrf_image** out) {
    return guarded([&] {
        check_arg(model != nullptr && out != nullptr, "null argument");
        dmrf::numerics::RngStream rng(seed);
        auto img = std::make_unique<dmrf_image>();
        img->buf = dmrf::tasks::synthesize_texture(model->ckpt, height, width, rng, refine_cycles);
        *out = img.release();
    });
}

dmrf_status dmrf_super_resolve(const dmrf_model* model, const dmrf_image* low_res, int factor,
                               dmrf_image** out) {
    return guarded([&] {
        check_arg(model != nullptr && low_res != nullptr && out != nullptr, "null argument");
        auto img = std::make_unique<dmrf_image>();
        img->buf = dmrf::tasks::super_resolve(model->ckpt, low_res->buf, factor);
        *out = img.release();
    });
}

dmrf_status dmrf_sr_prepare(const dmrf_image* hires, int factor, dmrf_image** out_low_upsampled,
                            dmrf_image** out_target) {
    return guarded([&] {
        check_arg(hires != nullptr && out_low_upsampled != nullptr && out_target != nullptr,
                  "null argument");
        auto examples = dmrf::tasks::make_sr_dataset({hires->buf}, factor);
        auto low = std::make_unique<dmrf_image>(dmrf_image{std::move(examples[0].low_upsampled)});
        auto target = std::make_unique<dmrf_image>(dmrf_image{std::move(examples[0].target)});
        *out_low_upsampled = low.release();
        *out_target = target.release();
    });
}

dmrf_status dmrf_bicubic_resize(const dmrf_image* img, int out_height, int out_width,
                                dmrf_image** out) {
    return guarded([&] {
        check_arg(img != nullptr && out != nullptr, "null argument");
        auto result = std::make_unique<dmrf_image>(
            dmrf_image{dmrf::tasks::bicubic_resize(img->buf, out_height, out_width)});
        *out = result.release();
    });
}

dmrf_status dmrf_luminance(const dmrf_image* img, dmrf_image** out) {
    return guarded([&] {
        check_arg(img != nullptr && out != nullptr, "null argument");
        auto result =
            std::make_unique<dmrf_image>(dmrf_image{dmrf::tasks::luminance(img->buf)});
        *out = result.release();
    });
}

dmrf_status dmrf_psnr(const dmrf_image* a, const dmrf_image* b, int shave, double* out_db,
                      int* out_is_infinite) {
    return guarded([&] {
        check_arg(a != nullptr && b != nullptr && out_db != nullptr, "null argument");
        const dmrf::tasks::PsnrResult r = dmrf::tasks::psnr(a->buf, b->buf, shave);
        *out_db = r.db;
        if (out_is_infinite) *out_is_infinite = r.infinite ? 1 : 0;
    });
}

dmrf_status dmrf_diagnose(const char* name, unsigned long long seed, const char* csv_path,
                          dmrf_diag_result* out) {
    return guarded([&] {
        check_arg(name != nullptr, "null diagnostic name");
        const std::string which = name;
        dmrf::diag::DiagnosticReport rep;
        if (which == "gradcheck") {
            // Worst case over the four standard configurations.
            rep.name = "grad_check";
            rep.passed = true;
            rep.metric = 0.0;
            for (int kind = 0; kind < 2; ++kind) {
                for (int cond = 0; cond < 2; ++cond) {
                    dmrf::diag::GradCheckConfig cfg;
                    cfg.kind = kind == 0 ? dmrf::numerics::Activation::Sigmoid
                                         : dmrf::numerics::Activation::Relu;
                    cfg.d_c = cond;
                    cfg.seed = seed;
                    const auto sub = dmrf::diag::grad_check(cfg);
                    rep.threshold = sub.threshold;
                    rep.metric = std::max(rep.metric, sub.metric);
                    rep.passed = rep.passed && sub.passed;
                    rep.rows.insert(rep.rows.end(), sub.rows.begin(), sub.rows.end());
                    rep.columns = sub.columns;
                }
            }
        } else if (which == "etasigma") {
            rep.name = "eta_sigma_check";
            rep.passed = true;
            rep.metric = 0.0;
            for (int kind = 0; kind < 2; ++kind) {
                dmrf::diag::EtaSigmaConfig cfg;
                cfg.kind = kind == 0 ? dmrf::numerics::Activation::Sigmoid
                                     : dmrf::numerics::Activation::Relu;
                cfg.seed = seed;
                const auto sub = dmrf::diag::eta_sigma_check(cfg);
                rep.threshold = sub.threshold;
                rep.metric = std::max(rep.metric, sub.metric);
                rep.passed = rep.passed && sub.passed;
                rep.rows.insert(rep.rows.end(), sub.rows.begin(), sub.rows.end());
                rep.columns = sub.columns;
            }
        } else if (which == "mapopt") {
            dmrf::diag::MapOptimalityConfig cfg;
            cfg.seed = seed;
            rep = dmrf::diag::map_optimality_check(cfg);
        } else if (which == "posterior") {
            dmrf::diag::PosteriorSimConfig cfg;
            cfg.seed = seed;
            rep = dmrf::diag::posterior_approx_sim(cfg);
        } else {
            throw Error(Status::InvalidArg, "unknown diagnostic: " + which);
        }
        if (csv_path) rep.write_csv(csv_path);
        if (out) {
            out->metric = rep.metric;
            out->threshold = rep.threshold;
            out->passed = rep.passed ? 1 : 0;
        }
        if (!rep.passed) throw Error(Status::Threshold, rep.summary);
    });
}

} // extern "C"
