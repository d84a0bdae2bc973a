#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "image.hpp"
#include "model.hpp"

namespace dmrf::training {

using model::Grads;
using model::ModelParams;
using numerics::Activation;
using numerics::RngStream;

enum class Task { Texture, Sr };

struct TrainConfig {
    int patch_size = 25;
    int batch_size = 8;
    int epochs = 10;
    int steps_per_epoch = 100;
    float learning_rate = 1e-3f;
    float rms_decay = 0.95f;   // rho
    float momentum = 0.95f;    // mu_m
    float epsilon = 1e-4f;
    std::uint64_t seed = 0;
    int n_cycles = 1;
    int K = 20;
    int d = 32;
    Activation kind = Activation::Sigmoid;
    Task task = Task::Texture;
    float grad_clip = 0.0f;  // global-norm clip; <= 0 disables (default off)
    int threads = 0;         // 0 = available parallelism
    int checkpoint_every = 0;  // epochs between periodic writes; 0 = final only
    std::string checkpoint_path;
    std::string loss_csv_path;

    void validate() const;
    static TrainConfig defaults_for(Task task);
};

// rmsprop-with-momentum accumulators, one buffer set per parameter matrix.
struct OptimizerState {
    Grads<float> sq;     // running mean square n
    Grads<float> mean;   // running mean g-bar
    Grads<float> delta;  // momentum buffer

    explicit OptimizerState(const ModelParams<float>& m) : sq(m), mean(m), delta(m) {}
};

struct Checkpoint {
    static constexpr std::uint32_t kVersion = 1;

    ModelParams<float> params;
    OptimizerState opt;
    Task task = Task::Texture;
    int sr_factor = 0;  // 0 unless task == Sr
    int n_cycles = 1;
    std::int64_t epoch = 0;
    std::int64_t step = 0;
    std::uint64_t rng_key = 0;
    std::uint64_t rng_counter = 0;

    explicit Checkpoint(ModelParams<float> p) : params(std::move(p)), opt(params) {}
};

struct Patch {
    std::vector<float> pixels;  // s*s*p
    std::vector<float> cond;    // s*s*d_c, empty when unconditioned
};

struct PatchBatch {
    int patch_size = 0;
    int p = 0;
    int d_c = 0;
    std::vector<Patch> patches;
};

// Training corpus: target images, plus per-site conditioning images aligned
// index-for-index when the model is conditioned.
struct Corpus {
    std::vector<tasks::ImageBuffer> targets;
    std::vector<tasks::ImageBuffer> cond;

    bool conditioned() const { return !cond.empty(); }
};

struct LossRecord {
    std::int64_t epoch = 0;
    std::int64_t step = 0;
    float loss = 0.0f;
};

// Uniformly random top-left corners; deterministic given the stream state.
PatchBatch sample_patches(const Corpus& corpus, int patch_size, int n, RngStream& rng);

// n <- rho n + (1-rho) g^2; gbar <- rho gbar + (1-rho) g;
// delta <- mu delta - lr g / sqrt(n - gbar^2 + eps); theta <- theta + delta.
void rmsprop_step(ModelParams<float>& params, const Grads<float>& grads, OptimizerState& opt,
                  const TrainConfig& cfg);

Checkpoint init_checkpoint(const TrainConfig& cfg, int p, int d_c, int sr_factor = 0);

// Runs epochs of sampled mini-batches from ckpt.epoch up to cfg.epochs.
// Each step: cap_infer -> nll_loss -> backward -> rmsprop_step.
std::vector<LossRecord> train(const Corpus& corpus, const TrainConfig& cfg, Checkpoint& ckpt);

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

void write_loss_csv(const std::vector<LossRecord>& records, const std::string& path);

} // namespace dmrf::training
