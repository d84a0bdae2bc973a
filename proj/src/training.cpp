#include "training.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "threading.hpp"

namespace dmrf::training {

void TrainConfig::validate() const {
    require(patch_size >= 5 && patch_size <= 64, Status::InvalidArg,
            "TrainConfig: patch_size must be in [5,64]");
    require(batch_size >= 1, Status::InvalidArg, "TrainConfig: batch_size must be >= 1");
    require(epochs >= 0, Status::InvalidArg, "TrainConfig: epochs must be >= 0");
    require(steps_per_epoch >= 1, Status::InvalidArg, "TrainConfig: steps_per_epoch must be >= 1");
    require(learning_rate >= 0.0f, Status::InvalidArg, "TrainConfig: learning_rate must be >= 0");
    require(rms_decay > 0.0f && rms_decay < 1.0f, Status::InvalidArg,
            "TrainConfig: rms_decay must be in (0,1)");
    require(momentum >= 0.0f && momentum < 1.0f, Status::InvalidArg,
            "TrainConfig: momentum must be in [0,1)");
    require(epsilon > 0.0f, Status::InvalidArg, "TrainConfig: epsilon must be > 0");
    require(n_cycles >= 1, Status::InvalidArg, "TrainConfig: n_cycles must be >= 1");
    require(K >= 1 && d >= 1, Status::InvalidArg, "TrainConfig: K and d must be >= 1");
}

TrainConfig TrainConfig::defaults_for(Task task) {
    TrainConfig cfg;
    cfg.task = task;
    if (task == Task::Sr) {
        cfg.patch_size = 16;  // SR protocol trains on 16x16 patches
        cfg.K = 1;
        cfg.learning_rate = 3e-4f;
    }
    return cfg;
}

PatchBatch sample_patches(const Corpus& corpus, int patch_size, int n, RngStream& rng) {
    require(!corpus.targets.empty(), Status::InvalidArg, "sample_patches: empty corpus");
    require(n >= 0, Status::InvalidArg, "sample_patches: negative count");
    const int p = corpus.targets.front().channels;
    const int d_c = corpus.conditioned() ? corpus.cond.front().channels : 0;
    if (corpus.conditioned())
        require(corpus.cond.size() == corpus.targets.size(), Status::Dimension,
                "sample_patches: conditioning images not aligned with targets");
    for (std::size_t i = 0; i < corpus.targets.size(); ++i) {
        const auto& img = corpus.targets[i];
        require(img.height >= patch_size && img.width >= patch_size, Status::InvalidArg,
                "sample_patches: image " + std::to_string(i) + " smaller than patch size");
        require(img.channels == p, Status::Dimension,
                "sample_patches: mixed channel counts in corpus");
        if (corpus.conditioned()) {
            const auto& cnd = corpus.cond[i];
            require(cnd.height == img.height && cnd.width == img.width && cnd.channels == d_c,
                    Status::Dimension,
                    "sample_patches: conditioning image " + std::to_string(i) + " misaligned");
        }
    }

    PatchBatch batch;
    batch.patch_size = patch_size;
    batch.p = p;
    batch.d_c = d_c;
    batch.patches.reserve(n);
    for (int i = 0; i < n; ++i) {
        const auto idx = static_cast<std::size_t>(rng.next_below(corpus.targets.size()));
        const auto& img = corpus.targets[idx];
        const int r0 = static_cast<int>(rng.next_below(img.height - patch_size + 1));
        const int c0 = static_cast<int>(rng.next_below(img.width - patch_size + 1));
        Patch patch;
        patch.pixels.resize(static_cast<std::size_t>(patch_size) * patch_size * p);
        for (int r = 0; r < patch_size; ++r)
            for (int c = 0; c < patch_size; ++c)
                for (int ch = 0; ch < p; ++ch)
                    patch.pixels[(static_cast<std::size_t>(r) * patch_size + c) * p + ch] =
                        img.at(r0 + r, c0 + c, ch);
        if (d_c > 0) {
            const auto& cnd = corpus.cond[idx];
            patch.cond.resize(static_cast<std::size_t>(patch_size) * patch_size * d_c);
            for (int r = 0; r < patch_size; ++r)
                for (int c = 0; c < patch_size; ++c)
                    for (int ch = 0; ch < d_c; ++ch)
                        patch.cond[(static_cast<std::size_t>(r) * patch_size + c) * d_c + ch] =
                            cnd.at(r0 + r, c0 + c, ch);
        }
        batch.patches.push_back(std::move(patch));
    }
    return batch;
}

namespace {

void rmsprop_update_array(std::vector<float>& theta, const std::vector<float>& g,
                          std::vector<float>& n, std::vector<float>& gbar,
                          std::vector<float>& delta, const TrainConfig& cfg) {
    const float rho = cfg.rms_decay;
    for (std::size_t i = 0; i < theta.size(); ++i) {
        n[i] = rho * n[i] + (1.0f - rho) * g[i] * g[i];
        gbar[i] = rho * gbar[i] + (1.0f - rho) * g[i];
        delta[i] = cfg.momentum * delta[i] -
                   cfg.learning_rate * g[i] / std::sqrt(n[i] - gbar[i] * gbar[i] + cfg.epsilon);
        theta[i] += delta[i];
    }
}

bool grads_finite(const Grads<float>& g) {
    using numerics::all_finite;
    return all_finite(std::span<const float>(g.W.data)) &&
           all_finite(std::span<const float>(g.R.data)) &&
           all_finite(std::span<const float>(g.Q.data)) &&
           (g.S.empty() || all_finite(std::span<const float>(g.S.data)));
}

double grad_sq_norm(const Grads<float>& g) {
    double acc = 0.0;
    for (float x : g.W.data) acc += static_cast<double>(x) * x;
    for (float x : g.R.data) acc += static_cast<double>(x) * x;
    for (float x : g.Q.data) acc += static_cast<double>(x) * x;
    for (float x : g.S.data) acc += static_cast<double>(x) * x;
    return acc;
}

} // namespace

void rmsprop_step(ModelParams<float>& params, const Grads<float>& grads, OptimizerState& opt,
                  const TrainConfig& cfg) {
    require(grads.W.size() == params.W.size() && grads.R.size() == params.R.size() &&
                grads.Q.size() == params.Q.size() && grads.S.size() == params.S.size(),
            Status::Dimension, "rmsprop_step: gradient shape mismatch");
    require(grads_finite(grads), Status::NonFinite,
            "rmsprop_step: non-finite gradient entries, step aborted");
    rmsprop_update_array(params.W.data, grads.W.data, opt.sq.W.data, opt.mean.W.data,
                         opt.delta.W.data, cfg);
    rmsprop_update_array(params.R.data, grads.R.data, opt.sq.R.data, opt.mean.R.data,
                         opt.delta.R.data, cfg);
    rmsprop_update_array(params.Q.data, grads.Q.data, opt.sq.Q.data, opt.mean.Q.data,
                         opt.delta.Q.data, cfg);
    if (!params.S.empty())
        rmsprop_update_array(params.S.data, grads.S.data, opt.sq.S.data, opt.mean.S.data,
                             opt.delta.S.data, cfg);
}

Checkpoint init_checkpoint(const TrainConfig& cfg, int p, int d_c, int sr_factor) {
    cfg.validate();
    RngStream seed_stream(cfg.seed);
    RngStream init_rng = seed_stream.split(1);
    ModelParams<float> params = model::init_params<float>(cfg.d, cfg.K, p, d_c, cfg.kind, init_rng);
    if (cfg.task == Task::Sr) {
        params.fixed_variance = true;
        params.variance_value = 0.01f;  // fixed SR variance on the [0,1] scale
    }
    Checkpoint ckpt(std::move(params));
    ckpt.task = cfg.task;
    ckpt.sr_factor = sr_factor;
    ckpt.n_cycles = cfg.n_cycles;
    const RngStream patch_rng = seed_stream.split(2);
    ckpt.rng_key = patch_rng.key();
    ckpt.rng_counter = 0;
    return ckpt;
}

std::vector<LossRecord> train(const Corpus& corpus, const TrainConfig& cfg, Checkpoint& ckpt) {
    cfg.validate();
    require(ckpt.params.d == cfg.d && ckpt.params.K == cfg.K, Status::Dimension,
            "train: checkpoint dimensions disagree with config");
    const int p = ckpt.params.p;
    const int d_c = ckpt.params.d_c;
    require(corpus.conditioned() == (d_c > 0), Status::InvalidArg,
            "train: conditioning presence must match the model");
    if (!corpus.targets.empty())
        require(corpus.targets.front().channels == p, Status::Dimension,
                "train: corpus channels disagree with the model");

    const int threads = resolve_threads(cfg.threads);
    const lattice::GridSpec grid(cfg.patch_size, cfg.patch_size);
    const lattice::ZigzagDecomposition decomp =
        lattice::decompose(grid, lattice::build_zigzag_order(grid));

    RngStream rng(ckpt.rng_key, ckpt.rng_counter);
    std::vector<LossRecord> records;

    const bool periodic = cfg.checkpoint_every > 0 && !cfg.checkpoint_path.empty();
    for (std::int64_t epoch = ckpt.epoch; epoch < cfg.epochs; ++epoch) {
        for (int s = 0; s < cfg.steps_per_epoch; ++s) {
            const PatchBatch batch = sample_patches(corpus, cfg.patch_size, cfg.batch_size, rng);
            const int B = static_cast<int>(batch.patches.size());
            std::vector<float> losses(B, 0.0f);
            std::vector<Grads<float>> slots(B, Grads<float>(ckpt.params));
            const float inv_b = 1.0f / static_cast<float>(B);
            parallel_for(B, threads, [&](int i) {
                const Patch& patch = batch.patches[i];
                const model::CapTape<float> tape =
                    model::cap_infer<float>(std::span<const float>(patch.pixels),
                                            std::span<const float>(patch.cond), decomp,
                                            ckpt.params, cfg.n_cycles);
                losses[i] = model::nll_loss(tape, decomp, ckpt.params);
                slots[i] = model::backward(tape, decomp, ckpt.params, inv_b);
            });
            // Fixed combine order: accumulation is independent of scheduling.
            Grads<float> total(ckpt.params);
            float loss = 0.0f;
            for (int i = 0; i < B; ++i) {
                total.add(slots[i]);
                loss += losses[i];
            }
            loss *= inv_b;
            require(std::isfinite(loss), Status::NonFinite, "train: non-finite loss, step aborted");
            if (cfg.grad_clip > 0.0f) {
                const double norm = std::sqrt(grad_sq_norm(total));
                if (norm > cfg.grad_clip) total.scale(static_cast<float>(cfg.grad_clip / norm));
            }
            rmsprop_step(ckpt.params, total, ckpt.opt, cfg);
            ckpt.step += 1;
            records.push_back({epoch, ckpt.step, loss});
        }
        ckpt.epoch = epoch + 1;
        ckpt.rng_key = rng.key();
        ckpt.rng_counter = rng.counter();
        if (periodic && (epoch + 1) % cfg.checkpoint_every == 0)
            save_checkpoint(ckpt, cfg.checkpoint_path);
    }
    ckpt.rng_key = rng.key();
    ckpt.rng_counter = rng.counter();
    if (!cfg.checkpoint_path.empty()) save_checkpoint(ckpt, cfg.checkpoint_path);
    if (!cfg.loss_csv_path.empty()) write_loss_csv(records, cfg.loss_csv_path);
    return records;
}

// --- checkpoint serialization -------------------------------------------

namespace {

constexpr char kMagic[8] = {'D', 'M', 'R', 'F', 'C', 'K', 'P', 'T'};

void put_u32(std::ostream& out, std::uint32_t v) {
    std::uint8_t b[4] = {static_cast<std::uint8_t>(v), static_cast<std::uint8_t>(v >> 8),
                         static_cast<std::uint8_t>(v >> 16), static_cast<std::uint8_t>(v >> 24)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

void put_u64(std::ostream& out, std::uint64_t v) {
    put_u32(out, static_cast<std::uint32_t>(v));
    put_u32(out, static_cast<std::uint32_t>(v >> 32));
}

void put_i32(std::ostream& out, std::int32_t v) { put_u32(out, static_cast<std::uint32_t>(v)); }
void put_i64(std::ostream& out, std::int64_t v) { put_u64(out, static_cast<std::uint64_t>(v)); }

void put_f32(std::ostream& out, float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    put_u32(out, bits);
}

void put_array(std::ostream& out, const std::vector<float>& v) {
    for (float x : v) put_f32(out, x);
}

struct Reader {
    std::ifstream in;
    std::string path;

    void read_bytes(void* dst, std::size_t n) {
        in.read(reinterpret_cast<char*>(dst), static_cast<std::streamsize>(n));
        require(static_cast<std::size_t>(in.gcount()) == n, Status::Corrupt,
                "checkpoint: truncated file " + path);
    }
    std::uint32_t get_u32() {
        std::uint8_t b[4];
        read_bytes(b, 4);
        return b[0] | (b[1] << 8) | (b[2] << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
    }
    std::uint64_t get_u64() {
        const std::uint64_t lo = get_u32();
        const std::uint64_t hi = get_u32();
        return lo | (hi << 32);
    }
    std::int32_t get_i32() { return static_cast<std::int32_t>(get_u32()); }
    std::int64_t get_i64() { return static_cast<std::int64_t>(get_u64()); }
    float get_f32() {
        const std::uint32_t bits = get_u32();
        float v;
        std::memcpy(&v, &bits, 4);
        return v;
    }
    void get_array(std::vector<float>& v) {
        for (auto& x : v) x = get_f32();
    }
};

void save_grads(std::ostream& out, const Grads<float>& g) {
    put_array(out, g.W.data);
    put_array(out, g.R.data);
    put_array(out, g.Q.data);
    if (!g.S.empty()) put_array(out, g.S.data);
}

void load_grads(Reader& r, Grads<float>& g) {
    r.get_array(g.W.data);
    r.get_array(g.R.data);
    r.get_array(g.Q.data);
    if (!g.S.empty()) r.get_array(g.S.data);
}

} // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        require(out.good(), Status::Io, "cannot open " + tmp + " for writing");
        out.write(kMagic, 8);
        put_u32(out, Checkpoint::kVersion);
        const auto& m = ckpt.params;
        put_i32(out, m.d);
        put_i32(out, m.K);
        put_i32(out, m.p);
        put_i32(out, m.d_c);
        const std::uint8_t flags[4] = {
            static_cast<std::uint8_t>(m.kind == Activation::Sigmoid ? 0 : 1),
            static_cast<std::uint8_t>(m.fixed_variance ? 1 : 0),
            static_cast<std::uint8_t>(ckpt.task == Task::Texture ? 0 : 1), 0};
        out.write(reinterpret_cast<const char*>(flags), 4);
        put_f32(out, m.variance_value);
        put_i32(out, ckpt.sr_factor);
        put_i32(out, ckpt.n_cycles);
        put_i64(out, ckpt.epoch);
        put_i64(out, ckpt.step);
        put_u64(out, ckpt.rng_key);
        put_u64(out, ckpt.rng_counter);
        put_array(out, m.W.data);
        put_array(out, m.R.data);
        put_array(out, m.Q.data);
        if (!m.S.empty()) put_array(out, m.S.data);
        save_grads(out, ckpt.opt.sq);
        save_grads(out, ckpt.opt.mean);
        save_grads(out, ckpt.opt.delta);
        require(out.good(), Status::Io, "short write to " + tmp);
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    require(!ec, Status::Io, "cannot move checkpoint into place: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    Reader r;
    r.path = path;
    r.in.open(path, std::ios::binary);
    require(r.in.good(), Status::Io, "cannot open " + path);
    char magic[8];
    r.read_bytes(magic, 8);
    require(std::memcmp(magic, kMagic, 8) == 0, Status::Corrupt,
            "checkpoint: bad magic in " + path);
    const std::uint32_t version = r.get_u32();
    require(version == Checkpoint::kVersion, Status::Version,
            "checkpoint: unsupported version " + std::to_string(version) + " in " + path);

    const int d = r.get_i32();
    const int K = r.get_i32();
    const int p = r.get_i32();
    const int d_c = r.get_i32();
    require(d >= 1 && K >= 1 && (p == 1 || p == 3) && d_c >= 0, Status::Corrupt,
            "checkpoint: bad header dimensions in " + path);
    std::uint8_t flags[4];
    r.read_bytes(flags, 4);

    ModelParams<float> m;
    m.d = d;
    m.K = K;
    m.p = p;
    m.d_c = d_c;
    m.kind = flags[0] == 0 ? Activation::Sigmoid : Activation::Relu;
    m.fixed_variance = flags[1] != 0;
    m.W = numerics::Mat<float>(d, d);
    m.R = numerics::Mat<float>(d, p);
    m.Q = numerics::Mat<float>(d, model::emission_cols(K, p));
    if (d_c > 0) m.S = numerics::Mat<float>(d, d_c);
    m.variance_value = r.get_f32();

    Checkpoint ckpt(std::move(m));
    ckpt.task = flags[2] == 0 ? Task::Texture : Task::Sr;
    ckpt.sr_factor = r.get_i32();
    ckpt.n_cycles = r.get_i32();
    ckpt.epoch = r.get_i64();
    ckpt.step = r.get_i64();
    ckpt.rng_key = r.get_u64();
    ckpt.rng_counter = r.get_u64();
    r.get_array(ckpt.params.W.data);
    r.get_array(ckpt.params.R.data);
    r.get_array(ckpt.params.Q.data);
    if (!ckpt.params.S.empty()) r.get_array(ckpt.params.S.data);
    load_grads(r, ckpt.opt.sq);
    load_grads(r, ckpt.opt.mean);
    load_grads(r, ckpt.opt.delta);
    r.in.peek();
    require(r.in.eof(), Status::Corrupt, "checkpoint: trailing bytes in " + path);
    return ckpt;
}

void write_loss_csv(const std::vector<LossRecord>& records, const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    require(out.good(), Status::Io, "cannot open " + path + " for writing");
    out << "epoch,step,loss\n";
    char line[96];
    for (const auto& r : records) {
        std::snprintf(line, sizeof(line), "%lld,%lld,%.9g\n", static_cast<long long>(r.epoch),
                      static_cast<long long>(r.step), static_cast<double>(r.loss));
        out << line;
    }
    require(out.good(), Status::Io, "short write to " + path);
}

} // namespace dmrf::training
