#include "tasks.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace dmrf::tasks {

using lattice::GridSpec;
using lattice::NodeId;
using lattice::ZigzagDecomposition;
using model::EmissionParams;
using model::ModelParams;

training::Checkpoint train_texture(const ImageBuffer& texture, training::TrainConfig cfg,
                                   std::vector<training::LossRecord>* history) {
    cfg.task = training::Task::Texture;
    require(texture.height >= cfg.patch_size && texture.width >= cfg.patch_size,
            Status::InvalidArg, "train_texture: texture smaller than patch size");
    training::Corpus corpus;
    corpus.targets.push_back(texture);
    training::Checkpoint ckpt = training::init_checkpoint(cfg, texture.channels, 0);
    auto records = training::train(corpus, cfg, ckpt);
    if (history) *history = std::move(records);
    return ckpt;
}

namespace {

// Sum of live neighbor states into `out`.
void neighbor_state_sum(const ZigzagDecomposition& decomp, NodeId u, const std::vector<float>& h,
                        int d, std::vector<float>& out) {
    std::fill(out.begin(), out.end(), 0.0f);
    for (NodeId v : decomp.forward_parents[u])
        numerics::axpy(1.0f, std::span<const float>(h.data() + static_cast<std::size_t>(v) * d,
                                                    static_cast<std::size_t>(d)),
                       std::span<float>(out));
    for (NodeId v : decomp.backward_parents[u])
        numerics::axpy(1.0f, std::span<const float>(h.data() + static_cast<std::size_t>(v) * d,
                                                    static_cast<std::size_t>(d)),
                       std::span<float>(out));
}

} // namespace

ImageBuffer synthesize_texture(const training::Checkpoint& ckpt, int out_height, int out_width,
                               RngStream& rng, int refine_cycles) {
    const ModelParams<float>& m = ckpt.params;
    require(m.d_c == 0, Status::InvalidArg, "synthesize_texture: model must be unconditioned");
    require(out_height >= 1 && out_width >= 1, Status::InvalidArg,
            "synthesize_texture: bad output size");

    const GridSpec grid(out_height, out_width);
    const ZigzagDecomposition decomp = lattice::decompose(grid, lattice::build_zigzag_order(grid));
    const int n = grid.node_count();

    // x and h start at zero; unvisited neighbors contribute those zeros.
    std::vector<float> x(static_cast<std::size_t>(n) * m.p, 0.0f);
    std::vector<float> h(static_cast<std::size_t>(n) * m.d, 0.0f);
    std::vector<float> a(m.d), visited_sum(m.d);

    for (NodeId u : decomp.order) {
        std::fill(a.begin(), a.end(), 0.0f);
        auto accumulate = [&](NodeId v) {
            numerics::matvec_acc(m.W,
                                 std::span<const float>(h.data() + static_cast<std::size_t>(v) * m.d,
                                                        static_cast<std::size_t>(m.d)),
                                 std::span<float>(a));
            numerics::matvec_acc(m.R,
                                 std::span<const float>(x.data() + static_cast<std::size_t>(v) * m.p,
                                                        static_cast<std::size_t>(m.p)),
                                 std::span<float>(a));
        };
        for (NodeId v : decomp.forward_parents[u]) accumulate(v);
        for (NodeId v : decomp.backward_parents[u]) accumulate(v);
        float* hu = h.data() + static_cast<std::size_t>(u) * m.d;
        for (int k = 0; k < m.d; ++k) hu[k] = numerics::sigma_scalar(a[k], m.kind);

        const EmissionParams<float> e = model::emission_project(
            std::span<const float>(hu, static_cast<std::size_t>(m.d)), m);
        // Visited neighbors only; the rest still hold the zero init.
        std::fill(visited_sum.begin(), visited_sum.end(), 0.0f);
        for (NodeId v : decomp.forward_parents[u])
            numerics::axpy(1.0f,
                           std::span<const float>(h.data() + static_cast<std::size_t>(v) * m.d,
                                                  static_cast<std::size_t>(m.d)),
                           std::span<float>(visited_sum));
        const std::vector<float> means =
            model::shifted_means(e, std::span<const float>(visited_sum), m.R);
        const std::vector<float> sample = model::gmm_sample(e, std::span<const float>(means), rng);
        std::copy(sample.begin(), sample.end(), x.begin() + static_cast<std::size_t>(u) * m.p);
    }

    std::vector<float> nsum(m.d);
    for (int cycle = 0; cycle < refine_cycles; ++cycle) {
        const model::CapTape<float> tape =
            model::cap_infer<float>(std::span<const float>(x), {}, decomp, m, ckpt.n_cycles);
        const auto& fin = tape.passes.back();
        for (NodeId u = 0; u < n; ++u) {
            neighbor_state_sum(decomp, u, fin.states, m.d, nsum);
            const EmissionParams<float> e = model::emission_project(fin.state(u, m.d), m);
            const std::vector<float> means =
                model::shifted_means(e, std::span<const float>(nsum), m.R);
            const std::vector<float> sample =
                model::gmm_sample(e, std::span<const float>(means), rng);
            std::copy(sample.begin(), sample.end(), x.begin() + static_cast<std::size_t>(u) * m.p);
        }
    }

    ImageBuffer out(out_height, out_width, m.p);
    out.samples.assign(x.begin(), x.end());
    return out;
}

std::vector<SrExample> make_sr_dataset(const std::vector<ImageBuffer>& hires, int factor) {
    require(factor == 2 || factor == 3 || factor == 4, Status::InvalidArg,
            "make_sr_dataset: factor must be 2, 3 or 4");
    std::vector<SrExample> out;
    out.reserve(hires.size());
    for (std::size_t i = 0; i < hires.size(); ++i) {
        const ImageBuffer& img = hires[i];
        require(img.height >= 2 * factor && img.width >= 2 * factor, Status::InvalidArg,
                "make_sr_dataset: image " + std::to_string(i) + " smaller than 2x factor");
        ImageBuffer lum = img.channels == 3 ? luminance(img) : img;
        const int h = (lum.height / factor) * factor;
        const int w = (lum.width / factor) * factor;
        ImageBuffer target(h, w, 1);
        for (int r = 0; r < h; ++r)
            for (int c = 0; c < w; ++c) target.at(r, c) = lum.at(r, c);
        const ImageBuffer low = bicubic_resize(target, h / factor, w / factor);
        SrExample ex;
        ex.low_upsampled = bicubic_resize(low, h, w);
        ex.target = std::move(target);
        ex.factor = factor;
        out.push_back(std::move(ex));
    }
    return out;
}

training::Checkpoint train_sr(const std::vector<SrExample>& dataset, training::TrainConfig cfg,
                              std::vector<training::LossRecord>* history) {
    require(!dataset.empty(), Status::InvalidArg, "train_sr: empty dataset");
    cfg.task = training::Task::Sr;
    cfg.K = 1;  // deterministic task: single component, fixed variance
    const int factor = dataset.front().factor;
    training::Corpus corpus;
    for (const auto& ex : dataset) {
        require(ex.factor == factor, Status::InvalidArg, "train_sr: mixed factors in dataset");
        require(ex.target.channels == 1 && ex.low_upsampled.channels == 1, Status::Dimension,
                "train_sr: dataset must be luminance-only");
        corpus.targets.push_back(ex.target);
        corpus.cond.push_back(ex.low_upsampled);
    }
    training::Checkpoint ckpt = training::init_checkpoint(cfg, 1, 1, factor);
    auto records = training::train(corpus, cfg, ckpt);
    if (history) *history = std::move(records);
    return ckpt;
}

ImageBuffer super_resolve(const training::Checkpoint& ckpt, const ImageBuffer& low_res,
                          int factor) {
    const ModelParams<float>& m = ckpt.params;
    require(ckpt.task == training::Task::Sr, Status::InvalidArg,
            "super_resolve: checkpoint was not trained for SR");
    require(factor == ckpt.sr_factor, Status::InvalidArg,
            "super_resolve: factor does not match the checkpoint");
    require(m.K == 1 && m.d_c == 1 && m.p == 1, Status::Dimension,
            "super_resolve: expected a K=1, d_c=1 luminance model");

    const bool color = low_res.channels == 3;
    const ImageBuffer ycc = color ? rgb_to_ycbcr(low_res) : ImageBuffer();
    ImageBuffer lum(low_res.height, low_res.width, 1);
    if (color) {
        for (int r = 0; r < low_res.height; ++r)
            for (int c = 0; c < low_res.width; ++c) lum.at(r, c) = ycc.at(r, c, 0);
    } else {
        lum = low_res;
    }

    const int out_h = low_res.height * factor;
    const int out_w = low_res.width * factor;
    const ImageBuffer cond = bicubic_resize(lum, out_h, out_w);

    const GridSpec grid(out_h, out_w);
    const ZigzagDecomposition decomp = lattice::decompose(grid, lattice::build_zigzag_order(grid));
    // The unknown high-res field is seeded with its bicubic estimate; the
    // conditioning input is the same per-site low-res pixel.
    const model::CapTape<float> tape = model::cap_infer<float>(
        std::span<const float>(cond.samples), std::span<const float>(cond.samples), decomp, m,
        ckpt.n_cycles);
    const auto& fin = tape.passes.back();

    ImageBuffer out_y(out_h, out_w, 1);
    std::vector<float> nsum(m.d);
    for (NodeId u = 0; u < grid.node_count(); ++u) {
        neighbor_state_sum(decomp, u, fin.states, m.d, nsum);
        const EmissionParams<float> e = model::emission_project(fin.state(u, m.d), m);
        const std::vector<float> means =
            model::shifted_means(e, std::span<const float>(nsum), m.R);
        out_y.samples[u] = std::clamp(means[0], 0.0f, 1.0f);
    }
    if (!color) return out_y;

    const ImageBuffer ycc_up = bicubic_resize(ycc, out_h, out_w);
    return ycbcr_to_rgb(combine_luma_chroma(out_y, ycc_up));
}

PsnrResult psnr(const ImageBuffer& a, const ImageBuffer& b, int shave) {
    require(a.height == b.height && a.width == b.width, Status::Dimension,
            "psnr: image sizes differ");
    require(a.channels == 1 && b.channels == 1, Status::Dimension, "psnr: expects 1-channel images");
    require(shave >= 0 && 2 * shave < a.height && 2 * shave < a.width, Status::InvalidArg,
            "psnr: shave border too large");
    double acc = 0.0;
    std::int64_t count = 0;
    for (int r = shave; r < a.height - shave; ++r) {
        for (int c = shave; c < a.width - shave; ++c) {
            const double diff = static_cast<double>(a.at(r, c)) - b.at(r, c);
            acc += diff * diff;
            ++count;
        }
    }
    const double mse = acc / static_cast<double>(count);
    if (mse == 0.0) return {std::numeric_limits<double>::infinity(), true};
    return {10.0 * std::log10(1.0 / mse), false};
}

PsnrReport psnr_report(const std::vector<ImageBuffer>& a, const std::vector<ImageBuffer>& b,
                       int shave) {
    require(a.size() == b.size() && !a.empty(), Status::InvalidArg,
            "psnr_report: image lists misaligned");
    PsnrReport rep;
    rep.shave = shave;
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        rep.per_image.push_back(psnr(a[i], b[i], shave));
        acc += rep.per_image.back().db;
    }
    rep.mean_db = acc / static_cast<double>(a.size());
    return rep;
}

} // namespace dmrf::tasks
