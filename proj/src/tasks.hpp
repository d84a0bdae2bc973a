#pragma once

#include <vector>

#include "image.hpp"
#include "imageops.hpp"
#include "training.hpp"

namespace dmrf::tasks {

using numerics::RngStream;

struct SrExample {
    ImageBuffer low_upsampled;  // bicubic down-then-up luminance on the target grid
    ImageBuffer target;         // ground-truth luminance
    int factor = 0;             // 2, 3 or 4
};

struct PsnrResult {
    double db = 0.0;
    bool infinite = false;
};

struct PsnrReport {
    std::vector<PsnrResult> per_image;
    double mean_db = 0.0;
    int shave = 0;
};

// Trains an unconditioned model on random patches of the sample texture.
training::Checkpoint train_texture(const ImageBuffer& texture, training::TrainConfig cfg,
                                   std::vector<training::LossRecord>* history = nullptr);

// Zero-initialized sampling pass along the zigzag order: derive each state
// from already-visited neighbors, sample the pixel, move on. Optional
// refinement cycles re-run full CAP inference on the sampled image and
// resample every pixel.
ImageBuffer synthesize_texture(const training::Checkpoint& ckpt, int out_height, int out_width,
                               RngStream& rng, int refine_cycles = 0);

// Luminance pairs for SR training/evaluation: bicubic downsample by 1/factor,
// bicubic upsample back. Images are cropped to a multiple of the factor so the
// low-res grid is exact.
std::vector<SrExample> make_sr_dataset(const std::vector<ImageBuffer>& hires, int factor);

// Conditioned model (d_c = 1, K = 1, fixed variance) on dataset patches.
training::Checkpoint train_sr(const std::vector<SrExample>& dataset, training::TrainConfig cfg,
                              std::vector<training::LossRecord>* history = nullptr);

// CAP inference on the conditioned model over the upscaled grid; the output
// pixel is the shifted single-Gaussian mean. Chrominance channels of color
// inputs are upsampled with bicubic interpolation and recombined.
ImageBuffer super_resolve(const training::Checkpoint& ckpt, const ImageBuffer& low_res, int factor);

// PSNR on the [0,1] scale over the shaved interior.
PsnrResult psnr(const ImageBuffer& a, const ImageBuffer& b, int shave);
PsnrReport psnr_report(const std::vector<ImageBuffer>& a, const std::vector<ImageBuffer>& b,
                       int shave);

} // namespace dmrf::tasks
