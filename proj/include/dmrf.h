/* Deep MRF image modeling library: C API.
 *
 * All functions return dmrf_status; on failure dmrf_last_error() carries a
 * thread-local description. Objects are opaque handles released with the
 * matching *_free call.
 */

#ifndef DMRF_H
#define DMRF_H

#include <stddef.h>

#if defined(_WIN32)
#define DMRF_API __declspec(dllexport)
#else
#define DMRF_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum dmrf_status {
    DMRF_OK = 0,
    DMRF_ERR_INVALID_ARG = 1,
    DMRF_ERR_IO = 2,
    DMRF_ERR_FORMAT = 3,
    DMRF_ERR_VERSION = 4,
    DMRF_ERR_CORRUPT = 5,
    DMRF_ERR_DIMENSION = 6,
    DMRF_ERR_NONFINITE = 7,
    DMRF_ERR_THRESHOLD = 8,
    DMRF_ERR_INTERNAL = 9
} dmrf_status;

enum { DMRF_ACT_SIGMOID = 0, DMRF_ACT_RELU = 1 };
enum { DMRF_TASK_TEXTURE = 0, DMRF_TASK_SR = 1 };

DMRF_API const char* dmrf_status_name(dmrf_status status);
DMRF_API const char* dmrf_last_error(void);
DMRF_API const char* dmrf_version(void);

/* ---- images: [0,1] float samples, row-major, channel-interleaved ---- */

typedef struct dmrf_image dmrf_image;

DMRF_API dmrf_status dmrf_image_create(int height, int width, int channels,
                                       const float* samples_or_null, dmrf_image** out);
/* Format from the extension: .pgm/.ppm/.pnm or .png (8-bit). */
DMRF_API dmrf_status dmrf_image_load(const char* path, dmrf_image** out);
DMRF_API dmrf_status dmrf_image_save(const dmrf_image* img, const char* path);
DMRF_API void dmrf_image_free(dmrf_image* img);
DMRF_API int dmrf_image_height(const dmrf_image* img);
DMRF_API int dmrf_image_width(const dmrf_image* img);
DMRF_API int dmrf_image_channels(const dmrf_image* img);
DMRF_API const float* dmrf_image_data(const dmrf_image* img);

/* ---- models ---- */

typedef struct dmrf_model dmrf_model;

typedef struct dmrf_model_desc {
    int hidden_dim;           /* d */
    int mixture_count;        /* K */
    int pixel_channels;       /* 1 or 3 */
    int conditioning_dim;     /* 0 when unconditioned */
    int activation;           /* DMRF_ACT_* */
    int task;                 /* DMRF_TASK_* */
    int sr_factor;            /* 2..4 for SR models, else 0 */
    int n_cycles;             /* unrolled cycles; 1 = one forward + one backward pass */
    unsigned long long seed;  /* parameter initialization */
} dmrf_model_desc;

DMRF_API void dmrf_model_desc_init(dmrf_model_desc* desc, int task);
DMRF_API dmrf_status dmrf_model_create(const dmrf_model_desc* desc, dmrf_model** out);
DMRF_API dmrf_status dmrf_model_load(const char* path, dmrf_model** out);
DMRF_API dmrf_status dmrf_model_save(const dmrf_model* model, const char* path);
DMRF_API void dmrf_model_free(dmrf_model* model);
DMRF_API dmrf_status dmrf_model_describe(const dmrf_model* model, dmrf_model_desc* out);
DMRF_API long long dmrf_model_epoch(const dmrf_model* model);
DMRF_API long long dmrf_model_step(const dmrf_model* model);

/* ---- training ---- */

typedef struct dmrf_train_options {
    int patch_size;
    int batch_size;
    int epochs;          /* absolute target; resumed models continue toward it */
    int steps_per_epoch;
    float learning_rate;
    float rms_decay;
    float momentum;
    float epsilon;
    float grad_clip; /* global norm; <= 0 disables */
    int threads;     /* 0 = available parallelism */
    int checkpoint_every;              /* epochs between periodic writes; 0 = final only */
    const char* checkpoint_path;       /* optional */
    const char* loss_csv_path;         /* optional, rows epoch,step,loss */
} dmrf_train_options;

DMRF_API void dmrf_train_options_init(dmrf_train_options* opt, int task);

/* Targets must match the model's pixel channels; conditioning images are
 * required when conditioning_dim > 0 and must be aligned index-for-index.
 * Patch sampling continues the RNG stream stored in the model, so training is
 * governed by the seed the model was created with and resumes exactly. */
DMRF_API dmrf_status dmrf_train(dmrf_model* model, const dmrf_image* const* targets,
                                const dmrf_image* const* conditioning_or_null, size_t n_images,
                                const dmrf_train_options* opt);

/* ---- tasks ---- */

DMRF_API dmrf_status dmrf_synthesize(const dmrf_model* model, int height, int width,
                                     unsigned long long seed, int refine_cycles, dmrf_image** out);

/* Output is factor * input size. Color inputs keep bicubic chroma. */
DMRF_API dmrf_status dmrf_super_resolve(const dmrf_model* model, const dmrf_image* low_res,
                                        int factor, dmrf_image** out);

/* Bicubic down-then-up luminance pair for SR training and evaluation. The
 * target is cropped to a multiple of the factor. */
DMRF_API dmrf_status dmrf_sr_prepare(const dmrf_image* hires, int factor,
                                     dmrf_image** out_low_upsampled, dmrf_image** out_target);

DMRF_API dmrf_status dmrf_bicubic_resize(const dmrf_image* img, int out_height, int out_width,
                                         dmrf_image** out);
DMRF_API dmrf_status dmrf_luminance(const dmrf_image* img, dmrf_image** out);

/* PSNR in dB on the [0,1] scale over the interior after shaving `shave`
 * pixels from every border. Sets *out_is_infinite on identical inputs. */
DMRF_API dmrf_status dmrf_psnr(const dmrf_image* a, const dmrf_image* b, int shave,
                               double* out_db, int* out_is_infinite);

/* ---- diagnostics ---- */

typedef struct dmrf_diag_result {
    double metric;
    double threshold;
    int passed;
} dmrf_diag_result;

/* name: "gradcheck" | "etasigma" | "mapopt" | "posterior".
 * Writes scatter/report rows as CSV when csv_path is non-null. Returns
 * DMRF_ERR_THRESHOLD when the instrument fails its frozen threshold. */
DMRF_API dmrf_status dmrf_diagnose(const char* name, unsigned long long seed,
                                   const char* csv_path_or_null, dmrf_diag_result* out);

#ifdef __cplusplus
} /* extern "C" */
#endif

#endif /* DMRF_H */
