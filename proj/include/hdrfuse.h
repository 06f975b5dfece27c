/*
 * hdrfuse — ghost-free multi-exposure HDR fusion.
 *
 * C interface to the shared library: opaque handles, integer status codes,
 * thread-local error strings. Status codes double as CLI exit codes:
 * 0 success, 2 usage error, 3 data error, 4 numeric/verification failure.
 */
#ifndef HDRFUSE_H
#define HDRFUSE_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define HDRFUSE_API __declspec(dllexport)
#else
#define HDRFUSE_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

#define HDRFUSE_OK 0
#define HDRFUSE_ERR_USAGE 2
#define HDRFUSE_ERR_DATA 3
#define HDRFUSE_ERR_NUMERIC 4

/* Model bundle: architecture config, weights, optimizer state, seed. */
typedef struct hdrfuse_model hdrfuse_model;
/* Three bracketed LDR exposures plus optional ground truth. */
typedef struct hdrfuse_bracket hdrfuse_bracket;

HDRFUSE_API const char* hdrfuse_version(void);

/* Message for the most recent failing call on this thread. */
HDRFUSE_API const char* hdrfuse_last_error(void);

/* Caps kernel parallelism; <= 0 restores the HDRFUSE_THREADS / hardware
 * default. */
HDRFUSE_API void hdrfuse_set_threads(int n);

/* Frees any string returned through a char** out-parameter. */
HDRFUSE_API void hdrfuse_string_free(char* s);

/* ------------------------------------------------------------------ config */

/* "full" or "tiny"; returns key = value text describing the architecture. */
HDRFUSE_API int hdrfuse_config_preset(const char* name, char** out_text);

/* ------------------------------------------------------------------- model */

HDRFUSE_API int hdrfuse_model_create(const char* config_text, uint64_t seed,
                                     hdrfuse_model** out);
HDRFUSE_API int hdrfuse_model_load(const char* path, hdrfuse_model** out);
HDRFUSE_API int hdrfuse_model_save(hdrfuse_model* m, const char* path);
HDRFUSE_API void hdrfuse_model_free(hdrfuse_model* m);
HDRFUSE_API int hdrfuse_model_param_count(const hdrfuse_model* m, uint64_t* out);
HDRFUSE_API int hdrfuse_model_config(const hdrfuse_model* m, char** out_text);
HDRFUSE_API int hdrfuse_model_step(const hdrfuse_model* m, int64_t* out);

/* -------------------------------------------------------------------- data */

/* Writes one synthetic sample directory:
 * ldr_1.png ldr_2.png ldr_3.png exposure.txt gt.pfm */
HDRFUSE_API int hdrfuse_synth_sample(const char* out_dir, uint64_t seed, int size,
                                     int motion_px, double saturation_frac);

HDRFUSE_API int hdrfuse_bracket_load(const char* dir, hdrfuse_bracket** out);
HDRFUSE_API void hdrfuse_bracket_free(hdrfuse_bracket* b);

/* ---------------------------------------------------------------- training */

typedef struct hdrfuse_train_options {
    int64_t steps;
    int batch;
    uint64_t seed;
    double lr;
    int augment;         /* expand every patch into its 8 dihedral variants */
    int patch;
    int stride;
    int use_perceptual;
    double lambda_p;
    int probe_interval;  /* PSNR probe cadence in steps; 0 disables */
    uint64_t featurenet_seed;
    const char* featurenet_weights; /* optional container path, may be NULL */
    const char* log_csv;            /* optional per-step log path, may be NULL */
} hdrfuse_train_options;

HDRFUSE_API void hdrfuse_train_options_init(hdrfuse_train_options* o);

/* Trains in place on every sample directory found under data_dir. */
HDRFUSE_API int hdrfuse_train(hdrfuse_model* m, const char* data_dir,
                              const hdrfuse_train_options* o);

/* ------------------------------------------------------------- fuse / eval */

/* Writes the merged HDR as PFM, plus an optional 8-bit mu-law preview PNG. */
HDRFUSE_API int hdrfuse_fuse(hdrfuse_model* m, const hdrfuse_bracket* b,
                             const char* out_pfm, const char* out_png /* nullable */);

/* Exposure-weighted-average baseline of the bracket, written as PFM. */
HDRFUSE_API int hdrfuse_baseline_merge(const hdrfuse_bracket* b, const char* out_pfm);

/* Per-sample and mean PSNR-l / PSNR-mu / SSIM-l / SSIM-mu over data_dir.
 * Writes a CSV when report_csv is non-NULL; mean out-params are nullable. */
HDRFUSE_API int hdrfuse_eval(hdrfuse_model* m, const char* data_dir, const char* report_csv,
                             double* mean_psnr_l, double* mean_psnr_mu, double* mean_ssim_l,
                             double* mean_ssim_mu);

/* ----------------------------------------------------------- verification */

/* Runs the finite-difference verification suite in 64-bit mode. Returns
 * HDRFUSE_OK when every check stays under the 1e-4 gate. corrupt_primitive
 * is a test hook that miscomputes the named adjoint so the suite must fail.
 */
HDRFUSE_API int hdrfuse_gradcheck(const char* config_text /* nullable */, uint64_t seed,
                                  const char* corrupt_primitive /* nullable */,
                                  char** report_out /* nullable */,
                                  double* worst_out /* nullable */);

#ifdef __cplusplus
}
#endif

#endif /* HDRFUSE_H */
