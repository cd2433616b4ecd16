/* SPDX-License-Identifier: Apache-2.0
 *
 * Public C interface of the tcd shared library: masked-diffusion forecasting
 * and repair of 3D skeleton sequences.
 *
 * Conventions:
 *   - Every fallible call returns a tcd_status; TCD_OK is 0. The message for
 *     the most recent failure on the calling thread is available through
 *     tcd_last_error().
 *   - Objects are opaque handles created by *_load functions and released
 *     by the matching *_free. Strings returned through char** out-params
 *     are owned by the caller and released with tcd_string_free.
 *   - File formats: pose sequences use the PSEQ1 container (or CSV when the
 *     path ends in .csv), checkpoints use TCDCKPT1. The TCD_SEED environment
 *     variable supplies any seed a config document leaves unset.
 */
#ifndef TCD_H
#define TCD_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

/* Mirrors the library's internal error taxonomy one to one; the CLI also
 * uses these values as process exit codes. */
typedef enum tcd_status {
  TCD_OK = 0,
  TCD_ERR_INVALID_ARGUMENT = 1, /* bad parameter value (range, sign, enum) */
  TCD_ERR_STRUCTURE = 2,        /* inconsistent shapes / skeleton wiring */
  TCD_ERR_IO = 3,               /* filesystem-level failure */
  TCD_ERR_FORMAT = 4,           /* unrecognized magic / not one of our files */
  TCD_ERR_TRUNCATED = 5,        /* file shorter than its header promises */
  TCD_ERR_HEADER_MISMATCH = 6,  /* header readable but self-inconsistent */
  TCD_ERR_VERSION = 7,          /* file from an incompatible version */
  TCD_ERR_CORRUPT = 8,          /* payload fails integrity checks */
  TCD_ERR_MODE = 9,             /* operation not valid for this object's role */
  TCD_ERR_STATE = 10,           /* call sequence violation */
  TCD_ERR_NUMERIC = 11,         /* non-finite value produced or consumed */
  TCD_ERR_DEGENERATE = 12,      /* no data to act on */
  TCD_ERR_EXTERNAL = 13,        /* plugged-in external command failed */
  TCD_ERR_INTERNAL = 14         /* bug trap */
} tcd_status;

/* Stable lowercase name of a status value ("ok", "invalid_argument", ...). */
const char* tcd_status_name(tcd_status status);

/* Message of the most recent failure on this thread; empty string if none. */
const char* tcd_last_error(void);

/* Frees a string returned through a char** out-parameter. NULL is a no-op. */
void tcd_string_free(char* text);

/* ------------------------------------------------------------------ */
/* Experiment configuration                                            */

typedef struct tcd_config_s tcd_config;

/* Loads and validates a JSON experiment document. `overrides` holds
 * n_overrides strings of the form "section.key=value" (value parsed as
 * JSON) applied on top of the file. Unknown keys are rejected. */
tcd_status tcd_config_load(const char* path, const char* const* overrides,
                           size_t n_overrides, tcd_config** out_config);
void tcd_config_free(tcd_config* config);

/* Resolved value at a dotted key (e.g. "train.epochs") as a JSON literal. */
tcd_status tcd_config_get(const tcd_config* config, const char* dotted_key,
                          char** out_json);

/* ------------------------------------------------------------------ */
/* Experiment steps                                                    */

/* Synthesizes the configured corpus of gait sequences into out_dir
 * (seq_00000.pseq, ...). Reports how many files were written. */
tcd_status tcd_synth(const tcd_config* config, const char* out_dir,
                     int* out_count);

/* Applies the configured occlusion regime to one sequence file: occluded
 * entries are zeroed and flagged in the stored availability mask. */
tcd_status tcd_mask_file(const tcd_config* config, const char* in_path,
                         const char* out_path);

/* Trains one block ("short", "long", "direct", "pre", or "refine") on the
 * .pseq corpus in corpus_dir and writes a TCDCKPT1 checkpoint. With
 * resume != 0 the checkpoint is loaded and training continues from its
 * recorded position. max_epochs < 0 trains to the configured epoch count;
 * otherwise at most that many additional epochs run. Reports the mean
 * training loss of the last epoch run (0 when none ran). */
tcd_status tcd_train(const tcd_config* config, const char* role,
                     const char* corpus_dir, const char* checkpoint_path,
                     int resume, int max_epochs, double* out_final_loss);

/* ------------------------------------------------------------------ */
/* Prediction pipelines                                                */

/* A predictor assembled from a spec string:
 *   "zero_vel"                               constant-pose baseline
 *   "tcd(short.ckpt,long.ckpt)"              two-stage cascade
 *   "direct(direct.ckpt)"                    single-stage ablation
 *   "exec:<command>"                         external predictor; the command
 *                                            may use {input}, {output} and
 *                                            {frames} placeholders
 * with optional stages "pre(pre.ckpt)+..." and "...+refine(refine.ckpt)".
 * The exec form can also appear as a stage: "pre(a)+exec(cmd)+refine(r)". */
typedef struct tcd_pipeline_s tcd_pipeline;

tcd_status tcd_pipeline_load(const tcd_config* config, const char* spec,
                             tcd_pipeline** out_pipeline);
void tcd_pipeline_free(tcd_pipeline* pipeline);

/* Draws n_samples futures for the observation stored in in_path (its first
 * observation_len frames and availability mask are used) and writes
 * observation.pseq plus sample_000.pseq ... into out_dir. */
tcd_status tcd_sample(const tcd_config* config, tcd_pipeline* pipeline,
                      const char* in_path, int n_samples, uint64_t seed,
                      const char* out_dir);

/* Fills the occluded entries of a masked sequence file with a repair
 * checkpoint and writes the completed sequence (mask retained, so the
 * imputed entries stay identifiable). */
tcd_status tcd_repair(const tcd_config* config, const char* pre_checkpoint,
                      const char* in_path, const char* out_path);

/* Runs the configured evaluation protocol over every .pseq file in
 * test_dir (each observation + ground-truth future) and returns the report
 * as a JSON document. */
tcd_status tcd_evaluate(const tcd_config* config, tcd_pipeline* pipeline,
                        const char* test_dir, char** out_report_json);

#ifdef __cplusplus
}
#endif

#endif /* TCD_H */
