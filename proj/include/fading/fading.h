/* C interface to the face age-editing library.
 *
 * Every function returns a status code (FADING_OK or an error class) and,
 * on failure, writes a diagnostic into the caller-supplied buffer. Handles
 * are opaque; release them with the matching close function. The library
 * is deterministic: identical inputs and seeds give byte-identical
 * artifacts.
 */
#ifndef FADING_H
#define FADING_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

#define FADING_OK 0
#define FADING_ERR_USAGE 2   /* bad arguments or configuration */
#define FADING_ERR_DATA 3    /* unreadable / inconsistent files */
#define FADING_ERR_COMPUTE 4 /* numerical failure */

const char* fading_version(void);

typedef struct fading_model fading_model;

/* Renders the procedural toy dataset: PNG images plus index.csv. */
int fading_toy_prepare(const char* out_dir, int num_samples, uint64_t seed, char* err, size_t err_len);

/* Trains the toy diffusion backbone on a prepared dataset and writes a
 * checkpoint directory. */
int fading_toy_train(const char* data_dir, const char* ckpt_dir, int steps, int batch_size, double lr,
                     uint64_t seed, char* err, size_t err_len);

int fading_model_open(const char* ckpt_dir, fading_model** out, char* err, size_t err_len);
void fading_model_close(fading_model* model);

/* Hash over all model parameters (determinism audits). */
int fading_model_hash(const fading_model* model, uint64_t* out_hash, char* err, size_t err_len);

/* Age-aware fine-tuning on one dataset; writes the specialized checkpoint.
 * double_prompt = 0 trains with the age-specific prompt only. */
int fading_specialize(const fading_model* model, const char* data_dir, const char* out_ckpt_dir, int steps,
                      int batch_size, double lr, int double_prompt, uint64_t seed, char* err, size_t err_len);

/* Inverts a PNG image to a reusable bundle directory (noise latent plus
 * the per-step unconditional embeddings). age_override <= 0 runs the age
 * estimator; use_initial_age = 0 inverts under the age-agnostic prompt;
 * use_enhanced_prompts selects the gendered subject noun. */
int fading_invert(const fading_model* model, const char* image_png, int age_override, int use_initial_age,
                  int use_enhanced_prompts, int inference_steps, int null_opt_iterations, double guidance_w,
                  const char* bundle_dir, char* err, size_t err_len);

/* Re-samples a bundle toward target_age with attention injection for the
 * first replace_ratio of the sampling steps, writing the edited PNG. */
int fading_edit(const fading_model* model, const char* bundle_dir, int target_age, double replace_ratio,
                double guidance_w, int use_enhanced_prompts, const char* out_png, char* err, size_t err_len);

/* Evaluation over aligned original/edited directories. targets_csv maps
 * filenames to target ages ("filename,target_age" header). Writes
 * report.json and report.csv into out_dir. */
int fading_eval(const char* orig_dir, const char* edited_dir, const char* targets_csv, const char* out_dir,
                int kid_subset_size, int kid_num_subsets, uint64_t seed, char* err, size_t err_len);

#ifdef __cplusplus
}
#endif

#endif /* FADING_H */
