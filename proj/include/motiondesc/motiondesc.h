/*
 * motiondesc: zero-shot motion-description retrieval toolkit.
 *
 * C interface over the C++ core. All functions return an md_status; on
 * failure md_last_error() holds a message for the calling thread until the
 * next call into the library. Strings handed out through `char**` outputs are
 * owned by the caller and must be released with md_string_free().
 */
#ifndef MOTIONDESC_H
#define MOTIONDESC_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#  if defined(MOTIONDESC_BUILDING)
#    define MD_API __declspec(dllexport)
#  else
#    define MD_API __declspec(dllimport)
#  endif
#else
#  define MD_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum md_status {
  MD_OK = 0,
  MD_ERR_INVALID_ARGUMENT = 1, /* bad value, shape or index */
  MD_ERR_CONFIG = 2,           /* malformed, unknown or inconsistent configuration */
  MD_ERR_NOT_FOUND = 3,        /* missing file, checkpoint or class */
  MD_ERR_FORMAT = 4,           /* bad magic, version mismatch, truncated file */
  MD_ERR_IO = 5,
  MD_ERR_NUMERIC = 6,          /* non-finite evaluation, zero-norm vector */
  MD_ERR_INTERNAL = 7
} md_status;

MD_API const char* md_status_name(md_status status);
MD_API const char* md_last_error(void);
MD_API void md_string_free(char* s);
MD_API const char* md_version(void);

/* ---- Experiments -------------------------------------------------------- */

typedef struct md_experiment md_experiment;

/* Loads a JSON experiment config and applies dotted overrides ("train.epochs=20"). */
MD_API md_status md_experiment_open(const char* config_path, const char* const* overrides, size_t n_overrides,
                                    md_experiment** out);
/* Same, from an in-memory JSON document; NULL or "" means all defaults. */
MD_API md_status md_experiment_from_json(const char* json, const char* const* overrides, size_t n_overrides,
                                         md_experiment** out);
MD_API void md_experiment_close(md_experiment* exp);

MD_API md_status md_experiment_config_json(const md_experiment* exp, char** out_json);

/* Writes descriptions, lexicon and video files under paths.data. */
MD_API md_status md_experiment_generate(md_experiment* exp, char** out_summary_json);
/* Fine-tunes on the source split; writes the checkpoint and per-epoch log. */
MD_API md_status md_experiment_train(md_experiment* exp, char** out_summary_json);
/* Zero-shot evaluation of the final checkpoint; writes the EvalReport JSON. */
MD_API md_status md_experiment_evaluate(md_experiment* exp, int masked, char** out_report_json);
/* Trains with per-epoch checkpoints and evaluates the listed (1-based) epochs. */
MD_API md_status md_experiment_sweep(md_experiment* exp, const uint32_t* epochs, size_t n_epochs,
                                     char** out_table_json);
/* Mean pooling vs attention head with identical seeds. */
MD_API md_status md_experiment_ablate(md_experiment* exp, char** out_table_json);
/* Finite-difference check of every encoder parameter. *out_passed is 1 when
 * the max relative error is within 1e-5. */
MD_API md_status md_experiment_gradcheck(md_experiment* exp, double* out_max_rel_error, int* out_passed,
                                         char** out_summary_json);

/* ---- Checkpoints and scoring -------------------------------------------- */

typedef struct md_model md_model;

MD_API md_status md_model_load(const char* checkpoint_path, md_model** out);
MD_API void md_model_free(md_model* model);
MD_API size_t md_model_frame_dim(const md_model* model);
MD_API size_t md_model_embed_dim(const md_model* model);
/* Encodes a row-major n_frames x frame_dim video into embed_dim floats. */
MD_API md_status md_model_encode(const md_model* model, const double* frames, size_t n_frames, double* out_embedding);

/* ---- Text encoder -------------------------------------------------------- */

/* Frozen embedding of a token list; out must hold embed_dim doubles. */
MD_API md_status md_encode_description(const char* const* tokens, size_t n_tokens, size_t token_dim,
                                       size_t embed_dim, uint64_t projection_seed, double* out);

/* ---- Corpus and annotation statistics ------------------------------------ */

/* Description-file statistics (.jsonl description file or one sentence per line). */
MD_API md_status md_corpus_stats(const char* path, char** out_json);
/* Rewrites a description file with masked_tokens computed from a lexicon file. */
MD_API md_status md_mask_descriptions(const char* in_path, const char* lexicon_path, const char* out_path,
                                      char** out_summary_json);
/* Likert mean and IAA% from an item_id,annotator_id,rating CSV. */
MD_API md_status md_quality_ratings(const char* csv_path, char** out_json);
/* Majority outcome per pair from a pair_id,candidate,voter_id CSV. */
MD_API md_status md_quality_votes(const char* csv_path, char** out_json);

#ifdef __cplusplus
}
#endif

#endif /* MOTIONDESC_H */
