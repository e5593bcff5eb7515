#ifndef KBCX_H
#define KBCX_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define KBCX_API __declspec(dllexport)
#else
#define KBCX_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum kbcx_status {
    KBCX_OK = 0,
    KBCX_ERR_INVALID_ARGUMENT = 1,
    KBCX_ERR_IO = 2,
    KBCX_ERR_PARSE = 3,
    KBCX_ERR_SHAPE = 4,
    KBCX_ERR_MISMATCH = 5,
    KBCX_ERR_NUMERIC = 6,
    KBCX_ERR_DEGENERATE = 7,
    KBCX_ERR_INTERNAL = 8
} kbcx_status;

typedef struct kbcx_kb kbcx_kb;
typedef struct kbcx_model kbcx_model;
typedef struct kbcx_doge kbcx_doge;

/* Strings returned through `char** out` parameters are owned by the caller
 * and released with kbcx_string_free. All JSON is UTF-8. */

KBCX_API const char* kbcx_version(void);
KBCX_API const char* kbcx_status_name(kbcx_status status);
/* Message of the last failed call on this thread ("" when none). */
KBCX_API const char* kbcx_last_error(void);
KBCX_API void kbcx_string_free(char* s);

typedef void (*kbcx_message_fn)(const char* message, void* user);
/* Redirects library warnings; NULL restores printing to standard error. */
KBCX_API void kbcx_set_warning_handler(kbcx_message_fn fn, void* user);

/* Knowledge bases.
 * paths_json: {"train": p, "valid": p, "test": p, "clusters": p?, "format": "triple-tsv"|...}
 * valid/test may be omitted. */
KBCX_API kbcx_status kbcx_kb_load(const char* paths_json, kbcx_kb** out);
/* {"entities", "relations", "train", "valid", "test", "clusters"} */
KBCX_API kbcx_status kbcx_kb_summary(const kbcx_kb* kb, char** out_json);
KBCX_API void kbcx_kb_free(kbcx_kb* kb);

/* Models. config_json is a training config (mode, model{kind, encoder, dim, ...},
 * seed, ...); unspecified fields take the defaults of its mode.
 * options_json (nullable): {"word_vectors": path, "vocab_limit": n,
 * "random_word_vectors": bool}. init (nullable) transfers encoder weights;
 * model fields absent from config_json then come from init. */
KBCX_API kbcx_status kbcx_model_create(const char* config_json, const kbcx_kb* kb, const kbcx_model* init,
                                       const char* options_json, kbcx_model** out);
/* expected_kind (nullable) rejects checkpoints of another model kind. */
KBCX_API kbcx_status kbcx_model_load(const char* path, const char* expected_kind, kbcx_model** out);
KBCX_API kbcx_status kbcx_model_save(const kbcx_model* model, const char* path);
/* {"model", "entities", "relations", "vocabulary", "parameters", "fingerprint",
 *  "config", "best_valid_mrr", "best_epoch", "history"} */
KBCX_API kbcx_status kbcx_model_info(const kbcx_model* model, char** out_json);
KBCX_API void kbcx_model_free(kbcx_model* model);

typedef void (*kbcx_epoch_fn)(const char* record_json, void* user);
/* Trains a copy of `model` on kb; *out holds the best-validation snapshot
 * together with the run history. */
KBCX_API kbcx_status kbcx_train(const char* config_json, const kbcx_kb* kb, const kbcx_model* model,
                                kbcx_epoch_fn on_epoch, void* user, kbcx_model** out);

/* split: "train" | "valid" | "test".
 * options_json (nullable): {"zero_shot": bool, "workers": n, "clusters": bool,
 * "max_queries": n, "ranks": bool}.
 * Result: {"split", "MR", "MRR", "H@1", "H@3", "H@10", "n_queries", "tsv", "table", "ranks"?} */
KBCX_API kbcx_status kbcx_evaluate(const kbcx_model* model, const kbcx_kb* kb, const char* split,
                                   const char* options_json, char** out_json);

/* grid_json: {"learning_rate": [...], "dropout": [...], "n3_lambda": [...],
 * "batch_size": [...], "dim": [...]}. options_json as in kbcx_model_create.
 * Result: {"rows": [...], "table": tsv, "best_config": {...}}. */
KBCX_API kbcx_status kbcx_grid_search(const char* base_config_json, const char* grid_json, const kbcx_kb* kb,
                                      const kbcx_model* init, const char* options_json, kbcx_model** best,
                                      char** out_json);

/* Diagnostic sets (JSON lines). */
KBCX_API kbcx_status kbcx_doge_load(const char* path, kbcx_doge** out);
KBCX_API size_t kbcx_doge_size(const kbcx_doge* set);
KBCX_API void kbcx_doge_free(kbcx_doge* set);

/* suite: "general" | "consistency" | "deductive" | "stereotype".
 * options_json (nullable): {"added_train": path, "added_valid": path,
 * "finetune": config}. Result JSON carries a "tsv" field. */
KBCX_API kbcx_status kbcx_diagnose(const kbcx_model* model, const kbcx_doge* set, const char* suite,
                                   const char* options_json, char** out_json);

/* Writes a synthetic world with diagnostic items under dir; returns a JSON
 * array of the written paths. */
KBCX_API kbcx_status kbcx_generate_diagnostics(uint64_t seed, size_t size, const char* dir, char** out_json);

/* Paired-difference statistics: {"w", "w_plus", "w_minus", "p", "n", "exact"}. */
KBCX_API kbcx_status kbcx_wilcoxon(const double* diffs, size_t n, char** out_json);

#ifdef __cplusplus
}
#endif

#endif
