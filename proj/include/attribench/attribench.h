#ifndef ATTRIBENCH_ATTRIBENCH_H
#define ATTRIBENCH_ATTRIBENCH_H

/*
 * C interface to the attribench pipeline. Every stage reads and writes files;
 * options are passed as JSON object strings (NULL or "" means defaults).
 *
 * Functions return AB_OK or an error status. On error, ab_last_error() returns
 * a message for the calling thread that stays valid until that thread's next
 * call into the library. Strings returned through char** are owned by the
 * caller and released with ab_string_free().
 *
 * Stage outputs are written to "<path>.partial" and renamed on success.
 */

#include <stddef.h>
#include <stdint.h>

#if defined(ATTRIBENCH_BUILDING)
#define AB_API __attribute__((visibility("default")))
#else
#define AB_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum ab_status {
  AB_OK = 0,
  AB_ERR_INVALID_ARGUMENT = 1, /* bad option, missing path, NULL handle */
  AB_ERR_PARSE = 2,            /* malformed input file */
  AB_ERR_VALIDATION = 3,       /* input violates a domain invariant */
  AB_ERR_IO = 4,
  AB_ERR_ENDPOINT = 5,         /* transport, endpoint or cassette replay failure */
  AB_ERR_INTERNAL = 6
} ab_status;

typedef struct ab_store ab_store;
typedef struct ab_gateway ab_gateway;
typedef struct ab_study ab_study;

AB_API const char* ab_version(void);
AB_API const char* ab_status_name(ab_status status);
AB_API const char* ab_last_error(void);
AB_API void ab_string_free(char* s);

/* Lowercase hex SHA-256 of a file or a byte buffer. */
AB_API ab_status ab_sha256_file(const char* path, char** out_hex);
AB_API ab_status ab_sha256_bytes(const void* data, size_t size, char** out_hex);

/* Corpus ---------------------------------------------------------------- */

AB_API ab_status ab_store_load(const char* path, ab_store** out);
AB_API ab_status ab_store_save(const ab_store* store, const char* path);
/* Keeps linkable articles; the rest stay resolvable as reference articles. */
AB_API ab_status ab_store_filter(const ab_store* store, ab_store** out);
AB_API size_t ab_store_size(const ab_store* store);
AB_API size_t ab_store_reference_size(const ab_store* store);
AB_API void ab_store_free(ab_store* store);

/* Gateway ----------------------------------------------------------------
 * config keys: chat_url, embedding_url, chat_model, embedding_model,
 * mode ("live" | "record" | "replay"), cassette, max_attempts, base_delay_ms,
 * max_delay_ms, max_in_flight, embed_batch_limit, generation_temperature,
 * attribution_temperature, max_tokens, timeout_s, api_key_env.
 * The bearer token is read from the environment variable named by
 * api_key_env (default ATTRIBENCH_API_KEY).
 */
AB_API ab_status ab_gateway_create(const char* config_json, ab_gateway** out);
AB_API ab_status ab_gateway_stats(const ab_gateway* gateway, char** out_json);
AB_API void ab_gateway_free(ab_gateway* gateway);

/* Stages -----------------------------------------------------------------
 * Each stage can return a JSON summary through out_summary (may be NULL).
 */

/* options: seed, chains, dialogues, max_hops */
AB_API ab_status ab_sample_contexts(const ab_store* store, const char* options_json, const char* out_path,
                                    char** out_summary);

/* options: max_retries, workers. audit_path may be NULL. */
AB_API ab_status ab_generate(const ab_store* store, ab_gateway* gateway, const char* contexts_path,
                             const char* options_json, const char* out_path, const char* audit_path,
                             char** out_summary);

AB_API ab_status ab_build_index(const ab_store* store, ab_gateway* gateway, size_t batch_size,
                                const char* out_path, char** out_summary);

/* options: seed, pool_size, per_source */
AB_API ab_status ab_mine_distractors(const char* records_path, const char* index_path, const char* options_json,
                                     const char* out_path, char** out_summary);

/* Inputs are line-delimited {"id", "text"} or corpus records.
 * options: threshold, num_perms, bands, shingle_size, seed, workers */
AB_API ab_status ab_flag_leaks(const char* train_path, const char* test_path, const char* options_json,
                               const char* out_csv, char** out_summary);

/* options: seed, dialogue_distractors, leak_report (drops samples whose
 * documents appear as train_id in the report). distractors_path may be NULL. */
AB_API ab_status ab_assemble(const ab_store* store, const char* records_path, const char* distractors_path,
                             const char* options_json, const char* out_path, const char* manifest_path,
                             char** out_summary);

AB_API ab_status ab_export_train(const char* dataset_path, const char* style, const char* out_path,
                                 const char* manifest_path, char** out_summary);

/* Rewrites dialogue samples as standalone turns. options: max_retries, workers */
AB_API ab_status ab_rephrase(ab_gateway* gateway, const char* dataset_path, const char* options_json,
                             const char* out_path, char** out_summary);

/* Replaces gold labels with majority-voted zero-shot labels from every
 * gateway. options: workers */
AB_API ab_status ab_synatt(ab_gateway* const* gateways, size_t n_gateways, const char* dataset_path,
                           const char* options_json, const char* out_path, char** out_summary);

/* options: method ("random" | "embed_threshold" | "zero_shot" | "ensemble"),
 * seed, p, validation (dataset path for p and threshold tuning), threshold,
 * grid, model, members (model ids for the ensemble), workers.
 * gateway may be NULL for "random". */
AB_API ab_status ab_attribute(ab_gateway* gateway, const char* dataset_path, const char* options_json,
                              const char* out_path, char** out_summary);

/* table_path may be NULL. */
AB_API ab_status ab_evaluate(const char* dataset_path, const char* predictions_path, const char* dataset_name,
                             const char* out_csv, const char* table_path, char** out_summary);

/* Merges report CSVs into one CSV and a human-readable table. */
AB_API ab_status ab_render_report(const char* const* csv_paths, size_t n_paths, const char* out_csv,
                                  const char* table_path);

/* Study ------------------------------------------------------------------ */

/* log_path may be NULL; with a path, sessions survive restarts. */
AB_API ab_status ab_study_create(const char* config_path, const char* log_path, ab_study** out);
/* Binds host:port (0 picks a free port) and stores the bound port. */
AB_API ab_status ab_study_bind(ab_study* study, const char* host, int port, int* out_port);
/* Serves until ab_study_stop(). */
AB_API ab_status ab_study_run(ab_study* study);
AB_API void ab_study_stop(ab_study* study);
AB_API void ab_study_free(ab_study* study);

/* Per-scenario mean time and accuracy from a results CSV. */
AB_API ab_status ab_study_analyze(const char* config_path, const char* results_csv, const char* out_csv,
                                  char** out_summary);

#ifdef __cplusplus
}
#endif

#endif
