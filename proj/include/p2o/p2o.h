/* C interface to the P2O lab. Every call returns a p2o_status; on failure the
 * message is available from p2o_last_error() on the same thread until the
 * next failing call. Strings returned through char** are owned by the caller
 * and released with p2o_string_free. */
#ifndef P2O_P2O_H
#define P2O_P2O_H

#include <stddef.h>
#include <stdint.h>

#if defined(P2O_BUILDING)
#define P2O_API __attribute__((visibility("default")))
#else
#define P2O_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum p2o_status {
  P2O_OK = 0,
  P2O_ERR_CONFIG = 1,
  P2O_ERR_CONTRACT = 2,
  P2O_ERR_NUMERICAL = 3,
  P2O_ERR_DATA = 4,
  P2O_ERR_PARSE = 5,
  P2O_ERR_AUDIT = 6,
  P2O_ERR_IO = 7,
  P2O_ERR_EXTERNAL = 8,
  P2O_ERR_INVALID_ARGUMENT = 100,
  P2O_ERR_INTERNAL = 101
} p2o_status;

typedef enum p2o_split { P2O_SPLIT_TRAIN = 0, P2O_SPLIT_HELDOUT = 1 } p2o_split;

typedef struct p2o_config p2o_config;
typedef struct p2o_run p2o_run;
typedef struct p2o_policy p2o_policy;
typedef struct p2o_dataset p2o_dataset;

P2O_API const char* p2o_last_error(void);
P2O_API const char* p2o_status_name(p2o_status status);
P2O_API void p2o_string_free(char* s);

/* Run configuration. The desk-scale defaults apply to every missing key. */
P2O_API p2o_status p2o_config_default(p2o_config** out);
P2O_API p2o_status p2o_config_from_json(const char* json, p2o_config** out);
P2O_API p2o_status p2o_config_from_file(const char* path, p2o_config** out);
/* Sets a dotted key ("group.K", "mode") to a JSON value ("6", "\"p2o\"").
 * The config is left unchanged when the result does not validate. */
P2O_API p2o_status p2o_config_set(p2o_config* cfg, const char* key, const char* json_value);
P2O_API p2o_status p2o_config_to_json(const p2o_config* cfg, char** out);
P2O_API void p2o_config_free(p2o_config* cfg);

/* Runs the full training loop. out_dir may be NULL (nothing written);
 * run_id may be NULL (default "<mode>-seed<seed>"). */
P2O_API p2o_status p2o_train(const p2o_config* cfg, const char* out_dir, const char* run_id,
                             int binary_checkpoints, p2o_run** out);
P2O_API p2o_status p2o_run_epoch_count(const p2o_run* run, int* out);
/* JSON array with one metrics record per epoch. */
P2O_API p2o_status p2o_run_metrics_json(const p2o_run* run, char** out);
P2O_API p2o_status p2o_run_final_policy(const p2o_run* run, p2o_policy** out);
P2O_API void p2o_run_free(p2o_run* run);

P2O_API p2o_status p2o_policy_load(const char* path, p2o_policy** out);
P2O_API p2o_status p2o_policy_save(const p2o_policy* policy, const char* path, int binary);
P2O_API p2o_status p2o_policy_shape(const p2o_policy* policy, int* vocab_size, int* seq_len, int* feat_dim);
P2O_API void p2o_policy_free(p2o_policy* policy);

P2O_API p2o_status p2o_dataset_generate(const p2o_config* cfg, p2o_split split, p2o_dataset** out);
P2O_API p2o_status p2o_dataset_load(const char* path, p2o_dataset** out);
P2O_API p2o_status p2o_dataset_save(const p2o_dataset* data, const char* path);
P2O_API p2o_status p2o_dataset_size(const p2o_dataset* data, size_t* out);
P2O_API void p2o_dataset_free(p2o_dataset* data);

/* Template-free accuracy: JSON object {"overall", "planted_hard", "easy", "n"}. */
P2O_API p2o_status p2o_evaluate(const p2o_policy* policy, const p2o_dataset* data, int rollouts, double temperature,
                                uint64_t seed, char** out_json);

/* Per-epoch CSV and per-seed comparison table from metrics.jsonl files. */
P2O_API p2o_status p2o_report(const char* const* metrics_files, size_t n_files, char** epoch_csv,
                              char** table_csv);

/* Retained templates of one epoch from a run directory's templates.jsonl
 * (epoch < 0 selects the last recorded epoch), as text. */
P2O_API p2o_status p2o_inspect_templates(const char* run_dir, int epoch, char** out);

#ifdef __cplusplus
}
#endif

#endif
