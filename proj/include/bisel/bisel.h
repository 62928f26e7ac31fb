/*
 * bisel — bilevel data selection and online self-refining generation for toy
 * autoregressive models, with brute-force verification of the selection and
 * improvement properties.
 *
 * C API over the C++ core: opaque handles, status codes, thread-local error
 * detail via bisel_last_error(). All strings returned through char** must be
 * released with bisel_string_free().
 */
#ifndef BISEL_H
#define BISEL_H

#ifdef __cplusplus
extern "C" {
#endif

typedef enum bisel_status {
  BISEL_OK = 0,
  BISEL_CHECK_FAILED = 1,      /* run finished but a verification check failed */
  BISEL_ERR_INVALID_INPUT = 2,
  BISEL_ERR_INVALID_CONFIG = 3,
  BISEL_ERR_IO = 4,
  BISEL_ERR_DIVERGED = 5,
  BISEL_ERR_RATIO_OVERFLOW = 6,
  BISEL_ERR_RESOURCE_LIMIT = 7,
  BISEL_ERR_INTERNAL = 8
} bisel_status;

typedef struct bisel_config bisel_config;

const char* bisel_version(void);

/* Config handles. Parsing validates every field and rejects unknown keys. */
bisel_status bisel_config_create(bisel_config** out);
bisel_status bisel_config_parse(const char* json_text, bisel_config** out);
bisel_status bisel_config_load(const char* path, bisel_config** out);
bisel_status bisel_config_set(bisel_config* cfg, const char* dotted_key, const char* value);
bisel_status bisel_config_dump(const bisel_config* cfg, char** out_json);
void bisel_config_free(bisel_config* cfg);

/* Generates the configured synthetic instance and writes it as JSONL. */
bisel_status bisel_gen_instance(const bisel_config* cfg, const char* out_path);

/* Dispatches the configured experiment (train or verify). Artifacts land in
 * the resolved output directory. Returns BISEL_CHECK_FAILED when a requested
 * verification did not pass. */
bisel_status bisel_run(const bisel_config* cfg);

/* Summarizes a finished run directory as text. */
bisel_status bisel_report(const char* run_dir, char** out_text);

/* JSON document describing the most recent error on this thread ("" if none). */
const char* bisel_last_error(void);

void bisel_string_free(char* s);

#ifdef __cplusplus
}
#endif

#endif /* BISEL_H */
