#ifndef CLUSDIFF_H
#define CLUSDIFF_H

#include <stddef.h>

#ifdef __cplusplus
extern "C" {
#endif

/* Clustering-conditioned diffusion pipeline, C interface.
 *
 * Every entry point returns a status; on failure clusdiff_last_error()
 * holds a message for the calling thread until the next failing call.
 * Handles are opaque and owned by the caller through the matching _free.
 */

typedef enum clusdiff_status {
  CLUSDIFF_OK = 0,
  CLUSDIFF_E_CONFIG = 1,        /* bad or unknown configuration */
  CLUSDIFF_E_IO = 2,            /* unreadable or unwritable file */
  CLUSDIFF_E_MISSING_INPUT = 3, /* named input file does not exist */
  CLUSDIFF_E_NUMERIC = 4,       /* non-finite or unstable numerics */
  CLUSDIFF_E_INVALID = 5,       /* inconsistent data or request */
  CLUSDIFF_E_INTERNAL = 6       /* anything unexpected */
} clusdiff_status;

typedef struct clusdiff_config clusdiff_config;
typedef struct clusdiff_report clusdiff_report;

const char* clusdiff_version(void);
const char* clusdiff_status_name(clusdiff_status status);

/* Process exit code for a status: 0 on success, 1 for numeric/internal
 * failures, 2 for configuration, io, missing-input, and validation
 * failures. */
int clusdiff_exit_code(clusdiff_status status);

/* Message from the current thread's most recent failing call; empty
 * string when nothing failed yet. The pointer stays valid until the next
 * failing call on the same thread. */
const char* clusdiff_last_error(void);

/* Caps worker threads; 0 restores the automatic choice (hardware count,
 * further capped by the CLUSDIFF_THREADS environment variable). */
void clusdiff_set_threads(int n);

/* ---- configuration ------------------------------------------------ */

clusdiff_status clusdiff_config_parse_file(const char* path, clusdiff_config** out);
clusdiff_status clusdiff_config_parse_text(const char* text, clusdiff_config** out);
clusdiff_status clusdiff_config_set(clusdiff_config* cfg, const char* key, const char* value);
/* NULL when the key is absent; otherwise valid until the config changes. */
const char* clusdiff_config_get(const clusdiff_config* cfg, const char* key);
void clusdiff_config_free(clusdiff_config* cfg);

/* ---- pipeline stages ----------------------------------------------- */

/* Runs one stage (dataset-gen, features, cluster, train, generate, fid,
 * lt-run) with the given config, writing artifacts plus metrics.txt and
 * report.txt into out_dir. A non-empty out_dir is refused unless force
 * is nonzero. When has_seed is nonzero, seed overrides the config's
 * seed. On success *out_report receives the stage report. */
clusdiff_status clusdiff_run_stage(const char* stage, const clusdiff_config* cfg,
                                   const char* out_dir, int force, int has_seed,
                                   unsigned long long seed, clusdiff_report** out_report);

const char* clusdiff_report_stage(const clusdiff_report* rep);
unsigned long long clusdiff_report_seed(const clusdiff_report* rep);
unsigned int clusdiff_report_config_checksum(const clusdiff_report* rep);
double clusdiff_report_wall_seconds(const clusdiff_report* rep);
size_t clusdiff_report_metric_count(const clusdiff_report* rep);
/* NULL when i is out of range. */
const char* clusdiff_report_metric_key(const clusdiff_report* rep, size_t i);
const char* clusdiff_report_metric_value(const clusdiff_report* rep, size_t i);
void clusdiff_report_free(clusdiff_report* rep);

#ifdef __cplusplus
} /* extern "C" */
#endif

#endif /* CLUSDIFF_H */
