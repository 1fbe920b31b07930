/* resopt — residual-wrapped stochastic optimizers, C API.
 *
 * All functions return a resopt_status; RESOPT_OK is 0. On failure the
 * context keeps the last error message. Handles are opaque; free them with
 * the matching *_free function. A context must outlive the handles it
 * created. One context per thread; the handles themselves are not
 * synchronized.
 */
#ifndef RESOPT_H
#define RESOPT_H

#include <stddef.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum resopt_status {
  RESOPT_OK = 0,
  RESOPT_ERR_CONFIG = 1,  /* bad config text, bad arguments */
  RESOPT_ERR_NUMERIC = 2, /* non-finite values, violated preconditions */
  RESOPT_ERR_IO = 3,      /* missing or unwritable files */
  RESOPT_ERR_INTERNAL = 4
} resopt_status;

typedef struct resopt_ctx resopt_ctx;
typedef struct resopt_run resopt_run;

const char* resopt_version(void);

resopt_ctx* resopt_ctx_new(void);
void resopt_ctx_free(resopt_ctx* ctx);
/* Message of the most recent failure on this context; empty string if none. */
const char* resopt_ctx_last_error(const resopt_ctx* ctx);

/* Executes the run a config file describes and writes run.log plus
 * checkpoint.txt under out_root. log_path (optional) receives the log
 * location, truncated to cap. */
resopt_status resopt_run_file(resopt_ctx* ctx, const char* config_path, const char* out_root,
                              char* log_path, size_t cap);
resopt_status resopt_run_text(resopt_ctx* ctx, const char* config_text, const char* out_root,
                              char* log_path, size_t cap);

/* In-memory run with programmatic access to the outcome. */
resopt_status resopt_run_open(resopt_ctx* ctx, const char* config_text, resopt_run** out);
void resopt_run_free(resopt_run* run);
long resopt_run_steps(const resopt_run* run);
size_t resopt_run_dim(const resopt_run* run);
double resopt_run_final_train_loss(const resopt_run* run);
double resopt_run_final_heldout_loss(const resopt_run* run);
double resopt_run_final_heldout_accuracy(const resopt_run* run);
double resopt_run_min_grad_sq(const resopt_run* run);
double resopt_run_residual_sq_mean(const resopt_run* run);
/* Copies up to cap final parameters into buf; *len gets the full dimension. */
resopt_status resopt_run_params(const resopt_run* run, double* buf, size_t cap, size_t* len);

/* Multi-seed sweep over every *.cfg in config_dir. summary_path (optional)
 * receives the summary CSV location. */
resopt_status resopt_sweep(resopt_ctx* ctx, const char* config_dir, int replicas,
                           const char* out_root, char* summary_path, size_t cap);

/* Merges run logs into one long-format CSV (step,run_id,metric,value). */
resopt_status resopt_compare(resopt_ctx* ctx, const char* const* log_paths, int n,
                             const char* out_csv);

/* Twin-training stability experiment; writes trace CSVs under out_root.
 * out_dir (optional) receives the directory written. */
resopt_status resopt_stability(resopt_ctx* ctx, const char* config_path, const char* out_root,
                               char* out_dir, size_t cap);

/* Convergence-bound trace for a configured run; writes bounds.csv. */
resopt_status resopt_bounds(resopt_ctx* ctx, const char* config_path, const char* out_root,
                            char* csv_path, size_t cap);

#ifdef __cplusplus
}
#endif

#endif /* RESOPT_H */
