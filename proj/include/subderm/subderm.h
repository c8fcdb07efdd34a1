/* C interface to the subderm palpation simulator.
 *
 * All handles are opaque. Functions return an sd_status; on failure the
 * thread-local message from sd_last_error() describes what went wrong.
 * Objects returned through out-parameters are owned by the caller and must
 * be released with the matching *_free function.
 */
#ifndef SUBDERM_SUBDERM_H
#define SUBDERM_SUBDERM_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#  if defined(SUBDERM_BUILDING)
#    define SD_API __declspec(dllexport)
#  else
#    define SD_API __declspec(dllimport)
#  endif
#else
#  define SD_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum sd_status {
    SD_OK = 0,
    SD_ERR_INVALID_ARGUMENT,
    SD_ERR_CONFIG_INVALID,
    SD_ERR_EMPTY_REGION,
    SD_ERR_NO_TUMOR,
    SD_ERR_EMPTY_AFTER_FILTER,
    SD_ERR_DEGENERATE_CLOUD,
    SD_ERR_EMPTY_ROI,
    SD_ERR_RESOLUTION_TOO_COARSE,
    SD_ERR_INVALID_CELL,
    SD_ERR_SINGULAR_KERNEL,
    SD_ERR_EXHAUSTED,
    SD_ERR_FRAME_MISMATCH,
    SD_ERR_OUT_OF_RANGE,
    SD_ERR_NUMERICAL_BLOWUP,
    SD_ERR_NO_CONTACT,
    SD_ERR_EMPTY_RECONSTRUCTION,
    SD_ERR_EMPTY_CLOUD,
    SD_ERR_EMPTY,
    SD_ERR_IO,
    SD_ERR_INTERNAL
} sd_status;

typedef struct sd_config sd_config;
typedef struct sd_report sd_report;
typedef struct sd_matrix sd_matrix;
typedef struct sd_cloud sd_cloud;

SD_API const char* sd_version(void);
SD_API const char* sd_last_error(void);
SD_API const char* sd_status_string(sd_status status);

/* ---- configuration (flat dotted keys, e.g. "phantom.k_skin") ---- */
SD_API sd_status sd_config_new_default(sd_config** out);
SD_API sd_status sd_config_load(const char* path, sd_config** out);
SD_API sd_status sd_config_parse(const char* json_text, sd_config** out);
SD_API sd_status sd_config_clone(const sd_config* cfg, sd_config** out);
SD_API sd_status sd_config_set(sd_config* cfg, const char* key, const char* value);
/* Copies the value (NUL-terminated) into buf when it fits; *needed receives
 * the required size including the terminator. */
SD_API sd_status sd_config_get(const sd_config* cfg, const char* key, char* buf, size_t buf_len,
                               size_t* needed);
SD_API sd_status sd_config_validate(const sd_config* cfg);
SD_API size_t sd_config_key_count(void);
SD_API const char* sd_config_key(size_t index);
SD_API void sd_config_free(sd_config* cfg);

/* ---- single condition ---- */
typedef struct sd_trial_summary {
    int index;
    uint64_t seed;
    int ok;
    sd_status failure; /* SD_OK when ok */
    double precision;
    double recall;
    double fscore;
    size_t n_recon;
    size_t n_probes;
    size_t n_tumor_probes;
    size_t n_trajectories;
    size_t n_waypoints;
    size_t n_boundary;
    size_t n_timeout;
    size_t n_lost_contact;
    size_t min_boundary_waypoints;
    double boundary_radius_sum;
    size_t force_bound_violations;
    double max_follow_duration;
    double wall_time;
} sd_trial_summary;

typedef struct sd_report_summary {
    double mean_f;
    double max_f;
    size_t trials;
    size_t failed;
    size_t total_waypoints;
    double wall_time;
} sd_report_summary;

SD_API sd_status sd_run_experiment(const sd_config* cfg, sd_report** out);
SD_API sd_status sd_report_summary_get(const sd_report* report, sd_report_summary* out);
SD_API sd_status sd_report_trial(const sd_report* report, size_t index, sd_trial_summary* out);
/* Failure message of a trial, or "" for successful trials. Valid until the report is freed. */
SD_API const char* sd_report_trial_failure(const sd_report* report, size_t index);
SD_API const char* sd_report_label(const sd_report* report);
SD_API void sd_report_free(sd_report* report);

/* ---- condition matrix ---- */
typedef struct sd_matrix_row {
    const char* condition; /* valid until the matrix is freed */
    const char* shape;
    double mean_f;
    double max_f;
    size_t palpations;
    int failed;
    int combined;
} sd_matrix_row;

SD_API sd_status sd_run_matrix(const sd_config* const* cfgs, size_t n, const char* out_dir,
                               sd_matrix** out);
/* The strategy x mode sweep for each shape in the comma-separated list. */
SD_API sd_status sd_run_table(const sd_config* base, const char* shapes_csv, const char* out_dir,
                              sd_matrix** out);
SD_API size_t sd_matrix_row_count(const sd_matrix* m);
SD_API sd_status sd_matrix_row_get(const sd_matrix* m, size_t index, sd_matrix_row* out);
SD_API void sd_matrix_free(sd_matrix* m);

/* ---- clouds and scoring ---- */
SD_API sd_status sd_export_ground_truth(const sd_config* cfg, const char* path);
SD_API sd_status sd_cloud_load_ply(const char* path, sd_cloud** out);
SD_API size_t sd_cloud_size(const sd_cloud* cloud);
SD_API sd_status sd_cloud_point(const sd_cloud* cloud, size_t index, double xyz[3]);
SD_API void sd_cloud_free(sd_cloud* cloud);

typedef struct sd_fscore_result {
    double precision;
    double recall;
    double fscore;
    size_t n_recon;
    size_t n_gt;
} sd_fscore_result;

SD_API sd_status sd_fscore(const sd_cloud* recon, const sd_cloud* gt, double r,
                           sd_fscore_result* out);

/* ---- closed-form helpers ---- */
SD_API sd_status sd_min_jerk_offset(double t, double amplitude, double* out);
SD_API sd_status sd_admissible_force(double kp, double kd, double e_thres, double period,
                                     double* out);

#ifdef __cplusplus
}
#endif

#endif
