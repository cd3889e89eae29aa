#ifndef PLATOONCTL_H
#define PLATOONCTL_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#if defined(PLATOONCTL_BUILD)
#define PC_API __declspec(dllexport)
#else
#define PC_API __declspec(dllimport)
#endif
#else
#define PC_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum pc_status {
  PC_OK = 0,
  PC_ERR_ARGUMENT = 1,    /* null handle, bad enum, undersized buffer */
  PC_ERR_CONFIG = 2,      /* config text could not be parsed */
  PC_ERR_VALIDATION = 3,  /* config parsed but violates a constraint */
  PC_ERR_ANALYSIS = 4,    /* analysis inputs outside the admissible region */
  PC_ERR_RUNTIME = 5,     /* simulation aborted */
  PC_ERR_IO = 6
} pc_status;

typedef enum pc_case { PC_CASE_NONE = 0, PC_CASE_NORAMP = 1, PC_CASE_WRAMP = 2, PC_CASE_IDEAL = 3 } pc_case;

typedef struct pc_config pc_config;
typedef struct pc_run pc_run;
typedef struct pc_montecarlo pc_montecarlo;

/* Message of the last failed call on this thread, "" when none. */
PC_API const char* pc_last_error(void);
PC_API const char* pc_version(void);
PC_API const char* pc_status_name(pc_status status);

PC_API pc_status pc_case_parse(const char* name, pc_case* out);
PC_API const char* pc_case_name(pc_case c);

/* ---- Configuration ---- */

PC_API pc_status pc_config_reference(pc_config** out);
PC_API pc_status pc_config_parse(const char* text, pc_config** out);
PC_API pc_status pc_config_load(const char* path, pc_config** out);
PC_API void pc_config_free(pc_config* config);

/* Copies the canonical text into buf (NUL-terminated) when it fits. *needed
 * receives the length without the terminator. */
PC_API pc_status pc_config_serialize(const pc_config* config, char* buf, size_t cap, size_t* needed);
/* 64-bit FNV-1a of the canonical text. */
PC_API pc_status pc_config_hash(const pc_config* config, uint64_t* out);

/* Number of violations; each is "name: detail" and can be fetched by index. */
PC_API pc_status pc_config_validate(const pc_config* config, size_t* count);
PC_API pc_status pc_config_violation(const pc_config* config, size_t index, char* buf, size_t cap, size_t* needed);

PC_API pc_status pc_config_seed(const pc_config* config, uint64_t* out);
PC_API pc_status pc_config_set_seed(pc_config* config, uint64_t seed);
PC_API pc_status pc_config_cell_length(const pc_config* config, double* out);
PC_API pc_status pc_config_step(const pc_config* config, double* out);

typedef struct pc_discharge {
  double congested_density;  /* veh/km */
  double discharge_density;  /* veh/km */
  double discharge_flow;     /* veh/h */
  double capacity;           /* free-flow bottleneck capacity, veh/h */
  double capacity_drop;      /* (capacity - discharge_flow) / capacity */
} pc_discharge;

PC_API pc_status pc_config_discharge(const pc_config* config, pc_discharge* out);

/* Overtaking flow past a platoon in one- (lanes = 1) or two-lane mode. */
PC_API pc_status pc_config_overtaking_flow(const pc_config* config, int lanes, double* out);

/* ---- Single runs ---- */

typedef struct pc_run_options {
  int record_commands;
  int record_platoons;
  int spacetime_every; /* steps between space-time samples, 0 = off */
} pc_run_options;

PC_API uint64_t pc_run_seed(uint64_t master, uint64_t index);

/* options may be NULL. */
PC_API pc_status pc_run_scenario(const pc_config* config, pc_case c, uint64_t seed, const pc_run_options* options,
                                 pc_run** out);
PC_API void pc_run_free(pc_run* run);

/* tts[0..2] per class a, b, c; tts[3] total. veh*h */
PC_API pc_status pc_run_tts(const pc_run* run, double tts[4]);
PC_API pc_status pc_run_mass_balance_error(const pc_run* run, double* out);
PC_API pc_status pc_run_congested_steps(const pc_run* run, int* out);
PC_API pc_status pc_run_platoons(const pc_run* run, int* out);

/* Delay of run vs a paired ideal run, % of ideal TTS, same layout as tts. */
PC_API pc_status pc_run_delay(const pc_run* run, const pc_run* ideal, double delay[4]);

/* One runs.csv row (with trailing newline); ideal may be NULL. */
PC_API pc_status pc_run_row(const pc_run* run, const pc_run* ideal, char* buf, size_t cap, size_t* needed);
PC_API const char* pc_run_row_header(void);

/* Writes commands.csv, platoons.csv, outflow.csv and, when sampled,
 * spacetime.csv into dir, each file prefixed with prefix. */
PC_API pc_status pc_run_write_dumps(const pc_run* run, const pc_config* config, const char* dir, const char* prefix);

/* ---- Monte Carlo ---- */

PC_API pc_status pc_montecarlo_run(const pc_config* config, const pc_case* cases, size_t n_cases, int runs,
                                   uint64_t master_seed, int jobs, pc_montecarlo** out);
PC_API void pc_montecarlo_free(pc_montecarlo* mc);

typedef struct pc_case_stats {
  double mean_tts[4];
  double median_tts[4];
  double mean_delay[4];   /* valid when has_delay */
  double median_delay[4];
  int has_delay;
} pc_case_stats;

PC_API pc_status pc_montecarlo_stats(const pc_montecarlo* mc, pc_case c, pc_case_stats* out);
PC_API pc_status pc_montecarlo_run_count(const pc_montecarlo* mc, int* out);
/* Total TTS of the i-th run of a case. */
PC_API pc_status pc_montecarlo_run_tts(const pc_montecarlo* mc, pc_case c, int index, double tts[4]);
PC_API pc_status pc_montecarlo_seed(const pc_montecarlo* mc, int index, uint64_t* out);
/* summary.csv, runs.csv and boxplot.csv into dir. */
PC_API pc_status pc_montecarlo_write(const pc_montecarlo* mc, const char* dir);

/* ---- Analysis ---- */

typedef struct pc_analysis_params {
  double q_in, q_hi, q_lo, q_cap, q_dis; /* veh/h */
  double n_pi;                           /* veh */
  double tau_pi;                         /* h */
  double length;                         /* km */
  double u_min;                          /* km/h */
  double delta;                          /* veh */
  double p_star;
} pc_analysis_params;

PC_API pc_status pc_analysis_defaults(const pc_config* config, double q_in, pc_analysis_params* out);

typedef struct pc_analysis_report {
  int uncontrolled_stable;
  int ordering_ok;
  double effective_inflow;    /* Q^in + n_pi / tau_pi */
  double a, b;
  double threshold;           /* b / (1 - a) */
  double necessary_bound;     /* (q_dis - Q^lo) l / U_min */
  double phase_two_threshold; /* c */
  double throughput;          /* closed-form estimate, veh/h */
  double throughput_queue;    /* initial excess matched to the estimate */
} pc_analysis_report;

PC_API pc_status pc_analyze(const pc_analysis_params* params, pc_analysis_report* out);
PC_API pc_status pc_throughput_at(const pc_analysis_params* params, double n0, double* out);
PC_API pc_status pc_phase_two_count(const pc_analysis_params* params, double n0, int* out);
PC_API pc_status pc_recovery_count(const pc_analysis_params* params, double n, int* out);
PC_API pc_status pc_failure_probability(const pc_analysis_params* params, double n0, double* out);
PC_API pc_status pc_empirical_failure_rate(const pc_analysis_params* params, double n0, int trials, uint64_t seed,
                                           double* out);
/* Closed-loop queue-model run with periodic platoons; *decongested is 0 or 1. */
PC_API pc_status pc_periodic_decongests(const pc_analysis_params* params, double n0, int* decongested);

/* ---- Queue prediction ---- */

/* Reads a JSON state file and writes prediction.csv into dir. */
PC_API pc_status pc_predict_file(const pc_config* config, const char* state_path, const char* dir);

/* ---- Outputs ---- */

/* Writes manifest.txt in dir listing every file with its FNV-1a hash,
 * preceded by the given header lines. */
PC_API pc_status pc_write_manifest(const char* dir, const char* const* header, size_t n_header);

#ifdef __cplusplus
}
#endif

#endif
