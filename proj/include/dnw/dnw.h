/* C interface to the dnw library. Every function returns a status code;
 * details of the most recent failure on the calling thread are available
 * from dnw_last_error(). Strings handed out by the library must be released
 * with dnw_string_free(). */
#ifndef DNW_DNW_H
#define DNW_DNW_H

#include <stddef.h>
#include <stdint.h>

#if defined(DNW_BUILDING_LIBRARY)
#define DNW_API __attribute__((visibility("default")))
#else
#define DNW_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum dnw_status {
    DNW_OK = 0,
    DNW_ERR_INVALID_RANGE = 1,
    DNW_ERR_NUMERIC = 2,
    DNW_ERR_BUDGET = 3,
    DNW_ERR_CONTRACT = 4,
    DNW_ERR_PARSE = 5,
    DNW_ERR_CONFIG = 6,
    DNW_ERR_IO = 7,
    DNW_ERR_NULL_ARGUMENT = 8,
    DNW_ERR_INTERNAL = 9
} dnw_status;

typedef struct dnw_graph dnw_graph;
typedef struct dnw_dataset dnw_dataset;

DNW_API const char* dnw_status_name(dnw_status status);
/* Empty string when the last call on this thread succeeded. */
DNW_API const char* dnw_last_error(void);
DNW_API void dnw_string_free(char* text);

/* Graph with the given block sizes (DAG connectivity, relu nodes) and
 * budget k. Fails with DNW_ERR_BUDGET when k exceeds the candidate count. */
DNW_API dnw_status dnw_graph_create(const int* blocks, size_t num_blocks, size_t k, uint64_t seed,
                                    dnw_graph** out);
DNW_API void dnw_graph_free(dnw_graph* graph);
DNW_API dnw_status dnw_graph_counts(const dnw_graph* graph, size_t* nodes, size_t* candidates, size_t* k);
/* Writes up to `capacity` real edges as (u, v) pairs; *count receives k. */
DNW_API dnw_status dnw_graph_real_edges(const dnw_graph* graph, int* u, int* v, size_t capacity, size_t* count);
DNW_API dnw_status dnw_graph_dead_nodes(const dnw_graph* graph, int* nodes, size_t capacity, size_t* count);

DNW_API dnw_status dnw_dataset_spirals(size_t n_per_class, size_t classes, double noise, uint64_t seed,
                                       dnw_dataset** out);
DNW_API dnw_status dnw_dataset_load_csv(const char* path, double test_fraction, uint64_t seed,
                                        dnw_dataset** out);
DNW_API dnw_status dnw_dataset_save_csv(const dnw_dataset* data, const char* path);
DNW_API dnw_status dnw_dataset_shape(const dnw_dataset* data, size_t* samples, size_t* features, size_t* classes);
DNW_API void dnw_dataset_free(dnw_dataset* data);

/* Runs a config file, writing metrics.jsonl and checkpoint.json to its
 * output directory. `metrics` (may be NULL) receives the JSONL text. */
DNW_API dnw_status dnw_run(const char* config_path, char** metrics);
/* Paired-seed comparison against a named baseline; `summary` (may be NULL)
 * receives summary.json. */
DNW_API dnw_status dnw_compare(const char* config_path, const char* baseline, size_t seeds, char** summary);
/* Zero counts select the defaults. *passed is 1 when every accepted case held. */
DNW_API dnw_status dnw_verify(size_t swap_scenarios, size_t general_scenarios, size_t descent_trials, uint64_t seed,
                              char** report, int* passed);
/* Budget table file to JSON and tab-separated text reports (either may be NULL). */
DNW_API dnw_status dnw_budget(const char* table_path, char** report_json, char** report_text);
DNW_API dnw_status dnw_edge_budget(long long channels_in, long long channels_out, double width_mult, long long* out);

#ifdef __cplusplus
}
#endif

#endif
