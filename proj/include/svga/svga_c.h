#ifndef SVGA_C_H
#define SVGA_C_H

#include <stddef.h>

#ifdef __cplusplus
extern "C" {
#endif

/* Stable C surface over the detector. Every function returns a status code;
 * svga_last_error() describes the most recent failure on this thread. Out
 * pointers are written only on SVGA_OK. */

typedef enum svga_status {
  SVGA_OK = 0,
  SVGA_ERR_INVALID_ARGUMENT = 1,
  SVGA_ERR_IO = 2,
  SVGA_ERR_PARSE = 3,
  SVGA_ERR_SHAPE = 4,
  SVGA_ERR_NUMERIC = 5,
  SVGA_ERR_CONFIG = 6,
  SVGA_ERR_STATE = 7,
  SVGA_ERR_UNKNOWN = 8
} svga_status;

typedef struct svga_config svga_config;
typedef struct svga_dataset svga_dataset;
typedef struct svga_model svga_model;
typedef struct svga_detections svga_detections;

const char* svga_last_error(void);
void svga_string_free(char* s);

/* -- configuration ------------------------------------------------------- */

svga_status svga_config_default(const char* class_set, svga_config** out);
svga_status svga_config_desk(svga_config** out);
svga_status svga_config_load(const char* path, svga_config** out);
svga_status svga_config_parse(const char* text, svga_config** out);
/* Values use the config file syntax for the key. */
svga_status svga_config_set(svga_config* cfg, const char* key, const char* value);
/* Caller frees with svga_string_free. */
svga_status svga_config_serialize(const svga_config* cfg, char** out_text);
void svga_config_free(svga_config* cfg);

/* -- datasets ------------------------------------------------------------ */

/* Synthetic or KITTI-layout per the config's dataset keys. */
svga_status svga_dataset_open(const svga_config* cfg, svga_dataset** out);
svga_status svga_dataset_size(const svga_dataset* ds, size_t* out);
svga_status svga_dataset_scene_id(const svga_dataset* ds, size_t index, char** out_id);
void svga_dataset_free(svga_dataset* ds);

/* -- models -------------------------------------------------------------- */

svga_status svga_model_create(const svga_config* cfg, svga_model** out);
/* Restores both config and weights from a checkpoint file. */
svga_status svga_model_open(const char* checkpoint_path, svga_model** out);
svga_status svga_model_save(const svga_model* model, const char* path);
/* Loads weights only; tensor names and shapes must match the model exactly. */
svga_status svga_model_load_weights(svga_model* model, const char* checkpoint_path);
svga_status svga_model_param_count(const svga_model* model, size_t* out);
svga_status svga_model_config(const svga_model* model, char** out_text);
void svga_model_free(svga_model* model);

/* -- training ------------------------------------------------------------ */

/* Runs the model's configured schedule over the dataset. When metrics_path
 * is non-NULL a tab-separated log (step, cls_loss, reg_loss, total, lr) is
 * written there. first_total/last_total may be NULL. */
svga_status svga_train(svga_model* model, svga_dataset* ds, const char* metrics_path,
                       double* first_total, double* last_total);

/* -- inference ----------------------------------------------------------- */

svga_status svga_infer_file(svga_model* model, const char* velodyne_path, svga_detections** out);
svga_status svga_infer_scene(svga_model* model, svga_dataset* ds, size_t index,
                             svga_detections** out);
svga_status svga_detections_count(const svga_detections* d, size_t* out);
/* Row layout: x y z l w h heading score class_id. */
svga_status svga_detections_row(const svga_detections* d, size_t index, double out_row[9]);
/* KITTI label lines with a trailing score column. */
svga_status svga_detections_write(const svga_detections* d, const char* path);
void svga_detections_free(svga_detections* d);

/* -- evaluation and timing ----------------------------------------------- */

/* AP over every scene of the dataset at the config's IoU criterion. The
 * report is human-readable; out_overall_ap is set to the overall-bucket AP
 * or -1 when no ground truth exists. */
svga_status svga_evaluate(svga_model* model, svga_dataset* ds, char** out_report,
                          double* out_overall_ap);

/* Times forward and forward+backward passes over the first dataset scene. */
svga_status svga_bench(svga_model* model, svga_dataset* ds, int iterations, char** out_report);

#ifdef __cplusplus
}
#endif

#endif /* SVGA_C_H */
