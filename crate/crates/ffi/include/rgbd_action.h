#ifndef RGBD_ACTION_H
#define RGBD_ACTION_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/*
 Result code of every fallible call.
 */
typedef enum RgbdStatus {
  RGBD_STATUS_OK = 0,
  /*
   A required pointer argument was null.
   */
  RGBD_STATUS_NULL_ARGUMENT = 1,
  /*
   A string argument was not valid UTF-8 or an argument was out of range.
   */
  RGBD_STATUS_INVALID_ARGUMENT = 2,
  RGBD_STATUS_IO = 3,
  /*
   Malformed or inconsistent input data.
   */
  RGBD_STATUS_DATA = 4,
  /*
   Bad configuration file or override.
   */
  RGBD_STATUS_CONFIG = 5,
  /*
   Model archive could not be read.
   */
  RGBD_STATUS_MODEL = 6,
  RGBD_STATUS_NUMERICAL = 7,
  /*
   Internal panic; the handle arguments should be considered unusable.
   */
  RGBD_STATUS_PANIC = 8,
} RgbdStatus;

/*
 A trained pipeline.
 */
typedef struct RgbdModel RgbdModel;

/*
 The result of classifying one sample.
 */
typedef struct RgbdPrediction RgbdPrediction;

/*
 A skeleton plus depth sample.
 */
typedef struct RgbdSample RgbdSample;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Message of the last failing call on this thread, or null. The pointer is
 valid until the next failing call on the same thread.
 */
const char *rgbd_last_error_message(void);

/*
 Library version as a static NUL-terminated string.
 */
const char *rgbd_version(void);

/*
 Load a model archive.

 # Safety
 `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum RgbdStatus rgbd_model_load(const char *path, struct RgbdModel **out);

/*
 Train on a labeled manifest. `config_path` may be null for defaults.

 # Safety
 String arguments must be NUL-terminated or null where allowed; `out` must be valid.
 */
enum RgbdStatus rgbd_model_train(const char *manifest_path,
                                 const char *config_path,
                                 struct RgbdModel **out);

/*
 Write a model archive.

 # Safety
 `model` must come from this library; `path` must be NUL-terminated.
 */
enum RgbdStatus rgbd_model_save(const struct RgbdModel *model, const char *path);

/*
 # Safety
 `model` must be null or come from this library, and not be used afterwards.
 */
void rgbd_model_free(struct RgbdModel *model);

/*
 Number of action classes, 0 for a null handle.

 # Safety
 `model` must be null or come from this library.
 */
size_t rgbd_model_class_count(const struct RgbdModel *model);

/*
 Name of class `index`, or null when out of range.

 # Safety
 `model` must be null or come from this library.
 */
const char *rgbd_model_class_name(const struct RgbdModel *model, size_t index);

/*
 Number of segment symbols the model knows, 0 for a null handle.

 # Safety
 `model` must be null or come from this library.
 */
size_t rgbd_model_symbol_count(const struct RgbdModel *model);

/*
 Load a sample from a skeleton text file and a depth binary file.

 # Safety
 Paths must be NUL-terminated strings; `out` must be valid.
 */
enum RgbdStatus rgbd_sample_load(const char *skeleton_path,
                                 const char *depth_path,
                                 size_t joint_count,
                                 struct RgbdSample **out);

/*
 Generate a synthetic sample from motion template `template_id`.

 # Safety
 `out` must be valid.
 */
enum RgbdStatus rgbd_sample_synthetic(uint32_t template_id,
                                      uint32_t frames,
                                      double noise_sigma,
                                      uint64_t seed,
                                      struct RgbdSample **out);

/*
 Number of frames, 0 for a null handle.

 # Safety
 `sample` must be null or come from this library.
 */
size_t rgbd_sample_frame_count(const struct RgbdSample *sample);

/*
 # Safety
 `sample` must be null or come from this library, and not be used afterwards.
 */
void rgbd_sample_free(struct RgbdSample *sample);

/*
 Classify a sample.

 # Safety
 Handles must come from this library; `out` must be valid.
 */
enum RgbdStatus rgbd_predict(const struct RgbdModel *model,
                             const struct RgbdSample *sample,
                             struct RgbdPrediction **out);

/*
 Predicted class index, or -1 for a null handle.

 # Safety
 `pred` must be null or come from this library.
 */
int64_t rgbd_prediction_class_id(const struct RgbdPrediction *pred);

/*
 Predicted class name, owned by the prediction.

 # Safety
 `pred` must be null or come from this library.
 */
const char *rgbd_prediction_class_name(const struct RgbdPrediction *pred);

/*
 Segment symbol sequence; `len` receives its length.

 # Safety
 `pred` must be null or come from this library; `len` must be valid or null.
 */
const uint32_t *rgbd_prediction_symbols(const struct RgbdPrediction *pred, size_t *len);

/*
 Per-class HMM likelihood features fed to the SVM; `len` receives the class count.

 # Safety
 `pred` must be null or come from this library; `len` must be valid or null.
 */
const double *rgbd_prediction_features(const struct RgbdPrediction *pred, size_t *len);

/*
 # Safety
 `pred` must be null or come from this library, and not be used afterwards.
 */
void rgbd_prediction_free(struct RgbdPrediction *pred);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* RGBD_ACTION_H */
