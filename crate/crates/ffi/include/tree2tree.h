#ifndef TREE2TREE_H
#define TREE2TREE_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Outcome of a call. Matches the CLI exit codes, with one extra code for
 * argument errors that a shell would catch before the process even ran.
 */
typedef enum T2tStatus {
  T2tStatus_Ok = 0,
  T2tStatus_Other = 1,
  T2tStatus_Syntax = 2,
  T2tStatus_DecodeLimit = 3,
  T2tStatus_Data = 4,
  T2tStatus_InvalidArgument = 5,
} T2tStatus;

/**
 * A loaded translation model.
 */
typedef struct T2tModel T2tModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Returns the library version as a static string. Never fails.
 */
const char *t2t_version(void);

/**
 * Returns the message of the last failure on this thread, or an empty
 * string after a success. The pointer stays valid until the next call
 * into this library on the same thread.
 */
const char *t2t_last_error_message(void);

/**
 * Loads a model checkpoint from `path` into `*out`.
 *
 * # Safety
 * `path` must be a valid NUL-terminated string and `out` a valid pointer.
 * On success the caller owns the handle and must release it with
 * [`t2t_model_free`]; on failure `*out` is set to null.
 */
enum T2tStatus t2t_model_load(const char *path, struct T2tModel **out);

/**
 * Releases a handle returned by [`t2t_model_load`]. Null is ignored.
 *
 * # Safety
 * `model` must be null or a handle from [`t2t_model_load`] that has not
 * been freed yet.
 */
void t2t_model_free(struct T2tModel *model);

/**
 * Translates the FOR program in `source` with a loaded model, writing a
 * newly allocated LAMBDA program text to `*out`.
 *
 * # Safety
 * `model` must be a live handle from [`t2t_model_load`], `source` a valid
 * NUL-terminated string, and `out` a valid pointer. On failure `*out` is
 * set to null.
 */
enum T2tStatus t2t_model_translate(const struct T2tModel *model, const char *source, char **out);

/**
 * Translates the FOR program in `source` with the reference translator,
 * writing a newly allocated LAMBDA program text to `*out`. With
 * `literal_loop_entry` the outer application of a translated loop repeats
 * the step expression instead of the initializer.
 *
 * # Safety
 * `source` must be a valid NUL-terminated string and `out` a valid
 * pointer. On failure `*out` is set to null.
 */
enum T2tStatus t2t_oracle_translate(const char *source, bool literal_loop_entry, char **out);

/**
 * Releases a string returned through an `out` parameter. Null is ignored.
 *
 * # Safety
 * `s` must be null or a string returned by this library that has not been
 * freed yet.
 */
void t2t_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* TREE2TREE_H */
