#ifndef QUASITUBAL_H
#define QUASITUBAL_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/*
 Result code of every fallible call.
 */
typedef enum QttStatus {
  QTT_STATUS_OK = 0,
  QTT_STATUS_NULL_POINTER = 1,
  QTT_STATUS_INVALID_ARGUMENT = 2,
  QTT_STATUS_DIMENSION_MISMATCH = 3,
  /*
   The result has infinite Hilbert-Schmidt norm.
   */
  QTT_STATUS_NOT_IN_H = 4,
  QTT_STATUS_NUMERICAL = 5,
  QTT_STATUS_IO = 6,
  QTT_STATUS_FORMAT = 7,
  QTT_STATUS_PANIC = 8,
} QttStatus;

/*
 Ordered rank-1 components.
 */
typedef struct QttComponents QttComponents;

/*
 q-SVD factors `U`, `S`, `V`.
 */
typedef struct QttQsvd QttQsvd;

/*
 Tensor over all of Z, stored as a band of slices plus a constant tail.
 */
typedef struct QttTensor QttTensor;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Message for the last failed call on this thread; empty after a success.
 The pointer stays valid until the next call on the same thread.
 */
const char *qtt_last_error(void);

/*
 Library version as a static NUL-terminated string.
 */
const char *qtt_version(void);

/*
 Build a tensor from `n_slices` band slices starting at index `lo` and an
 optional tail slice (`NULL` for zero).

 # Safety
 `band` must hold `2*m*p*n_slices` doubles; `tail`, when non-null, `2*m*p`.
 */
enum QttStatus qtt_tensor_new(uintptr_t m,
                              uintptr_t p,
                              int64_t lo,
                              uintptr_t n_slices,
                              const double *band,
                              const double *tail,
                              struct QttTensor **out);

/*
 # Safety
 `t` must be null or a handle from this library that has not been freed.
 */
void qtt_tensor_free(struct QttTensor *t);

/*
 Shape and stored band. `n_slices` is 0 when only the tail is stored.

 # Safety
 `t` must be a live handle; output pointers may be null.
 */
enum QttStatus qtt_tensor_info(const struct QttTensor *t,
                               uintptr_t *m,
                               uintptr_t *p,
                               int64_t *lo,
                               uintptr_t *n_slices);

/*
 Copy slice `k` (any integer; outside the band it is the tail) into `buf`.

 # Safety
 `buf` must have room for `2*m*p` doubles.
 */
enum QttStatus qtt_tensor_slice(const struct QttTensor *t, int64_t k, double *buf);

/*
 Hilbert-Schmidt norm; returns `NotInH` when the tail is nonzero.

 # Safety
 `t` must be a live handle and `out` writable.
 */
enum QttStatus qtt_tensor_h_norm(const struct QttTensor *t, double *out);

/*
 Operator norm: the largest singular value over all slices.

 # Safety
 `t` must be a live handle and `out` writable.
 */
enum QttStatus qtt_tensor_op_norm(const struct QttTensor *t, double *out);

/*
 # Safety
 `t` must be a live handle.
 */
enum QttStatus qtt_tensor_write(const struct QttTensor *t, const char *path);

/*
 # Safety
 `path` must be a NUL-terminated string.
 */
enum QttStatus qtt_tensor_read(const char *path, struct QttTensor **out);

/*
 # Safety
 `t` must be a live handle.
 */
enum QttStatus qtt_qsvd(const struct QttTensor *t, struct QttQsvd **out);

/*
 # Safety
 `q` must be null or a handle from this library that has not been freed.
 */
void qtt_qsvd_free(struct QttQsvd *q);

/*
 Number of nonzero singular tubes.

 # Safety
 `q` must be a live handle and `out` writable.
 */
enum QttStatus qtt_qsvd_qrank(const struct QttQsvd *q, uintptr_t *out);

/*
 `U S V^H` as a new tensor.

 # Safety
 `q` must be a live handle.
 */
enum QttStatus qtt_qsvd_recompose(const struct QttQsvd *q, struct QttTensor **out);

/*
 Keep the `n` largest rank-1 components; needs a zero singular tail.

 # Safety
 `q` must be a live handle.
 */
enum QttStatus qtt_truncate_explicit(const struct QttQsvd *q, uintptr_t n, struct QttTensor **out);

/*
 Keep the first `r` singular tubes.

 # Safety
 `q` must be a live handle.
 */
enum QttStatus qtt_truncate_qrank(const struct QttQsvd *q, uintptr_t r, struct QttTensor **out);

/*
 # Safety
 `q` must be a live handle.
 */
enum QttStatus qtt_qsvd_write(const struct QttQsvd *q, const char *path);

/*
 # Safety
 `path` must be a NUL-terminated string.
 */
enum QttStatus qtt_qsvd_read(const char *path, struct QttQsvd **out);

/*
 Leading `n` components in global order; `n = 0` takes all of them.

 # Safety
 `q` must be a live handle.
 */
enum QttStatus qtt_components(const struct QttQsvd *q, uintptr_t n, struct QttComponents **out);

/*
 Streaming extraction of the `n` leading components of a tail-zero tensor,
 reading slices only as band certificates require.

 # Safety
 `t` must be a live handle; `slices_evaluated` may be null.
 */
enum QttStatus qtt_extract(const struct QttTensor *t,
                           uintptr_t n,
                           struct QttComponents **out,
                           uintptr_t *slices_evaluated);

/*
 # Safety
 `c` must be null or a handle from this library that has not been freed.
 */
void qtt_components_free(struct QttComponents *c);

/*
 Number of components; 0 for a null handle.

 # Safety
 `c` must be null or a live handle.
 */
uintptr_t qtt_components_len(const struct QttComponents *c);

/*
 Singular value, slice index `t` and in-slice index `l` of component `i`.

 # Safety
 `c` must be a live handle; output pointers may be null.
 */
enum QttStatus qtt_components_get(const struct QttComponents *c,
                                  uintptr_t i,
                                  double *sigma,
                                  int64_t *t,
                                  uintptr_t *l);

/*
 # Safety
 `c` must be a live handle.
 */
enum QttStatus qtt_components_write(const struct QttComponents *c, const char *path);

/*
 # Safety
 `path` must be a NUL-terminated string.
 */
enum QttStatus qtt_components_read(const char *path, struct QttComponents **out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* QUASITUBAL_H */
