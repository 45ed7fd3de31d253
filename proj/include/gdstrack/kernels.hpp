// SPDX-License-Identifier: Apache-2.0
//
// Dense compute kernels used by the autodiff tape. Every kernel exists twice:
// `kernels::serial` is the straight-line reference, `kernels::` is the OpenMP
// version. Both accumulate each output element in the same order, so their
// results are bit-identical; tests/test_kernels.cpp holds them to that.

#pragma once

namespace gdstrack::kernels {

/// c[m x n] (+)= a[m x k] * b[k x n]
void matmul(const double* a, const double* b, double* c, int m, int k, int n, bool accumulate);
/// c[m x n] (+)= a[m x k] * b[n x k]^T
void matmul_nt(const double* a, const double* b, double* c, int m, int k, int n, bool accumulate);
/// c[m x n] (+)= a[k x m]^T * b[k x n]
void matmul_tn(const double* a, const double* b, double* c, int m, int k, int n, bool accumulate);

/// Unfold x[channels x h x w] into cols[(channels*kernel*kernel) x (oh*ow)].
void im2col(const double* x, int channels, int h, int w, int kernel, int stride, int pad, double* cols);
/// Adjoint of im2col; accumulates into x.
void col2im(const double* cols, int channels, int h, int w, int kernel, int stride, int pad, double* x);

inline int conv_out_size(int in, int kernel, int stride, int pad) { return (in + 2 * pad - kernel) / stride + 1; }

namespace serial {
void matmul(const double* a, const double* b, double* c, int m, int k, int n, bool accumulate);
void matmul_nt(const double* a, const double* b, double* c, int m, int k, int n, bool accumulate);
void matmul_tn(const double* a, const double* b, double* c, int m, int k, int n, bool accumulate);
void im2col(const double* x, int channels, int h, int w, int kernel, int stride, int pad, double* cols);
void col2im(const double* cols, int channels, int h, int w, int kernel, int stride, int pad, double* x);
}  // namespace serial

}  // namespace gdstrack::kernels
