// SPDX-License-Identifier: Apache-2.0

#include "gdstrack/kernels.hpp"

#include <algorithm>
#include <cstddef>

namespace gdstrack::kernels {

namespace {

// Below this many multiply-adds a parallel region costs more than it saves.
constexpr long kParallelWork = 1L << 15;

inline long work(int m, int k, int n) { return static_cast<long>(m) * k * n; }

inline void matmul_row(const double* a, const double* b, double* crow, int i, int k, int n, bool accumulate) {
    if (!accumulate) std::fill(crow, crow + n, 0.0);
    const double* arow = a + static_cast<std::size_t>(i) * k;
    for (int p = 0; p < k; ++p) {
        const double av = arow[p];
        if (av == 0.0) continue;
        const double* brow = b + static_cast<std::size_t>(p) * n;
        for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
}

inline void matmul_nt_row(const double* a, const double* b, double* crow, int i, int k, int n, bool accumulate) {
    const double* arow = a + static_cast<std::size_t>(i) * k;
    for (int j = 0; j < n; ++j) {
        const double* brow = b + static_cast<std::size_t>(j) * k;
        double s = 0.0;
        for (int p = 0; p < k; ++p) s += arow[p] * brow[p];
        crow[j] = accumulate ? crow[j] + s : s;
    }
}

inline void matmul_tn_row(const double* a, const double* b, double* crow, int i, int m, int k, int n,
                          bool accumulate) {
    if (!accumulate) std::fill(crow, crow + n, 0.0);
    for (int p = 0; p < k; ++p) {
        const double av = a[static_cast<std::size_t>(p) * m + i];
        if (av == 0.0) continue;
        const double* brow = b + static_cast<std::size_t>(p) * n;
        for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
}

inline void im2col_channel(const double* x, int c, int h, int w, int kernel, int stride, int pad, double* cols) {
    const int oh = conv_out_size(h, kernel, stride, pad);
    const int ow = conv_out_size(w, kernel, stride, pad);
    const double* xc = x + static_cast<std::size_t>(c) * h * w;
    for (int ky = 0; ky < kernel; ++ky) {
        for (int kx = 0; kx < kernel; ++kx) {
            const std::size_t row = (static_cast<std::size_t>(c) * kernel + ky) * kernel + kx;
            double* out = cols + row * oh * ow;
            for (int oy = 0; oy < oh; ++oy) {
                const int iy = oy * stride - pad + ky;
                for (int ox = 0; ox < ow; ++ox) {
                    const int ix = ox * stride - pad + kx;
                    out[oy * ow + ox] = (iy >= 0 && iy < h && ix >= 0 && ix < w) ? xc[iy * w + ix] : 0.0;
                }
            }
        }
    }
}

inline void col2im_channel(const double* cols, int c, int h, int w, int kernel, int stride, int pad, double* x) {
    const int oh = conv_out_size(h, kernel, stride, pad);
    const int ow = conv_out_size(w, kernel, stride, pad);
    double* xc = x + static_cast<std::size_t>(c) * h * w;
    for (int ky = 0; ky < kernel; ++ky) {
        for (int kx = 0; kx < kernel; ++kx) {
            const std::size_t row = (static_cast<std::size_t>(c) * kernel + ky) * kernel + kx;
            const double* in = cols + row * oh * ow;
            for (int oy = 0; oy < oh; ++oy) {
                const int iy = oy * stride - pad + ky;
                if (iy < 0 || iy >= h) continue;
                for (int ox = 0; ox < ow; ++ox) {
                    const int ix = ox * stride - pad + kx;
                    if (ix < 0 || ix >= w) continue;
                    xc[iy * w + ix] += in[oy * ow + ox];
                }
            }
        }
    }
}

}  // namespace

void matmul(const double* a, const double* b, double* c, int m, int k, int n, bool accumulate) {
#pragma omp parallel for schedule(static) if (work(m, k, n) > kParallelWork)
    for (int i = 0; i < m; ++i) matmul_row(a, b, c + static_cast<std::size_t>(i) * n, i, k, n, accumulate);
}

void matmul_nt(const double* a, const double* b, double* c, int m, int k, int n, bool accumulate) {
#pragma omp parallel for schedule(static) if (work(m, k, n) > kParallelWork)
    for (int i = 0; i < m; ++i) matmul_nt_row(a, b, c + static_cast<std::size_t>(i) * n, i, k, n, accumulate);
}

void matmul_tn(const double* a, const double* b, double* c, int m, int k, int n, bool accumulate) {
#pragma omp parallel for schedule(static) if (work(m, k, n) > kParallelWork)
    for (int i = 0; i < m; ++i) matmul_tn_row(a, b, c + static_cast<std::size_t>(i) * n, i, m, k, n, accumulate);
}

void im2col(const double* x, int channels, int h, int w, int kernel, int stride, int pad, double* cols) {
#pragma omp parallel for schedule(static) if (work(channels, h * w, kernel * kernel) > kParallelWork)
    for (int c = 0; c < channels; ++c) im2col_channel(x, c, h, w, kernel, stride, pad, cols);
}

void col2im(const double* cols, int channels, int h, int w, int kernel, int stride, int pad, double* x) {
#pragma omp parallel for schedule(static) if (work(channels, h * w, kernel * kernel) > kParallelWork)
    for (int c = 0; c < channels; ++c) col2im_channel(cols, c, h, w, kernel, stride, pad, x);
}

namespace serial {

void matmul(const double* a, const double* b, double* c, int m, int k, int n, bool accumulate) {
    for (int i = 0; i < m; ++i) matmul_row(a, b, c + static_cast<std::size_t>(i) * n, i, k, n, accumulate);
}

void matmul_nt(const double* a, const double* b, double* c, int m, int k, int n, bool accumulate) {
    for (int i = 0; i < m; ++i) matmul_nt_row(a, b, c + static_cast<std::size_t>(i) * n, i, k, n, accumulate);
}

void matmul_tn(const double* a, const double* b, double* c, int m, int k, int n, bool accumulate) {
    for (int i = 0; i < m; ++i) matmul_tn_row(a, b, c + static_cast<std::size_t>(i) * n, i, m, k, n, accumulate);
}

void im2col(const double* x, int channels, int h, int w, int kernel, int stride, int pad, double* cols) {
    for (int c = 0; c < channels; ++c) im2col_channel(x, c, h, w, kernel, stride, pad, cols);
}

void col2im(const double* cols, int channels, int h, int w, int kernel, int stride, int pad, double* x) {
    for (int c = 0; c < channels; ++c) col2im_channel(cols, c, h, w, kernel, stride, pad, x);
}

}  // namespace serial

}  // namespace gdstrack::kernels
