// SPDX-License-Identifier: Apache-2.0
//
// The OpenMP kernels must agree bit for bit with the serial reference.

#include <cstring>
#include <random>
#include <vector>

#include "doctest.h"
#include "gdstrack/kernels.hpp"

using namespace gdstrack;

namespace {

std::vector<double> random_vec(std::size_t n, std::mt19937_64& rng) {
    std::normal_distribution<double> d(0.0, 1.0);
    std::vector<double> v(n);
    for (double& x : v) x = d(rng);
    return v;
}

bool same_bits(const std::vector<double>& a, const std::vector<double>& b) {
    return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

}  // namespace

TEST_CASE("matmul variants match the serial reference exactly") {
    std::mt19937_64 rng(7);
    const int shapes[][3] = {{1, 1, 1}, {3, 5, 7}, {64, 64, 64}, {128, 32, 96}, {17, 129, 3}};
    for (const auto& s : shapes) {
        const int m = s[0], k = s[1], n = s[2];
        for (bool acc : {false, true}) {
            const auto a = random_vec(static_cast<std::size_t>(m) * k, rng);
            const auto b = random_vec(static_cast<std::size_t>(k) * n, rng);
            const auto bt = random_vec(static_cast<std::size_t>(n) * k, rng);
            const auto at = random_vec(static_cast<std::size_t>(k) * m, rng);
            const auto init = random_vec(static_cast<std::size_t>(m) * n, rng);

            auto c1 = init, c2 = init;
            kernels::matmul(a.data(), b.data(), c1.data(), m, k, n, acc);
            kernels::serial::matmul(a.data(), b.data(), c2.data(), m, k, n, acc);
            CHECK(same_bits(c1, c2));

            c1 = init, c2 = init;
            kernels::matmul_nt(a.data(), bt.data(), c1.data(), m, k, n, acc);
            kernels::serial::matmul_nt(a.data(), bt.data(), c2.data(), m, k, n, acc);
            CHECK(same_bits(c1, c2));

            c1 = init, c2 = init;
            kernels::matmul_tn(at.data(), b.data(), c1.data(), m, k, n, acc);
            kernels::serial::matmul_tn(at.data(), b.data(), c2.data(), m, k, n, acc);
            CHECK(same_bits(c1, c2));
        }
    }
}

TEST_CASE("matmul computes the textbook product") {
    const std::vector<double> a = {1, 2, 3, 4, 5, 6};     // 2x3
    const std::vector<double> b = {7, 8, 9, 10, 11, 12};  // 3x2
    std::vector<double> c(4, 0.0);
    kernels::matmul(a.data(), b.data(), c.data(), 2, 3, 2, false);
    CHECK(c == std::vector<double>{58, 64, 139, 154});
    kernels::matmul(a.data(), b.data(), c.data(), 2, 3, 2, true);
    CHECK(c == std::vector<double>{116, 128, 278, 308});
}

TEST_CASE("im2col and col2im match the serial reference and are adjoint") {
    std::mt19937_64 rng(11);
    const int cases[][5] = {{3, 8, 8, 3, 1}, {4, 8, 8, 3, 2}, {2, 9, 7, 1, 1}, {5, 8, 8, 4, 4}, {1, 5, 5, 3, 2}};
    for (const auto& p : cases) {
        const int ch = p[0], h = p[1], w = p[2], kk = p[3], stride = p[4];
        const int pad = kk == 3 ? 1 : 0;
        const int oh = kernels::conv_out_size(h, kk, stride, pad), ow = kernels::conv_out_size(w, kk, stride, pad);
        const std::size_t ncols = static_cast<std::size_t>(ch) * kk * kk * oh * ow;
        const auto x = random_vec(static_cast<std::size_t>(ch) * h * w, rng);
        std::vector<double> c1(ncols), c2(ncols);
        kernels::im2col(x.data(), ch, h, w, kk, stride, pad, c1.data());
        kernels::serial::im2col(x.data(), ch, h, w, kk, stride, pad, c2.data());
        CHECK(same_bits(c1, c2));

        const auto y = random_vec(ncols, rng);
        std::vector<double> x1(x.size(), 0.0), x2(x.size(), 0.0);
        kernels::col2im(y.data(), ch, h, w, kk, stride, pad, x1.data());
        kernels::serial::col2im(y.data(), ch, h, w, kk, stride, pad, x2.data());
        CHECK(same_bits(x1, x2));

        // <im2col(x), y> == <x, col2im(y)>
        double lhs = 0.0, rhs = 0.0;
        for (std::size_t i = 0; i < ncols; ++i) lhs += c1[i] * y[i];
        for (std::size_t i = 0; i < x.size(); ++i) rhs += x[i] * x1[i];
        CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));
    }
}
