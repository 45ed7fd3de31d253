// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <limits>
#include <random>

#include "doctest.h"
#include "gdstrack/amg.hpp"
#include "oracles.hpp"

using namespace gdstrack;

namespace {

Tensor random_matrix(int r, int c, std::mt19937_64& rng) {
    Tensor t = Tensor::matrix(r, c);
    std::normal_distribution<double> d(0.0, 1.0);
    for (double& v : t.storage()) v = d(rng);
    return t;
}

oracle::Matrix rows(const Tensor& t) {
    oracle::Matrix m(static_cast<std::size_t>(t.rows()), std::vector<double>(static_cast<std::size_t>(t.cols())));
    for (int i = 0; i < t.rows(); ++i)
        for (int j = 0; j < t.cols(); ++j) m[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] = t.at(i, j);
    return m;
}

Tensor identity(int n) {
    Tensor t = Tensor::matrix(n, n);
    for (int i = 0; i < n; ++i) t.at(i, i) = 1.0;
    return t;
}

}  // namespace

TEST_CASE("concatenation stacks RGB rows above IR rows") {
    std::mt19937_64 rng(1);
    const Tensor fv = random_matrix(4, 8, rng), fi = random_matrix(4, 8, rng);
    const Tensor x = concat_modalities(fv, fi);
    CHECK(x.shape() == std::vector<int>{8, 8});
    CHECK(x.at(0, 3) == fv.at(0, 3));
    CHECK(x.at(5, 2) == fi.at(1, 2));
    const Tensor same = concat_modalities(fv, fv);
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 8; ++j) CHECK(same.at(i, j) == same.at(i + 4, j));
    CHECK_THROWS(concat_modalities(fv, random_matrix(3, 8, rng)));
}

TEST_CASE("similarity examples") {
    const Tensor f({1, 4}, std::vector<double>{1, 0, 0, 0});
    const SimilarityBundle b = modality_similarity(f, identity(4), identity(4), 4);
    CHECK(b.s1.at(0, 0) == 0.5);

    const Tensor g({2, 2}, std::vector<double>{1, 0, 0, 1});
    const SimilarityBundle c = modality_similarity(g, identity(2), identity(2), 2);
    CHECK(c.s2.at(0, 0) == 1.0);
    CHECK(c.s2.at(0, 1) == 0.0);
    CHECK(c.s2.at(1, 0) == 0.0);
    CHECK(c.s2.at(1, 1) == 1.0);
    CHECK(c.mask.at(0, 1) == (c.s1.at(0, 1) + 0.0 + 1.0) / 2.0);

    // M = (S1 + S2 + 1) / 2 at single cells.
    const Tensor h({2, 1}, std::vector<double>{1, -1});
    const Tensor zero = Tensor::matrix(1, 1);
    const SimilarityBundle e = modality_similarity(h, zero, zero, 1);
    CHECK(e.s1.at(0, 1) == 0.0);
    CHECK(e.s2.at(0, 1) == -1.0);
    CHECK(e.mask.at(0, 1) == 0.0);
    CHECK(e.mask.at(0, 0) == 1.0);
}

TEST_CASE("non-finite features are rejected") {
    Tensor f = Tensor::matrix(2, 2, 1.0);
    f.at(1, 1) = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS(modality_similarity(f, identity(2), identity(2), 2));
}

TEST_CASE("masked softmax examples") {
    const Tensor s1({1, 1}, std::vector<double>{2.0});
    const Tensor m({1, 1}, std::vector<double>{0.4});
    CHECK(mask_normalize(s1, m, 0.5).at(0, 0) == 0.0);

    const Tensor s({1, 3}, std::vector<double>{5.0, 0.0, 0.0});
    const Tensor mk({1, 3}, std::vector<double>{0.2, 0.9, 0.9});
    const Tensor out = mask_normalize(s, mk, 0.5);
    CHECK(out.at(0, 0) == 0.0);
    CHECK(out.at(0, 1) == 0.5);
    CHECK(out.at(0, 2) == 0.5);

    std::mt19937_64 rng(4);
    const Tensor r = random_matrix(3, 5, rng), anymask = random_matrix(3, 5, rng);
    const Tensor full = mask_normalize(r, anymask, -std::numeric_limits<double>::infinity());
    for (int i = 0; i < 3; ++i) {
        double z = 0.0;
        for (int j = 0; j < 5; ++j) z += std::exp(r.at(i, j));
        for (int j = 0; j < 5; ++j) CHECK(full.at(i, j) == doctest::Approx(std::exp(r.at(i, j)) / z).epsilon(1e-12));
    }
}

TEST_CASE("top-k and symmetrisation examples") {
    const Tensor a({1, 3}, std::vector<double>{0.5, 0.3, 0.2});
    const Tensor ta = top_k_rows(a, 2, true);
    CHECK(ta.storage() == std::vector<double>{1, 1, 0});
    const Tensor b({1, 3}, std::vector<double>{0.4, 0.4, 0.2});
    CHECK(top_k_rows(b, 1, true).storage() == std::vector<double>{1, 0, 0});
    const Tensor d({2, 2}, std::vector<double>{1, 1, 0, 1});
    CHECK(symmetrize(d).storage() == std::vector<double>{1, 0.5, 0.5, 1});
    const Tensor z = Tensor::matrix(3, 3);
    CHECK(top_k_rows(z, 2, true).storage() == identity(3).storage());
    CHECK_THROWS(top_k_rows(a, 4, true));
}

TEST_CASE("identity mode ignores its inputs") {
    std::mt19937_64 rng(2);
    AmgConfig cfg;
    cfg.mode = AdjacencyMode::identity;
    cfg.d_k = 8;
    const AdjacencyResult r =
        generate_adjacency(random_matrix(4, 8, rng), random_matrix(4, 8, rng), random_matrix(8, 8, rng),
                           random_matrix(8, 8, rng), cfg);
    CHECK(r.adjacency.storage() == identity(8).storage());
}

TEST_CASE("k = 2N saturates every unmasked row") {
    std::mt19937_64 rng(3);
    AmgConfig cfg;
    cfg.d_k = 8;
    cfg.top_k = 8;
    cfg.theta = -std::numeric_limits<double>::infinity();
    const AdjacencyResult r =
        generate_adjacency(random_matrix(4, 8, rng), random_matrix(4, 8, rng), random_matrix(8, 8, rng),
                           random_matrix(8, 8, rng), cfg);
    for (double v : r.adjacency.values()) CHECK(v == 1.0);
    cfg.theta = 0.5;
    const AdjacencyResult s =
        generate_adjacency(random_matrix(4, 8, rng), random_matrix(4, 8, rng), random_matrix(8, 8, rng),
                           random_matrix(8, 8, rng), cfg);
    for (double v : s.adjacency.values()) CHECK((v == 0.0 || v == 0.5 || v == 1.0));
}

TEST_CASE("amg mode matches the scalar oracle on random inputs") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        std::mt19937_64 rng(seed);
        AmgConfig cfg;
        cfg.d_k = 8;
        cfg.top_k = 3;
        const Tensor fv = random_matrix(4, 8, rng), fi = random_matrix(4, 8, rng);
        const Tensor wq = random_matrix(8, 8, rng), wk = random_matrix(8, 8, rng);
        const AdjacencyResult r = generate_adjacency(fv, fi, wq, wk, cfg);
        const oracle::AmgOutput o = oracle::amg(rows(fv), rows(fi), rows(wq), rows(wk), cfg.theta, cfg.top_k);
        for (int i = 0; i < 8; ++i)
            for (int j = 0; j < 8; ++j) {
                const auto a = static_cast<std::size_t>(i), b = static_cast<std::size_t>(j);
                CHECK(std::abs(r.similarity.s1.at(i, j) - o.s1[a][b]) < 1e-10);
                CHECK(std::abs(r.similarity.s2.at(i, j) - o.s2[a][b]) < 1e-10);
                CHECK(std::abs(r.similarity.normalized.at(i, j) - o.s_prime[a][b]) < 1e-10);
                CHECK(r.adjacency.at(i, j) == o.a[a][b]);
            }
    }
}

TEST_CASE("the generator registers frozen projections") {
    ParamStore store;
    Rng rng(1);
    const Amg amg(AmgConfig{}, 64, store, rng);
    CHECK(store[store.id("amg.w_q")].value.shape() == std::vector<int>{64, 64});
    CHECK_FALSE(store[store.id("amg.w_q")].trainable);
    CHECK_FALSE(store[store.id("amg.w_k")].trainable);
    CHECK(parse_adjacency_mode("cosine") == AdjacencyMode::cosine);
    CHECK_THROWS(parse_adjacency_mode("bogus"));
}
