// SPDX-License-Identifier: Apache-2.0

#include "gdstrack/amg.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "gdstrack/kernels.hpp"

namespace gdstrack {

AdjacencyMode parse_adjacency_mode(const std::string& s) {
    if (s == "amg") return AdjacencyMode::amg;
    if (s == "identity") return AdjacencyMode::identity;
    if (s == "qkv") return AdjacencyMode::qkv;
    if (s == "cosine") return AdjacencyMode::cosine;
    throw std::invalid_argument("unknown adjacency mode: " + s);
}

std::string to_string(AdjacencyMode mode) {
    switch (mode) {
        case AdjacencyMode::amg: return "amg";
        case AdjacencyMode::identity: return "identity";
        case AdjacencyMode::qkv: return "qkv";
        case AdjacencyMode::cosine: return "cosine";
    }
    return "?";
}

Tensor concat_modalities(const Tensor& fv, const Tensor& fi) {
    if (!fv.same_shape(fi) || fv.ndim() != 2) throw std::invalid_argument("concat_modalities: shape mismatch");
    std::vector<double> data(fv.values().begin(), fv.values().end());
    data.insert(data.end(), fi.values().begin(), fi.values().end());
    return Tensor({2 * fv.rows(), fv.cols()}, std::move(data));
}

SimilarityBundle modality_similarity(const Tensor& fvi, const Tensor& w_q, const Tensor& w_k, int d_k) {
    if (d_k <= 0) throw std::invalid_argument("modality_similarity: d_k must be positive");
    const int n = fvi.rows(), d = fvi.cols();
    if (w_q.rows() != d || w_k.rows() != d || w_q.cols() != d_k || w_k.cols() != d_k) {
        throw std::invalid_argument("modality_similarity: projection shape mismatch");
    }
    for (double v : fvi.values())
        if (!std::isfinite(v)) throw std::invalid_argument("modality_similarity: non-finite features");
    Tensor q = Tensor::matrix(n, d_k), k = Tensor::matrix(n, d_k);
    kernels::matmul(fvi.data(), w_q.data(), q.data(), n, d, d_k, false);
    kernels::matmul(fvi.data(), w_k.data(), k.data(), n, d, d_k, false);
    SimilarityBundle b;
    b.s1 = Tensor::matrix(n, n);
    kernels::matmul_nt(q.data(), k.data(), b.s1.data(), n, d_k, n, false);
    const double inv = 1.0 / std::sqrt(static_cast<double>(d_k));
    for (double& v : b.s1.values()) v *= inv;

    std::vector<double> norms(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        double s = 0.0;
        for (int c = 0; c < d; ++c) s += fvi.at(i, c) * fvi.at(i, c);
        norms[static_cast<std::size_t>(i)] = std::sqrt(s);
    }
    b.s2 = Tensor::matrix(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = i; j < n; ++j) {
            const double ni = norms[static_cast<std::size_t>(i)], nj = norms[static_cast<std::size_t>(j)];
            double v = 0.0;
            if (ni > 0.0 && nj > 0.0) {
                double dot = 0.0;
                for (int c = 0; c < d; ++c) dot += fvi.at(i, c) * fvi.at(j, c);
                v = i == j ? 1.0 : dot / (ni * nj);
            }
            b.s2.at(i, j) = v;
            b.s2.at(j, i) = v;
        }
    b.mask = Tensor::matrix(n, n);
    for (std::size_t i = 0; i < b.mask.size(); ++i) b.mask[i] = (b.s1[i] + b.s2[i] + 1.0) / 2.0;
    return b;
}

Tensor mask_normalize(const Tensor& s1, const Tensor& mask, double theta) {
    if (!s1.same_shape(mask)) throw std::invalid_argument("mask_normalize: shape mismatch");
    const int n = s1.rows(), m = s1.cols();
    Tensor out = Tensor::matrix(n, m);
    for (int i = 0; i < n; ++i) {
        double mx = -std::numeric_limits<double>::infinity();
        for (int j = 0; j < m; ++j)
            if (mask.at(i, j) > theta) mx = std::max(mx, s1.at(i, j));
        if (mx == -std::numeric_limits<double>::infinity()) continue;  // fully masked row
        double s = 0.0;
        for (int j = 0; j < m; ++j)
            if (mask.at(i, j) > theta) s += (out.at(i, j) = std::exp(s1.at(i, j) - mx));
        for (int j = 0; j < m; ++j) out.at(i, j) /= s;
    }
    return out;
}

Tensor top_k_rows(const Tensor& scores, int k, bool self_loop_on_zero_rows) {
    const int n = scores.rows(), m = scores.cols();
    if (k < 1 || k > m) throw std::invalid_argument("top_k_rows: k out of range");
    Tensor out = Tensor::matrix(n, m);
    std::vector<int> order(static_cast<std::size_t>(m));
    for (int i = 0; i < n; ++i) {
        if (self_loop_on_zero_rows) {
            bool all_zero = true;
            for (int j = 0; j < m && all_zero; ++j) all_zero = scores.at(i, j) == 0.0;
            if (all_zero) {
                out.at(i, i) = 1.0;
                continue;
            }
        }
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return scores.at(i, a) > scores.at(i, b); });
        for (int r = 0; r < k; ++r) out.at(i, order[static_cast<std::size_t>(r)]) = 1.0;
    }
    return out;
}

Tensor symmetrize(const Tensor& directed) {
    const int n = directed.rows();
    if (directed.cols() != n) throw std::invalid_argument("symmetrize: matrix must be square");
    Tensor a = Tensor::matrix(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) a.at(i, j) = (directed.at(i, j) + directed.at(j, i)) / 2.0;
    return a;
}

Tensor binarize_adjacency(const Tensor& normalized, int k) { return symmetrize(top_k_rows(normalized, k, true)); }

AdjacencyResult generate_adjacency(const Tensor& fv, const Tensor& fi, const Tensor& w_q, const Tensor& w_k,
                                   const AmgConfig& config) {
    const Tensor fvi = concat_modalities(fv, fi);
    const int n = fvi.rows();
    AdjacencyResult r;
    if (config.mode == AdjacencyMode::identity) {
        r.directed = Tensor::matrix(n, n);
        for (int i = 0; i < n; ++i) r.directed.at(i, i) = 1.0;
        r.adjacency = r.directed;
        return r;
    }
    if (config.top_k < 1 || config.top_k > n) throw std::invalid_argument("generate_adjacency: top_k out of range");
    r.similarity = modality_similarity(fvi, w_q, w_k, config.d_k);
    switch (config.mode) {
        case AdjacencyMode::amg:
            r.similarity.normalized = mask_normalize(r.similarity.s1, r.similarity.mask, config.theta);
            r.directed = top_k_rows(r.similarity.normalized, config.top_k, true);
            break;
        case AdjacencyMode::qkv:
            r.similarity.normalized =
                mask_normalize(r.similarity.s1, r.similarity.mask, -std::numeric_limits<double>::infinity());
            r.directed = top_k_rows(r.similarity.normalized, config.top_k, false);
            break;
        case AdjacencyMode::cosine:
            r.directed = top_k_rows(r.similarity.s2, config.top_k, false);
            break;
        case AdjacencyMode::identity: break;
    }
    r.adjacency = symmetrize(r.directed);
    return r;
}

Amg::Amg(const AmgConfig& config, int d_model, ParamStore& store, Rng& rng) : config_(config) {
    w_q_ = store.add("amg.w_q", uniform_init({d_model, config.d_k}, d_model, rng));
    w_k_ = store.add("amg.w_k", uniform_init({d_model, config.d_k}, d_model, rng));
    store[w_q_].trainable = false;
    store[w_k_].trainable = false;
}

AdjacencyResult Amg::generate(const Tensor& fv, const Tensor& fi, const ParamStore& store) const {
    return generate_adjacency(fv, fi, store[w_q_].value, store[w_k_].value, config_);
}

}  // namespace gdstrack
