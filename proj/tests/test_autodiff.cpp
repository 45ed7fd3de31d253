// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <functional>
#include <random>

#include "doctest.h"
#include "gdstrack/autodiff.hpp"

using namespace gdstrack;
using ad::Tape;
using ad::Var;

namespace {

Tensor random_tensor(std::vector<int> shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
    Tensor t(std::move(shape));
    std::uniform_real_distribution<double> d(lo, hi);
    for (double& v : t.storage()) v = d(rng);
    return t;
}

// Max relative error between reverse-mode and central differences for every input.
double fd_error(const std::vector<Tensor>& inputs, const std::function<Var(Tape&, const std::vector<Var>&)>& f,
                double h = 1e-5) {
    Tape tape;
    std::vector<Var> vars;
    for (const Tensor& t : inputs) vars.push_back(tape.leaf(t));
    tape.backward(f(tape, vars));
    double worst = 0.0;
    for (std::size_t k = 0; k < inputs.size(); ++k) {
        const Tensor g = tape.grad(vars[k].id).empty() ? Tensor(inputs[k].shape()) : tape.grad(vars[k].id);
        double max_diff = 0.0, scale = 1e-12;
        for (std::size_t i = 0; i < inputs[k].size(); ++i) {
            auto eval = [&](double delta) {
                std::vector<Tensor> in = inputs;
                in[k][i] += delta;
                Tape t2;
                std::vector<Var> v2;
                for (const Tensor& x : in) v2.push_back(t2.constant(x));
                return f(t2, v2).value()[0];
            };
            const double fd = (eval(h) - eval(-h)) / (2.0 * h);
            max_diff = std::max(max_diff, std::abs(fd - g[i]));
            scale = std::max({scale, std::abs(fd), std::abs(g[i])});
        }
        worst = std::max(worst, max_diff / scale);
    }
    return worst;
}

// Weighted sum so every output element carries a distinct cotangent.
Var project(Var y, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    Tensor w(y.value().shape());
    std::uniform_real_distribution<double> d(-1.0, 1.0);
    for (double& v : w.storage()) v = d(rng);
    return ad::sum(ad::mul(y, y.tape->constant(w)));
}

}  // namespace

TEST_CASE("chain rule example: d/dw (w x - y)^2 at w=1, x=2, y=1 is 4") {
    Tape tape;
    const Var w = tape.leaf(Tensor::scalar(1.0));
    const Var x = tape.constant(Tensor::scalar(2.0));
    const Var y = tape.constant(Tensor::scalar(1.0));
    const Var f = ad::square(ad::sub(ad::mul(w, x), y));
    tape.backward(f);
    CHECK(f.value()[0] == 1.0);
    CHECK(tape.grad(w.id)[0] == 4.0);
}

TEST_CASE("frozen parameters receive no gradient") {
    ParamStore store;
    const ParamId a = store.add("a", Tensor::scalar(2.0));
    const ParamId b = store.add("b", Tensor::scalar(3.0));
    store[b].trainable = false;
    Tape tape;
    const Var pa = tape.parameter(store, a);
    const Var pb = tape.parameter(store, b);
    CHECK(tape.parameter(store, a).id == pa.id);  // one leaf per parameter
    tape.backward(ad::mul(pa, pb));
    const Gradients g = tape.parameter_gradients(store.size());
    CHECK(g.grads[static_cast<std::size_t>(a)][0] == 3.0);
    CHECK(g.grads[static_cast<std::size_t>(b)].empty());
}

TEST_CASE("a parameter used twice accumulates both paths") {
    ParamStore store;
    const ParamId a = store.add("a", Tensor::scalar(2.0));
    Tape tape;
    const Var p1 = tape.parameter(store, a);
    const Var p2 = tape.parameter(store, a);
    tape.backward(ad::add(ad::mul(p1, p1), ad::scale(p2, 3.0)));
    CHECK(tape.parameter_gradients(store.size()).grads[0][0] == 7.0);
}

TEST_CASE("backward requires a single-element loss") {
    Tape tape;
    const Var x = tape.leaf(Tensor({2}, 1.0));
    CHECK_THROWS(tape.backward(x));
}

TEST_CASE("elementwise ops and activations match finite differences") {
    std::mt19937_64 rng(3);
    // Keep values away from the kinks of relu/abs/leaky_relu/min/max.
    Tensor a = random_tensor({3, 4}, rng), b = random_tensor({3, 4}, rng, 0.5, 1.5);
    for (double& v : a.storage()) v += v > 0 ? 0.1 : -0.1;
    using Fn = std::function<Var(Var, Var)>;
    const std::vector<std::pair<const char*, Fn>> ops = {
        {"add", [](Var x, Var y) { return ad::add(x, y); }},
        {"sub", [](Var x, Var y) { return ad::sub(x, y); }},
        {"mul", [](Var x, Var y) { return ad::mul(x, y); }},
        {"div", [](Var x, Var y) { return ad::div(x, y); }},
        {"min", [](Var x, Var y) { return ad::minimum(x, y); }},
        {"max", [](Var x, Var y) { return ad::maximum(x, y); }},
        {"scale", [](Var x, Var) { return ad::scale(x, -2.5); }},
        {"add_scalar", [](Var x, Var) { return ad::add_scalar(x, 0.7); }},
        {"relu", [](Var x, Var) { return ad::relu(x); }},
        {"leaky", [](Var x, Var) { return ad::leaky_relu(x, 0.2); }},
        {"elu", [](Var x, Var) { return ad::elu(x); }},
        {"gelu", [](Var x, Var) { return ad::gelu(x); }},
        {"silu", [](Var x, Var) { return ad::silu(x); }},
        {"abs", [](Var x, Var) { return ad::abs(x); }},
        {"square", [](Var x, Var) { return ad::square(x); }},
        {"mean", [](Var x, Var) { return ad::mean(x); }},
        {"element", [](Var x, Var) { return ad::element(x, 5); }},
    };
    for (const auto& [name, op] : ops) {
        CAPTURE(name);
        CHECK(fd_error({a, b}, [&](Tape&, const std::vector<Var>& v) { return project(op(v[0], v[1]), 9); }) < 1e-7);
    }
}

TEST_CASE("linear algebra and layout ops match finite differences") {
    std::mt19937_64 rng(5);
    const Tensor a = random_tensor({3, 4}, rng), b = random_tensor({4, 5}, rng), c = random_tensor({5, 4}, rng);
    const Tensor bias = random_tensor({5}, rng);
    CHECK(fd_error({a, b}, [](Tape&, const std::vector<Var>& v) { return project(ad::matmul(v[0], v[1]), 1); }) < 1e-7);
    CHECK(fd_error({a, c}, [](Tape&, const std::vector<Var>& v) { return project(ad::matmul_nt(v[0], v[1]), 2); }) < 1e-7);
    CHECK(fd_error({a}, [](Tape&, const std::vector<Var>& v) { return project(ad::transpose(v[0]), 3); }) < 1e-7);
    CHECK(fd_error({a, b, bias}, [](Tape&, const std::vector<Var>& v) {
              return project(ad::add_row_bias(ad::matmul(v[0], v[1]), v[2]), 4);
          }) < 1e-7);
    CHECK(fd_error({a}, [](Tape&, const std::vector<Var>& v) { return project(ad::reshape(v[0], {2, 6}), 5); }) < 1e-7);
    CHECK(fd_error({a, c}, [](Tape&, const std::vector<Var>& v) {
              return project(ad::concat_dim0({ad::slice_dim0(v[0], 1, 3), v[1]}), 6);
          }) < 1e-7);
    CHECK(fd_error({a, a}, [](Tape&, const std::vector<Var>& v) {
              return project(ad::concat_cols({ad::slice_cols(v[0], 1, 3), v[1]}), 7);
          }) < 1e-7);
}

TEST_CASE("detach blocks the gradient") {
    Tape tape;
    const Var x = tape.leaf(Tensor::scalar(3.0));
    tape.backward(ad::mul(x, ad::detach(x)));
    CHECK(tape.grad(x.id)[0] == 3.0);
}

TEST_CASE("normalisation and softmax ops match finite differences") {
    std::mt19937_64 rng(8);
    const Tensor x = random_tensor({4, 6}, rng, -2.0, 2.0);
    const Tensor g = random_tensor({6}, rng, 0.5, 1.5), b = random_tensor({6}, rng);
    const Tensor fmap = random_tensor({4, 3, 3}, rng), gg = random_tensor({4}, rng, 0.5, 1.5), gb = random_tensor({4}, rng);
    CHECK(fd_error({x}, [](Tape&, const std::vector<Var>& v) { return project(ad::softmax_rows(v[0]), 1); }) < 1e-7);
    CHECK(fd_error({x}, [](Tape&, const std::vector<Var>& v) { return project(ad::softmax_all(v[0]), 2); }) < 1e-7);
    CHECK(fd_error({x, g, b}, [](Tape&, const std::vector<Var>& v) {
              return project(ad::layer_norm_rows(v[0], v[1], v[2]), 3);
          }) < 1e-6);
    CHECK(fd_error({fmap, gg, gb}, [](Tape&, const std::vector<Var>& v) {
              return project(ad::group_norm(v[0], v[1], v[2], 2), 4);
          }) < 1e-6);
}

TEST_CASE("softmax rows sum to one") {
    std::mt19937_64 rng(2);
    Tape tape;
    const Var s = ad::softmax_rows(tape.constant(random_tensor({5, 7}, rng, -5, 5)));
    for (int r = 0; r < 5; ++r) {
        double sum = 0.0;
        for (int c = 0; c < 7; ++c) sum += s.value().at(r, c);
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("convolution, upsampling and channel bias match finite differences") {
    std::mt19937_64 rng(12);
    const Tensor x = random_tensor({2, 5, 5}, rng), w3 = random_tensor({3, 2, 3, 3}, rng), b3 = random_tensor({3}, rng);
    const Tensor w1 = random_tensor({3, 2, 1, 1}, rng);
    for (int stride : {1, 2}) {
        CHECK(fd_error({x, w3, b3}, [stride](Tape&, const std::vector<Var>& v) {
                  return project(ad::conv2d(v[0], v[1], v[2], stride, 1), 5);
              }) < 1e-7);
    }
    CHECK(fd_error({x, w1, b3}, [](Tape&, const std::vector<Var>& v) {
              return project(ad::conv2d(v[0], v[1], v[2], 1, 0), 6);
          }) < 1e-7);
    CHECK(fd_error({x}, [](Tape&, const std::vector<Var>& v) { return project(ad::upsample_nearest2x(v[0]), 7); }) < 1e-7);
    CHECK(fd_error({x, b3}, [](Tape&, const std::vector<Var>& v) {
              return project(ad::add_channel_bias(v[0], ad::slice_dim0(v[1], 0, 2)), 8);
          }) < 1e-7);
}

TEST_CASE("conv2d matches a direct loop") {
    std::mt19937_64 rng(13);
    const Tensor x = random_tensor({2, 4, 4}, rng), w = random_tensor({1, 2, 3, 3}, rng);
    Tape tape;
    const Var y = ad::conv2d(tape.constant(x), tape.constant(w), tape.constant(Tensor({1}, 0.25)), 1, 1);
    for (int oy = 0; oy < 4; ++oy)
        for (int ox = 0; ox < 4; ++ox) {
            double acc = 0.25;
            for (int c = 0; c < 2; ++c)
                for (int ky = 0; ky < 3; ++ky)
                    for (int kx = 0; kx < 3; ++kx) {
                        const int iy = oy + ky - 1, ix = ox + kx - 1;
                        if (iy < 0 || iy >= 4 || ix < 0 || ix >= 4) continue;
                        acc += w[static_cast<std::size_t>(((c)*3 + ky) * 3 + kx)] * x.at(c, iy, ix);
                    }
            CHECK(y.value().at(0, oy, ox) == doctest::Approx(acc).epsilon(1e-12));
        }
}

TEST_CASE("graph attention matches finite differences and normalises over neighbours") {
    std::mt19937_64 rng(21);
    const int n = 6, f = 3;
    const Tensor wh = random_tensor({n, f}, rng), attn = random_tensor({2 * f}, rng);
    Tensor adj({n, n});
    std::bernoulli_distribution edge(0.4);
    for (int i = 0; i < n; ++i) {
        adj.at(i, i) = 1.0;
        for (int j = i + 1; j < n; ++j)
            if (edge(rng)) adj.at(i, j) = adj.at(j, i) = 0.5;
    }
    CHECK(fd_error({wh, attn}, [&](Tape&, const std::vector<Var>& v) {
              return project(ad::gat_attention(v[0], v[1], adj, 0.2), 3);
          }) < 1e-6);
    const Tensor alpha = ad::gat_coefficients(wh, attn, adj, 0.2);
    for (int i = 0; i < n; ++i) {
        double s = 0.0;
        for (int j = 0; j < n; ++j) {
            if (adj.at(i, j) == 0.0) CHECK(alpha.at(i, j) == 0.0);
            s += alpha.at(i, j);
        }
        CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
    }
}
