// SPDX-License-Identifier: Apache-2.0

#include "gdstrack/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

#include "gdstrack/kernels.hpp"

namespace gdstrack::ad {

const Tensor& Var::value() const { return tape->value(id); }

Var Tape::constant(Tensor value) {
    nodes_.push_back(Node{std::move(value), {}, false, {}, -1});
    return Var{this, static_cast<int>(nodes_.size()) - 1};
}

Var Tape::leaf(Tensor value) {
    nodes_.push_back(Node{std::move(value), {}, true, {}, -1});
    return Var{this, static_cast<int>(nodes_.size()) - 1};
}

Var Tape::parameter(const ParamStore& store, ParamId id) {
    if (auto it = param_nodes_.find(id); it != param_nodes_.end()) return Var{this, it->second};
    const Parameter& p = store[id];
    nodes_.push_back(Node{p.value, {}, p.trainable, {}, id});
    const int node = static_cast<int>(nodes_.size()) - 1;
    param_nodes_.emplace(id, node);
    return Var{this, node};
}

Tensor& Tape::grad_of(int id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (n.grad.empty() && !n.value.empty()) n.grad = Tensor(n.value.shape());
    return n.grad;
}

Var Tape::record(Tensor value, const std::vector<int>& inputs, BackwardFn backward) {
    bool needs = false;
    for (int in : inputs) needs = needs || requires_grad(in);
    nodes_.push_back(Node{std::move(value), {}, needs, needs ? std::move(backward) : BackwardFn{}, -1});
    return Var{this, static_cast<int>(nodes_.size()) - 1};
}

void Tape::backward(Var loss) {
    if (loss.tape != this) throw std::invalid_argument("backward: loss recorded on another tape");
    if (value(loss.id).size() != 1) throw std::invalid_argument("backward: loss must be a single element");
    for (auto& n : nodes_) n.grad = Tensor();
    if (!requires_grad(loss.id)) return;
    grad_of(loss.id)[0] = 1.0;
    for (int i = loss.id; i >= 0; --i) {
        Node& n = nodes_[static_cast<std::size_t>(i)];
        if (n.grad.empty() || !n.backward) continue;
        n.backward(*this, i);
    }
}

Gradients Tape::parameter_gradients(std::size_t store_size) const {
    Gradients g(store_size);
    for (const auto& [param, node] : param_nodes_) {
        const Node& n = nodes_[static_cast<std::size_t>(node)];
        if (n.requires_grad && !n.grad.empty()) g.grads[static_cast<std::size_t>(param)] = n.grad;
    }
    return g;
}

namespace {

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (!a.same_shape(b)) {
        throw std::invalid_argument(std::string(op) + ": shape mismatch " + a.shape_string() + " vs " +
                                    b.shape_string());
    }
}

void require_rank(const Tensor& a, int rank, const char* op) {
    if (a.ndim() != rank) throw std::invalid_argument(std::string(op) + ": expected rank " + std::to_string(rank));
}

// Elementwise unary op; `deriv(x, y)` returns dy/dx given input x and output y.
template <class F, class D>
Var unary(Var a, F f, D deriv) {
    const Tensor& x = a.value();
    Tensor y(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = f(x[i]);
    return a.tape->record(std::move(y), {a.id}, [ia = a.id, deriv](Tape& t, int self) {
        const Tensor& g = t.grad(self);
        const Tensor& x = t.value(ia);
        const Tensor& y = t.value(self);
        Tensor& gx = t.grad_of(ia);
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * deriv(x[i], y[i]);
    });
}

}  // namespace

Var add(Var a, Var b) {
    require_same_shape(a.value(), b.value(), "add");
    Tensor y = a.value();
    const Tensor& bv = b.value();
    for (std::size_t i = 0; i < y.size(); ++i) y[i] += bv[i];
    return a.tape->record(std::move(y), {a.id, b.id}, [ia = a.id, ib = b.id](Tape& t, int self) {
        const Tensor& g = t.grad(self);
        for (int in : {ia, ib}) {
            if (!t.requires_grad(in)) continue;
            Tensor& gx = t.grad_of(in);
            for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
        }
    });
}

Var sub(Var a, Var b) {
    require_same_shape(a.value(), b.value(), "sub");
    Tensor y = a.value();
    const Tensor& bv = b.value();
    for (std::size_t i = 0; i < y.size(); ++i) y[i] -= bv[i];
    return a.tape->record(std::move(y), {a.id, b.id}, [ia = a.id, ib = b.id](Tape& t, int self) {
        const Tensor& g = t.grad(self);
        if (t.requires_grad(ia)) {
            Tensor& gx = t.grad_of(ia);
            for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
        }
        if (t.requires_grad(ib)) {
            Tensor& gx = t.grad_of(ib);
            for (std::size_t i = 0; i < g.size(); ++i) gx[i] -= g[i];
        }
    });
}

Var mul(Var a, Var b) {
    require_same_shape(a.value(), b.value(), "mul");
    Tensor y = a.value();
    const Tensor& bv = b.value();
    for (std::size_t i = 0; i < y.size(); ++i) y[i] *= bv[i];
    return a.tape->record(std::move(y), {a.id, b.id}, [ia = a.id, ib = b.id](Tape& t, int self) {
        const Tensor& g = t.grad(self);
        if (t.requires_grad(ia)) {
            Tensor& gx = t.grad_of(ia);
            const Tensor& bv = t.value(ib);
            for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * bv[i];
        }
        if (t.requires_grad(ib)) {
            Tensor& gx = t.grad_of(ib);
            const Tensor& av = t.value(ia);
            for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * av[i];
        }
    });
}

Var div(Var a, Var b) {
    require_same_shape(a.value(), b.value(), "div");
    Tensor y = a.value();
    const Tensor& bv = b.value();
    for (std::size_t i = 0; i < y.size(); ++i) y[i] /= bv[i];
    return a.tape->record(std::move(y), {a.id, b.id}, [ia = a.id, ib = b.id](Tape& t, int self) {
        const Tensor& g = t.grad(self);
        const Tensor& bv = t.value(ib);
        if (t.requires_grad(ia)) {
            Tensor& gx = t.grad_of(ia);
            for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] / bv[i];
        }
        if (t.requires_grad(ib)) {
            Tensor& gx = t.grad_of(ib);
            const Tensor& y = t.value(self);
            for (std::size_t i = 0; i < g.size(); ++i) gx[i] -= g[i] * y[i] / bv[i];
        }
    });
}

namespace {

// Ties route the gradient to the first operand.
Var select_binary(Var a, Var b, bool take_min) {
    require_same_shape(a.value(), b.value(), take_min ? "minimum" : "maximum");
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    Tensor y(av.shape());
    std::vector<bool> from_a(av.size());
    for (std::size_t i = 0; i < av.size(); ++i) {
        from_a[i] = take_min ? av[i] <= bv[i] : av[i] >= bv[i];
        y[i] = from_a[i] ? av[i] : bv[i];
    }
    return a.tape->record(std::move(y), {a.id, b.id},
                          [ia = a.id, ib = b.id, from_a = std::move(from_a)](Tape& t, int self) {
                              const Tensor& g = t.grad(self);
                              for (std::size_t i = 0; i < g.size(); ++i) {
                                  const int dst = from_a[i] ? ia : ib;
                                  if (t.requires_grad(dst)) t.grad_of(dst)[i] += g[i];
                              }
                          });
}

}  // namespace

Var minimum(Var a, Var b) { return select_binary(a, b, true); }
Var maximum(Var a, Var b) { return select_binary(a, b, false); }

Var scale(Var a, double s) {
    return unary(a, [s](double x) { return s * x; }, [s](double, double) { return s; });
}

Var add_scalar(Var a, double s) {
    return unary(a, [s](double x) { return x + s; }, [](double, double) { return 1.0; });
}

Var relu(Var a) {
    return unary(a, [](double x) { return x > 0.0 ? x : 0.0; }, [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Var leaky_relu(Var a, double slope) {
    return unary(
        a, [slope](double x) { return x > 0.0 ? x : slope * x; },
        [slope](double x, double) { return x > 0.0 ? 1.0 : slope; });
}

Var elu(Var a) {
    return unary(
        a, [](double x) { return x > 0.0 ? x : std::expm1(x); },
        [](double x, double y) { return x > 0.0 ? 1.0 : y + 1.0; });
}

namespace {
constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)
}

Var gelu(Var a) {
    return unary(
        a,
        [](double x) { return 0.5 * x * (1.0 + std::tanh(kGeluC * (x + 0.044715 * x * x * x))); },
        [](double x, double) {
            const double u = kGeluC * (x + 0.044715 * x * x * x);
            const double th = std::tanh(u);
            const double du = kGeluC * (1.0 + 3.0 * 0.044715 * x * x);
            return 0.5 * (1.0 + th) + 0.5 * x * (1.0 - th * th) * du;
        });
}

Var silu(Var a) {
    return unary(
        a, [](double x) { return x / (1.0 + std::exp(-x)); },
        [](double x, double) {
            const double s = 1.0 / (1.0 + std::exp(-x));
            return s * (1.0 + x * (1.0 - s));
        });
}

Var abs(Var a) {
    return unary(a, [](double x) { return std::fabs(x); },
                 [](double x, double) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); });
}

Var square(Var a) {
    return unary(a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Var sum(Var a) {
    double s = 0.0;
    for (double v : a.value().values()) s += v;
    return a.tape->record(Tensor::scalar(s), {a.id}, [ia = a.id](Tape& t, int self) {
        const double g = t.grad(self)[0];
        for (double& v : t.grad_of(ia).values()) v += g;
    });
}

Var mean(Var a) {
    const auto n = static_cast<double>(a.value().size());
    return scale(sum(a), 1.0 / n);
}

Var element(Var a, std::size_t index) {
    if (index >= a.value().size()) throw std::out_of_range("element: index out of range");
    return a.tape->record(Tensor::scalar(a.value()[index]), {a.id}, [ia = a.id, index](Tape& t, int self) {
        t.grad_of(ia)[index] += t.grad(self)[0];
    });
}

Var matmul(Var a, Var b) {
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    require_rank(av, 2, "matmul");
    require_rank(bv, 2, "matmul");
    if (av.cols() != bv.rows()) {
        throw std::invalid_argument("matmul: inner dimensions " + av.shape_string() + " * " + bv.shape_string());
    }
    const int m = av.rows(), k = av.cols(), n = bv.cols();
    Tensor y = Tensor::matrix(m, n);
    kernels::matmul(av.data(), bv.data(), y.data(), m, k, n, false);
    return a.tape->record(std::move(y), {a.id, b.id}, [ia = a.id, ib = b.id, m, k, n](Tape& t, int self) {
        const Tensor& g = t.grad(self);
        if (t.requires_grad(ia)) kernels::matmul_nt(g.data(), t.value(ib).data(), t.grad_of(ia).data(), m, n, k, true);
        if (t.requires_grad(ib)) kernels::matmul_tn(t.value(ia).data(), g.data(), t.grad_of(ib).data(), k, m, n, true);
    });
}

Var matmul_nt(Var a, Var b) {
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    require_rank(av, 2, "matmul_nt");
    require_rank(bv, 2, "matmul_nt");
    if (av.cols() != bv.cols()) throw std::invalid_argument("matmul_nt: inner dimension mismatch");
    const int m = av.rows(), k = av.cols(), n = bv.rows();
    Tensor y = Tensor::matrix(m, n);
    kernels::matmul_nt(av.data(), bv.data(), y.data(), m, k, n, false);
    return a.tape->record(std::move(y), {a.id, b.id}, [ia = a.id, ib = b.id, m, k, n](Tape& t, int self) {
        const Tensor& g = t.grad(self);
        // y = a b^T: da = g b, db = g^T a
        if (t.requires_grad(ia)) kernels::matmul(g.data(), t.value(ib).data(), t.grad_of(ia).data(), m, n, k, true);
        if (t.requires_grad(ib)) kernels::matmul_tn(g.data(), t.value(ia).data(), t.grad_of(ib).data(), n, m, k, true);
    });
}

Var transpose(Var a) {
    const Tensor& av = a.value();
    require_rank(av, 2, "transpose");
    const int r = av.rows(), c = av.cols();
    Tensor y = Tensor::matrix(c, r);
    for (int i = 0; i < r; ++i)
        for (int j = 0; j < c; ++j) y.at(j, i) = av.at(i, j);
    return a.tape->record(std::move(y), {a.id}, [ia = a.id, r, c](Tape& t, int self) {
        const Tensor& g = t.grad(self);
        Tensor& gx = t.grad_of(ia);
        for (int i = 0; i < r; ++i)
            for (int j = 0; j < c; ++j) gx.at(i, j) += g.at(j, i);
    });
}

Var add_row_bias(Var x, Var bias) {
    const Tensor& xv = x.value();
    const Tensor& bv = bias.value();
    require_rank(xv, 2, "add_row_bias");
    if (bv.size() != static_cast<std::size_t>(xv.cols())) throw std::invalid_argument("add_row_bias: width mismatch");
    Tensor y = xv;
    const int r = xv.rows(), c = xv.cols();
    for (int i = 0; i < r; ++i)
        for (int j = 0; j < c; ++j) y.at(i, j) += bv[static_cast<std::size_t>(j)];
    return x.tape->record(std::move(y), {x.id, bias.id}, [ix = x.id, ib = bias.id, r, c](Tape& t, int self) {
        const Tensor& g = t.grad(self);
        if (t.requires_grad(ix)) {
            Tensor& gx = t.grad_of(ix);
            for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
        }
        if (t.requires_grad(ib)) {
            Tensor& gb = t.grad_of(ib);
            for (int i = 0; i < r; ++i)
                for (int j = 0; j < c; ++j) gb[static_cast<std::size_t>(j)] += g.at(i, j);
        }
    });
}

Var reshape(Var a, std::vector<int> shape) {
    Tensor y = a.value().reshaped(std::move(shape));
    return a.tape->record(std::move(y), {a.id}, [ia = a.id](Tape& t, int self) {
        const Tensor& g = t.grad(self);
        Tensor& gx = t.grad_of(ia);
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
    });
}

Var slice_dim0(Var a, int begin, int end) {
    const Tensor& av = a.value();
    if (av.ndim() < 1 || begin < 0 || end > av.dim(0) || begin >= end) throw std::out_of_range("slice_dim0: bad range");
    const std::size_t inner = av.size() / static_cast<std::size_t>(av.dim(0));
    std::vector<int> shape = av.shape();
    shape[0] = end - begin;
    std::vector<double> data(av.data() + begin * inner, av.data() + end * inner);
    return a.tape->record(Tensor(std::move(shape), std::move(data)), {a.id},
                          [ia = a.id, offset = begin * inner](Tape& t, int self) {
                              const Tensor& g = t.grad(self);
                              Tensor& gx = t.grad_of(ia);
                              for (std::size_t i = 0; i < g.size(); ++i) gx[offset + i] += g[i];
                          });
}

Var concat_dim0(const std::vector<Var>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat_dim0: no inputs");
    const Tensor& first = parts.front().value();
    std::vector<int> shape = first.shape();
    shape[0] = 0;
    std::vector<double> data;
    std::vector<int> ids;
    for (const Var& p : parts) {
        const Tensor& v = p.value();
        if (v.ndim() != first.ndim() ||
            !std::equal(v.shape().begin() + 1, v.shape().end(), first.shape().begin() + 1)) {
            throw std::invalid_argument("concat_dim0: trailing shapes differ");
        }
        shape[0] += v.dim(0);
        data.insert(data.end(), v.values().begin(), v.values().end());
        ids.push_back(p.id);
    }
    return parts.front().tape->record(Tensor(std::move(shape), std::move(data)), ids, [ids](Tape& t, int self) {
        const Tensor& g = t.grad(self);
        std::size_t offset = 0;
        for (int id : ids) {
            const std::size_t n = t.value(id).size();
            if (t.requires_grad(id)) {
                Tensor& gx = t.grad_of(id);
                for (std::size_t i = 0; i < n; ++i) gx[i] += g[offset + i];
            }
            offset += n;
        }
    });
}

Var slice_cols(Var a, int begin, int end) {
    const Tensor& av = a.value();
    require_rank(av, 2, "slice_cols");
    if (begin < 0 || end > av.cols() || begin >= end) throw std::out_of_range("slice_cols: bad range");
    const int r = av.rows(), w = end - begin;
    Tensor y = Tensor::matrix(r, w);
    for (int i = 0; i < r; ++i)
        for (int j = 0; j < w; ++j) y.at(i, j) = av.at(i, begin + j);
    return a.tape->record(std::move(y), {a.id}, [ia = a.id, begin, r, w](Tape& t, int self) {
        const Tensor& g = t.grad(self);
        Tensor& gx = t.grad_of(ia);
        for (int i = 0; i < r; ++i)
            for (int j = 0; j < w; ++j) gx.at(i, begin + j) += g.at(i, j);
    });
}

Var concat_cols(const std::vector<Var>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat_cols: no inputs");
    const int r = parts.front().value().rows();
    int total = 0;
    std::vector<int> ids;
    for (const Var& p : parts) {
        if (p.value().rows() != r) throw std::invalid_argument("concat_cols: row counts differ");
        total += p.value().cols();
        ids.push_back(p.id);
    }
    Tensor y = Tensor::matrix(r, total);
    int offset = 0;
    for (const Var& p : parts) {
        const Tensor& v = p.value();
        for (int i = 0; i < r; ++i)
            for (int j = 0; j < v.cols(); ++j) y.at(i, offset + j) = v.at(i, j);
        offset += v.cols();
    }
    return parts.front().tape->record(std::move(y), ids, [ids, r](Tape& t, int self) {
        const Tensor& g = t.grad(self);
        int offset = 0;
        for (int id : ids) {
            const int c = t.value(id).cols();
            if (t.requires_grad(id)) {
                Tensor& gx = t.grad_of(id);
                for (int i = 0; i < r; ++i)
                    for (int j = 0; j < c; ++j) gx.at(i, j) += g.at(i, offset + j);
            }
            offset += c;
        }
    });
}

Var detach(Var a) { return a.tape->constant(a.value()); }

Var softmax_rows(Var a) {
    const Tensor& av = a.value();
    require_rank(av, 2, "softmax_rows");
    const int r = av.rows(), c = av.cols();
    Tensor y(av.shape());
    for (int i = 0; i < r; ++i) {
        double mx = -std::numeric_limits<double>::infinity();
        for (int j = 0; j < c; ++j) mx = std::max(mx, av.at(i, j));
        double s = 0.0;
        for (int j = 0; j < c; ++j) s += (y.at(i, j) = std::exp(av.at(i, j) - mx));
        for (int j = 0; j < c; ++j) y.at(i, j) /= s;
    }
    return a.tape->record(std::move(y), {a.id}, [ia = a.id, r, c](Tape& t, int self) {
        const Tensor& g = t.grad(self);
        const Tensor& y = t.value(self);
        Tensor& gx = t.grad_of(ia);
        for (int i = 0; i < r; ++i) {
            double dot = 0.0;
            for (int j = 0; j < c; ++j) dot += g.at(i, j) * y.at(i, j);
            for (int j = 0; j < c; ++j) gx.at(i, j) += y.at(i, j) * (g.at(i, j) - dot);
        }
    });
}

Var softmax_all(Var a) {
    const std::vector<int> shape = a.value().shape();
    const int n = static_cast<int>(a.value().size());
    return reshape(softmax_rows(reshape(a, {1, n})), shape);
}

namespace {

struct NormStats {
    std::vector<double> mean;
    std::vector<double> inv_std;
};

// Normalises contiguous groups of `group_size` elements; gain/bias index via `channel_of(i)`.
template <class ChannelOf>
Var normalize_groups(Var x, Var gain, Var bias, int groups, std::size_t group_size, double eps, ChannelOf channel_of) {
    const Tensor& xv = x.value();
    const Tensor& gv = gain.value();
    const Tensor& bv = bias.value();
    Tensor xhat(xv.shape());
    Tensor y(xv.shape());
    NormStats st{std::vector<double>(static_cast<std::size_t>(groups)), std::vector<double>(static_cast<std::size_t>(groups))};
    for (int grp = 0; grp < groups; ++grp) {
        const std::size_t base = static_cast<std::size_t>(grp) * group_size;
        double mu = 0.0;
        for (std::size_t i = 0; i < group_size; ++i) mu += xv[base + i];
        mu /= static_cast<double>(group_size);
        double var = 0.0;
        for (std::size_t i = 0; i < group_size; ++i) var += (xv[base + i] - mu) * (xv[base + i] - mu);
        var /= static_cast<double>(group_size);
        const double inv = 1.0 / std::sqrt(var + eps);
        st.mean[static_cast<std::size_t>(grp)] = mu;
        st.inv_std[static_cast<std::size_t>(grp)] = inv;
        for (std::size_t i = 0; i < group_size; ++i) {
            const std::size_t k = base + i;
            xhat[k] = (xv[k] - mu) * inv;
            const std::size_t ch = channel_of(k);
            y[k] = gv[ch] * xhat[k] + bv[ch];
        }
    }
    return x.tape->record(
        std::move(y), {x.id, gain.id, bias.id},
        [ix = x.id, ig = gain.id, ib = bias.id, groups, group_size, channel_of, xhat = std::move(xhat),
         inv_std = std::move(st.inv_std)](Tape& t, int self) {
            const Tensor& g = t.grad(self);
            const Tensor& gv = t.value(ig);
            if (t.requires_grad(ig) || t.requires_grad(ib)) {
                Tensor* gg = t.requires_grad(ig) ? &t.grad_of(ig) : nullptr;
                Tensor* gb = t.requires_grad(ib) ? &t.grad_of(ib) : nullptr;
                for (std::size_t k = 0; k < g.size(); ++k) {
                    const std::size_t ch = channel_of(k);
                    if (gg) (*gg)[ch] += g[k] * xhat[k];
                    if (gb) (*gb)[ch] += g[k];
                }
            }
            if (!t.requires_grad(ix)) return;
            Tensor& gx = t.grad_of(ix);
            const double n = static_cast<double>(group_size);
            for (int grp = 0; grp < groups; ++grp) {
                const std::size_t base = static_cast<std::size_t>(grp) * group_size;
                double m1 = 0.0, m2 = 0.0;
                for (std::size_t i = 0; i < group_size; ++i) {
                    const std::size_t k = base + i;
                    const double dxh = g[k] * gv[channel_of(k)];
                    m1 += dxh;
                    m2 += dxh * xhat[k];
                }
                m1 /= n;
                m2 /= n;
                const double inv = inv_std[static_cast<std::size_t>(grp)];
                for (std::size_t i = 0; i < group_size; ++i) {
                    const std::size_t k = base + i;
                    const double dxh = g[k] * gv[channel_of(k)];
                    gx[k] += inv * (dxh - m1 - xhat[k] * m2);
                }
            }
        });
}

}  // namespace

Var layer_norm_rows(Var x, Var gain, Var bias, double eps) {
    const Tensor& xv = x.value();
    require_rank(xv, 2, "layer_norm_rows");
    const int c = xv.cols();
    if (gain.value().size() != static_cast<std::size_t>(c) || bias.value().size() != static_cast<std::size_t>(c)) {
        throw std::invalid_argument("layer_norm_rows: gain/bias width mismatch");
    }
    return normalize_groups(x, gain, bias, xv.rows(), static_cast<std::size_t>(c), eps,
                            [c](std::size_t k) { return k % static_cast<std::size_t>(c); });
}

Var group_norm(Var x, Var gain, Var bias, int groups, double eps) {
    const Tensor& xv = x.value();
    require_rank(xv, 3, "group_norm");
    const int channels = xv.dim(0);
    if (groups <= 0 || channels % groups != 0) throw std::invalid_argument("group_norm: channels not divisible by groups");
    if (gain.value().size() != static_cast<std::size_t>(channels) ||
        bias.value().size() != static_cast<std::size_t>(channels)) {
        throw std::invalid_argument("group_norm: gain/bias size mismatch");
    }
    const std::size_t plane = static_cast<std::size_t>(xv.dim(1)) * xv.dim(2);
    const std::size_t group_size = plane * static_cast<std::size_t>(channels / groups);
    return normalize_groups(x, gain, bias, groups, group_size, eps, [plane](std::size_t k) { return k / plane; });
}

Var conv2d(Var x, Var weight, Var bias, int stride, int pad) {
    const Tensor& xv = x.value();
    const Tensor& wv = weight.value();
    require_rank(xv, 3, "conv2d");
    require_rank(wv, 4, "conv2d weight");
    const int c = xv.dim(0), h = xv.dim(1), w = xv.dim(2);
    const int o = wv.dim(0), kernel = wv.dim(2);
    if (wv.dim(1) != c || wv.dim(3) != kernel) {
        throw std::invalid_argument("conv2d: weight " + wv.shape_string() + " incompatible with input " + xv.shape_string());
    }
    const int oh = kernels::conv_out_size(h, kernel, stride, pad);
    const int ow = kernels::conv_out_size(w, kernel, stride, pad);
    if (oh <= 0 || ow <= 0) throw std::invalid_argument("conv2d: empty output");
    const int ck = c * kernel * kernel;
    const int pixels = oh * ow;
    Tensor cols({ck, pixels});
    kernels::im2col(xv.data(), c, h, w, kernel, stride, pad, cols.data());
    Tensor y({o, oh, ow});
    kernels::matmul(wv.data(), cols.data(), y.data(), o, ck, pixels, false);
    const bool has_bias = bias.valid();
    if (has_bias) {
        const Tensor& bv = bias.value();
        if (bv.size() != static_cast<std::size_t>(o)) throw std::invalid_argument("conv2d: bias size mismatch");
        for (int oc = 0; oc < o; ++oc)
            for (int p = 0; p < pixels; ++p) y[static_cast<std::size_t>(oc) * pixels + p] += bv[static_cast<std::size_t>(oc)];
    }
    std::vector<int> inputs{x.id, weight.id};
    if (has_bias) inputs.push_back(bias.id);
    return x.tape->record(
        std::move(y), inputs,
        [ix = x.id, iw = weight.id, ib = has_bias ? bias.id : -1, c, h, w, o, kernel, stride, pad, ck, pixels,
         cols = std::move(cols)](Tape& t, int self) {
            const Tensor& g = t.grad(self);
            if (t.requires_grad(iw)) kernels::matmul_nt(g.data(), cols.data(), t.grad_of(iw).data(), o, pixels, ck, true);
            if (ib >= 0 && t.requires_grad(ib)) {
                Tensor& gb = t.grad_of(ib);
                for (int oc = 0; oc < o; ++oc)
                    for (int p = 0; p < pixels; ++p) gb[static_cast<std::size_t>(oc)] += g[static_cast<std::size_t>(oc) * pixels + p];
            }
            if (t.requires_grad(ix)) {
                Tensor dcols({ck, pixels});
                kernels::matmul_tn(t.value(iw).data(), g.data(), dcols.data(), ck, o, pixels, false);
                kernels::col2im(dcols.data(), c, h, w, kernel, stride, pad, t.grad_of(ix).data());
            }
        });
}

Var upsample_nearest2x(Var x) {
    const Tensor& xv = x.value();
    require_rank(xv, 3, "upsample_nearest2x");
    const int c = xv.dim(0), h = xv.dim(1), w = xv.dim(2);
    Tensor y({c, 2 * h, 2 * w});
    for (int ch = 0; ch < c; ++ch)
        for (int yy = 0; yy < 2 * h; ++yy)
            for (int xx = 0; xx < 2 * w; ++xx) y.at(ch, yy, xx) = xv.at(ch, yy / 2, xx / 2);
    return x.tape->record(std::move(y), {x.id}, [ix = x.id, c, h, w](Tape& t, int self) {
        const Tensor& g = t.grad(self);
        Tensor& gx = t.grad_of(ix);
        for (int ch = 0; ch < c; ++ch)
            for (int yy = 0; yy < 2 * h; ++yy)
                for (int xx = 0; xx < 2 * w; ++xx) gx.at(ch, yy / 2, xx / 2) += g.at(ch, yy, xx);
    });
}

Var add_channel_bias(Var x, Var bias) {
    const Tensor& xv = x.value();
    require_rank(xv, 3, "add_channel_bias");
    const int c = xv.dim(0);
    const std::size_t plane = static_cast<std::size_t>(xv.dim(1)) * xv.dim(2);
    if (bias.value().size() != static_cast<std::size_t>(c)) throw std::invalid_argument("add_channel_bias: size mismatch");
    Tensor y = xv;
    const Tensor& bv = bias.value();
    for (std::size_t k = 0; k < y.size(); ++k) y[k] += bv[k / plane];
    return x.tape->record(std::move(y), {x.id, bias.id}, [ix = x.id, ib = bias.id, plane](Tape& t, int self) {
        const Tensor& g = t.grad(self);
        if (t.requires_grad(ix)) {
            Tensor& gx = t.grad_of(ix);
            for (std::size_t k = 0; k < g.size(); ++k) gx[k] += g[k];
        }
        if (t.requires_grad(ib)) {
            Tensor& gb = t.grad_of(ib);
            for (std::size_t k = 0; k < g.size(); ++k) gb[k / plane] += g[k];
        }
    });
}

Tensor gat_coefficients(const Tensor& wh, const Tensor& attn, const Tensor& adjacency, double slope) {
    const int n = wh.rows(), f = wh.cols();
    if (adjacency.rows() != n || adjacency.cols() != n) throw std::invalid_argument("gat: adjacency size mismatch");
    if (attn.size() != static_cast<std::size_t>(2 * f)) throw std::invalid_argument("gat: attention vector size mismatch");
    std::vector<double> src(static_cast<std::size_t>(n), 0.0), dst(static_cast<std::size_t>(n), 0.0);
    for (int i = 0; i < n; ++i) {
        for (int k = 0; k < f; ++k) {
            src[static_cast<std::size_t>(i)] += wh.at(i, k) * attn[static_cast<std::size_t>(k)];
            dst[static_cast<std::size_t>(i)] += wh.at(i, k) * attn[static_cast<std::size_t>(f + k)];
        }
    }
    Tensor alpha = Tensor::matrix(n, n);
    for (int i = 0; i < n; ++i) {
        double mx = -std::numeric_limits<double>::infinity();
        bool any = false;
        for (int j = 0; j < n; ++j) {
            if (adjacency.at(i, j) <= 0.0) continue;
            const double pre = src[static_cast<std::size_t>(i)] + dst[static_cast<std::size_t>(j)];
            const double e = pre > 0.0 ? pre : slope * pre;
            alpha.at(i, j) = e;
            mx = std::max(mx, e);
            any = true;
        }
        if (!any) throw std::invalid_argument("gat: node " + std::to_string(i) + " has an empty neighbourhood");
        double s = 0.0;
        for (int j = 0; j < n; ++j) {
            if (adjacency.at(i, j) <= 0.0) continue;
            s += (alpha.at(i, j) = std::exp(alpha.at(i, j) - mx));
        }
        for (int j = 0; j < n; ++j)
            if (adjacency.at(i, j) > 0.0) alpha.at(i, j) /= s;
    }
    return alpha;
}

Var gat_attention(Var wh, Var attn, const Tensor& adjacency, double slope) {
    const Tensor& whv = wh.value();
    require_rank(whv, 2, "gat_attention");
    const int n = whv.rows(), f = whv.cols();
    Tensor alpha = gat_coefficients(whv, attn.value(), adjacency, slope);
    Tensor y = Tensor::matrix(n, f);
    kernels::matmul(alpha.data(), whv.data(), y.data(), n, n, f, false);
    return wh.tape->record(
        std::move(y), {wh.id, attn.id},
        [iw = wh.id, ia = attn.id, n, f, slope, adjacency, alpha = std::move(alpha)](Tape& t, int self) {
            const Tensor& g = t.grad(self);
            const Tensor& whv = t.value(iw);
            const Tensor& av = t.value(ia);
            Tensor dwh = Tensor::matrix(n, f);
            // out = alpha * wh
            kernels::matmul_tn(alpha.data(), g.data(), dwh.data(), n, n, f, false);
            Tensor dalpha = Tensor::matrix(n, n);
            kernels::matmul_nt(g.data(), whv.data(), dalpha.data(), n, f, n, false);
            std::vector<double> src(static_cast<std::size_t>(n), 0.0), dst(static_cast<std::size_t>(n), 0.0);
            for (int i = 0; i < n; ++i) {
                for (int k = 0; k < f; ++k) {
                    src[static_cast<std::size_t>(i)] += whv.at(i, k) * av[static_cast<std::size_t>(k)];
                    dst[static_cast<std::size_t>(i)] += whv.at(i, k) * av[static_cast<std::size_t>(f + k)];
                }
            }
            std::vector<double> dsrc(static_cast<std::size_t>(n), 0.0), ddst(static_cast<std::size_t>(n), 0.0);
            for (int i = 0; i < n; ++i) {
                double dot = 0.0;
                for (int j = 0; j < n; ++j)
                    if (adjacency.at(i, j) > 0.0) dot += alpha.at(i, j) * dalpha.at(i, j);
                for (int j = 0; j < n; ++j) {
                    if (adjacency.at(i, j) <= 0.0) continue;
                    const double de = alpha.at(i, j) * (dalpha.at(i, j) - dot);
                    const double pre = src[static_cast<std::size_t>(i)] + dst[static_cast<std::size_t>(j)];
                    const double dpre = de * (pre > 0.0 ? 1.0 : slope);
                    dsrc[static_cast<std::size_t>(i)] += dpre;
                    ddst[static_cast<std::size_t>(j)] += dpre;
                }
            }
            if (t.requires_grad(iw)) {
                Tensor& gw = t.grad_of(iw);
                for (int i = 0; i < n; ++i)
                    for (int k = 0; k < f; ++k)
                        gw.at(i, k) += dwh.at(i, k) + dsrc[static_cast<std::size_t>(i)] * av[static_cast<std::size_t>(k)] +
                                       ddst[static_cast<std::size_t>(i)] * av[static_cast<std::size_t>(f + k)];
            }
            if (t.requires_grad(ia)) {
                Tensor& ga = t.grad_of(ia);
                for (int i = 0; i < n; ++i)
                    for (int k = 0; k < f; ++k) {
                        ga[static_cast<std::size_t>(k)] += whv.at(i, k) * dsrc[static_cast<std::size_t>(i)];
                        ga[static_cast<std::size_t>(f + k)] += whv.at(i, k) * ddst[static_cast<std::size_t>(i)];
                    }
            }
        });
}

}  // namespace gdstrack::ad
