// SPDX-License-Identifier: Apache-2.0
//
// Dense row-major tensor of doubles. Shapes are small (rank <= 4) and owned
// by value; all model math in this project runs in double precision.

#pragma once

#include <algorithm>
#include <cstddef>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace gdstrack {

class Tensor {
public:
    Tensor() = default;

    explicit Tensor(std::vector<int> shape, double fill = 0.0)
        : shape_(std::move(shape)), data_(count(shape_), fill) {}

    Tensor(std::vector<int> shape, std::vector<double> data)
        : shape_(std::move(shape)), data_(std::move(data)) {
        if (data_.size() != count(shape_)) {
            throw std::invalid_argument("Tensor: data size does not match shape " + shape_string());
        }
    }

    static Tensor matrix(int rows, int cols, double fill = 0.0) { return Tensor({rows, cols}, fill); }

    static Tensor scalar(double v) { return Tensor({1}, std::vector<double>{v}); }

    const std::vector<int>& shape() const { return shape_; }
    int ndim() const { return static_cast<int>(shape_.size()); }
    int dim(int i) const { return shape_.at(static_cast<std::size_t>(i)); }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    int rows() const {
        require_rank(2);
        return shape_[0];
    }
    int cols() const {
        require_rank(2);
        return shape_[1];
    }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    std::span<double> values() { return data_; }
    std::span<const double> values() const { return data_; }
    std::vector<double>& storage() { return data_; }
    const std::vector<double>& storage() const { return data_; }

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    double& at(int r, int c) { return data_[static_cast<std::size_t>(r) * shape_[1] + c]; }
    double at(int r, int c) const { return data_[static_cast<std::size_t>(r) * shape_[1] + c]; }

    double& at(int c, int y, int x) {
        return data_[(static_cast<std::size_t>(c) * shape_[1] + y) * shape_[2] + x];
    }
    double at(int c, int y, int x) const {
        return data_[(static_cast<std::size_t>(c) * shape_[1] + y) * shape_[2] + x];
    }

    Tensor reshaped(std::vector<int> shape) const {
        if (count(shape) != data_.size()) {
            throw std::invalid_argument("Tensor::reshaped: element count mismatch");
        }
        return Tensor(std::move(shape), data_);
    }

    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

    void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

    std::string shape_string() const {
        std::string s = "(";
        for (std::size_t i = 0; i < shape_.size(); ++i) {
            if (i) s += "x";
            s += std::to_string(shape_[i]);
        }
        return s + ")";
    }

    static std::size_t count(const std::vector<int>& shape) {
        std::size_t n = 1;
        for (int d : shape) {
            if (d < 0) throw std::invalid_argument("Tensor: negative dimension");
            n *= static_cast<std::size_t>(d);
        }
        return n;
    }

private:
    void require_rank(int r) const {
        if (ndim() != r) throw std::logic_error("Tensor: expected rank " + std::to_string(r) + ", got " + shape_string());
    }

    std::vector<int> shape_;
    std::vector<double> data_;
};

}  // namespace gdstrack
