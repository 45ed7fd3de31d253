// SPDX-License-Identifier: Apache-2.0
//
// Named parameter storage shared by every module, plus the checkpoint format:
//
//   tensors <count>
//   <name> <d0>x<d1>... <offset>      (one manifest line per tensor)
//   <raw little-endian float32 payload, tensors concatenated in manifest order>
//
// Offsets count float32 elements from the start of the payload.

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "gdstrack/tensor.hpp"

namespace gdstrack {

using ParamId = int;
using Rng = std::mt19937_64;

struct Parameter {
    std::string name;
    Tensor value;
    bool trainable = true;
};

class ParamStore {
public:
    ParamId add(std::string name, Tensor init);

    ParamId id(std::string_view name) const;
    bool contains(std::string_view name) const;

    Parameter& operator[](ParamId id) { return params_.at(static_cast<std::size_t>(id)); }
    const Parameter& operator[](ParamId id) const { return params_.at(static_cast<std::size_t>(id)); }

    std::size_t size() const { return params_.size(); }
    std::size_t element_count() const;

    auto begin() { return params_.begin(); }
    auto end() { return params_.end(); }
    auto begin() const { return params_.begin(); }
    auto end() const { return params_.end(); }

    /// Marks every parameter whose name starts with `prefix` (trainable or not).
    void set_trainable(std::string_view prefix, bool trainable);

private:
    std::vector<Parameter> params_;
    std::map<std::string, ParamId, std::less<>> index_;
};

/// Per-parameter gradient buffers, indexed by ParamId. Empty tensors mean "no gradient".
struct Gradients {
    std::vector<Tensor> grads;

    explicit Gradients(std::size_t n = 0) : grads(n) {}
    void accumulate(const Gradients& other);
    void scale(double s);
};

/// Weight init: uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)].
Tensor uniform_init(std::vector<int> shape, int fan_in, Rng& rng);

std::string serialize_checkpoint(const ParamStore& store);
void deserialize_checkpoint(ParamStore& store, const std::string& bytes);
void save_checkpoint(const ParamStore& store, const std::filesystem::path& path);
void load_checkpoint(ParamStore& store, const std::filesystem::path& path);

/// splitmix64 mixing; used to derive independent per-example RNG streams.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0);

}  // namespace gdstrack
