// SPDX-License-Identifier: Apache-2.0

#include "gdstrack/params.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>
#include <stdexcept>

namespace gdstrack {

ParamId ParamStore::add(std::string name, Tensor init) {
    if (index_.contains(name)) throw std::invalid_argument("ParamStore: duplicate parameter " + name);
    const auto id = static_cast<ParamId>(params_.size());
    index_.emplace(name, id);
    params_.push_back(Parameter{std::move(name), std::move(init), true});
    return id;
}

ParamId ParamStore::id(std::string_view name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::out_of_range("ParamStore: unknown parameter " + std::string(name));
    return it->second;
}

bool ParamStore::contains(std::string_view name) const { return index_.find(name) != index_.end(); }

std::size_t ParamStore::element_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.value.size();
    return n;
}

void ParamStore::set_trainable(std::string_view prefix, bool trainable) {
    for (auto& p : params_) {
        if (std::string_view(p.name).starts_with(prefix)) p.trainable = trainable;
    }
}

void Gradients::accumulate(const Gradients& other) {
    if (grads.size() < other.grads.size()) grads.resize(other.grads.size());
    for (std::size_t i = 0; i < other.grads.size(); ++i) {
        const Tensor& g = other.grads[i];
        if (g.empty()) continue;
        if (grads[i].empty()) {
            grads[i] = g;
            continue;
        }
        for (std::size_t j = 0; j < g.size(); ++j) grads[i][j] += g[j];
    }
}

void Gradients::scale(double s) {
    for (auto& g : grads)
        for (double& v : g.values()) v *= s;
}

Tensor uniform_init(std::vector<int> shape, int fan_in, Rng& rng) {
    Tensor t(std::move(shape));
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (double& v : t.values()) v = dist(rng);
    return t;
}

namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint payload assumes a little-endian host");

std::string shape_token(const Tensor& t) {
    std::string s;
    for (int i = 0; i < t.ndim(); ++i) {
        if (i) s += 'x';
        s += std::to_string(t.dim(i));
    }
    return s;
}

std::vector<int> parse_shape(const std::string& token) {
    std::vector<int> shape;
    std::stringstream ss(token);
    std::string part;
    while (std::getline(ss, part, 'x')) shape.push_back(std::stoi(part));
    return shape;
}

}  // namespace

std::string serialize_checkpoint(const ParamStore& store) {
    std::ostringstream out;
    out << "tensors " << store.size() << '\n';
    std::size_t offset = 0;
    for (const auto& p : store) {
        out << p.name << ' ' << shape_token(p.value) << ' ' << offset << '\n';
        offset += p.value.size();
    }
    std::string bytes = out.str();
    const std::size_t header = bytes.size();
    bytes.resize(header + offset * sizeof(float));
    char* dst = bytes.data() + header;
    for (const auto& p : store) {
        for (double v : p.value.values()) {
            const float f = static_cast<float>(v);
            std::memcpy(dst, &f, sizeof(float));
            dst += sizeof(float);
        }
    }
    return bytes;
}

void deserialize_checkpoint(ParamStore& store, const std::string& bytes) {
    std::istringstream in(bytes);
    std::string tag;
    std::size_t count = 0;
    if (!(in >> tag >> count) || tag != "tensors") throw std::runtime_error("checkpoint: bad header");
    in.ignore(1);
    struct Entry {
        std::string name;
        std::vector<int> shape;
        std::size_t offset;
    };
    std::vector<Entry> entries;
    for (std::size_t i = 0; i < count; ++i) {
        std::string line;
        if (!std::getline(in, line)) throw std::runtime_error("checkpoint: truncated manifest");
        std::istringstream ls(line);
        Entry e;
        std::string shape;
        if (!(ls >> e.name >> shape >> e.offset)) throw std::runtime_error("checkpoint: bad manifest line: " + line);
        e.shape = parse_shape(shape);
        entries.push_back(std::move(e));
    }
    const auto header = static_cast<std::size_t>(in.tellg());
    const char* payload = bytes.data() + header;
    const std::size_t payload_floats = (bytes.size() - header) / sizeof(float);
    for (const auto& e : entries) {
        if (!store.contains(e.name)) throw std::runtime_error("checkpoint: unexpected tensor " + e.name);
        Parameter& p = store[store.id(e.name)];
        if (p.value.shape() != e.shape) throw std::runtime_error("checkpoint: shape mismatch for " + e.name);
        if (e.offset + p.value.size() > payload_floats) throw std::runtime_error("checkpoint: truncated payload");
        for (std::size_t j = 0; j < p.value.size(); ++j) {
            float f;
            std::memcpy(&f, payload + (e.offset + j) * sizeof(float), sizeof(float));
            p.value[j] = f;
        }
    }
    if (entries.size() != store.size()) throw std::runtime_error("checkpoint: tensor count does not match model");
}

void save_checkpoint(const ParamStore& store, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    const std::string bytes = serialize_checkpoint(store);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

void load_checkpoint(ParamStore& store, const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read " + path.string());
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    deserialize_checkpoint(store, bytes);
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
    auto step = [](std::uint64_t z) {
        z += 0x9e3779b97f4a7c15ULL;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    };
    return step(step(step(seed) ^ a) ^ (b * 0x632be59bd9b4e019ULL));
}

}  // namespace gdstrack
