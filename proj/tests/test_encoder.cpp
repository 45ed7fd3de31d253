// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <random>

#include "doctest.h"
#include "gdstrack/encoder.hpp"

using namespace gdstrack;

namespace {

Image random_image(int side, int channels, std::mt19937_64& rng) {
    Image img(side, side, channels);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (double& v : img.data) v = u(rng);
    return img;
}

struct Fixture {
    EncoderConfig cfg;
    ParamStore store;
    Encoder enc;
    std::mt19937_64 rng{17};

    Fixture() {
        Rng init(3);
        enc = Encoder(cfg, store, init);
    }
};

}  // namespace

TEST_CASE("search tokens come out as (grid*grid) x d_model") {
    Fixture f;
    const Image t = random_image(32, 3, f.rng), s = random_image(64, 3, f.rng);
    const auto [fv, fi] = f.enc.encode_pair(f.store, t, random_image(32, 1, f.rng), s, random_image(64, 1, f.rng));
    CHECK(fv.tokens.shape() == std::vector<int>{64, 64});
    CHECK(fi.tokens.shape() == std::vector<int>{64, 64});
    CHECK(fv.grid_width == 8);
    CHECK(fi.modality == Modality::ir);
}

TEST_CASE("an IR crop equal to the RGB crop yields identical features") {
    Fixture f;
    Image ir_t = random_image(32, 1, f.rng), ir_s = random_image(64, 1, f.rng);
    const Image rgb_t = replicate_channels(ir_t), rgb_s = replicate_channels(ir_s);
    const auto [fv, fi] = f.enc.encode_pair(f.store, rgb_t, ir_t, rgb_s, ir_s);
    CHECK(fv.tokens.storage() == fi.tokens.storage());
}

TEST_CASE("the template influences the search tokens") {
    Fixture f;
    const Image t = random_image(32, 3, f.rng), s = random_image(64, 3, f.rng);
    const Image blank(32, 32, 3, 0.5);  // patchify centres by -0.5, so these tokens are zero
    ad::Tape tape;
    const Tensor a = f.enc.encode(tape, f.store, t, s).value();
    const Tensor b = f.enc.encode(tape, f.store, blank, s).value();
    double max_diff = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) max_diff = std::max(max_diff, std::abs(a[i] - b[i]));
    CHECK(max_diff > 0.0);
}

TEST_CASE("without positional embeddings the encoder is equivariant to patch permutations") {
    Fixture f;
    f.store[f.store.id("encoder.pos_template")].value.fill(0.0);
    f.store[f.store.id("encoder.pos_search")].value.fill(0.0);
    const Image t = random_image(32, 3, f.rng), s = random_image(64, 3, f.rng);
    // Swap patch (0, 0) with patch (5, 3) of the search crop.
    Image p = s;
    const int ps = 8, ax = 0, ay = 0, bx = 3 * ps, by = 5 * ps;
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < ps; ++y)
            for (int x = 0; x < ps; ++x) std::swap(p.at(c, ay + y, ax + x), p.at(c, by + y, bx + x));
    ad::Tape tape;
    const Tensor a = f.enc.encode(tape, f.store, t, s).value();
    const Tensor b = f.enc.encode(tape, f.store, t, p).value();
    auto perm = [](int r) { return r == 0 ? 43 : (r == 43 ? 0 : r); };
    double max_diff = 0.0;
    for (int r = 0; r < 64; ++r)
        for (int c = 0; c < 64; ++c) max_diff = std::max(max_diff, std::abs(a.at(r, c) - b.at(perm(r), c)));
    CHECK(max_diff < 1e-10);
}

TEST_CASE("patchify rows follow (channel, py, px) order within raster-ordered patches") {
    Image img(16, 8, 1);
    for (int y = 0; y < 8; ++y)
        for (int x = 0; x < 16; ++x) img.at(0, y, x) = (y * 16 + x) / 256.0;
    const Tensor p = patchify(img, 8);
    CHECK(p.shape() == std::vector<int>{2, 64});
    CHECK(p.at(0, 0) == doctest::Approx(0.0 - 0.5));
    CHECK(p.at(1, 0) == doctest::Approx(8 / 256.0 - 0.5));
    CHECK(p.at(0, 9) == doctest::Approx(17 / 256.0 - 0.5));
}

TEST_CASE("mismatched shapes are rejected") {
    Fixture f;
    const Image t = random_image(32, 3, f.rng);
    ad::Tape tape;
    CHECK_THROWS(f.enc.encode(tape, f.store, t, random_image(48, 3, f.rng)));
    CHECK_THROWS(f.enc.encode(tape, f.store, t, random_image(64, 1, f.rng)));
    CHECK_THROWS(patchify(random_image(30, 3, f.rng), 8));
    EncoderConfig bad;
    bad.num_heads = 3;
    CHECK_THROWS(bad.validate());
}

TEST_CASE("the shared weights receive gradients from both modalities") {
    Fixture f;
    const Image t = random_image(32, 3, f.rng), s = random_image(64, 3, f.rng);
    ad::Tape tape;
    const auto [fv, fi] = f.enc.encode_pair(tape, f.store, t, random_image(32, 1, f.rng), s, random_image(64, 1, f.rng));
    tape.backward(ad::sum(ad::add(fv, fi)));
    const Gradients g = tape.parameter_gradients(f.store.size());
    for (std::size_t i = 0; i < f.store.size(); ++i) {
        CAPTURE(f.store[static_cast<ParamId>(i)].name);
        CHECK_FALSE(g.grads[i].empty());
    }
}
