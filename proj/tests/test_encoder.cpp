// Copyright (c) 2026 The CoLLD Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <numeric>

#include "colld/encoder.hpp"
#include "colld/kernels.hpp"

using namespace colld;

namespace {

FeatureSequence random_input(std::size_t frames, std::size_t dim, std::uint64_t seed) {
    FeatureSequence s;
    s.values = Tensor<float>({frames, dim});
    Rng rng(seed, "input");
    for (auto& v : s.values.data()) v = static_cast<float>(rng.normal());
    return s;
}

EncoderConfig small(std::size_t layers = 3) {
    EncoderConfig c = encoder_preset("tiny");
    c.layers = layers;
    c.input_dim = 12;
    return c;
}

std::vector<std::size_t> all_layers(std::size_t n) {
    std::vector<std::size_t> v(n);
    std::iota(v.begin(), v.end(), 1);
    return v;
}

// hand count of one forward pass at 50 frames per second
double macs_by_hand(double layers, double d, double f, double k, double in, double seconds) {
    const double t = seconds * 50.0;
    const double ffn = 2 * (t * d * f + t * f * d);
    const double qkvo = 4 * t * d * d;
    const double scores_context = 2 * t * t * d;
    const double conv = t * d * (2 * d) + t * k * d + t * d * d;
    return t * in * d + layers * (ffn + qkvo + scores_context + conv);
}

} // namespace

TEST_CASE("presets build with the listed shapes") {
    const EncoderConfig xx = encoder_preset("xx-large");
    CHECK(xx.layers == 40);
    CHECK(xx.dim == 1024);
    CHECK(xx.ffn == 4096);
    CHECK(xx.heads == 16);
    CHECK(xx.conv_kernel == 31);
    const EncoderConfig l40 = encoder_preset("large40");
    CHECK(l40.layers == 40);
    CHECK(l40.dim == 768);
    CHECK(l40.ffn == 1024);
    CHECK(l40.heads == 8);
    CHECK(encoder_preset("x-large").layers == 24);
    CHECK(encoder_preset("large12").layers == 12);
    const EncoderConfig tiny = encoder_preset("tiny");
    CHECK(tiny.layers == 4);
    CHECK(tiny.dim == 32);
    CHECK(tiny.ffn == 64);
    CHECK(tiny.heads == 2);
    CHECK_THROWS_AS(encoder_preset("huge"), ConfigError);

    Encoder e = build_encoder(tiny, 1);
    CHECK(e.parameter_count() == param_count(tiny));
}

TEST_CASE("large presets: closed-form count matches the built shapes") {
    for (const char* name : {"xx-large", "large40"}) {
        const EncoderConfig c = encoder_preset(name);
        std::uint64_t total = 0;
        for (const auto& [n, shape] : parameter_shapes(c)) total += shape_size(shape);
        CHECK(total == param_count(c));
    }
}

TEST_CASE("config validation") {
    EncoderConfig c = small();
    c.heads = 3;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = small();
    c.conv_kernel = 4;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = small();
    c.layers = 0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("initialization is seeded") {
    const EncoderConfig c = small();
    Encoder a = build_encoder(c, 4), b = build_encoder(c, 4), d = build_encoder(c, 5);
    CHECK(a.parameters() == b.parameters());
    CHECK_FALSE(a.parameters() == d.parameters());
    const float bound = 1.0f / std::sqrt(32.0f);
    for (float v : a.parameters().at("blocks.0.attn.q.weight").data()) CHECK(std::abs(v) <= bound);
    for (float v : a.parameters().at("blocks.1.ffn2.w1.bias").data()) CHECK(v == 0.0f);
    for (float v : a.parameters().at("blocks.2.final_norm.gamma").data()) CHECK(v == 1.0f);
}

TEST_CASE("parameter counts: additivity and monotonicity") {
    EncoderConfig c = small(1);
    const std::uint64_t base = std::uint64_t(c.input_dim) * c.dim + c.dim + c.dim;
    CHECK(param_count(c) - base == block_param_count(c));
    // hand count of one block at D=32, F=64, k=15
    const std::uint64_t d = 32, f = 64, k = 15;
    const std::uint64_t by_hand = 2 * (2 * d + d * f + f + f * d + d) + (2 * d + 4 * (d * d + d)) +
                                  (2 * d + 2 * d * d + 2 * d + k * d + d + 2 * d + d * d + d) + 2 * d;
    CHECK(block_param_count(c) == by_hand);
    for (auto field : {&EncoderConfig::layers, &EncoderConfig::ffn}) {
        EncoderConfig bigger = small(2);
        bigger.*field += 2;
        CHECK(param_count(bigger) > param_count(small(2)));
        CHECK(estimate_macs(bigger, 3.0) > estimate_macs(small(2), 3.0));
    }
    EncoderConfig wider = small(2);
    wider.dim = 36;
    CHECK(param_count(wider) > param_count(small(2)));
    CHECK(estimate_macs(wider, 3.0) > estimate_macs(small(2), 3.0));
}

TEST_CASE("parameter counts near the published sizes") {
    CHECK(std::abs(double(param_count(encoder_preset("xx-large"))) / 1.0e9 - 1.0) <= 0.10);
    CHECK(std::abs(double(param_count(encoder_preset("x-large"))) / 0.6e9 - 1.0) <= 0.10);
    CHECK(std::abs(double(param_count(encoder_preset("large12"))) / 0.3e9 - 1.0) <= 0.10);
    CHECK(std::abs(double(param_count(encoder_preset("large40"))) / 0.3e9 - 1.0) <= 0.10);
}

TEST_CASE("cost model") {
    const EncoderConfig l12 = encoder_preset("large12"), xx = encoder_preset("xx-large");
    const EncoderConfig xl = encoder_preset("x-large");
    CHECK(estimate_macs(l12, 20.0) == doctest::Approx(macs_by_hand(12, 1024, 4096, 31, 160, 20)).epsilon(1e-12));
    CHECK(estimate_macs(encoder_preset("large40"), 20.0) ==
          doctest::Approx(macs_by_hand(40, 768, 1024, 31, 160, 20)).epsilon(1e-12));
    CHECK(std::abs(estimate_macs(xx, 20.0) / estimate_macs(l12, 20.0) / (1214.1 / 364.3) - 1.0) <= 0.005);
    CHECK(std::abs(estimate_macs(xl, 20.0) / estimate_macs(l12, 20.0) / (728.5 / 364.3) - 1.0) <= 0.005);
    CHECK(std::abs(estimate_macs(l12, 20.0) / 364.3e9 - 1.0) <= 0.15);
    // linear in layers
    EncoderConfig a = small(2), b = small(4), c = small(6);
    CHECK(estimate_macs(c, 4.0) - estimate_macs(b, 4.0) == doctest::Approx(estimate_macs(b, 4.0) - estimate_macs(a, 4.0)));
    CHECK_THROWS_AS(estimate_macs(l12, 0.0), UsageError);
}

TEST_CASE("taps have frame-by-dim shape and differ by kind") {
    const EncoderConfig c = small();
    Encoder e = build_encoder(c, 2);
    FeatureSequence x = random_input(17, c.input_dim, 1);
    TapSet ffn2 = forward_with_taps(e, x, nullptr, all_layers(3), TapKind::Ffn2);
    TapSet out = forward_with_taps(e, x, nullptr, all_layers(3), TapKind::BlockOutput);
    REQUIRE(ffn2.reps.size() == 3);
    for (std::size_t l = 1; l <= 3; ++l) {
        CHECK(ffn2.at_layer(l).shape() == Shape{17, 32});
        CHECK(out.at_layer(l).shape() == Shape{17, 32});
        CHECK_FALSE(ffn2.at_layer(l) == out.at_layer(l));
    }
    CHECK(forward_with_taps(e, x, nullptr, {2}, TapKind::Ffn2).reps.front() == ffn2.at_layer(2));
    CHECK_THROWS_AS(forward_with_taps(e, x, nullptr, {4}, TapKind::Ffn2), UsageError);
    CHECK_THROWS_AS(forward_with_taps(e, x, nullptr, {0}, TapKind::Ffn2), UsageError);
    CHECK_THROWS_AS(forward_with_taps(e, random_input(5, 7, 1), nullptr, {1}, TapKind::Ffn2), ConfigError);
}

TEST_CASE("forward is deterministic and independent of the parallel switch") {
    const EncoderConfig c = small();
    Encoder e = build_encoder(c, 8);
    FeatureSequence x = random_input(40, c.input_dim, 3);
    Rng rng(1, "m");
    MaskSpec m = sample_mask(40, 0.2, 4, rng);
    TapSet a = forward_with_taps(e, x, &m, all_layers(3), TapKind::Ffn2);
    const bool was = kernels::parallel_enabled();
    kernels::set_parallel(!was);
    TapSet b = forward_with_taps(e, x, &m, all_layers(3), TapKind::Ffn2);
    kernels::set_parallel(was);
    for (std::size_t l = 1; l <= 3; ++l) CHECK(a.at_layer(l) == b.at_layer(l));
}

TEST_CASE("empty mask is a no-op and a full mask changes the taps") {
    const EncoderConfig c = small();
    Encoder e = build_encoder(c, 3);
    FeatureSequence x = random_input(12, c.input_dim, 2);
    MaskSpec empty = MaskSpec::none(12);
    MaskSpec full = MaskSpec::all(12);
    TapSet none = forward_with_taps(e, x, nullptr, all_layers(3), TapKind::Ffn2);
    TapSet with_empty = forward_with_taps(e, x, &empty, all_layers(3), TapKind::Ffn2);
    TapSet with_full = forward_with_taps(e, x, &full, all_layers(3), TapKind::Ffn2);
    for (std::size_t l = 1; l <= 3; ++l) {
        CHECK(none.at_layer(l) == with_empty.at_layer(l));
        CHECK_FALSE(none.at_layer(l) == with_full.at_layer(l));
    }
}

TEST_CASE("masked frames see the mask embedding, not their features") {
    const EncoderConfig c = small(1);
    Encoder e = build_encoder(c, 6);
    MaskSpec full = MaskSpec::all(9);
    TapSet a = forward_with_taps(e, random_input(9, c.input_dim, 1), &full, {1}, TapKind::BlockOutput);
    TapSet b = forward_with_taps(e, random_input(9, c.input_dim, 2), &full, {1}, TapKind::BlockOutput);
    CHECK(a.at_layer(1) == b.at_layer(1));
}

TEST_CASE("zero FFN weights give a zero ffn2 tap") {
    const EncoderConfig c = small(2);
    Encoder e = build_encoder(c, 5);
    for (auto& [name, t] : e.parameters()) {
        if (name.rfind("blocks.1.ffn2.w", 0) == 0) std::fill(t.data().begin(), t.data().end(), 0.0f);
    }
    TapSet taps = forward_with_taps(e, random_input(10, c.input_dim, 4), nullptr, {1, 2}, TapKind::Ffn2);
    for (float v : taps.at_layer(2).data()) CHECK(v == 0.0f);
    bool any = false;
    for (float v : taps.at_layer(1).data()) any = any || v != 0.0f;
    CHECK(any);
}

TEST_CASE("attention is permutation equivariant") {
    EncoderConfig c = small(1);
    c.conv_kernel = 1;
    Encoder e = build_encoder(c, 9);
    const std::size_t frames = 11;
    Tensor<double> x({frames, c.dim});
    Rng rng(2, "x");
    for (auto& v : x.data()) v = rng.normal();
    std::vector<std::size_t> perm(frames);
    std::iota(perm.begin(), perm.end(), 0);
    for (std::size_t i = frames - 1; i > 0; --i) std::swap(perm[i], perm[rng.below(i + 1)]);
    Tensor<double> xp({frames, c.dim});
    for (std::size_t t = 0; t < frames; ++t)
        for (std::size_t j = 0; j < c.dim; ++j) xp(t, j) = x(perm[t], j);

    auto run = [&](const Tensor<double>& in) {
        Graph g;
        ParamNodes p = declare_parameters(g, c, "", false);
        NodeId xi = g.input("x", in.shape(), false);
        g.set_output("y", build_attention_sublayer(g, c, p, 0, xi));
        NamedTensors<double> inputs = cast_all<double>(e.parameters());
        inputs.emplace("x", in);
        return evaluate(g, inputs).at("y");
    };
    Tensor<double> y = run(x), yp = run(xp);
    for (std::size_t t = 0; t < frames; ++t)
        for (std::size_t j = 0; j < c.dim; ++j) CHECK(yp(t, j) == doctest::Approx(y(perm[t], j)).epsilon(1e-12));
}

TEST_CASE("sinusoidal positions") {
    Tensor<double> pe = sinusoidal_positions(4, 6);
    CHECK(pe(0, 0) == 0.0);
    CHECK(pe(0, 1) == 1.0);
    CHECK(pe(3, 0) == doctest::Approx(std::sin(3.0)));
    CHECK(pe(3, 3) == doctest::Approx(std::cos(3.0 * std::pow(10000.0, -2.0 / 6.0))));
}
