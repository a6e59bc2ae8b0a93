// Copyright (c) 2026 The CoLLD Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <set>

#include "colld/gradcheck.hpp"
#include "colld/losses.hpp"

using namespace colld;

namespace {

MaskSpec mask_of(std::size_t frames, std::vector<std::size_t> idx) { return MaskSpec{frames, std::move(idx), 0.0, 1}; }

Tensor<double> mat(std::size_t rows, std::size_t cols, std::vector<double> v) {
    return Tensor<double>::matrix(rows, cols, std::move(v));
}

Tensor<double> gaussian(std::size_t rows, std::size_t cols, std::uint64_t seed) {
    Tensor<double> t({rows, cols});
    Rng rng(seed, "gaussian");
    for (auto& v : t.data()) v = rng.normal();
    return t;
}

} // namespace

TEST_CASE("symmetric two-candidate case gives log 2") {
    const double s = std::sqrt(3.0) / 2.0;
    Tensor<double> z = mat(2, 2, {1, 0, 1, 0});
    Tensor<double> h = mat(2, 2, {0.5, s, 0.5, -s});
    for (double tau : {0.05, 0.1, 1.0, 7.0}) {
        Rng rng(1, "d");
        CHECK(contrastive_layer_loss(z, h, mask_of(2, {0, 1}), 100, tau, rng, true) ==
              doctest::Approx(std::log(2.0)).epsilon(1e-12));
        Rng rng2(1, "d");
        CHECK(contrastive_layer_loss(z, h, mask_of(2, {0, 1}), 100, tau, rng2, false) ==
              doctest::Approx(2.0 * std::log(2.0)).epsilon(1e-12));
    }
}

TEST_CASE("opposed distractor at tau 0.1 gives log(1 + e^-20)") {
    Tensor<double> z = mat(2, 2, {1, 0, -1, 0});
    Tensor<double> h = mat(2, 2, {1, 0, -1, 0});
    Rng rng(1, "d");
    const double loss = contrastive_layer_loss(z, h, mask_of(2, {0, 1}), 1, 0.1, rng, true);
    CHECK(std::abs(loss - std::log1p(std::exp(-20.0))) <= 1e-12);
    CHECK(loss == doctest::Approx(2.06e-9).epsilon(1e-2));
}

TEST_CASE("singleton candidate set gives zero loss") {
    Tensor<double> z = gaussian(5, 3, 1), h = gaussian(5, 3, 2);
    Rng rng(1, "d");
    CHECK(contrastive_layer_loss(z, h, mask_of(5, {2}), 100, 0.1, rng, true) == 0.0);
    CHECK(contrastive_layer_loss(z, h, MaskSpec::none(5), 100, 0.1, rng, true) == 0.0);
}

TEST_CASE("l2 oracles") {
    Tensor<double> z = mat(1, 2, {1, 0}), h = mat(1, 2, {0, 1});
    CHECK(l2_layer_loss(z, h, mask_of(1, {0}), false) == 2.0);
    CHECK(l2_layer_loss(z, h, mask_of(1, {0}), true) == 1.0);
    Tensor<double> r = gaussian(6, 4, 3);
    CHECK(l2_layer_loss(r, r, mask_of(6, {0, 3, 5}), true) == 0.0);
    // unmasked frames are ignored
    Tensor<double> r2 = r;
    r2(1, 1) += 10.0;
    CHECK(l2_layer_loss(r, r2, mask_of(6, {0, 3, 5}), true) == 0.0);
}

TEST_CASE("distractor sampling") {
    Rng rng(4, "d");
    CHECK(sample_distractors(mask_of(10, {3}), 3, 100, rng).empty());
    std::vector<std::size_t> all;
    for (std::size_t i = 1; i <= 200; ++i) all.push_back(i);
    MaskSpec big = mask_of(201, all);
    CHECK(sample_distractors(big, 5, 0, rng).empty());
    CHECK_THROWS_AS(sample_distractors(big, 0, 3, rng), UsageError);
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        Rng r(seed, "d");
        auto d = sample_distractors(big, 5, 100, r);
        CHECK(d.size() == 100);
        std::set<std::size_t> uniq(d.begin(), d.end());
        CHECK(uniq.size() == 100);
        CHECK(uniq.count(5) == 0);
        for (std::size_t i : d) CHECK(big.contains(i));
    }
    // every candidate is equally likely: 10 of 20 drawn, expect 0.5 each
    MaskSpec m = mask_of(21, {0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14, 15, 16, 17, 18, 19, 20});
    std::vector<double> freq(21, 0.0);
    const int trials = 20000;
    for (int i = 0; i < trials; ++i) {
        Rng r(7, "uniform", i);
        for (std::size_t j : sample_distractors(m, 0, 10, r)) freq[j] += 1.0;
    }
    CHECK(freq[0] == 0.0);
    for (std::size_t j = 1; j <= 20; ++j) CHECK(std::abs(freq[j] / trials - 0.5) < 4.0 * std::sqrt(0.25 / trials));
}

TEST_CASE("contrastive loss ignores vector magnitudes") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        Tensor<double> z = gaussian(12, 5, seed), h = gaussian(12, 5, seed + 100);
        Tensor<double> zs = z, hs = h;
        Rng scales(seed, "scales");
        for (std::size_t t = 0; t < 12; ++t) {
            const double a = scales.uniform(0.2, 5.0), b = scales.uniform(0.2, 5.0);
            for (std::size_t c = 0; c < 5; ++c) {
                zs(t, c) *= a;
                hs(t, c) *= b;
            }
        }
        MaskSpec m = mask_of(12, {1, 2, 3, 7, 8, 11});
        Rng r1(seed, "d"), r2(seed, "d");
        const double base = contrastive_layer_loss(z, h, m, 3, 0.1, r1, true);
        const double scaled = contrastive_layer_loss(zs, hs, m, 3, 0.1, r2, true);
        CHECK(std::abs(scaled - base) <= 1e-6 * std::abs(base));
    }
}

TEST_CASE("contrastive loss bounds") {
    const double tau = 0.1;
    for (std::uint64_t seed = 0; seed < 30; ++seed) {
        Tensor<double> z = gaussian(15, 4, seed), h = gaussian(15, 4, seed + 7);
        MaskSpec m = mask_of(15, {0, 2, 4, 5, 6, 9, 10});
        for (std::size_t k : {1u, 3u, 100u}) {
            Rng r(seed, "d");
            const double loss = contrastive_layer_loss(z, h, m, k, tau, r, true);
            const double k_eff = double(std::min<std::size_t>(k, 6));
            CHECK(loss >= 0.0);
            CHECK(loss <= std::log(k_eff + 1.0) + 2.0 / tau);
        }
    }
}

TEST_CASE("losses are deterministic for a fixed stream") {
    Tensor<double> z = gaussian(30, 4, 1), h = gaussian(30, 4, 2);
    Rng mr(3, "m");
    MaskSpec m = sample_mask(30, 0.3, 3, mr);
    Rng a(9, "d"), b(9, "d");
    CHECK(contrastive_layer_loss(z, h, m, 5, 0.1, a, true) == contrastive_layer_loss(z, h, m, 5, 0.1, b, true));
}

TEST_CASE("batch reduction over layers and utterances") {
    DistillConfig cfg;
    cfg.loss = LossKind::L2;
    cfg.projection = ProjectionKind::None;
    const LayerMap map = layer_map(2, 3);
    auto taps = [](std::vector<std::size_t> layers, std::uint64_t seed) {
        TapSet t;
        for (std::size_t l : layers) {
            Tensor<double> g = gaussian(8, 3, seed + l);
            t.layers.push_back(l);
            t.reps.push_back(g.cast<float>());
        }
        return t;
    };
    TapSet s0 = taps({1, 2}, 10), s1 = taps({1, 2}, 20), t0 = taps({1, 3}, 30), t1 = taps({1, 3}, 40);
    MaskSpec m0 = mask_of(8, {1, 2, 6}), m1 = mask_of(8, {0, 7});
    Rng rng(1, "d");
    auto layer = [](const TapSet& s, std::size_t l, const TapSet& t, std::size_t lt, const MaskSpec& m) {
        return l2_layer_loss(s.at_layer(l).cast<double>(), t.at_layer(lt).cast<double>(), m, true);
    };
    const double a = (layer(s0, 1, t0, 1, m0) + layer(s0, 2, t0, 3, m0)) / 2.0;
    const double b = (layer(s1, 1, t1, 1, m1) + layer(s1, 2, t1, 3, m1)) / 2.0;
    CHECK(total_loss({s0}, {t0}, {}, map, {m0}, cfg, rng) == doctest::Approx(a).epsilon(1e-12));
    CHECK(total_loss({s0, s1}, {t0, t1}, {}, map, {m0, m1}, cfg, rng) == doctest::Approx((a + b) / 2.0).epsilon(1e-12));
    // empty masks drop out of the mean
    CHECK(total_loss({s0, s1}, {t0, t1}, {}, map, {m0, MaskSpec::none(8)}, cfg, rng) == doctest::Approx(a).epsilon(1e-12));

    TapSet same = taps({1, 2}, 30);
    TapSet target;
    target.layers = {1, 3};
    target.reps = {same.at_layer(1), same.at_layer(2)};
    CHECK(total_loss({same}, {target}, {}, map, {m0}, cfg, rng) == 0.0);
    CHECK_THROWS_AS(total_loss({s0, s1}, {t0}, {}, map, {m0, m1}, cfg, rng), UsageError);
}

TEST_CASE("projection heads") {
    ParameterSet heads = build_projection_heads(3, 4, 6, ProjectionKind::LinearPerLayer, 5);
    CHECK(heads.size() == 6);
    CHECK(heads.at("head.2.weight").shape() == Shape{4, 6});
    CHECK(heads.at("head.3.bias").shape() == Shape{1, 6});
    CHECK(build_projection_heads(3, 4, 4, ProjectionKind::None, 5).empty());
    CHECK_THROWS_AS(build_projection_heads(3, 4, 6, ProjectionKind::None, 5), ConfigError);
}

TEST_CASE("instance normalization standardizes channels") {
    Tensor<float> x = gaussian(50, 3, 4).cast<float>();
    for (std::size_t t = 0; t < 50; ++t) x(t, 1) = x(t, 1) * 4.0f + 9.0f;
    Tensor<float> y = instance_normalize(x);
    for (std::size_t c = 0; c < 3; ++c) {
        double mean = 0.0, var = 0.0;
        for (std::size_t t = 0; t < 50; ++t) mean += y(t, c);
        mean /= 50.0;
        for (std::size_t t = 0; t < 50; ++t) var += (y(t, c) - mean) * (y(t, c) - mean);
        CHECK(std::abs(mean) < 1e-5);
        CHECK(var / 50.0 == doctest::Approx(1.0).epsilon(1e-3));
    }
}

TEST_CASE("loss gradients match finite differences") {
    for (LossKind kind : {LossKind::Contrastive, LossKind::L2}) {
        GradCheckSummary s = check_loss_gradients(500, 5, 1e-3, 1e-4, kind);
        CHECK(s.failures == 0);
        CHECK(s.max_rel_error < 1e-4);
    }
}

TEST_CASE("gradient descent on free predictions lowers the contrastive loss") {
    // all 19 other masked frames serve as distractors, so the objective is fixed
    const std::size_t frames = 30, dim = 6;
    std::vector<std::size_t> idx;
    for (std::size_t t = 0; t < frames; t += 3) idx.push_back(t);
    for (std::size_t t = 1; t < frames; t += 3) idx.push_back(t);
    std::sort(idx.begin(), idx.end());
    MaskSpec m = mask_of(frames, idx);
    Tensor<double> h = gaussian(frames, dim, 1);
    NamedTensors<double> inputs{{"z", gaussian(frames, dim, 2)}, {"h", h}};

    Graph g;
    NodeId z = g.input("z", {frames, dim}, true);
    NodeId hn = g.input("h", {frames, dim}, false);
    Rng rng(3, "d");
    g.set_output("loss", *contrastive_loss_node(g, z, hn, m, 100, 0.1, rng, true));

    std::vector<double> trace;
    for (int step = 0; step < 200; ++step) {
        Execution<double> exec(g, inputs);
        trace.push_back(exec.value("loss").item());
        NamedTensors<double> grad = exec.backward(g.output("loss"));
        auto& zv = inputs.at("z");
        for (std::size_t i = 0; i < zv.size(); ++i) zv[i] -= 0.05 * grad.at("z")[i];
    }
    int increases = 0;
    for (std::size_t i = 1; i < trace.size(); ++i) increases += trace[i] > trace[i - 1];
    CHECK(increases <= 10);
    CHECK(trace.back() < 0.5 * trace.front());
}

TEST_CASE("names round-trip") {
    CHECK(loss_kind_from_string(to_string(LossKind::L2)) == LossKind::L2);
    CHECK(projection_kind_from_string(to_string(ProjectionKind::None)) == ProjectionKind::None);
    CHECK(teacher_init_from_string(to_string(TeacherInit::BottomLayers)) == TeacherInit::BottomLayers);
    CHECK_THROWS_AS(loss_kind_from_string("l1"), ConfigError);
}

TEST_CASE("config validation") {
    DistillConfig c;
    c.validate();
    c.temperature = 0.0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = DistillConfig{};
    c.warmup_steps = c.total_steps + 1;
    CHECK_THROWS_AS(c.validate(), ConfigError);
}
