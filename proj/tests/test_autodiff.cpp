// Copyright (c) 2026 The CoLLD Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>

#include "colld/graph.hpp"
#include "colld/kernels.hpp"
#include "primitive_cases.hpp"

using namespace colld;

TEST_CASE("evaluate: scalar square, softmax symmetry, orthogonal cosine") {
    Graph g;
    NodeId x = g.input("x", {1});
    g.set_output("y", g.mul(x, x));
    NamedTensors<double> in{{"x", Tensor<double>({1}, {3.0})}};
    CHECK(evaluate(g, in).at("y").item() == 9.0);

    Graph s;
    s.set_output("y", s.softmax(s.input("v", {2})));
    auto y = evaluate(s, NamedTensors<double>{{"v", Tensor<double>({2}, {0.0, 0.0})}}).at("y");
    CHECK(y[0] == 0.5);
    CHECK(y[1] == 0.5);

    Graph c;
    c.set_output("y", c.cosine_rows(c.input("u", {2}), c.input("v", {2})));
    auto cy = evaluate(c, NamedTensors<double>{{"u", Tensor<double>({2}, {1, 0})}, {"v", Tensor<double>({2}, {0, 1})}});
    CHECK(cy.at("y").item() == 0.0);
}

TEST_CASE("gradient: hand-derived examples") {
    Graph g;
    NodeId x = g.input("x", {1});
    g.set_output("y", g.mul(x, x));
    auto gx = gradient(g, "y", NamedTensors<double>{{"x", Tensor<double>({1}, {3.0})}});
    CHECK(gx.at("x").item() == doctest::Approx(6.0).epsilon(1e-15));

    // cos(u, u) is constant 1 up to the epsilon in the norms
    Graph c;
    NodeId u = c.input("u", {3});
    c.set_output("y", c.cosine_rows(u, u));
    auto gu = gradient(c, "y", NamedTensors<double>{{"u", Tensor<double>({3}, {0.3, -1.2, 2.0})}});
    for (double v : gu.at("u").data()) CHECK(std::abs(v) < 1e-8);

    // d/dv logsumexp(v) = softmax(v); logsumexp = v0 - log_softmax(v)_0
    Graph l;
    NodeId v = l.input("v", {2});
    NodeId picked = l.slice_cols(l.log_softmax(v), 0, 1);
    NodeId lse = l.add(l.slice_cols(v, 0, 1), l.scale(picked, -1.0));
    l.set_output("y", lse);
    auto gv = gradient(l, "y", NamedTensors<double>{{"v", Tensor<double>({2}, {0.0, 0.0})}});
    CHECK(gv.at("v")[0] == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(gv.at("v")[1] == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("gradient: only requires_grad inputs are reported, shapes preserved") {
    Graph g;
    NodeId a = g.input("a", {2, 3});
    NodeId b = g.input("b", {3}, false);
    g.set_output("y", g.sum_all(g.add(a, b)));
    NamedTensors<double> in{{"a", Tensor<double>({2, 3}, 1.0)}, {"b", Tensor<double>({3}, 2.0)}};
    auto grads = gradient(g, "y", in);
    CHECK(grads.size() == 1);
    CHECK(grads.at("a").shape() == Shape{2, 3});
    for (double v : grads.at("a").data()) CHECK(v == 1.0);
}

TEST_CASE("errors: shape mismatch, unbound input, non-scalar gradient, non-finite node") {
    Graph g;
    NodeId a = g.input("a", {2, 3});
    NodeId b = g.input("b", {2, 2});
    CHECK_THROWS_AS(g.matmul(a, g.input("c", {2, 3})), ConfigError);
    CHECK_THROWS_AS(g.add(a, b), ConfigError);
    g.set_output("y", g.log_softmax(a));

    CHECK_THROWS_AS(evaluate(g, NamedTensors<double>{{"a", Tensor<double>({2, 3})}}), ConfigError);
    NamedTensors<double> in{{"a", Tensor<double>({3, 2})}, {"b", Tensor<double>({2, 2})}, {"c", Tensor<double>({2, 3})}};
    CHECK_THROWS_AS(evaluate(g, in), ConfigError);

    in["a"] = Tensor<double>({2, 3});
    CHECK_THROWS_AS(gradient(g, "y", in), UsageError);

    Graph h;
    NodeId x = h.input("x", {1});
    h.set_output("y", h.mul(h.scale(x, 1e300), h.scale(x, 1e300)));
    try {
        evaluate(h, NamedTensors<double>{{"x", Tensor<double>({1}, {10.0})}});
        FAIL("expected NumericError");
    } catch (const NumericError& e) {
        CHECK(std::string(e.what()).find("mul") != std::string::npos);
    }
}

TEST_CASE("finite differences: simple graphs") {
    Graph g;
    NodeId x = g.input("x", {1});
    g.set_output("y", g.mul(x, x));
    auto rep = finite_difference_check(g, "y", NamedTensors<double>{{"x", Tensor<double>({1}, {3.0})}}, 1e-5, 1e-6);
    CHECK(rep.ok);
    CHECK(rep.max_rel_error() < 1e-6);

    Graph id;
    NodeId xi = id.input("x", {1});
    id.set_output("y", id.scale(xi, 1.0));
    auto rid = finite_difference_check(id, "y", NamedTensors<double>{{"x", Tensor<double>({1}, {0.7})}}, 1e-5, 1e-6);
    CHECK(rid.max_rel_error() < 1e-10);
}

TEST_CASE("finite differences: every primitive over 100 seeds") {
    for (const auto& [name, build] : testing::primitive_cases()) {
        double worst = 0.0;
        for (std::uint64_t seed = 0; seed < 100; ++seed) {
            auto c = build(seed);
            auto rep = finite_difference_check(c.graph, "y", c.inputs, 1e-5, 1e-4);
            worst = std::max(worst, rep.max_rel_error());
        }
        INFO(name << " worst relative error " << worst);
        CHECK(worst < 1e-4);
    }
}

TEST_CASE("chain rule: d/dx swish(3x^2) equals f'(g(x)) g'(x)") {
    Rng rng(11);
    for (int trial = 0; trial < 20; ++trial) {
        const double x0 = rng.uniform(-2.0, 2.0);
        Graph g;
        NodeId x = g.input("x", {1});
        NodeId inner = g.scale(g.mul(x, x), 3.0);
        g.set_output("y", g.swish(inner));
        auto grad = gradient(g, "y", NamedTensors<double>{{"x", Tensor<double>({1}, {x0})}}).at("x").item();

        const double u = 3.0 * x0 * x0;
        const double s = 1.0 / (1.0 + std::exp(-u));
        const double outer = s + u * s * (1.0 - s);
        CHECK(grad == doctest::Approx(outer * 6.0 * x0).epsilon(1e-12));
    }
}

TEST_CASE("evaluation is bitwise deterministic, serial and parallel") {
    auto c = testing::primitive_cases()[0].second(5);
    kernels::set_parallel(false);
    auto a = evaluate(c.graph, c.inputs);
    auto ga = gradient(c.graph, "y", c.inputs);
    kernels::set_parallel(true);
    auto b = evaluate(c.graph, c.inputs);
    auto gb = gradient(c.graph, "y", c.inputs);
    CHECK(a.at("y") == b.at("y"));
    CHECK(ga == gb);
}

TEST_CASE("gradient hook sees accumulated node gradients") {
    Graph g;
    NodeId x = g.input("x", {2});
    NodeId y = g.scale(x, 2.0);
    g.set_output("out", g.sum_all(y));
    Execution<double> exec(g, NamedTensors<double>{{"x", Tensor<double>({2}, {1.0, 2.0})}});
    auto grads = exec.backward(g.output("out"), [&](NodeId id, Tensor<double>& grad) {
        if (id == y) grad[1] = 0.0;
    });
    CHECK(grads.at("x")[0] == 2.0);
    CHECK(grads.at("x")[1] == 0.0);
}
