// Copyright (c) 2026 The CoLLD Authors
// SPDX-License-Identifier: Apache-2.0
//
// End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
// exits non-zero if any criterion fails. Pass criterion numbers as arguments
// to run a subset.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>

#include "colld/checkpoint.hpp"
#include "colld/distiller.hpp"
#include "colld/gradcheck.hpp"
#include "colld/losses.hpp"
#include "colld/mapping.hpp"
#include "colld/masking.hpp"
#include "colld/optimizer.hpp"
#include "colld/probe.hpp"
#include "primitive_cases.hpp"

using namespace colld;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(double v, int precision = 4) {
    std::ostringstream s;
    s.precision(precision);
    s << v;
    return s.str();
}

Outcome layer_mapping() {
    const std::vector<std::pair<std::size_t, std::size_t>> table = {{1, 1},   {2, 5},   {3, 8},   {4, 12},
                                                                     {5, 15},  {6, 19},  {7, 22},  {8, 26},
                                                                     {9, 29},  {10, 33}, {11, 36}, {12, 40}};
    bool ok = layer_map(12, 40).pairs == table;
    const LayerMap id = layer_map(40, 40);
    ok = ok && id.pairs.size() == 40;
    for (std::size_t l = 1; l <= 40 && ok; ++l) ok = id.pairs[l - 1] == std::pair<std::size_t, std::size_t>{l, l};
    return {ok, "12->40 table and 40->40 identity"};
}

Outcome mask_coverage() {
    const CoverageStats s = coverage_stats(0.065, 10, 1000, 200, 2026);
    const double closed = 1.0 - std::pow(0.935, 10);
    const bool ok = s.n >= 100000 && std::abs(s.empirical_coverage - 0.49) <= 0.01 &&
                    std::abs(s.expected_coverage - closed) < 1e-12;
    return {ok, "empirical " + fmt(s.empirical_coverage) + " over " + std::to_string(s.n) + " frames, closed form " +
                    fmt(closed, 7)};
}

Outcome cost_model() {
    const double l12 = estimate_macs(encoder_preset("large12"), 20.0);
    const double xxl = estimate_macs(encoder_preset("xx-large"), 20.0);
    const double xl = estimate_macs(encoder_preset("x-large"), 20.0);
    const double r1 = xxl / l12, r2 = xl / l12;
    bool ok = std::abs(r1 / (10.0 / 3.0) - 1.0) <= 0.005 && std::abs(r2 / 2.0 - 1.0) <= 0.005 &&
              std::abs(l12 / 1e9 / 364.3 - 1.0) <= 0.15;
    const std::vector<std::pair<std::string, double>> params = {
        {"xx-large", 1.0e9}, {"x-large", 0.6e9}, {"large12", 0.3e9}, {"large40", 0.3e9}};
    std::string counts;
    for (const auto& [name, target] : params) {
        const double n = double(param_count(encoder_preset(name)));
        ok = ok && std::abs(n / target - 1.0) <= 0.10;
        counts += " " + name + "=" + fmt(n / 1e9, 3) + "B";
    }
    return {ok, "ratios " + fmt(r1, 5) + " " + fmt(r2, 5) + ", large12 " + fmt(l12 / 1e9) + " GMACs," + counts};
}

Outcome loss_oracles() {
    auto mat = [](std::size_t r, std::size_t c, std::vector<double> v) { return Tensor<double>::matrix(r, c, v); };
    const MaskSpec both{2, {0, 1}, 0.0, 1};
    const double s = std::sqrt(3.0) / 2.0;
    bool ok = true;
    for (double tau : {0.05, 0.1, 1.0, 10.0}) {
        Rng rng(1, "oracle");
        const double v = contrastive_layer_loss(mat(2, 2, {1, 0, 1, 0}), mat(2, 2, {0.5, s, 0.5, -s}), both, 100, tau,
                                                rng, true);
        ok = ok && std::abs(v - std::log(2.0)) <= 1e-12;
    }
    Rng rng(1, "oracle");
    const double opposed =
        contrastive_layer_loss(mat(2, 2, {1, 0, -1, 0}), mat(2, 2, {1, 0, -1, 0}), both, 1, 0.1, rng, true);
    ok = ok && std::abs(opposed - std::log1p(std::exp(-20.0))) <= 1e-12;
    const double l2 = l2_layer_loss(mat(1, 2, {1, 0}), mat(1, 2, {0, 1}), MaskSpec{1, {0}, 0.0, 1}, true);
    ok = ok && l2 == 1.0;
    return {ok, "log 2, log1p(e^-20) = " + fmt(opposed, 6) + ", l2 = " + fmt(l2)};
}

Outcome gradient_suite() {
    bool ok = true;
    double worst = 0.0;
    std::string worst_name;
    for (const auto& [name, build] : testing::primitive_cases()) {
        for (std::uint64_t seed = 0; seed < 100; ++seed) {
            const auto c = build(seed);
            const auto rep = finite_difference_check(c.graph, "y", c.inputs, 1e-5, 1e-4);
            ok = ok && rep.ok;
            if (rep.max_rel_error() > worst) {
                worst = rep.max_rel_error();
                worst_name = name;
            }
        }
    }
    const GradCheckSummary loss = check_loss_gradients(0, 100, 1e-3, 1e-4, LossKind::Contrastive);
    ok = ok && loss.failures == 0 && loss.max_rel_error < 1e-4;
    return {ok, std::to_string(testing::primitive_cases().size()) + " primitives worst " + fmt(worst, 3) + " (" +
                    worst_name + "), masked contrastive loss worst " + fmt(loss.max_rel_error, 3) + " over " +
                    std::to_string(loss.seeds) + " seeds"};
}

Outcome schedule() {
    const Schedule s{1e-4, 4000, 200000};
    const bool ok = lr_at(0, s) == 0.0 && std::abs(lr_at(4000, s) - 1e-4) <= 1e-15 * 1e-4 &&
                    std::abs(lr_at(102000, s) - 5e-5) <= 1e-15 * 5e-5;
    return {ok, "lr(4000) " + fmt(lr_at(4000, s), 17) + ", lr(102000) " + fmt(lr_at(102000, s), 17)};
}

// Tiny teacher/student pair on a class-structured synthetic corpus.
struct ToyRun {
    std::uint64_t seed;
    SyntheticCorpus data;
    Encoder teacher;
    Encoder student;
    DistillConfig cfg;

    explicit ToyRun(std::uint64_t s, LossKind loss = LossKind::Contrastive)
        : seed(s), data(corpus(s)), teacher(build_encoder(encoder_preset("tiny"), derive_seed(s, "init", 1))),
          student(build_encoder(encoder_preset("tiny-student"), derive_seed(s, "init", 2))) {
        cfg.seed = s;
        cfg.loss = loss;
        cfg.peak_lr = 1e-3;
        cfg.warmup_steps = 50;
        cfg.total_steps = 500;
    }

    static SyntheticCorpusConfig corpus(std::uint64_t s) {
        SyntheticCorpusConfig c;
        c.seed = derive_seed(s, "data");
        c.synth.noise_std = 2.0;
        return c;
    }
};

struct ToyResult {
    double first_loss = 0.0;
    double last_loss = 0.0;
    std::vector<double> align_before;
    std::vector<double> align_after;
    std::vector<double> collapse;
    Encoder distilled;
};

ToyResult run_toy(const ToyRun& run) {
    Distiller d(run.cfg, run.teacher, make_train_state(run.cfg, run.teacher, run.student), run.data);
    const std::vector<std::size_t> eval = {0, 1, 2, 3, 4, 5, 6, 7};
    ToyResult r;
    r.align_before = d.masked_alignment(eval);
    std::size_t first_n = 0, last_n = 0;
    for (std::size_t s = 0; s < run.cfg.total_steps; ++s) {
        const MetricRecord rec = d.step();
        if (rec.loss && s < 50) {
            r.first_loss += *rec.loss;
            ++first_n;
        }
        if (rec.loss && s >= run.cfg.total_steps - 50) {
            r.last_loss += *rec.loss;
            ++last_n;
        }
        if (rec.collapse) r.collapse.push_back(*rec.collapse);
    }
    r.first_loss /= double(std::max<std::size_t>(first_n, 1));
    r.last_loss /= double(std::max<std::size_t>(last_n, 1));
    r.align_after = d.masked_alignment(eval);
    r.distilled = d.state().student;
    return r;
}

std::vector<ToyResult>& toy_results() {
    static std::vector<ToyResult> results = [] {
        std::vector<ToyResult> out;
        for (std::uint64_t s = 1; s <= 3; ++s) out.push_back(run_toy(ToyRun(s)));
        return out;
    }();
    return results;
}

Outcome toy_convergence() {
    bool ok = true;
    std::string detail;
    for (std::size_t i = 0; i < toy_results().size(); ++i) {
        const ToyResult& r = toy_results()[i];
        ok = ok && r.last_loss < r.first_loss && r.align_before.size() == 2;
        for (std::size_t l = 0; l < r.align_before.size(); ++l) ok = ok && r.align_after[l] > r.align_before[l];
        detail += "seed " + std::to_string(i + 1) + ": loss " + fmt(r.first_loss) + "->" + fmt(r.last_loss) +
                  " align " + fmt(r.align_before[0], 3) + "," + fmt(r.align_before[1], 3) + "->" +
                  fmt(r.align_after[0], 3) + "," + fmt(r.align_after[1], 3) + "; ";
    }
    return {ok, detail};
}

Outcome anti_collapse() {
    bool ok = true;
    std::string detail = "contrastive max";
    for (const ToyResult& r : toy_results()) {
        const double m = r.collapse.empty() ? 1.0 : *std::max_element(r.collapse.begin(), r.collapse.end());
        ok = ok && !r.collapse.empty() && m < 0.9;
        detail += " " + fmt(m, 3);
    }
    const ToyResult l2 = run_toy(ToyRun(1, LossKind::L2));
    detail += "; l2 diagnostic (seed 1) collapse";
    for (std::size_t i = 0; i < l2.collapse.size(); i += 10) detail += " " + fmt(l2.collapse[i], 3);
    detail += " final " + fmt(l2.collapse.back(), 3);
    return {ok, detail};
}

bool same_parameters(const ParameterSet& a, const ParameterSet& b) {
    if (a.size() != b.size()) return false;
    for (const auto& [name, t] : a) {
        const auto it = b.find(name);
        if (it == b.end() || t.shape() != it->second.shape() ||
            std::memcmp(t.data().data(), it->second.data().data(), t.size() * sizeof(float)) != 0) {
            return false;
        }
    }
    return true;
}

Outcome masked_only_gradients() {
    ToyRun run(7);
    Distiller a(run.cfg, run.teacher, make_train_state(run.cfg, run.teacher, run.student), run.data);
    Distiller b(run.cfg, run.teacher, make_train_state(run.cfg, run.teacher, run.student), run.data);
    a.step();
    b.step(StepOptions{true});
    const bool ok = same_parameters(a.state().student.parameters(), b.state().student.parameters()) &&
                    same_parameters(a.state().heads, b.state().heads);
    return {ok, "student and head parameters after one step compared bitwise"};
}

Outcome determinism_and_checkpoint() {
    ToyRun run(9);
    run.cfg.collapse_every = 5;
    auto jsonl = [](const std::vector<MetricRecord>& h) {
        std::string s;
        for (const auto& r : h) s += r.to_json().dump() + "\n";
        return s;
    };
    const std::string a = jsonl(distill(run.cfg, run.teacher, run.student, run.data, 20).history);
    const std::string b = jsonl(distill(run.cfg, run.teacher, run.student, run.data, 20).history);
    bool ok = a == b;

    const auto dir = std::filesystem::temp_directory_path() / "colld_acceptance";
    std::filesystem::create_directories(dir);
    Distiller full(run.cfg, run.teacher, make_train_state(run.cfg, run.teacher, run.student), run.data);
    for (int i = 0; i < 10; ++i) full.step();
    save_train_state(dir / "k.ckpt", full.state(), full.config());
    const MetricRecord expected = full.step();
    DistillConfig cfg;
    TrainState restored = load_train_state(dir / "k.ckpt", &cfg);
    Distiller resumed(cfg, run.teacher, std::move(restored), run.data);
    const MetricRecord got = resumed.step();
    ok = ok && got.to_json().dump() == expected.to_json().dump() &&
         same_parameters(resumed.state().student.parameters(), full.state().student.parameters());
    std::filesystem::remove_all(dir);
    return {ok, "20-step JSONL identical across runs (" + std::to_string(a.size()) +
                    " bytes); resume at step 10 reproduces record 11"};
}

Outcome probe_transfer() {
    double distilled = 0.0, random = 0.0;
    std::string detail;
    for (std::size_t i = 0; i < toy_results().size(); ++i) {
        const std::uint64_t seed = i + 1;
        const ToyRun run(seed);
        const std::size_t last = run.student.config().layers;
        const double d = train_linear_probe(extract_frozen(toy_results()[i].distilled, run.data, last), seed).accuracy;
        const double r = train_linear_probe(extract_frozen(run.student, run.data, last), seed).accuracy;
        distilled += d;
        random += r;
        detail += fmt(d, 3) + " vs " + fmt(r, 3) + "; ";
    }
    distilled /= 3.0;
    random /= 3.0;
    const double margin = 100.0 * (distilled - random);
    return {margin >= 5.0, "mean distilled " + fmt(distilled, 4) + " vs random " + fmt(random, 4) + ", margin " +
                               fmt(margin, 3) + " points (" + detail + ")"};
}

} // namespace

int main(int argc, char** argv) {
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
        {"layer mapping", layer_mapping},
        {"mask coverage", mask_coverage},
        {"cost model", cost_model},
        {"loss oracles", loss_oracles},
        {"gradient suite", gradient_suite},
        {"schedule", schedule},
        {"toy convergence", toy_convergence},
        {"anti-collapse", anti_collapse},
        {"masked-only gradients", masked_only_gradients},
        {"determinism and checkpointing", determinism_and_checkpoint},
        {"probe transfer", probe_transfer},
    };
    std::set<std::size_t> selected;
    for (int i = 1; i < argc; ++i) selected.insert(std::stoul(argv[i]));

    int failures = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        if (!selected.empty() && !selected.count(i + 1)) continue;
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = criteria[i].second();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        std::cout << (o.pass ? "PASS " : "FAIL ") << i + 1 << " " << criteria[i].first << " [" << fmt(secs, 3)
                  << " s] " << o.detail << std::endl;
        failures += o.pass ? 0 : 1;
    }
    return failures == 0 ? 0 : 1;
}
