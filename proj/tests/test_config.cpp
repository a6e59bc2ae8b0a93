// Copyright (c) 2026 The CoLLD Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "colld/config.hpp"

using namespace colld;

namespace {

json minimal() {
    return json::parse(R"({
        "seed": 7,
        "output_dir": "runs/a",
        "steps": 100,
        "teacher": {"preset": "tiny"},
        "student": {"preset": "tiny-student"}
    })");
}

std::string error_of(const json& j) {
    try {
        run_config_from_json(j);
    } catch (const ConfigError& e) {
        return e.what();
    }
    return "";
}

} // namespace

TEST_CASE("minimal config fills defaults") {
    RunConfig c = run_config_from_json(minimal());
    CHECK(c.seed == 7);
    CHECK(c.distill.seed == 7);
    CHECK(c.steps == 100);
    CHECK(c.distill.total_steps == 100);
    CHECK(c.distill.warmup_steps == 100);
    CHECK(c.teacher.config == encoder_preset("tiny"));
    CHECK(c.distill.temperature == 0.1);
    CHECK(c.distill.distractors == 100);
    CHECK(c.distill.mask_prob == 0.065);
    CHECK(c.distill.mask_span == 10);
    CHECK(c.data.source == "synthetic");
    CHECK(c.data.synthetic.seed == derive_seed(7, "data"));
}

TEST_CASE("resolved config round-trips") {
    json j = minimal();
    j["distill"] = {{"loss", "l2"}, {"peak_lr", 5e-4}, {"warmup_steps", 10}, {"tap_kind", "block_output"}};
    j["data"] = {{"utterances", 9}, {"synth", {{"noise_std", 2.0}}}};
    RunConfig c = run_config_from_json(j);
    CHECK(c.distill.loss == LossKind::L2);
    CHECK(c.distill.tap_kind == TapKind::BlockOutput);
    CHECK(c.data.synthetic.utterances == 9);
    CHECK(c.data.synthetic.synth.noise_std == 2.0);
    RunConfig back = run_config_from_json(to_json(c));
    CHECK(to_json(back) == to_json(c));
}

TEST_CASE("errors point at the offending key") {
    json j = minimal();
    j["distill"] = {{"temperture", 0.1}};
    CHECK(error_of(j).rfind("/distill/temperture", 0) == 0);

    j = minimal();
    j["distill"] = {{"temperature", "hot"}};
    CHECK(error_of(j).rfind("/distill/temperature", 0) == 0);

    j = minimal();
    j["teacher"] = {{"preset", "giant"}};
    CHECK(error_of(j).rfind("/teacher/preset", 0) == 0);

    j = minimal();
    j.erase("seed");
    CHECK(error_of(j).rfind("/seed", 0) == 0);

    j = minimal();
    j["extra"] = 1;
    CHECK(error_of(j).rfind("/extra", 0) == 0);

    j = minimal();
    j["steps"] = -3;
    CHECK(error_of(j).rfind("/steps", 0) == 0);

    j = minimal();
    j["student"] = {{"preset", "tiny-student"}, {"input_dim", 80}};
    CHECK(error_of(j).rfind("/student/input_dim", 0) == 0);

    j = minimal();
    j["distill"] = {{"loss", "l1"}};
    CHECK(error_of(j).rfind("/distill/loss", 0) == 0);

    j = minimal();
    j["data"] = {{"source", "manifest"}};
    CHECK(error_of(j).rfind("/data/manifest", 0) == 0);
}

TEST_CASE("config files") {
    auto dir = std::filesystem::temp_directory_path() / "colld_test_config";
    std::filesystem::create_directories(dir);
    CHECK_THROWS_AS(load_run_config(dir / "missing.json"), ConfigError);
    {
        std::ofstream(dir / "bad.json") << "{ not json";
    }
    CHECK_THROWS_AS(load_run_config(dir / "bad.json"), ConfigError);
    {
        std::ofstream(dir / "ok.json") << minimal().dump();
    }
    CHECK(load_run_config(dir / "ok.json").seed == 7);
}
