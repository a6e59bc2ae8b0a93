// Copyright (c) 2026 The CoLLD Authors
// SPDX-License-Identifier: Apache-2.0
//
// JSON forms of the configuration types. Parsing is strict: unknown keys and
// wrong types raise ConfigError whose message starts with the JSON pointer of
// the offending key.

#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include <json.hpp>

#include "colld/data.hpp"
#include "colld/encoder.hpp"
#include "colld/losses.hpp"

namespace colld {

using json = nlohmann::ordered_json;

json to_json(const EncoderConfig& c);
EncoderConfig encoder_config_from_json(const json& j, const std::string& pointer = "");

json to_json(const DistillConfig& c);
/// Fields absent from `j` keep the values of `base`.
DistillConfig distill_config_from_json(const json& j, const std::string& pointer = "", DistillConfig base = {});

json to_json(const SynthOptions& o);
SynthOptions synth_options_from_json(const json& j, const std::string& pointer = "");

struct EncoderSpec {
    EncoderConfig config;
    std::optional<std::filesystem::path> checkpoint; // load weights instead of random init
};

struct DataConfig {
    std::string source = "synthetic"; // "synthetic" | "manifest"
    SyntheticCorpusConfig synthetic;
    std::filesystem::path manifest;
    std::size_t stack_factor = 2;
};

/// Everything a `distill` run needs. All randomness derives from `seed`.
struct RunConfig {
    std::uint64_t seed = 0;
    std::filesystem::path output_dir;
    std::size_t steps = 0;
    EncoderSpec teacher;
    EncoderSpec student;
    DistillConfig distill;
    DataConfig data;
};

RunConfig run_config_from_json(const json& j);
json to_json(const RunConfig& c);
/// Reads and parses a config file; missing or unparsable files raise ConfigError.
RunConfig load_run_config(const std::filesystem::path& path);

} // namespace colld
