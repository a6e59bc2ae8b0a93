// Copyright (c) 2026 The CoLLD Authors
// SPDX-License-Identifier: Apache-2.0

#include "colld/config.hpp"

#include <fstream>
#include <set>
#include <type_traits>

#include "colld/rng.hpp"

namespace colld {

namespace {

[[noreturn]] void fail(const std::string& pointer, const std::string& msg) {
    throw ConfigError((pointer.empty() ? std::string("/") : pointer) + ": " + msg);
}

/// Reads fields of one JSON object and rejects keys nobody asked for.
class Reader {
public:
    Reader(const json& j, std::string pointer) : j_(j), ptr_(std::move(pointer)) {
        if (!j_.is_object()) fail(ptr_, "expected an object");
    }

    std::string path(const std::string& key) const { return ptr_ + "/" + key; }

    bool has(const std::string& key) const { return j_.contains(key); }

    const json* sub(const std::string& key) {
        seen_.insert(key);
        auto it = j_.find(key);
        return it == j_.end() ? nullptr : &*it;
    }

    template <class U>
        requires(std::is_unsigned_v<U> && !std::is_same_v<U, bool>)
    void get(const std::string& key, U& out) {
        if (const json* v = sub(key)) {
            if (!v->is_number_unsigned() && !(v->is_number_integer() && v->get<std::int64_t>() >= 0)) {
                fail(path(key), "expected a non-negative integer");
            }
            out = v->get<U>();
        }
    }
    void get(const std::string& key, double& out) {
        if (const json* v = sub(key)) {
            if (!v->is_number()) fail(path(key), "expected a number");
            out = v->get<double>();
        }
    }
    void get(const std::string& key, bool& out) {
        if (const json* v = sub(key)) {
            if (!v->is_boolean()) fail(path(key), "expected true or false");
            out = v->get<bool>();
        }
    }
    void get(const std::string& key, std::string& out) {
        if (const json* v = sub(key)) {
            if (!v->is_string()) fail(path(key), "expected a string");
            out = v->get<std::string>();
        }
    }

    template <class Parse>
    void get_enum(const std::string& key, Parse parse) {
        std::string s;
        get(key, s);
        if (!has(key)) return;
        try {
            parse(s);
        } catch (const ConfigError& e) {
            fail(path(key), e.what());
        }
    }

    void require(const std::string& key) const {
        if (!has(key)) fail(path(key), "required key is missing");
    }

    void finish() const {
        for (const auto& [key, value] : j_.items()) {
            if (!seen_.count(key)) fail(path(key), "unknown key");
        }
    }

private:
    const json& j_;
    std::string ptr_;
    std::set<std::string> seen_;
};

template <class F>
void rethrow_with_pointer(const std::string& pointer, F&& f) {
    try {
        f();
    } catch (const ConfigError& e) {
        const std::string what = e.what();
        if (!what.empty() && what[0] == '/') throw;
        fail(pointer, what);
    }
}

} // namespace

// ---------------------------------------------------------------------------

json to_json(const EncoderConfig& c) {
    json j;
    if (!c.preset_name.empty()) j["preset"] = c.preset_name;
    j["layers"] = c.layers;
    j["dim"] = c.dim;
    j["ffn"] = c.ffn;
    j["heads"] = c.heads;
    j["conv_kernel"] = c.conv_kernel;
    j["input_dim"] = c.input_dim;
    return j;
}

EncoderConfig encoder_config_from_json(const json& j, const std::string& pointer) {
    Reader r(j, pointer);
    EncoderConfig c;
    std::string preset;
    r.get("preset", preset);
    if (!preset.empty()) rethrow_with_pointer(r.path("preset"), [&] { c = encoder_preset(preset); });
    r.get("layers", c.layers);
    r.get("dim", c.dim);
    r.get("ffn", c.ffn);
    r.get("heads", c.heads);
    r.get("conv_kernel", c.conv_kernel);
    r.get("input_dim", c.input_dim);
    r.finish();
    rethrow_with_pointer(pointer, [&] { c.validate(); });
    return c;
}

json to_json(const DistillConfig& c) {
    json j;
    j["loss"] = to_string(c.loss);
    j["temperature"] = c.temperature;
    j["distractors"] = c.distractors;
    j["tap_kind"] = to_string(c.tap_kind);
    j["target_instance_norm"] = c.target_instance_norm;
    j["projection"] = to_string(c.projection);
    j["normalized"] = c.normalized;
    j["mask_prob"] = c.mask_prob;
    j["mask_span"] = c.mask_span;
    j["peak_lr"] = c.peak_lr;
    j["warmup_steps"] = c.warmup_steps;
    j["total_steps"] = c.total_steps;
    j["beta1"] = c.beta1;
    j["beta2"] = c.beta2;
    j["adam_eps"] = c.adam_eps;
    j["weight_decay"] = c.weight_decay;
    j["clip_norm"] = c.clip_norm;
    j["batch_size"] = c.batch_size;
    j["collapse_every"] = c.collapse_every;
    j["checkpoint_every"] = c.checkpoint_every;
    j["init_from_teacher"] = to_string(c.init_from_teacher);
    j["deterministic"] = c.deterministic;
    return j;
}

DistillConfig distill_config_from_json(const json& j, const std::string& pointer, DistillConfig c) {
    Reader r(j, pointer);
    r.get_enum("loss", [&](const std::string& s) { c.loss = loss_kind_from_string(s); });
    r.get("temperature", c.temperature);
    r.get("distractors", c.distractors);
    r.get_enum("tap_kind", [&](const std::string& s) { c.tap_kind = tap_kind_from_string(s); });
    r.get("target_instance_norm", c.target_instance_norm);
    r.get_enum("projection", [&](const std::string& s) { c.projection = projection_kind_from_string(s); });
    r.get("normalized", c.normalized);
    r.get("mask_prob", c.mask_prob);
    r.get("mask_span", c.mask_span);
    r.get("peak_lr", c.peak_lr);
    r.get("warmup_steps", c.warmup_steps);
    r.get("total_steps", c.total_steps);
    r.get("beta1", c.beta1);
    r.get("beta2", c.beta2);
    r.get("adam_eps", c.adam_eps);
    r.get("weight_decay", c.weight_decay);
    r.get("clip_norm", c.clip_norm);
    r.get("batch_size", c.batch_size);
    r.get("collapse_every", c.collapse_every);
    r.get("checkpoint_every", c.checkpoint_every);
    r.get_enum("init_from_teacher", [&](const std::string& s) { c.init_from_teacher = teacher_init_from_string(s); });
    r.get("deterministic", c.deterministic);
    r.finish();
    return c;
}

json to_json(const SynthOptions& o) {
    json j;
    j["prototype_seed"] = o.prototype_seed;
    j["prototype_scale"] = o.prototype_scale;
    j["noise_std"] = o.noise_std;
    j["noise_correlation"] = o.noise_correlation;
    j["mean_smoothing"] = o.mean_smoothing;
    j["min_segment"] = o.min_segment;
    j["max_segment"] = o.max_segment;
    j["rate_hz"] = o.rate_hz;
    return j;
}

SynthOptions synth_options_from_json(const json& j, const std::string& pointer) {
    Reader r(j, pointer);
    SynthOptions o;
    r.get("prototype_seed", o.prototype_seed);
    r.get("prototype_scale", o.prototype_scale);
    r.get("noise_std", o.noise_std);
    r.get("noise_correlation", o.noise_correlation);
    r.get("mean_smoothing", o.mean_smoothing);
    r.get("min_segment", o.min_segment);
    r.get("max_segment", o.max_segment);
    r.get("rate_hz", o.rate_hz);
    r.finish();
    if (!(o.noise_correlation >= 0.0 && o.noise_correlation < 1.0)) {
        fail(r.path("noise_correlation"), "must lie in [0, 1)");
    }
    if (!(o.mean_smoothing >= 0.0 && o.mean_smoothing < 1.0)) fail(r.path("mean_smoothing"), "must lie in [0, 1)");
    if (o.min_segment < 1 || o.max_segment < o.min_segment) fail(r.path("min_segment"), "invalid segment range");
    return o;
}

namespace {

EncoderSpec encoder_spec_from_json(const json& j, const std::string& pointer) {
    if (!j.is_object()) fail(pointer, "expected an object");
    json rest = j;
    EncoderSpec spec;
    if (auto it = rest.find("checkpoint"); it != rest.end()) {
        if (!it->is_string()) fail(pointer + "/checkpoint", "expected a string");
        spec.checkpoint = it->get<std::string>();
        rest.erase("checkpoint");
    }
    spec.config = encoder_config_from_json(rest, pointer);
    return spec;
}

json to_json(const EncoderSpec& s) {
    json j = to_json(s.config);
    if (s.checkpoint) j["checkpoint"] = s.checkpoint->generic_string();
    return j;
}

DataConfig data_config_from_json(const json& j, const std::string& pointer, std::uint64_t root_seed) {
    Reader r(j, pointer);
    DataConfig d;
    d.synthetic.seed = derive_seed(root_seed, "data");
    r.get("source", d.source);
    r.get("stack_factor", d.stack_factor);
    if (d.stack_factor < 1) fail(r.path("stack_factor"), "must be at least 1");
    if (d.source == "synthetic") {
        auto& s = d.synthetic;
        r.get("utterances", s.utterances);
        r.get("frames", s.frames);
        r.get("feature_dim", s.feature_dim);
        r.get("num_classes", s.num_classes);
        r.get("seed", s.seed);
        if (const json* o = r.sub("synth")) s.synth = synth_options_from_json(*o, r.path("synth"));
        s.stack_factor = d.stack_factor;
        if (s.utterances < 1) fail(r.path("utterances"), "must be at least 1");
        if (s.frames < d.stack_factor) fail(r.path("frames"), "must cover at least one stacked frame");
        if (s.feature_dim < 1) fail(r.path("feature_dim"), "must be positive");
        if (s.num_classes < 1) fail(r.path("num_classes"), "must be positive");
    } else if (d.source == "manifest") {
        std::string m;
        r.require("manifest");
        r.get("manifest", m);
        d.manifest = m;
    } else {
        fail(r.path("source"), "expected \"synthetic\" or \"manifest\"");
    }
    r.finish();
    return d;
}

json to_json(const DataConfig& d) {
    json j;
    j["source"] = d.source;
    j["stack_factor"] = d.stack_factor;
    if (d.source == "synthetic") {
        j["utterances"] = d.synthetic.utterances;
        j["frames"] = d.synthetic.frames;
        j["feature_dim"] = d.synthetic.feature_dim;
        j["num_classes"] = d.synthetic.num_classes;
        j["seed"] = d.synthetic.seed;
        j["synth"] = to_json(d.synthetic.synth);
    } else {
        j["manifest"] = d.manifest.generic_string();
    }
    return j;
}

} // namespace

RunConfig run_config_from_json(const json& j) {
    Reader r(j, "");
    RunConfig c;
    r.require("seed");
    r.require("output_dir");
    r.require("steps");
    r.require("teacher");
    r.require("student");
    r.get("seed", c.seed);
    std::string out;
    r.get("output_dir", out);
    if (out.empty()) fail("/output_dir", "must not be empty");
    c.output_dir = out;
    r.get("steps", c.steps);
    c.teacher = encoder_spec_from_json(*r.sub("teacher"), "/teacher");
    c.student = encoder_spec_from_json(*r.sub("student"), "/student");

    DistillConfig base;
    base.total_steps = std::max<std::size_t>(c.steps, 1);
    base.warmup_steps = std::min(base.warmup_steps, base.total_steps);
    if (const json* d = r.sub("distill")) base = distill_config_from_json(*d, "/distill", base);
    base.seed = c.seed;
    c.distill = base;
    rethrow_with_pointer("/distill", [&] { c.distill.validate(); });
    if (c.steps > c.distill.total_steps) fail("/steps", "exceeds distill.total_steps");

    if (const json* d = r.sub("data")) {
        c.data = data_config_from_json(*d, "/data", c.seed);
    } else {
        c.data.synthetic.seed = derive_seed(c.seed, "data");
    }
    r.finish();
    if (c.teacher.config.input_dim != c.student.config.input_dim) {
        fail("/student/input_dim", "must equal the teacher's input_dim");
    }
    return c;
}

json to_json(const RunConfig& c) {
    json j;
    j["seed"] = c.seed;
    j["output_dir"] = c.output_dir.generic_string();
    j["steps"] = c.steps;
    j["teacher"] = to_json(c.teacher);
    j["student"] = to_json(c.student);
    json d = to_json(c.distill);
    j["distill"] = d;
    j["data"] = to_json(c.data);
    return j;
}

RunConfig load_run_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("/: cannot open config file " + path.string());
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError("/: " + path.string() + " is not valid JSON: " + e.what());
    }
    return run_config_from_json(j);
}

} // namespace colld
