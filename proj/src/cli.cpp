// Copyright (c) 2026 The CoLLD Authors
// SPDX-License-Identifier: Apache-2.0

#include "colld/cli.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <memory>
#include <sstream>

#include "colld/checkpoint.hpp"
#include "colld/config.hpp"
#include "colld/distiller.hpp"
#include "colld/gradcheck.hpp"
#include "colld/kernels.hpp"
#include "colld/mapping.hpp"
#include "colld/masking.hpp"
#include "colld/probe.hpp"

namespace colld {

namespace fs = std::filesystem;

namespace {

struct DistillArgs {
    std::string config;
};

struct MapArgs {
    std::size_t student = 0;
    std::size_t teacher = 0;
};

struct MaskArgs {
    double p = 0.065;
    std::size_t span = 10;
    std::size_t frames = 1000;
    std::size_t sequences = 100;
    std::uint64_t seed = 0;
};

struct CostArgs {
    std::string preset;
    double seconds = 20.0;
};

struct SynthArgs {
    std::size_t utterances = 64;
    std::size_t frames = 200;
    std::size_t dim = 80;
    std::size_t classes = 8;
    double noise_std = SynthOptions{}.noise_std;
    std::uint64_t seed = 0;
};

struct ProbeArgs {
    std::string checkpoint;
    std::string preset;
    std::uint64_t init_seed = 0;
    std::size_t layer = 0;
    std::uint64_t seed = 0;
    std::size_t limit = 0;
    std::size_t stack_factor = 2;
    SynthArgs data;
};

struct GradArgs {
    std::size_t seeds = 100;
    std::uint64_t first_seed = 0;
    double epsilon = 1e-3;
    double tolerance = 1e-4;
    std::string loss = "contrastive";
};

struct SynthOutArgs {
    SynthArgs data;
    std::string out_dir;
};

void print(std::ostream& out, const json& j) { out << j.dump(2) << '\n'; }

std::unique_ptr<DataSource> open_data(const DataConfig& d) {
    if (d.source == "manifest") return std::make_unique<ManifestCorpus>(d.manifest, d.stack_factor);
    return std::make_unique<SyntheticCorpus>(d.synthetic);
}

Encoder make_encoder(const EncoderSpec& spec, std::uint64_t seed, const std::string& role) {
    if (spec.checkpoint) {
        Encoder e = load_encoder(*spec.checkpoint);
        if (!(e.config().layers == spec.config.layers && e.config().dim == spec.config.dim &&
              e.config().ffn == spec.config.ffn && e.config().heads == spec.config.heads &&
              e.config().conv_kernel == spec.config.conv_kernel && e.config().input_dim == spec.config.input_dim)) {
            throw ConfigError("/" + role + ": checkpoint architecture does not match the configured one");
        }
        return e;
    }
    return build_encoder(spec.config, derive_seed(seed, "init:" + role));
}

int cmd_distill(const DistillArgs& a, std::ostream& out, std::ostream& err) {
    const RunConfig cfg = load_run_config(a.config);
    const auto data = open_data(cfg.data);
    const Encoder teacher = make_encoder(cfg.teacher, cfg.seed, "teacher");
    Encoder student = make_encoder(cfg.student, cfg.seed, "student");

    const fs::path dir = cfg.output_dir;
    fs::create_directories(dir);
    {
        json resolved;
        resolved["tool"] = "colld";
        resolved["version"] = COLLD_VERSION;
        resolved["config"] = to_json(cfg);
        std::ofstream f(dir / "config.json");
        f << resolved.dump(2) << '\n';
    }
    save_encoder(dir / "teacher.ckpt", teacher);

    std::ofstream metrics(dir / "metrics.jsonl", std::ios::trunc);
    if (!metrics) throw FormatError("cannot write " + (dir / "metrics.jsonl").string());
    DistillOptions opt;
    opt.checkpoint_dir = dir / "checkpoints";
    opt.sink = [&](const MetricRecord& r) { metrics << r.to_json().dump() << '\n' << std::flush; };
    TrainState st = distill(cfg.distill, teacher, std::move(student), *data, cfg.steps, opt);

    save_encoder(dir / "student.ckpt", st.student, st.optimizer.step);
    save_train_state(dir / "train_state.ckpt", st, cfg.distill);
    json summary;
    summary["output_dir"] = dir.generic_string();
    summary["steps"] = st.optimizer.step;
    summary["final_loss"] = st.history.empty() || !st.history.back().loss ? json(nullptr) : json(*st.history.back().loss);
    summary["student_checkpoint"] = (dir / "student.ckpt").generic_string();
    print(out, summary);
    (void)err;
    return kExitOk;
}

SyntheticCorpusConfig corpus_of(const SynthArgs& a, std::size_t stack_factor) {
    SyntheticCorpusConfig c;
    c.utterances = a.utterances;
    c.frames = a.frames;
    c.feature_dim = a.dim;
    c.num_classes = a.classes;
    c.seed = a.seed;
    c.stack_factor = stack_factor;
    c.synth.noise_std = a.noise_std;
    return c;
}

int cmd_probe(const ProbeArgs& a, std::ostream& out) {
    if (a.checkpoint.empty() == a.preset.empty()) throw UsageError("probe: give exactly one of --checkpoint or --preset");
    const Encoder enc = a.checkpoint.empty() ? build_encoder(encoder_preset(a.preset), a.init_seed) : load_encoder(a.checkpoint);
    const SyntheticCorpus data(corpus_of(a.data, a.stack_factor));
    if (enc.config().input_dim != a.data.dim * a.stack_factor) {
        throw ConfigError("/input_dim: encoder expects " + std::to_string(enc.config().input_dim) +
                          " inputs, data gives " + std::to_string(a.data.dim * a.stack_factor));
    }
    const std::size_t layer = a.layer == 0 ? enc.config().layers : a.layer;
    print(out, train_linear_probe(extract_frozen(enc, data, layer, a.limit), a.seed).to_json());
    return kExitOk;
}

int cmd_synth(const SynthOutArgs& a, std::ostream& out) {
    const fs::path dir = a.out_dir;
    fs::create_directories(dir);
    SynthOptions opts;
    opts.noise_std = a.data.noise_std;
    Manifest manifest;
    std::ofstream labels(dir / "labels.jsonl", std::ios::trunc);
    for (std::size_t i = 0; i < a.data.utterances; ++i) {
        LabeledSequence s = synth_features(derive_seed(a.data.seed, "utterance", i), a.data.frames, a.data.dim,
                                           a.data.classes, opts);
        std::ostringstream id;
        id << "utt" << std::setw(5) << std::setfill('0') << i;
        s.features.utterance_id = id.str();
        const std::string file = id.str() + ".clld";
        write_features(s.features, dir / file);
        manifest.entries.push_back({id.str(), file, s.features.frames(), s.features.dim()});
        labels << json{{"id", id.str()}, {"labels", s.labels}}.dump() << '\n';
    }
    write_manifest(manifest, dir / "manifest.jsonl");
    print(out, {{"manifest", (dir / "manifest.jsonl").generic_string()}, {"utterances", a.data.utterances}});
    return kExitOk;
}

void add_synth_flags(CLI::App* cmd, SynthArgs& a) {
    cmd->add_option("--utterances", a.utterances, "Number of utterances")->check(CLI::PositiveNumber);
    cmd->add_option("--frames", a.frames, "Frames per utterance at 100 Hz")->check(CLI::PositiveNumber);
    cmd->add_option("--dim", a.dim, "Feature dimension")->check(CLI::PositiveNumber);
    cmd->add_option("--classes", a.classes, "Number of label classes")->check(CLI::PositiveNumber);
    cmd->add_option("--noise-std", a.noise_std, "Frame noise standard deviation")->check(CLI::NonNegativeNumber);
    cmd->add_option("--data-seed", a.seed, "Corpus seed");
}

} // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Layer-to-layer contrastive distillation toolkit", "colld"};
    app.require_subcommand(1);
    app.set_version_flag("--version", COLLD_VERSION);
    bool serial = false;
    app.add_flag("--serial", serial, "Use the serial kernels instead of the OpenMP ones");

    DistillArgs distill_args;
    auto* distill_cmd = app.add_subcommand("distill", "Run distillation from a JSON config");
    distill_cmd->add_option("--config", distill_args.config, "Run config file")->required();

    MapArgs map_args;
    auto* map_cmd = app.add_subcommand("map", "Print the student-to-teacher layer map");
    map_cmd->add_option("--student", map_args.student, "Student layers")->required();
    map_cmd->add_option("--teacher", map_args.teacher, "Teacher layers")->required();

    MaskArgs mask_args;
    auto* mask_cmd = app.add_subcommand("mask-stats", "Monte Carlo mask coverage");
    mask_cmd->add_option("--p", mask_args.p, "Span start probability")->check(CLI::Range(0.0, 1.0));
    mask_cmd->add_option("--span", mask_args.span, "Span length")->check(CLI::PositiveNumber);
    mask_cmd->add_option("--frames", mask_args.frames, "Frames per sequence")->check(CLI::PositiveNumber);
    mask_cmd->add_option("--sequences", mask_args.sequences, "Number of sequences")->check(CLI::PositiveNumber);
    mask_cmd->add_option("--seed", mask_args.seed, "Seed");

    CostArgs cost_args;
    auto* cost_cmd = app.add_subcommand("cost", "Parameter count and forward MACs of a preset");
    cost_cmd->add_option("--preset", cost_args.preset, "Encoder preset")->required();
    cost_cmd->add_option("--seconds", cost_args.seconds, "Utterance length in seconds");

    ProbeArgs probe_args;
    auto* probe_cmd = app.add_subcommand("probe", "Frozen linear probe on synthetic labels");
    probe_cmd->add_option("--checkpoint", probe_args.checkpoint, "Encoder checkpoint");
    probe_cmd->add_option("--preset", probe_args.preset, "Random encoder preset instead of a checkpoint");
    probe_cmd->add_option("--init-seed", probe_args.init_seed, "Initialization seed for --preset");
    probe_cmd->add_option("--layer", probe_args.layer, "Layer to probe (default: last)");
    probe_cmd->add_option("--seed", probe_args.seed, "Probe split seed");
    probe_cmd->add_option("--limit", probe_args.limit, "Use only the first N utterances");
    probe_cmd->add_option("--stack-factor", probe_args.stack_factor, "Frame stacking factor")->check(CLI::PositiveNumber);
    add_synth_flags(probe_cmd, probe_args.data);

    GradArgs grad_args;
    auto* grad_cmd = app.add_subcommand("grad-check", "Finite-difference check of the masked loss graph");
    grad_cmd->add_option("--seeds", grad_args.seeds, "Number of seeds")->check(CLI::PositiveNumber);
    grad_cmd->add_option("--first-seed", grad_args.first_seed, "First seed");
    grad_cmd->add_option("--epsilon", grad_args.epsilon, "Step size")->check(CLI::PositiveNumber);
    grad_cmd->add_option("--tolerance", grad_args.tolerance, "Max relative error")->check(CLI::PositiveNumber);
    grad_cmd->add_option("--loss", grad_args.loss, "contrastive or l2")->check(CLI::IsMember({"contrastive", "l2"}));

    SynthOutArgs synth_args;
    auto* synth_cmd = app.add_subcommand("synth-data", "Write a synthetic feature corpus and manifest");
    synth_cmd->add_option("--out-dir", synth_args.out_dir, "Output directory")->required();
    add_synth_flags(synth_cmd, synth_args.data);

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitConfig;
    }

    const bool was_parallel = kernels::parallel_enabled();
    kernels::set_parallel(!serial && was_parallel);
    try {
        int rc = kExitOk;
        if (*distill_cmd) {
            rc = cmd_distill(distill_args, out, err);
        } else if (*map_cmd) {
            const LayerMap m = layer_map(map_args.student, map_args.teacher);
            json pairs = json::array();
            for (const auto& [l, lt] : m.pairs) pairs.push_back({l, lt});
            print(out, {{"student_layers", m.student_layers}, {"teacher_layers", m.teacher_layers}, {"pairs", pairs}});
        } else if (*mask_cmd) {
            const CoverageStats s =
                coverage_stats(mask_args.p, mask_args.span, mask_args.frames, mask_args.sequences, mask_args.seed);
            print(out, {{"p", s.p},
                        {"span", s.span},
                        {"n", s.n},
                        {"empirical_coverage", s.empirical_coverage},
                        {"expected_coverage", s.expected_coverage}});
        } else if (*cost_cmd) {
            const EncoderConfig c = encoder_preset(cost_args.preset);
            const double macs = estimate_macs(c, cost_args.seconds);
            print(out, {{"preset", cost_args.preset},
                        {"layers", c.layers},
                        {"dim", c.dim},
                        {"ffn", c.ffn},
                        {"heads", c.heads},
                        {"conv_kernel", c.conv_kernel},
                        {"param_count", param_count(c)},
                        {"seconds", cost_args.seconds},
                        {"macs", macs},
                        {"gmacs", macs / 1e9}});
        } else if (*probe_cmd) {
            rc = cmd_probe(probe_args, out);
        } else if (*grad_cmd) {
            const GradCheckSummary s = check_loss_gradients(grad_args.first_seed, grad_args.seeds, grad_args.epsilon,
                                                            grad_args.tolerance, loss_kind_from_string(grad_args.loss));
            print(out, {{"loss", grad_args.loss},
                        {"seeds", s.seeds},
                        {"failures", s.failures},
                        {"max_rel_error", s.max_rel_error},
                        {"worst_seed", s.worst_seed},
                        {"tolerance", grad_args.tolerance}});
            rc = s.failures == 0 ? kExitOk : kExitRuntime;
        } else if (*synth_cmd) {
            rc = cmd_synth(synth_args, out);
        }
        kernels::set_parallel(was_parallel);
        return rc;
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << '\n';
        kernels::set_parallel(was_parallel);
        return kExitConfig;
    } catch (const UsageError& e) {
        err << "usage error: " << e.what() << '\n';
        kernels::set_parallel(was_parallel);
        return kExitConfig;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        kernels::set_parallel(was_parallel);
        return kExitRuntime;
    }
}

} // namespace colld
