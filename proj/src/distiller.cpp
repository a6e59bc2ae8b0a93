// Copyright (c) 2026 The CoLLD Authors
// SPDX-License-Identifier: Apache-2.0

#include "colld/distiller.hpp"

#include <chrono>
#include <cmath>
#include <sstream>
#include <unordered_map>

#include "colld/checkpoint.hpp"

namespace colld {

namespace {

constexpr std::size_t kMaxCollapsePairs = 2000;

double row_cosine(const Tensor<float>& x, std::size_t i, std::size_t j) {
    double dot = 0.0, aa = 0.0, bb = 0.0;
    for (std::size_t c = 0; c < x.cols(); ++c) {
        const double a = x(i, c), b = x(j, c);
        dot += a * b;
        aa += a * a;
        bb += b * b;
    }
    return aa > 0.0 && bb > 0.0 ? dot / std::sqrt(aa * bb) : 0.0;
}

json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

std::optional<double> optional_from(const json& j) {
    if (j.is_null()) return std::nullopt;
    return j.get<double>();
}

Schedule schedule_of(const DistillConfig& cfg) { return Schedule{cfg.peak_lr, cfg.warmup_steps, cfg.total_steps}; }

std::string ids_str(const std::vector<std::size_t>& ids) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < ids.size(); ++i) os << (i ? "," : "") << ids[i];
    os << ']';
    return os.str();
}

bool same_block_shape(const EncoderConfig& a, const EncoderConfig& b) {
    return a.dim == b.dim && a.ffn == b.ffn && a.heads == b.heads && a.conv_kernel == b.conv_kernel &&
           a.input_dim == b.input_dim;
}

} // namespace

double collapse_metric(const Tensor<float>& reps, Rng& rng) {
    const std::size_t n = reps.rows();
    if (n < 2) throw UsageError("collapse_metric needs at least 2 frames, got " + std::to_string(n));
    if (std::all_of(reps.data().begin(), reps.data().end(), [](float v) { return v == 0.0f; })) {
        throw NumericError("collapse_metric: all representations are zero");
    }
    const std::size_t pairs = n * (n - 1) / 2;
    double sum = 0.0;
    if (pairs <= kMaxCollapsePairs) {
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = i + 1; j < n; ++j) sum += row_cosine(reps, i, j);
        return sum / static_cast<double>(pairs);
    }
    for (std::size_t k = 0; k < kMaxCollapsePairs; ++k) {
        const std::size_t i = rng.below(n);
        std::size_t j = rng.below(n - 1);
        if (j >= i) ++j;
        sum += row_cosine(reps, i, j);
    }
    return sum / static_cast<double>(kMaxCollapsePairs);
}

json MetricRecord::to_json() const {
    json j;
    j["step"] = step;
    j["lr"] = lr;
    j["loss"] = optional_json(loss);
    json layers = json::array();
    for (const auto& v : loss_per_layer) layers.push_back(optional_json(v));
    j["loss_per_layer"] = std::move(layers);
    j["collapse"] = optional_json(collapse);
    j["elapsed_ms"] = elapsed_ms;
    return j;
}

MetricRecord MetricRecord::from_json(const json& j) {
    MetricRecord r;
    r.step = j.at("step").get<std::uint64_t>();
    r.lr = j.at("lr").get<double>();
    r.loss = optional_from(j.at("loss"));
    for (const auto& v : j.at("loss_per_layer")) r.loss_per_layer.push_back(optional_from(v));
    r.collapse = optional_from(j.at("collapse"));
    r.elapsed_ms = j.at("elapsed_ms").get<double>();
    return r;
}

void initialize_from_teacher(const Encoder& teacher, Encoder& student, TeacherInit mode, const LayerMap& map) {
    if (mode == TeacherInit::None) return;
    const EncoderConfig& tc = teacher.config();
    const EncoderConfig& sc = student.config();
    if (!same_block_shape(tc, sc)) {
        throw ConfigError("init_from_teacher needs a width-matched student (dim, ffn, heads, conv_kernel, input_dim)");
    }
    if (map.student_layers != sc.layers || map.teacher_layers != tc.layers) {
        throw UsageError("init_from_teacher: layer map does not match the encoders");
    }
    const ParameterSet& src = teacher.parameters();
    ParameterSet& dst = student.parameters();
    for (const auto& [name, t] : src) {
        if (name.rfind("blocks.", 0) != 0) dst.at(name) = t;
    }
    for (std::size_t l = 1; l <= sc.layers; ++l) {
        const std::size_t from = mode == TeacherInit::LayerSkipping ? map.teacher_for(l) : l;
        const std::string src_prefix = "blocks." + std::to_string(from - 1) + ".";
        const std::string dst_prefix = "blocks." + std::to_string(l - 1) + ".";
        for (const auto& [name, t] : src) {
            if (name.rfind(src_prefix, 0) == 0) dst.at(dst_prefix + name.substr(src_prefix.size())) = t;
        }
    }
}

TrainState make_train_state(const DistillConfig& cfg, const Encoder& teacher, Encoder student) {
    cfg.validate();
    TrainState st;
    st.heads = build_projection_heads(student.config().layers, student.config().dim, teacher.config().dim,
                                      cfg.projection, derive_seed(cfg.seed, "heads"));
    st.student = std::move(student);
    st.optimizer.beta1 = cfg.beta1;
    st.optimizer.beta2 = cfg.beta2;
    st.optimizer.eps = cfg.adam_eps;
    st.optimizer.weight_decay = cfg.weight_decay;
    return st;
}

void save_train_state(const std::filesystem::path& path, const TrainState& state, const DistillConfig& cfg) {
    json meta;
    meta["kind"] = "train_state";
    meta["step"] = state.optimizer.step;
    meta["seed"] = cfg.seed;
    meta["config"] = {{"student", to_json(state.student.config())}, {"distill", to_json(cfg)}};
    meta["optimizer"] = {{"beta1", state.optimizer.beta1},
                         {"beta2", state.optimizer.beta2},
                         {"eps", state.optimizer.eps},
                         {"weight_decay", state.optimizer.weight_decay}};
    json history = json::array();
    for (const auto& r : state.history) history.push_back(r.to_json());
    meta["history"] = std::move(history);

    NamedTensors<float> tensors;
    for (const auto& [name, t] : state.student.parameters()) tensors.emplace("student." + name, t);
    for (const auto& [name, t] : state.heads) tensors.emplace(name, t);
    for (const auto& [name, t] : state.optimizer.first_moment) tensors.emplace("adam.m." + name, t);
    for (const auto& [name, t] : state.optimizer.second_moment) tensors.emplace("adam.v." + name, t);
    write_checkpoint(path, std::move(meta), tensors);
}

TrainState load_train_state(const std::filesystem::path& path, DistillConfig* cfg) {
    Checkpoint ck = read_checkpoint(path);
    if (ck.meta.value("kind", std::string()) != "train_state") {
        throw FormatError(path.string() + ": not a train_state checkpoint");
    }
    const json& config = ck.meta.at("config");
    if (cfg) {
        *cfg = distill_config_from_json(config.at("distill"), "/config/distill");
        cfg->seed = ck.meta.at("seed").get<std::uint64_t>();
    }

    TrainState st;
    ParameterSet student;
    for (auto& [name, t] : ck.tensors) {
        auto take = [&](std::string_view prefix, NamedTensors<float>& into) {
            if (name.rfind(prefix, 0) != 0) return false;
            into.emplace(name.substr(prefix.size()), std::move(t));
            return true;
        };
        if (take("adam.m.", st.optimizer.first_moment) || take("adam.v.", st.optimizer.second_moment) ||
            take("student.", student)) {
            continue;
        }
        if (name.rfind("head.", 0) == 0) {
            st.heads.emplace(name, std::move(t));
            continue;
        }
        throw FormatError(path.string() + ": unexpected tensor '" + name + "' in train_state checkpoint");
    }
    st.student = Encoder(encoder_config_from_json(config.at("student"), "/config/student"), std::move(student));
    const json& opt = ck.meta.at("optimizer");
    st.optimizer.step = ck.meta.at("step").get<std::uint64_t>();
    st.optimizer.beta1 = opt.at("beta1").get<double>();
    st.optimizer.beta2 = opt.at("beta2").get<double>();
    st.optimizer.eps = opt.at("eps").get<double>();
    st.optimizer.weight_decay = opt.at("weight_decay").get<double>();
    for (const auto& r : ck.meta.at("history")) st.history.push_back(MetricRecord::from_json(r));
    return st;
}

Distiller::Distiller(DistillConfig cfg, const Encoder& teacher, TrainState state, const DataSource& data)
    : cfg_(std::move(cfg)), teacher_(&teacher), state_(std::move(state)), data_(&data) {
    cfg_.validate();
    const EncoderConfig& tc = teacher.config();
    const EncoderConfig& sc = state_.student.config();
    if (tc.input_dim != sc.input_dim) {
        throw ConfigError("teacher and student input_dim differ (" + std::to_string(tc.input_dim) + " vs " +
                          std::to_string(sc.input_dim) + ")");
    }
    if (data.size() == 0) throw UsageError("distillation data source is empty");
    map_ = colld::layer_map(sc.layers, tc.layers);
    for (const auto& [l, lt] : map_.pairs) {
        if (teacher_layers_.empty() || teacher_layers_.back() != lt) teacher_layers_.push_back(lt);
    }
}

const TapSet& Distiller::teacher_taps(std::size_t index) const {
    auto it = teacher_cache_.find(index);
    if (it != teacher_cache_.end()) return it->second;
    const TapSet taps = forward_with_taps(*teacher_, data_->get(index).features, nullptr, teacher_layers_, cfg_.tap_kind);
    return teacher_cache_.emplace(index, taps).first->second;
}

MetricRecord Distiller::step(const StepOptions& options) {
    const auto started = std::chrono::steady_clock::now();
    const std::uint64_t s = state_.optimizer.step + 1;
    const double lr = lr_at(s, schedule_of(cfg_));
    const EncoderConfig& sc = state_.student.config();

    std::vector<std::size_t> batch(cfg_.batch_size);
    Rng data_rng(cfg_.seed, "data", s);
    for (auto& idx : batch) idx = data_rng.below(data_->size());

    Graph graph;
    ParamNodes student_nodes = declare_parameters(graph, sc, "student.", true);
    ParamNodes head_nodes = declare_heads(graph, state_.heads, true);
    std::vector<MaskSpec> masks;
    std::vector<UtteranceLoss> losses;
    std::vector<NodeId> final_taps;
    masks.reserve(batch.size());
    for (std::size_t u = 0; u < batch.size(); ++u) {
        const FeatureSequence& seq = data_->get(batch[u]).features;
        Rng mask_rng(cfg_.seed, "mask", s, u);
        masks.push_back(sample_mask(seq.frames(), cfg_.mask_prob, cfg_.mask_span, mask_rng));
        NodeId feats = graph.constant(seq.values.cast<double>(), "features." + std::to_string(u));
        EncoderNodes enc = build_encoder_graph(graph, sc, student_nodes, feats, &masks.back(), sc.layers);
        std::vector<NodeId> taps;
        for (std::size_t l = 1; l <= sc.layers; ++l) taps.push_back(enc.tap(l, cfg_.tap_kind));
        final_taps.push_back(taps.back());
        Rng distractor_rng(cfg_.seed, "distractors", s, u);
        losses.push_back(
            build_utterance_loss(graph, taps, teacher_taps(batch[u]), head_nodes, map_, masks.back(), cfg_, distractor_rng));
    }
    const std::optional<NodeId> loss = batch_mean(graph, losses);

    NamedTensors<float> inputs;
    for (const auto& [name, t] : state_.student.parameters()) inputs.emplace("student." + name, t);
    for (const auto& [name, t] : state_.heads) inputs.emplace(name, t);

    MetricRecord rec;
    rec.step = s;
    rec.lr = lr;
    std::optional<Execution<float>> exec;
    try {
        exec.emplace(graph, inputs);
    } catch (const NumericError& e) {
        throw NumericError("step " + std::to_string(s) + ", batch " + ids_str(batch) + ": " + e.what());
    }

    for (std::size_t l = 0; l < sc.layers; ++l) {
        double sum = 0.0;
        std::size_t count = 0;
        for (const auto& u : losses) {
            if (u.per_layer[l]) {
                sum += exec->value(*u.per_layer[l]).item();
                ++count;
            }
        }
        rec.loss_per_layer.push_back(count ? std::optional<double>(sum / static_cast<double>(count)) : std::nullopt);
    }
    if (cfg_.collapse_every > 0 && (s - 1) % cfg_.collapse_every == 0) {
        Rng collapse_rng(cfg_.seed, "collapse", s);
        rec.collapse = collapse_metric(exec->value(final_taps.front()), collapse_rng);
    }

    if (loss) {
        const double value = exec->value(*loss).item();
        if (!std::isfinite(value)) {
            throw NumericError("step " + std::to_string(s) + ", batch " + ids_str(batch) + ": non-finite loss");
        }
        rec.loss = value;

        std::unordered_map<NodeId, const MaskSpec*> prediction_masks;
        if (options.zero_unmasked_prediction_grads) {
            for (std::size_t u = 0; u < losses.size(); ++u)
                for (NodeId p : losses[u].predictions) prediction_masks.emplace(p, &masks[u]);
        }
        Execution<float>::GradientHook hook;
        if (!prediction_masks.empty()) {
            hook = [&](NodeId id, Tensor<float>& grad) {
                auto it = prediction_masks.find(id);
                if (it == prediction_masks.end()) return;
                for (std::size_t t = 0; t < grad.rows(); ++t) {
                    if (!it->second->contains(t)) std::fill(grad.row(t).begin(), grad.row(t).end(), 0.0f);
                }
            };
        }
        NamedTensors<float> grads = exec->backward(*loss, hook);
        clip_global_norm(grads, cfg_.clip_norm);

        // one map so a single adam_step advances the shared step counter
        NamedTensors<float> params;
        for (auto& [name, t] : state_.student.parameters()) params.emplace("student." + name, std::move(t));
        for (auto& [name, t] : state_.heads) params.emplace(name, std::move(t));
        adam_step(params, grads, state_.optimizer, lr);
        for (auto& [name, t] : params) {
            if (name.rfind("student.", 0) == 0) {
                state_.student.parameters().at(name.substr(8)) = std::move(t);
            } else {
                state_.heads.at(name) = std::move(t);
            }
        }
    } else {
        ++state_.optimizer.step;
    }

    if (!cfg_.deterministic) {
        rec.elapsed_ms =
            std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - started).count();
    }
    state_.history.push_back(rec);
    return rec;
}

std::vector<double> Distiller::masked_alignment(const std::vector<std::size_t>& indices) const {
    const EncoderConfig& sc = state_.student.config();
    std::vector<std::size_t> layers(sc.layers);
    for (std::size_t l = 0; l < sc.layers; ++l) layers[l] = l + 1;
    std::vector<double> sum(sc.layers, 0.0);
    std::size_t count = 0;
    for (std::size_t idx : indices) {
        const FeatureSequence& seq = data_->get(idx).features;
        Rng mask_rng(cfg_.seed, "eval-mask", idx);
        const MaskSpec mask = sample_mask(seq.frames(), cfg_.mask_prob, cfg_.mask_span, mask_rng);
        if (mask.empty()) continue;
        const TapSet student = forward_with_taps(state_.student, seq, &mask, layers, cfg_.tap_kind);
        const TapSet& teacher = teacher_taps(idx);
        for (const auto& [l, lt] : map_.pairs) {
            Tensor<float> z = student.at_layer(l);
            if (!state_.heads.empty()) {
                const std::string p = "head." + std::to_string(l);
                const Tensor<float>& w = state_.heads.at(p + ".weight");
                const Tensor<float>& b = state_.heads.at(p + ".bias");
                Tensor<float> proj({z.rows(), w.cols()});
                for (std::size_t t = 0; t < z.rows(); ++t)
                    for (std::size_t j = 0; j < w.cols(); ++j) {
                        double acc = b(0, j);
                        for (std::size_t i = 0; i < z.cols(); ++i) acc += double(z(t, i)) * w(i, j);
                        proj(t, j) = static_cast<float>(acc);
                    }
                z = std::move(proj);
            }
            const Tensor<float> h =
                cfg_.target_instance_norm ? instance_normalize(teacher.at_layer(lt)) : teacher.at_layer(lt);
            for (std::size_t t : mask.masked) {
                double dot = 0.0, aa = 0.0, bb = 0.0;
                for (std::size_t c = 0; c < z.cols(); ++c) {
                    dot += double(z(t, c)) * h(t, c);
                    aa += double(z(t, c)) * z(t, c);
                    bb += double(h(t, c)) * h(t, c);
                }
                sum[l - 1] += dot / ((std::sqrt(aa) + 1e-8) * (std::sqrt(bb) + 1e-8));
            }
        }
        count += mask.masked.size();
    }
    if (count == 0) throw UsageError("masked_alignment: every evaluation mask is empty");
    for (auto& v : sum) v /= static_cast<double>(count);
    return sum;
}

void continue_distill(Distiller& distiller, std::size_t steps, const DistillOptions& options) {
    const std::size_t every = distiller.config().checkpoint_every;
    if (options.checkpoint_dir) std::filesystem::create_directories(*options.checkpoint_dir);
    for (std::size_t i = 0; i < steps; ++i) {
        const MetricRecord rec = distiller.step();
        if (options.sink) options.sink(rec);
        if (options.checkpoint_dir && every > 0 && rec.step % every == 0) {
            save_train_state(*options.checkpoint_dir / ("step_" + std::to_string(rec.step) + ".ckpt"),
                             distiller.state(), distiller.config());
        }
    }
}

TrainState distill(const DistillConfig& cfg, const Encoder& teacher, Encoder student, const DataSource& data,
                   std::size_t steps, const DistillOptions& options) {
    if (cfg.init_from_teacher != TeacherInit::None) {
        initialize_from_teacher(teacher, student,
                                cfg.init_from_teacher, colld::layer_map(student.config().layers, teacher.config().layers));
    }
    Distiller d(cfg, teacher, make_train_state(cfg, teacher, std::move(student)), data);
    continue_distill(d, steps, options);
    return std::move(d.state());
}

} // namespace colld
