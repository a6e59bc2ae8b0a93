// Copyright (c) 2026 The CoLLD Authors
// SPDX-License-Identifier: Apache-2.0

#include "colld/optimizer.hpp"

#include <cmath>

namespace colld {

double lr_at(std::size_t step, const Schedule& s) {
    if (s.warmup_steps == 0 || s.warmup_steps > s.total_steps) {
        throw ConfigError("schedule needs 0 < warmup_steps <= total_steps");
    }
    if (step > s.total_steps) {
        throw UsageError("lr_at: step " + std::to_string(step) + " is past total_steps " + std::to_string(s.total_steps));
    }
    if (step <= s.warmup_steps) {
        return s.peak_lr * (static_cast<double>(step) / static_cast<double>(s.warmup_steps));
    }
    if (s.total_steps == s.warmup_steps) return s.peak_lr;
    return s.peak_lr * (static_cast<double>(s.total_steps - step) / static_cast<double>(s.total_steps - s.warmup_steps));
}

void adam_step(NamedTensors<float>& params, const NamedTensors<float>& grads, OptimizerState& st, double lr) {
    for (const auto& [name, p] : params) {
        auto g = grads.find(name);
        if (g == grads.end()) throw UsageError("adam_step: no gradient for parameter '" + name + "'");
        if (g->second.shape() != p.shape()) {
            throw ConfigError("adam_step: gradient of '" + name + "' has shape " + shape_str(g->second.shape()) +
                              ", parameter has " + shape_str(p.shape()));
        }
        if (!g->second.all_finite()) throw NumericError("adam_step: non-finite gradient for parameter '" + name + "'");
    }

    st.step += 1;
    const double t = static_cast<double>(st.step);
    const double bc1 = 1.0 - std::pow(st.beta1, t);
    const double bc2 = 1.0 - std::pow(st.beta2, t);
    const double decay = 1.0 - lr * st.weight_decay;

    for (auto& [name, p] : params) {
        const Tensor<float>& g = grads.find(name)->second;
        auto [mit, m_new] = st.first_moment.try_emplace(name, p.shape());
        auto [vit, v_new] = st.second_moment.try_emplace(name, p.shape());
        auto m = mit->second.data();
        auto v = vit->second.data();
        auto pv = p.data();
        for (std::size_t i = 0; i < pv.size(); ++i) {
            const double gi = g[i];
            const double mi = st.beta1 * m[i] + (1.0 - st.beta1) * gi;
            const double vi = st.beta2 * v[i] + (1.0 - st.beta2) * gi * gi;
            m[i] = static_cast<float>(mi);
            v[i] = static_cast<float>(vi);
            const double m_hat = mi / bc1;
            const double v_hat = vi / bc2;
            const double updated = static_cast<double>(pv[i]) * decay - lr * m_hat / (std::sqrt(v_hat) + st.eps);
            pv[i] = static_cast<float>(updated);
        }
    }
}

double clip_global_norm(NamedTensors<float>& grads, double max_norm) {
    double sq = 0.0;
    for (const auto& [name, g] : grads) {
        for (float v : g.data()) sq += static_cast<double>(v) * v;
    }
    const double norm = std::sqrt(sq);
    if (max_norm > 0.0 && norm > max_norm) {
        const double f = max_norm / norm;
        for (auto& [name, g] : grads) {
            for (auto& v : g.data()) v = static_cast<float>(v * f);
        }
    }
    return norm;
}

} // namespace colld
