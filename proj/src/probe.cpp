// Copyright (c) 2026 The CoLLD Authors
// SPDX-License-Identifier: Apache-2.0

#include "colld/probe.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "colld/kernels.hpp"

namespace colld {

ProbeData extract_frozen(const Encoder& encoder, const DataSource& data, std::size_t layer, std::size_t limit) {
    if (layer < 1 || layer > encoder.config().layers) {
        throw UsageError("probe layer " + std::to_string(layer) + " outside [1, " +
                         std::to_string(encoder.config().layers) + "]");
    }
    const std::size_t n = limit == 0 ? data.size() : std::min(limit, data.size());
    ProbeData out;
    out.layer = layer;
    for (std::size_t i = 0; i < n; ++i) {
        const LabeledSequence& item = data.get(i);
        TapSet taps = forward_with_taps(encoder, item.features, nullptr, {layer}, TapKind::BlockOutput);
        out.reps.push_back(std::move(taps.reps.front()));
        out.labels.push_back(item.labels);
    }
    return out;
}

json ProbeResult::to_json() const {
    json per_class = json::array();
    for (const auto& v : per_class_accuracy) per_class.push_back(v ? json(*v) : json(nullptr));
    return {{"accuracy", accuracy},       {"per_class_accuracy", per_class}, {"layer", layer},
            {"seed", seed},               {"train_frames", train_frames},    {"test_frames", test_frames},
            {"iterations", iterations}};
}

namespace {

struct Split {
    std::vector<double> x; // row-major [n, d]
    std::vector<int> y;
    std::size_t n = 0;
};

Split gather(const ProbeData& data, const std::vector<std::size_t>& utts, std::size_t dim) {
    Split s;
    for (std::size_t u : utts) {
        const Tensor<float>& r = data.reps[u];
        for (std::size_t t = 0; t < r.rows(); ++t) {
            for (std::size_t c = 0; c < dim; ++c) s.x.push_back(r(t, c));
            s.y.push_back(data.labels[u][t]);
        }
    }
    s.n = s.y.size();
    return s;
}

// mean cross-entropy plus l2/2 |W|^2; fills grad_w [d+1, C] (last row is the bias)
double loss_and_grad(const Split& s, std::size_t d, std::size_t classes, const std::vector<double>& w, double l2,
                     std::vector<double>& grad, std::vector<double>& logits) {
    logits.assign(s.n * classes, 0.0);
    kernels::gemm<double>(s.x, std::span<const double>(w).first(d * classes), logits, {s.n, classes, d, false, false, false});
    double loss = 0.0;
    std::fill(grad.begin(), grad.end(), 0.0);
    std::vector<double> delta(s.n * classes);
    for (std::size_t i = 0; i < s.n; ++i) {
        double* z = &logits[i * classes];
        for (std::size_t k = 0; k < classes; ++k) z[k] += w[d * classes + k];
        const double m = *std::max_element(z, z + classes);
        double sum = 0.0;
        for (std::size_t k = 0; k < classes; ++k) sum += std::exp(z[k] - m);
        const double lse = m + std::log(sum);
        loss -= z[s.y[i]] - lse;
        for (std::size_t k = 0; k < classes; ++k) {
            const double p = std::exp(z[k] - lse) - (static_cast<int>(k) == s.y[i] ? 1.0 : 0.0);
            delta[i * classes + k] = p / static_cast<double>(s.n);
            grad[d * classes + k] += p / static_cast<double>(s.n);
        }
    }
    kernels::gemm<double>(s.x, delta, std::span<double>(grad).first(d * classes), {d, classes, s.n, true, false, true});
    double reg = 0.0;
    for (std::size_t i = 0; i < d * classes; ++i) {
        reg += w[i] * w[i];
        grad[i] += l2 * w[i];
    }
    return loss / static_cast<double>(s.n) + 0.5 * l2 * reg;
}

} // namespace

ProbeResult train_linear_probe(const ProbeData& data, std::uint64_t seed, const ProbeOptions& opt) {
    if (data.reps.size() != data.labels.size()) throw UsageError("probe: representations and labels differ in count");
    if (data.reps.size() < 2) throw UsageError("probe needs at least two utterances");
    std::set<int> present;
    int max_label = -1;
    for (std::size_t u = 0; u < data.reps.size(); ++u) {
        if (data.labels[u].size() != data.reps[u].rows()) {
            throw UsageError("probe: utterance " + std::to_string(u) + " has " + std::to_string(data.labels[u].size()) +
                             " labels for " + std::to_string(data.reps[u].rows()) + " frames");
        }
        for (int y : data.labels[u]) {
            if (y < 0) throw UsageError("probe: negative label");
            present.insert(y);
            max_label = std::max(max_label, y);
        }
    }
    if (present.size() < 2) throw UsageError("probe needs at least two classes, found " + std::to_string(present.size()));
    const std::size_t classes = static_cast<std::size_t>(max_label) + 1;
    const std::size_t d = data.reps.front().cols();

    std::vector<std::size_t> order(data.reps.size());
    std::iota(order.begin(), order.end(), 0);
    Rng rng(seed, "probe-split");
    for (std::size_t i = order.size() - 1; i > 0; --i) std::swap(order[i], order[rng.below(i + 1)]);
    std::size_t n_train = static_cast<std::size_t>(std::llround(opt.train_fraction * static_cast<double>(order.size())));
    n_train = std::clamp<std::size_t>(n_train, 1, order.size() - 1);
    std::vector<std::size_t> train_utts(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
    std::vector<std::size_t> test_utts(order.begin() + static_cast<std::ptrdiff_t>(n_train), order.end());
    std::sort(train_utts.begin(), train_utts.end());
    std::sort(test_utts.begin(), test_utts.end());

    Split train = gather(data, train_utts, d);
    Split test = gather(data, test_utts, d);

    std::vector<double> mean(d, 0.0), inv_std(d, 0.0);
    for (std::size_t i = 0; i < train.n; ++i)
        for (std::size_t c = 0; c < d; ++c) mean[c] += train.x[i * d + c];
    for (auto& m : mean) m /= static_cast<double>(train.n);
    for (std::size_t i = 0; i < train.n; ++i)
        for (std::size_t c = 0; c < d; ++c) inv_std[c] += std::pow(train.x[i * d + c] - mean[c], 2);
    for (auto& v : inv_std) {
        const double sd = std::sqrt(v / static_cast<double>(train.n));
        v = sd > 1e-12 ? 1.0 / sd : 0.0;
    }
    for (Split* s : {&train, &test}) {
        for (std::size_t i = 0; i < s->n; ++i)
            for (std::size_t c = 0; c < d; ++c) s->x[i * d + c] = (s->x[i * d + c] - mean[c]) * inv_std[c];
    }

    std::vector<double> w((d + 1) * classes, 0.0), grad(w.size()), logits;
    double prev = loss_and_grad(train, d, classes, w, opt.l2, grad, logits);
    ProbeResult res;
    for (res.iterations = 0; res.iterations < opt.max_iterations;) {
        for (std::size_t i = 0; i < w.size(); ++i) w[i] -= opt.learning_rate * grad[i];
        ++res.iterations;
        const double cur = loss_and_grad(train, d, classes, w, opt.l2, grad, logits);
        if (prev - cur >= 0.0 && prev - cur < opt.tolerance) break;
        prev = cur;
    }

    std::vector<std::size_t> hit(classes, 0), total(classes, 0);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < test.n; ++i) {
        std::size_t best = 0;
        double best_score = -INFINITY;
        for (std::size_t k = 0; k < classes; ++k) {
            double z = w[d * classes + k];
            for (std::size_t c = 0; c < d; ++c) z += test.x[i * d + c] * w[c * classes + k];
            if (z > best_score) {
                best_score = z;
                best = k;
            }
        }
        const auto y = static_cast<std::size_t>(test.y[i]);
        ++total[y];
        if (best == y) {
            ++hit[y];
            ++correct;
        }
    }
    res.accuracy = test.n ? static_cast<double>(correct) / static_cast<double>(test.n) : 0.0;
    for (std::size_t k = 0; k < classes; ++k) {
        res.per_class_accuracy.push_back(total[k] ? std::optional<double>(double(hit[k]) / double(total[k])) : std::nullopt);
    }
    res.layer = data.layer;
    res.seed = seed;
    res.train_frames = train.n;
    res.test_frames = test.n;
    return res;
}

} // namespace colld
