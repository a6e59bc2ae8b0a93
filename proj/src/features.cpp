// Copyright (c) 2026 The CoLLD Authors
// SPDX-License-Identifier: Apache-2.0

#include "colld/features.hpp"

#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <set>

#include <json.hpp>

#include "colld/rng.hpp"

namespace colld {

FeatureSequence stack_frames(const FeatureSequence& seq, std::size_t factor) {
    if (factor < 1) throw UsageError("stack_frames: factor must be at least 1");
    if (factor == 1) return seq;
    const std::size_t out_frames = seq.frames() / factor;
    if (out_frames == 0) {
        throw UsageError("stack_frames: " + std::to_string(seq.frames()) + " frames cannot fill one run of " +
                         std::to_string(factor));
    }
    const std::size_t dim = seq.dim();
    FeatureSequence out;
    out.utterance_id = seq.utterance_id;
    out.rate_hz = seq.rate_hz / static_cast<double>(factor);
    // Row-major storage makes run k of the input exactly row k of the output.
    std::vector<float> data(seq.values.data().begin(),
                            seq.values.data().begin() + static_cast<std::ptrdiff_t>(out_frames * factor * dim));
    out.values = Tensor<float>({out_frames, dim * factor}, std::move(data));
    return out;
}

std::vector<int> stack_labels(const std::vector<int>& labels, std::size_t factor) {
    if (factor < 1) throw UsageError("stack_labels: factor must be at least 1");
    std::vector<int> out(labels.size() / factor);
    for (std::size_t k = 0; k < out.size(); ++k) out[k] = labels[k * factor];
    return out;
}

LabeledSequence synth_features(std::uint64_t seed, std::size_t frames, std::size_t dim, std::size_t num_classes,
                               const SynthOptions& options) {
    if (frames < 1 || dim < 1 || num_classes < 1) {
        throw UsageError("synth_features: frames, dim and num_classes must be positive");
    }
    if (options.min_segment < 1 || options.max_segment < options.min_segment) {
        throw UsageError("synth_features: invalid segment length range");
    }

    std::vector<std::vector<double>> prototypes(num_classes, std::vector<double>(dim));
    for (std::size_t c = 0; c < num_classes; ++c) {
        Rng proto(options.prototype_seed, "prototype", c);
        for (auto& v : prototypes[c]) v = options.prototype_scale * proto.normal();
    }

    Rng rng(seed, "synth");
    LabeledSequence out;
    out.labels.resize(frames);
    int label = static_cast<int>(rng.below(num_classes));
    std::size_t t = 0;
    while (t < frames) {
        const std::size_t span = options.min_segment + rng.below(options.max_segment - options.min_segment + 1);
        for (std::size_t i = 0; i < span && t < frames; ++i, ++t) out.labels[t] = label;
        if (num_classes > 1) {
            const auto step = 1 + rng.below(num_classes - 1);
            label = static_cast<int>((static_cast<std::size_t>(label) + step) % num_classes);
        }
    }

    const double a = options.noise_correlation;
    const double innovation = std::sqrt(1.0 - a * a);
    const double b = options.mean_smoothing;
    std::vector<double> noise(dim), mean(prototypes[static_cast<std::size_t>(out.labels[0])]);
    for (auto& n : noise) n = rng.normal();

    Tensor<float> values({frames, dim});
    for (std::size_t f = 0; f < frames; ++f) {
        const auto& target = prototypes[static_cast<std::size_t>(out.labels[f])];
        for (std::size_t d = 0; d < dim; ++d) {
            if (f > 0) noise[d] = a * noise[d] + innovation * rng.normal();
            mean[d] = b * mean[d] + (1.0 - b) * target[d];
            values(f, d) = static_cast<float>(mean[d] + options.noise_std * noise[d]);
        }
    }
    out.features.utterance_id = "synth-" + std::to_string(seed);
    out.features.rate_hz = options.rate_hz;
    out.features.values = std::move(values);
    return out;
}

// ---------------------------------------------------------------------------
// Binary format

namespace {

void put_u16(std::string& buf, std::uint16_t v) {
    buf.push_back(static_cast<char>(v & 0xFF));
    buf.push_back(static_cast<char>(v >> 8));
}

void put_u32(std::string& buf, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

std::uint32_t get_u32(const unsigned char* p) {
    return std::uint32_t(p[0]) | (std::uint32_t(p[1]) << 8) | (std::uint32_t(p[2]) << 16) |
           (std::uint32_t(p[3]) << 24);
}

[[noreturn]] void format_error(const std::filesystem::path& path, std::size_t offset, const std::string& what) {
    throw FormatError(path.string() + ": byte " + std::to_string(offset) + ": " + what);
}

FeatureHeader parse_header(const std::filesystem::path& path, std::ifstream& in) {
    std::array<unsigned char, kFeatureHeaderBytes> h{};
    in.read(reinterpret_cast<char*>(h.data()), static_cast<std::streamsize>(h.size()));
    const auto got = static_cast<std::size_t>(in.gcount());
    if (got < 4 || std::memcmp(h.data(), "CLLD", 4) != 0) format_error(path, 0, "bad magic, expected \"CLLD\"");
    if (got < h.size()) format_error(path, got, "truncated header");
    FeatureHeader hdr;
    hdr.version = static_cast<std::uint16_t>(h[4] | (h[5] << 8));
    if (hdr.version != kFeatureFormatVersion) {
        format_error(path, 4, "unsupported format version " + std::to_string(hdr.version));
    }
    hdr.dim = get_u32(&h[6]);
    hdr.frames = get_u32(&h[10]);
    hdr.rate_hz = get_u32(&h[14]);
    if (hdr.dim == 0) format_error(path, 6, "dim is zero");
    if (hdr.frames == 0) format_error(path, 10, "frames is zero");
    return hdr;
}

} // namespace

void write_features(const FeatureSequence& seq, const std::filesystem::path& path) {
    if (seq.values.empty()) throw UsageError("write_features: empty sequence");
    if (!seq.values.all_finite()) throw NumericError("write_features: non-finite feature value");
    const double r = std::round(seq.rate_hz);
    if (r != seq.rate_hz || r <= 0.0) {
        throw UsageError("write_features: frame rate " + std::to_string(seq.rate_hz) + " is not a positive integer");
    }
    std::string buf = "CLLD";
    put_u16(buf, kFeatureFormatVersion);
    put_u32(buf, static_cast<std::uint32_t>(seq.dim()));
    put_u32(buf, static_cast<std::uint32_t>(seq.frames()));
    put_u32(buf, static_cast<std::uint32_t>(r));
    buf.reserve(buf.size() + seq.values.size() * 4);
    for (float v : seq.values.data()) put_u32(buf, std::bit_cast<std::uint32_t>(v));

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError("cannot open " + path.string() + " for writing");
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!out) throw FormatError("write failed for " + path.string());
}

FeatureHeader read_feature_header(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open " + path.string());
    return parse_header(path, in);
}

FeatureSequence read_features(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open " + path.string());
    const FeatureHeader hdr = parse_header(path, in);
    const std::size_t count = std::size_t(hdr.dim) * hdr.frames;
    std::vector<unsigned char> payload(count * 4);
    in.read(reinterpret_cast<char*>(payload.data()), static_cast<std::streamsize>(payload.size()));
    const auto got = static_cast<std::size_t>(in.gcount());
    if (got < payload.size()) {
        format_error(path, kFeatureHeaderBytes + got,
                     "truncated payload: header declares " + std::to_string(hdr.frames) + "x" +
                         std::to_string(hdr.dim) + " values, file holds " + std::to_string(got / 4));
    }
    if (in.peek() != std::char_traits<char>::eof()) {
        format_error(path, kFeatureHeaderBytes + payload.size(), "trailing bytes after payload");
    }
    std::vector<float> values(count);
    for (std::size_t i = 0; i < count; ++i) {
        values[i] = std::bit_cast<float>(get_u32(&payload[i * 4]));
        if (!std::isfinite(values[i])) format_error(path, kFeatureHeaderBytes + i * 4, "non-finite value");
    }
    FeatureSequence seq;
    seq.utterance_id = path.stem().string();
    seq.rate_hz = hdr.rate_hz;
    seq.values = Tensor<float>({hdr.frames, hdr.dim}, std::move(values));
    return seq;
}

// ---------------------------------------------------------------------------
// Manifest

Manifest load_manifest(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open manifest " + path.string());
    Manifest m;
    std::set<std::string> seen;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        const std::string where = path.string() + ":" + std::to_string(lineno);
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::parse_error& e) {
            throw FormatError(where + ": " + e.what());
        }
        ManifestEntry e;
        try {
            e.id = j.at("id").get<std::string>();
            e.path = j.at("path").get<std::string>();
            e.frames = j.at("frames").get<std::size_t>();
            e.dim = j.at("dim").get<std::size_t>();
        } catch (const nlohmann::json::exception& ex) {
            throw FormatError(where + ": " + ex.what());
        }
        if (!seen.insert(e.id).second) throw FormatError(where + ": duplicate utterance id '" + e.id + "'");
        if (e.path.is_relative()) e.path = path.parent_path() / e.path;
        const FeatureHeader hdr = read_feature_header(e.path);
        if (hdr.frames != e.frames || hdr.dim != e.dim) {
            throw FormatError(where + ": manifest says " + std::to_string(e.frames) + "x" + std::to_string(e.dim) +
                              " but " + e.path.string() + " holds " + std::to_string(hdr.frames) + "x" +
                              std::to_string(hdr.dim));
        }
        m.entries.push_back(std::move(e));
    }
    return m;
}

void write_manifest(const Manifest& manifest, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw FormatError("cannot open " + path.string() + " for writing");
    for (const auto& e : manifest.entries) {
        nlohmann::json j{{"id", e.id}, {"path", e.path.generic_string()}, {"frames", e.frames}, {"dim", e.dim}};
        out << j.dump() << '\n';
    }
}

} // namespace colld
