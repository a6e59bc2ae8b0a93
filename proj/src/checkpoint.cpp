// Copyright (c) 2026 The CoLLD Authors
// SPDX-License-Identifier: Apache-2.0

#include "colld/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <vector>

namespace colld {

namespace {

void put_le(std::string& buf, std::uint64_t v, int bytes) {
    for (int i = 0; i < bytes; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

std::uint64_t get_le(const unsigned char* p, int bytes) {
    std::uint64_t v = 0;
    for (int i = 0; i < bytes; ++i) v |= std::uint64_t(p[i]) << (8 * i);
    return v;
}

[[noreturn]] void bad(const std::filesystem::path& path, std::size_t offset, const std::string& what) {
    throw FormatError(path.string() + ": byte " + std::to_string(offset) + ": " + what);
}

} // namespace

void write_checkpoint(const std::filesystem::path& path, json meta, const NamedTensors<float>& tensors) {
    json table = json::array();
    std::uint64_t offset = 0;
    for (const auto& [name, t] : tensors) {
        table.push_back({{"name", name}, {"shape", t.shape()}, {"offset", offset}, {"count", t.size()}});
        offset += t.size() * 4;
    }
    meta["format_version"] = kCheckpointFormatVersion;
    meta["tensors"] = std::move(table);
    const std::string header = meta.dump();

    std::string buf = "CLDK";
    put_le(buf, kCheckpointFormatVersion, 2);
    put_le(buf, 0, 2);
    put_le(buf, header.size(), 8);
    buf += header;
    buf.reserve(buf.size() + offset);
    for (const auto& [name, t] : tensors) {
        for (float v : t.data()) put_le(buf, std::bit_cast<std::uint32_t>(v), 4);
    }

    // write-then-rename so an interrupted save never leaves a torn checkpoint
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw FormatError("cannot open " + tmp.string() + " for writing");
        out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
        if (!out) throw FormatError("write failed for " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open checkpoint " + path.string());
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (bytes.size() < 4 || std::memcmp(bytes.data(), "CLDK", 4) != 0) bad(path, 0, "bad magic, expected \"CLDK\"");
    if (bytes.size() < 16) bad(path, bytes.size(), "truncated preamble");
    const auto version = get_le(&bytes[4], 2);
    if (version != kCheckpointFormatVersion) bad(path, 4, "unsupported format version " + std::to_string(version));
    const std::uint64_t hlen = get_le(&bytes[8], 8);
    if (hlen > bytes.size() - 16) bad(path, 8, "header length exceeds file size");

    Checkpoint ck;
    try {
        ck.meta = json::parse(bytes.begin() + 16, bytes.begin() + 16 + static_cast<std::ptrdiff_t>(hlen));
    } catch (const json::parse_error& e) {
        bad(path, 16, std::string("header is not valid JSON: ") + e.what());
    }
    const std::size_t blob_start = 16 + hlen;
    const std::size_t blob_size = bytes.size() - blob_start;
    try {
        for (const auto& entry : ck.meta.at("tensors")) {
            const auto name = entry.at("name").get<std::string>();
            const auto shape = entry.at("shape").get<Shape>();
            const auto offset = entry.at("offset").get<std::uint64_t>();
            const auto count = entry.at("count").get<std::uint64_t>();
            if (shape_size(shape) != count) bad(path, 16, "tensor '" + name + "' count does not match its shape");
            if (offset > blob_size || count * 4 > blob_size - offset) {
                bad(path, blob_start + offset, "tensor '" + name + "' runs past the end of the file");
            }
            std::vector<float> data(count);
            for (std::size_t i = 0; i < count; ++i) {
                data[i] = std::bit_cast<float>(static_cast<std::uint32_t>(get_le(&bytes[blob_start + offset + 4 * i], 4)));
            }
            if (!ck.tensors.emplace(name, Tensor<float>(shape, std::move(data))).second) {
                bad(path, 16, "duplicate tensor '" + name + "'");
            }
        }
    } catch (const json::exception& e) {
        bad(path, 16, std::string("malformed tensor table: ") + e.what());
    }
    ck.meta.erase("tensors");
    return ck;
}

void save_encoder(const std::filesystem::path& path, const Encoder& encoder, std::uint64_t step) {
    json meta;
    meta["kind"] = "encoder";
    meta["step"] = step;
    meta["config"] = to_json(encoder.config());
    write_checkpoint(path, std::move(meta), encoder.parameters());
}

Encoder load_encoder(const std::filesystem::path& path) {
    Checkpoint ck = read_checkpoint(path);
    if (ck.meta.value("kind", std::string()) != "encoder") {
        throw FormatError(path.string() + ": not an encoder checkpoint");
    }
    EncoderConfig cfg = encoder_config_from_json(ck.meta.at("config"), "/config");
    return Encoder(std::move(cfg), std::move(ck.tensors));
}

} // namespace colld
