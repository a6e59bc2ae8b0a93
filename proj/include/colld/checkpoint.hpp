// Copyright (c) 2026 The CoLLD Authors
// SPDX-License-Identifier: Apache-2.0
//
// Checkpoint container, all integers little-endian:
//
//   offset 0   magic "CLDK"
//          4   u16 format version (1)
//          6   u16 reserved (0)
//          8   u64 header length H
//         16   H bytes of UTF-8 JSON header
//     16 + H   tensor blobs, float32 LE row-major, back to back
//
// The header holds "format_version", "kind", "step", "config" and a
// "tensors" array of {"name", "shape", "offset", "count"}; offsets are in
// bytes from the start of the blob section.

#pragma once

#include <cstdint>
#include <filesystem>

#include "colld/config.hpp"
#include "colld/encoder.hpp"

namespace colld {

inline constexpr std::uint16_t kCheckpointFormatVersion = 1;

struct Checkpoint {
    json meta; // header without the "tensors" table
    NamedTensors<float> tensors;
};

void write_checkpoint(const std::filesystem::path& path, json meta, const NamedTensors<float>& tensors);
Checkpoint read_checkpoint(const std::filesystem::path& path);

/// kind "encoder": config = encoder config, tensors = parameters by name.
void save_encoder(const std::filesystem::path& path, const Encoder& encoder, std::uint64_t step = 0);
Encoder load_encoder(const std::filesystem::path& path);

} // namespace colld
