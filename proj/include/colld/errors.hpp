// Copyright (c) 2026 The CoLLD Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace colld {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Invalid configuration or inconsistent shapes. CLI exit code 2.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// A precondition on arguments was violated by the caller.
class UsageError : public Error {
public:
    using Error::Error;
};

/// NaN/Inf or another numeric failure. CLI exit code 1.
class NumericError : public Error {
public:
    using Error::Error;
};

/// Malformed binary or text file.
class FormatError : public Error {
public:
    using Error::Error;
};

} // namespace colld
