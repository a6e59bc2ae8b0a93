// Copyright (c) 2026 The CoLLD Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <map>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "colld/errors.hpp"

namespace colld {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_size(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_str(const Shape& shape);

/// Dense row-major tensor. Rank 1 tensors behave as a single row when viewed
/// as a matrix.
template <class T>
class Tensor {
public:
    using value_type = T;

    Tensor() = default;

    explicit Tensor(Shape shape, T fill = T(0)) : shape_(std::move(shape)) {
        validate_shape();
        data_.assign(shape_size(shape_), fill);
    }

    Tensor(Shape shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
        validate_shape();
        if (data_.size() != shape_size(shape_)) {
            throw ConfigError("tensor data length " + std::to_string(data_.size()) +
                              " does not match shape " + shape_str(shape_));
        }
    }

    static Tensor scalar(T value) { return Tensor({1, 1}, std::vector<T>{value}); }

    static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<T> data) {
        return Tensor({rows, cols}, std::move(data));
    }

    const Shape& shape() const { return shape_; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    std::size_t rows() const {
        if (shape_.size() < 2) return shape_.empty() ? 0 : 1;
        return shape_size(Shape(shape_.begin(), shape_.end() - 1));
    }
    std::size_t cols() const { return shape_.empty() ? 0 : shape_.back(); }

    std::span<T> data() { return data_; }
    std::span<const T> data() const { return data_; }
    std::vector<T>& storage() { return data_; }
    const std::vector<T>& storage() const { return data_; }

    T& operator[](std::size_t i) { return data_[i]; }
    const T& operator[](std::size_t i) const { return data_[i]; }

    T& operator()(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
    const T& operator()(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }

    std::span<T> row(std::size_t r) { return std::span<T>(data_).subspan(r * cols(), cols()); }
    std::span<const T> row(std::size_t r) const {
        return std::span<const T>(data_).subspan(r * cols(), cols());
    }

    T item() const {
        if (data_.size() != 1) throw UsageError("item() on tensor of shape " + shape_str(shape_));
        return data_[0];
    }

    bool all_finite() const {
        return std::all_of(data_.begin(), data_.end(), [](T v) { return std::isfinite(v); });
    }

    template <class U>
    Tensor<U> cast() const {
        std::vector<U> out(data_.size());
        std::transform(data_.begin(), data_.end(), out.begin(), [](T v) { return static_cast<U>(v); });
        return Tensor<U>(shape_, std::move(out));
    }

    Tensor reshaped(Shape shape) const { return Tensor(std::move(shape), data_); }

    friend bool operator==(const Tensor& a, const Tensor& b) {
        return a.shape_ == b.shape_ && a.data_ == b.data_;
    }

private:
    void validate_shape() const {
        if (shape_.empty()) throw ConfigError("tensor shape must have at least one extent");
        for (std::size_t e : shape_) {
            if (e == 0) throw ConfigError("tensor extents must be positive, got " + shape_str(shape_));
        }
    }

    Shape shape_;
    std::vector<T> data_;
};

template <class T>
using NamedTensors = std::map<std::string, Tensor<T>, std::less<>>;

template <class U, class T>
NamedTensors<U> cast_all(const NamedTensors<T>& in) {
    NamedTensors<U> out;
    for (const auto& [name, t] : in) out.emplace(name, t.template cast<U>());
    return out;
}

} // namespace colld
