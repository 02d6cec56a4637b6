#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstring>
#include <functional>
#include <initializer_list>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "vitalcam/error.hpp"

namespace vitalcam {

inline constexpr std::size_t kMaxRank = 5;

/// Extents of a dense tensor, rank 1..5, last dimension fastest-varying.
class Shape {
public:
    Shape() = default;
    Shape(std::initializer_list<std::size_t> dims) : dims_(dims) { validate(); }
    explicit Shape(std::vector<std::size_t> dims) : dims_(std::move(dims)) { validate(); }

    std::size_t rank() const noexcept { return dims_.size(); }
    std::size_t operator[](std::size_t i) const { return dims_.at(i); }
    const std::vector<std::size_t>& dims() const noexcept { return dims_; }

    std::size_t numel() const noexcept {
        if (dims_.empty()) return 0;
        return std::accumulate(dims_.begin(), dims_.end(), std::size_t{1}, std::multiplies<>());
    }

    bool operator==(const Shape&) const = default;

    std::string str() const {
        std::string s = "[";
        for (std::size_t i = 0; i < dims_.size(); ++i) {
            if (i) s += "x";
            s += std::to_string(dims_[i]);
        }
        return s + "]";
    }

private:
    void validate() const {
        if (dims_.empty() || dims_.size() > kMaxRank)
            throw DimensionError("tensor rank must be in 1..5", kMaxRank, dims_.size());
        for (auto d : dims_)
            if (d == 0) throw DimensionError("tensor extents must be positive");
    }

    std::vector<std::size_t> dims_;
};

/// Dense row-major tensor. Video and feature maps use T x H x W x C.
template <typename T>
class BasicTensor {
public:
    using value_type = T;

    BasicTensor() = default;
    explicit BasicTensor(Shape shape, T fill = T{0})
        : shape_(std::move(shape)), data_(shape_.numel(), fill) {}
    BasicTensor(Shape shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
        if (data_.size() != shape_.numel())
            throw DimensionError("tensor data length does not match shape " + shape_.str(),
                                 shape_.numel(), data_.size());
    }

    const Shape& shape() const noexcept { return shape_; }
    std::size_t rank() const noexcept { return shape_.rank(); }
    std::size_t dim(std::size_t i) const { return shape_[i]; }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    std::span<T> data() noexcept { return data_; }
    std::span<const T> data() const noexcept { return data_; }
    T* ptr() noexcept { return data_.data(); }
    const T* ptr() const noexcept { return data_.data(); }
    std::vector<T>& storage() noexcept { return data_; }
    const std::vector<T>& storage() const noexcept { return data_; }

    T& operator[](std::size_t i) noexcept { return data_[i]; }
    const T& operator[](std::size_t i) const noexcept { return data_[i]; }

    T& at(std::initializer_list<std::size_t> idx) { return data_[offset(idx)]; }
    const T& at(std::initializer_list<std::size_t> idx) const { return data_[offset(idx)]; }

    /// Same data, new extents with equal element count.
    BasicTensor reshaped(Shape shape) const& {
        BasicTensor out = *this;
        out.reshape(std::move(shape));
        return out;
    }
    BasicTensor reshaped(Shape shape) && {
        reshape(std::move(shape));
        return std::move(*this);
    }
    void reshape(Shape shape) {
        if (shape.numel() != data_.size())
            throw DimensionError("reshape to " + shape.str() + " changes element count",
                                 data_.size(), shape.numel());
        shape_ = std::move(shape);
    }

    void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

    bool all_finite() const noexcept {
        return std::all_of(data_.begin(), data_.end(), [](T v) { return std::isfinite(v); });
    }

    template <typename U>
    BasicTensor<U> cast() const {
        std::vector<U> out(data_.size());
        std::transform(data_.begin(), data_.end(), out.begin(), [](T v) { return static_cast<U>(v); });
        return BasicTensor<U>(shape_, std::move(out));
    }

    bool operator==(const BasicTensor& o) const { return shape_ == o.shape_ && data_ == o.data_; }

private:
    std::size_t offset(std::initializer_list<std::size_t> idx) const {
        if (idx.size() != shape_.rank())
            throw DimensionError("index rank mismatch", shape_.rank(), idx.size());
        std::size_t off = 0;
        std::size_t i = 0;
        for (auto v : idx) {
            off = off * shape_[i] + v;
            ++i;
        }
        return off;
    }

    Shape shape_;
    std::vector<T> data_;
};

using Tensor = BasicTensor<float>;

/// Bitwise comparison, distinguishing -0 and NaN payloads.
template <typename T>
bool bitwise_equal(const BasicTensor<T>& a, const BasicTensor<T>& b) {
    if (!(a.shape() == b.shape())) return false;
    return std::equal(a.data().begin(), a.data().end(), b.data().begin(), [](T x, T y) {
        return std::memcmp(&x, &y, sizeof(T)) == 0;
    });
}

inline void require_rank(const Shape& s, std::size_t rank, const char* what) {
    if (s.rank() != rank) throw DimensionError(std::string(what) + ": wrong rank", rank, s.rank());
}

inline void require_extent(std::size_t expected, std::size_t actual, const std::string& what) {
    if (expected != actual) throw DimensionError(what, expected, actual);
}

}  // namespace vitalcam
