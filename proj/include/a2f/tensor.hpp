#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "a2f/errors.hpp"

namespace a2f {

// Logical shape of a rank-4 NCHW tensor.
struct Shape {
    int n = 0;
    int c = 0;
    int h = 0;
    int w = 0;

    bool operator==(const Shape&) const = default;

    std::int64_t numel() const {
        return static_cast<std::int64_t>(n) * c * h * w;
    }

    std::string str() const {
        return "(" + std::to_string(n) + "," + std::to_string(c) + "," +
               std::to_string(h) + "," + std::to_string(w) + ")";
    }
};

// Dense rank-4 tensor, contiguous row-major in (n, c, h, w) order.
// The universal value type for activations, weights and gradients.
template <typename S>
class TensorT {
public:
    using Scalar = S;

    TensorT() = default;

    explicit TensorT(Shape shape, S fill = S(0)) : shape_(shape) {
        if (shape.n < 1 || shape.c < 1 || shape.h < 1 || shape.w < 1) {
            throw ConfigError("tensor dimensions must be >= 1, got " + shape.str());
        }
        data_.assign(static_cast<std::size_t>(shape.numel()), fill);
    }

    TensorT(Shape shape, std::vector<S> values) : shape_(shape), data_(std::move(values)) {
        if (shape.n < 1 || shape.c < 1 || shape.h < 1 || shape.w < 1) {
            throw ConfigError("tensor dimensions must be >= 1, got " + shape.str());
        }
        if (static_cast<std::int64_t>(data_.size()) != shape.numel()) {
            throw ConfigError("tensor data length " + std::to_string(data_.size()) +
                              " does not match shape " + shape.str());
        }
    }

    const Shape& shape() const { return shape_; }
    int n() const { return shape_.n; }
    int c() const { return shape_.c; }
    int h() const { return shape_.h; }
    int w() const { return shape_.w; }
    std::int64_t size() const { return static_cast<std::int64_t>(data_.size()); }
    bool empty() const { return data_.empty(); }

    S* data() { return data_.data(); }
    const S* data() const { return data_.data(); }

    std::int64_t index(int n, int c, int h, int w) const {
        return ((static_cast<std::int64_t>(n) * shape_.c + c) * shape_.h + h) * shape_.w + w;
    }

    S& at(int n, int c, int h, int w) { return data_[index(n, c, h, w)]; }
    const S& at(int n, int c, int h, int w) const { return data_[index(n, c, h, w)]; }

    S& operator[](std::int64_t i) { return data_[i]; }
    const S& operator[](std::int64_t i) const { return data_[i]; }

    void fill(S v) { std::fill(data_.begin(), data_.end(), v); }

    bool same_shape(const TensorT& other) const { return shape_ == other.shape_; }

    template <typename T>
    TensorT<T> cast() const {
        TensorT<T> out(shape_);
        for (std::int64_t i = 0; i < size(); ++i) out[i] = static_cast<T>(data_[i]);
        return out;
    }

private:
    Shape shape_{};
    std::vector<S> data_;
};

using Tensor = TensorT<float>;

template <typename S>
TensorT<S> zeros_like(const TensorT<S>& t) {
    return TensorT<S>(t.shape());
}

// Debug dump: 4 little-endian u32 dims followed by n*c*h*w little-endian
// f32 values.
template <typename S>
void dump_tensor(const TensorT<S>& t, const std::filesystem::path& path);

Tensor read_tensor_dump(const std::filesystem::path& path);

extern template void dump_tensor<float>(const TensorT<float>&, const std::filesystem::path&);
extern template void dump_tensor<double>(const TensorT<double>&, const std::filesystem::path&);

}  // namespace a2f
