#pragma once

#include <cstdint>
#include <memory>
#include <numeric>
#include <string>
#include <vector>

#include "cpat/error.hpp"

namespace cpat {

enum class Dtype : uint8_t { f32 = 0, f64 = 1 };

template <typename T>
constexpr Dtype dtype_of() {
    static_assert(std::is_same_v<T, float> || std::is_same_v<T, double>,
                  "tensors hold f32 or f64 scalars");
    return std::is_same_v<T, float> ? Dtype::f32 : Dtype::f64;
}

inline std::string shape_str(const std::vector<int64_t>& shape) {
    std::string s = "[";
    for (size_t i = 0; i < shape.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(shape[i]);
    }
    return s + "]";
}

// Dense row-major n-dimensional array. The buffer is shared between views
// (reshape), so tensors are treated as immutable once an op has returned
// them; kernels only write into buffers they just allocated.
template <typename T>
class Tensor {
public:
    using scalar_type = T;

    Tensor() = default;

    explicit Tensor(std::vector<int64_t> shape)
        : shape_(std::move(shape)),
          data_(std::make_shared<std::vector<T>>(checked_numel(shape_), T(0))) {}

    Tensor(std::vector<int64_t> shape, std::vector<T> values)
        : shape_(std::move(shape)),
          data_(std::make_shared<std::vector<T>>(std::move(values))) {
        if (checked_numel(shape_) != static_cast<int64_t>(data_->size()))
            throw ShapeError(cat("tensor: ", data_->size(), " values do not fill shape ",
                                 shape_str(shape_)));
    }

    static Tensor full(std::vector<int64_t> shape, T value) {
        Tensor t(std::move(shape));
        std::fill(t.data_->begin(), t.data_->end(), value);
        return t;
    }

    int64_t rank() const { return static_cast<int64_t>(shape_.size()); }
    int64_t dim(int64_t i) const { return shape_.at(static_cast<size_t>(i)); }
    int64_t numel() const { return data_ ? static_cast<int64_t>(data_->size()) : 0; }
    const std::vector<int64_t>& shape() const { return shape_; }
    bool defined() const { return data_ != nullptr; }

    const T* data() const { return data_->data(); }
    T* data() { return data_->data(); }

    T& operator[](int64_t flat) { return (*data_)[static_cast<size_t>(flat)]; }
    const T& operator[](int64_t flat) const { return (*data_)[static_cast<size_t>(flat)]; }

    template <typename... Ix>
    T& at(Ix... ix) {
        return (*data_)[flat_index(ix...)];
    }
    template <typename... Ix>
    const T& at(Ix... ix) const {
        return (*data_)[flat_index(ix...)];
    }

    // New view over the same buffer; element count must be preserved.
    Tensor reshape(std::vector<int64_t> new_shape) const {
        if (checked_numel(new_shape) != numel())
            throw ShapeError(cat("reshape: ", shape_str(shape_), " -> ", shape_str(new_shape),
                                 " changes element count"));
        Tensor t;
        t.shape_ = std::move(new_shape);
        t.data_ = data_;
        return t;
    }

    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

private:
    template <typename... Ix>
    int64_t flat_index(Ix... ix) const {
        static_assert(sizeof...(Ix) > 0);
        const int64_t idx[] = {static_cast<int64_t>(ix)...};
        int64_t flat = 0;
        for (size_t d = 0; d < sizeof...(Ix); ++d)
            flat = flat * shape_[d] + idx[d];
        return flat;
    }

    static int64_t checked_numel(const std::vector<int64_t>& shape) {
        int64_t n = 1;
        for (int64_t d : shape) {
            if (d <= 0)
                throw ShapeError(cat("tensor: non-positive dimension in ", shape_str(shape)));
            n *= d;
        }
        return n;
    }

    std::vector<int64_t> shape_;
    std::shared_ptr<std::vector<T>> data_;
};

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

// Frequency-domain value: a pair of same-shape real tensors.
template <typename T>
struct ComplexTensor {
    Tensor<T> real;
    Tensor<T> imag;

    ComplexTensor() = default;
    ComplexTensor(Tensor<T> re, Tensor<T> im) : real(std::move(re)), imag(std::move(im)) {
        if (!real.same_shape(imag))
            throw ShapeError(cat("complex tensor: real ", shape_str(real.shape()),
                                 " vs imag ", shape_str(imag.shape())));
    }
};

} // namespace cpat
