#pragma once

#include <algorithm>
#include <cmath>
#include <initializer_list>
#include <numeric>
#include <vector>

#include "s3net/common.hpp"

namespace s3net {

// Dense row-major n-d array. Always contiguous; copies are deep.
template <typename T>
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(std::vector<int64_t> shape) : shape_(std::move(shape)) {
        data_.assign(static_cast<size_t>(count(shape_)), T(0));
    }

    Tensor(std::vector<int64_t> shape, std::vector<T> data)
        : shape_(std::move(shape)), data_(std::move(data)) {
        S3NET_CHECK(static_cast<int64_t>(data_.size()) == count(shape_),
                    "tensor data size ", data_.size(), " does not match shape numel ",
                    count(shape_));
    }

    static Tensor zeros(std::vector<int64_t> shape) { return Tensor(std::move(shape)); }

    static Tensor full(std::vector<int64_t> shape, T value) {
        Tensor t(std::move(shape));
        std::fill(t.data_.begin(), t.data_.end(), value);
        return t;
    }

    const std::vector<int64_t>& shape() const { return shape_; }
    int64_t dim() const { return static_cast<int64_t>(shape_.size()); }
    int64_t size(int64_t axis) const {
        S3NET_CHECK(axis >= 0 && axis < dim(), "axis ", axis, " out of range for dim ", dim());
        return shape_[static_cast<size_t>(axis)];
    }
    // Storage-backed element count: 0 for a default-constructed tensor.
    int64_t numel() const { return static_cast<int64_t>(data_.size()); }
    bool empty() const { return data_.empty(); }

    T* data() { return data_.data(); }
    const T* data() const { return data_.data(); }
    T& operator[](int64_t i) { return data_[static_cast<size_t>(i)]; }
    const T& operator[](int64_t i) const { return data_[static_cast<size_t>(i)]; }

    // Multi-index access, mainly for tests and small oracles.
    T& at(std::initializer_list<int64_t> idx) { return data_[static_cast<size_t>(offset(idx))]; }
    const T& at(std::initializer_list<int64_t> idx) const {
        return data_[static_cast<size_t>(offset(idx))];
    }

    Tensor reshaped(std::vector<int64_t> new_shape) const {
        S3NET_CHECK(count(new_shape) == numel(), "reshape numel mismatch: ", count(new_shape),
                    " vs ", numel());
        return Tensor(std::move(new_shape), data_);
    }

    void fill(T value) { std::fill(data_.begin(), data_.end(), value); }

    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

    bool all_finite() const {
        for (const T& v : data_)
            if (!std::isfinite(static_cast<double>(v))) return false;
        return true;
    }

    static int64_t count(const std::vector<int64_t>& shape) {
        int64_t n = 1;
        for (int64_t s : shape) {
            S3NET_CHECK(s >= 0, "negative extent ", s, " in shape");
            n *= s;
        }
        return n;
    }

private:
    int64_t offset(std::initializer_list<int64_t> idx) const {
        S3NET_CHECK(static_cast<int64_t>(idx.size()) == dim(), "index rank ", idx.size(),
                    " vs tensor dim ", dim());
        int64_t off = 0;
        size_t k = 0;
        for (int64_t i : idx) {
            S3NET_CHECK(i >= 0 && i < shape_[k], "index ", i, " out of range for axis ", k,
                        " (extent ", shape_[k], ")");
            off = off * shape_[k] + i;
            ++k;
        }
        return off;
    }

    std::vector<int64_t> shape_;
    std::vector<T> data_;
};

inline std::string shape_str(const std::vector<int64_t>& s) {
    std::string out = "[";
    for (size_t i = 0; i < s.size(); ++i) {
        if (i) out += ", ";
        out += std::to_string(s[i]);
    }
    return out + "]";
}

}  // namespace s3net
