#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace provmark {

using Shape = std::vector<int64_t>;

inline std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << "(";
    for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
    os << ")";
    return os.str();
}

inline int64_t shape_numel(const Shape& s) {
    int64_t n = 1;
    for (int64_t d : s) n *= d;
    return n;
}

// Dense row-major tensor. Image batches use NCHW layout.
template <typename T>
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape, T fill = T(0))
        : shape_(std::move(shape)), data_(static_cast<size_t>(shape_numel(shape_)), fill) {}
    Tensor(std::initializer_list<int64_t> shape, T fill = T(0))
        : Tensor(Shape(shape), fill) {}

    const Shape& shape() const { return shape_; }
    int64_t dim(size_t i) const { return shape_.at(i); }
    size_t rank() const { return shape_.size(); }
    int64_t numel() const { return static_cast<int64_t>(data_.size()); }
    bool empty() const { return data_.empty(); }

    T* data() { return data_.data(); }
    const T* data() const { return data_.data(); }
    std::vector<T>& vec() { return data_; }
    const std::vector<T>& vec() const { return data_; }

    T& operator[](int64_t i) { return data_[static_cast<size_t>(i)]; }
    const T& operator[](int64_t i) const { return data_[static_cast<size_t>(i)]; }

    T& at4(int64_t n, int64_t c, int64_t h, int64_t w) {
        return data_[static_cast<size_t>(((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w)];
    }
    const T& at4(int64_t n, int64_t c, int64_t h, int64_t w) const {
        return data_[static_cast<size_t>(((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w)];
    }
    T& at2(int64_t r, int64_t c) { return data_[static_cast<size_t>(r * shape_[1] + c)]; }
    const T& at2(int64_t r, int64_t c) const { return data_[static_cast<size_t>(r * shape_[1] + c)]; }

    void fill(T v) { std::fill(data_.begin(), data_.end(), v); }
    void zero() { fill(T(0)); }

    Tensor reshaped(Shape s) const {
        if (shape_numel(s) != numel())
            throw std::invalid_argument("reshape " + shape_str(shape_) + " -> " + shape_str(s) +
                                        ": element count mismatch");
        Tensor out = *this;
        out.shape_ = std::move(s);
        return out;
    }

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

    Tensor& operator+=(const Tensor& o) {
        check_same(o, "+=");
        for (int64_t i = 0; i < numel(); ++i) data_[i] += o.data_[i];
        return *this;
    }
    Tensor& operator-=(const Tensor& o) {
        check_same(o, "-=");
        for (int64_t i = 0; i < numel(); ++i) data_[i] -= o.data_[i];
        return *this;
    }
    Tensor& operator*=(T s) {
        for (auto& v : data_) v *= s;
        return *this;
    }

    bool all_finite() const {
        for (T v : data_)
            if (!std::isfinite(static_cast<double>(v))) return false;
        return true;
    }

    double sum() const {
        double acc = 0;
        for (T v : data_) acc += static_cast<double>(v);
        return acc;
    }
    double mean() const { return numel() ? sum() / static_cast<double>(numel()) : 0.0; }

    T min() const { return *std::min_element(data_.begin(), data_.end()); }
    T max() const { return *std::max_element(data_.begin(), data_.end()); }

    void clamp(T lo, T hi) {
        for (auto& v : data_) v = std::min(hi, std::max(lo, v));
    }

    template <typename U>
    Tensor<U> cast() const {
        Tensor<U> out(shape_);
        for (int64_t i = 0; i < numel(); ++i) out[i] = static_cast<U>(data_[i]);
        return out;
    }

private:
    void check_same(const Tensor& o, const char* op) const {
        if (!same_shape(o))
            throw std::invalid_argument(std::string("tensor ") + op + ": shape mismatch " +
                                        shape_str(shape_) + " vs " + shape_str(o.shape_));
    }

    Shape shape_;
    std::vector<T> data_;
};

using Tensor32 = Tensor<float>;
using Tensor64 = Tensor<double>;

// Mean squared difference between two equally-shaped tensors.
template <typename T>
double mse(const Tensor<T>& a, const Tensor<T>& b) {
    if (!a.same_shape(b))
        throw std::invalid_argument("mse: shape mismatch " + shape_str(a.shape()) + " vs " +
                                    shape_str(b.shape()));
    double acc = 0;
    for (int64_t i = 0; i < a.numel(); ++i) {
        double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
        acc += d * d;
    }
    return a.numel() ? acc / static_cast<double>(a.numel()) : 0.0;
}

}  // namespace provmark
