#pragma once

#include <cstddef>
#include <memory>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace dagan {

using Shape = std::vector<int>;

inline std::size_t numel(const Shape& s) {
    std::size_t n = 1;
    for (int d : s) {
        if (d <= 0) throw std::invalid_argument("tensor shape dims must be positive");
        n *= (std::size_t)d;
    }
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
    os << ']';
    return os.str();
}

/// Dense row-major n-d array with an optional gradient slot.
template <typename T>
struct TensorT {
    Shape shape;
    std::vector<T> data;
    bool requires_grad = false;
    std::vector<T> grad;  // empty, or same size as data

    TensorT() = default;
    explicit TensorT(Shape s, T fill = T(0))
        : shape(std::move(s)), data(numel(shape), fill) {}
    TensorT(Shape s, std::vector<T> d) : shape(std::move(s)), data(std::move(d)) {
        if (data.size() != numel(shape))
            throw std::invalid_argument("tensor data size does not match shape " + shape_str(shape));
    }

    std::size_t size() const { return data.size(); }
    int dim(std::size_t i) const { return shape.at(i); }
    int rank() const { return (int)shape.size(); }
    bool is_scalar() const { return data.size() == 1; }
    T scalar() const {
        if (!is_scalar()) throw std::invalid_argument("tensor is not scalar: " + shape_str(shape));
        return data[0];
    }

    void ensure_grad() {
        if (grad.size() != data.size()) grad.assign(data.size(), T(0));
    }
    void zero_grad() {
        if (!grad.empty()) std::fill(grad.begin(), grad.end(), T(0));
    }
    bool has_grad() const { return grad.size() == data.size(); }
};

template <typename T>
using TensorPtr = std::shared_ptr<TensorT<T>>;

template <typename T>
TensorPtr<T> make_tensor(Shape s, T fill = T(0)) {
    return std::make_shared<TensorT<T>>(std::move(s), fill);
}

template <typename T>
TensorPtr<T> make_tensor(Shape s, std::vector<T> d) {
    return std::make_shared<TensorT<T>>(std::move(s), std::move(d));
}

/// Scalar constant (shape [1]), not tracked by any tape.
template <typename T>
TensorPtr<T> constant(T v) {
    auto t = make_tensor<T>({1});
    t->data[0] = v;
    return t;
}

/// Leaf parameter: requires grad.
template <typename T>
TensorPtr<T> make_param(Shape s) {
    auto t = make_tensor<T>(std::move(s));
    t->requires_grad = true;
    return t;
}

/// Copy of values with no grad tracking (cuts the tape).
template <typename T>
TensorPtr<T> detach(const TensorPtr<T>& x) {
    auto t = make_tensor<T>(x->shape);
    t->data = x->data;
    return t;
}

template <typename T, typename U>
TensorPtr<U> cast_tensor(const TensorT<T>& x) {
    auto t = make_tensor<U>(x.shape);
    for (std::size_t i = 0; i < x.data.size(); ++i) t->data[i] = (U)x.data[i];
    t->requires_grad = x.requires_grad;
    return t;
}

using Tensor = TensorT<float>;

}  // namespace dagan
