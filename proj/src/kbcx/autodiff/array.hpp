#pragma once

#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "kbcx/errors.hpp"

namespace kbcx {

using Shape = std::vector<std::size_t>;

inline std::size_t numel(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string to_string(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << 'x';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

/// Dense row-major array. Scalars have an empty shape.
template <typename T>
struct Array {
    Shape shape;
    std::vector<T> data;

    Array() = default;

    explicit Array(Shape s, T fill = T{0}) : shape(std::move(s)), data(numel(shape), fill) {}

    Array(Shape s, std::vector<T> values) : shape(std::move(s)), data(std::move(values)) {
        if (numel(shape) != data.size()) {
            fail(ErrorCode::Shape, "array of shape " + to_string(shape) + " given " +
                                       std::to_string(data.size()) + " values");
        }
    }

    static Array scalar(T v) { return Array(Shape{}, std::vector<T>{v}); }

    std::size_t size() const { return data.size(); }
    std::size_t rank() const { return shape.size(); }
    std::size_t dim(std::size_t axis) const { return shape.at(axis); }

    T& operator[](std::size_t i) { return data[i]; }
    const T& operator[](std::size_t i) const { return data[i]; }

    T& at(std::size_t r, std::size_t c) { return data[r * shape[1] + c]; }
    const T& at(std::size_t r, std::size_t c) const { return data[r * shape[1] + c]; }

    std::span<T> row(std::size_t r) {
        const std::size_t w = size() / shape[0];
        return {data.data() + r * w, w};
    }
    std::span<const T> row(std::size_t r) const {
        const std::size_t w = size() / shape[0];
        return {data.data() + r * w, w};
    }

    T item() const {
        if (data.size() != 1) fail(ErrorCode::Shape, "item() on array of shape " + to_string(shape));
        return data[0];
    }

    template <typename U>
    Array<U> cast() const {
        Array<U> out;
        out.shape = shape;
        out.data.assign(data.begin(), data.end());
        return out;
    }

    bool operator==(const Array&) const = default;
};

}  // namespace kbcx
