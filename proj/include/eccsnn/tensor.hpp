#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "eccsnn/error.hpp"

namespace eccsnn {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_size(const Shape& shape)
{
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>{});
}

inline std::string shape_str(const Shape& shape)
{
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
    os << ']';
    return os.str();
}

/**
 * @brief Dense row-major n-dimensional array.
 *
 * Channels-first layout throughout: feature maps are CxHxW, conv kernels
 * OxCxKhxKw, dense weights NxM (out x in).
 */
template <typename T>
class BasicTensor {
public:
    using value_type = T;

    BasicTensor() = default;

    explicit BasicTensor(Shape shape, T fill = T{}) : shape_(std::move(shape)), data_(shape_size(shape_), fill)
    {
        check_dims();
    }

    BasicTensor(Shape shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data))
    {
        check_dims();
        if (shape_size(shape_) != data_.size()) {
            throw DataError(
                "tensor shape " + shape_str(shape_) + " needs " + std::to_string(shape_size(shape_)) +
                " elements, got " + std::to_string(data_.size()));
        }
    }

    const Shape& shape() const noexcept { return shape_; }
    std::size_t rank() const noexcept { return shape_.size(); }
    std::size_t dim(std::size_t i) const { return shape_.at(i); }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    std::span<T> data() noexcept { return data_; }
    std::span<const T> data() const noexcept { return data_; }
    std::vector<T>& storage() noexcept { return data_; }
    const std::vector<T>& storage() const noexcept { return data_; }

    T& operator[](std::size_t i) noexcept { return data_[i]; }
    const T& operator[](std::size_t i) const noexcept { return data_[i]; }

    /// Same data, new shape; element count must be unchanged.
    BasicTensor reshaped(Shape shape) const
    {
        return BasicTensor(std::move(shape), data_);
    }

    bool operator==(const BasicTensor&) const = default;

private:
    void check_dims() const
    {
        for (auto d : shape_) {
            if (d == 0) throw DataError("tensor dimensions must be >= 1, got " + shape_str(shape_));
        }
    }

    Shape shape_;
    std::vector<T> data_;
};

using Tensor = BasicTensor<float>;
using IntTensor = BasicTensor<std::int32_t>;

}  // namespace eccsnn
