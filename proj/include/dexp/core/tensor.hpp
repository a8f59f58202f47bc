#pragma once

#include "dexp/core/error.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

namespace dexp {

using Shape = std::vector<std::size_t>;

inline std::string to_string(const Shape& shape)
{
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i)
    {
        if (i > 0)
            os << ',';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

inline std::size_t element_count(const Shape& shape)
{
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>{});
}

/**
 * Dense row-major tensor of doubles.
 *
 * A value type: copying copies the buffer. Extents are positive; a rank-0
 * tensor is not supported. The element count always equals the product of
 * the extents.
 */
class Tensor
{
public:
    Tensor() = default;

    explicit Tensor(Shape shape, double fill = 0.0) : shape_(std::move(shape))
    {
        validate_shape(shape_);
        data_.assign(element_count(shape_), fill);
    }

    Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data))
    {
        validate_shape(shape_);
        if (element_count(shape_) != data_.size())
        {
            throw ShapeError("tensor of shape " + to_string(shape_) + " needs " +
                             std::to_string(element_count(shape_)) + " elements, got " +
                             std::to_string(data_.size()));
        }
    }

    static Tensor zeros(Shape shape) { return Tensor(std::move(shape), 0.0); }

    const Shape& shape() const noexcept { return shape_; }
    std::size_t rank() const noexcept { return shape_.size(); }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    std::size_t extent(std::size_t axis) const
    {
        if (axis >= shape_.size())
            throw ShapeError("axis " + std::to_string(axis) + " out of range for rank " + std::to_string(rank()));
        return shape_[axis];
    }

    std::span<double> data() & noexcept { return data_; }
    std::span<const double> data() const& noexcept { return data_; }
    // a view into a temporary would dangle
    std::span<const double> data() && = delete;
    const std::vector<double>& values() const noexcept { return data_; }

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    /// Multi-index access, row-major. No bounds checks beyond the debug assert in std::vector.
    template <typename... Idx>
    double& operator()(Idx... idx)
    {
        return data_[offset({static_cast<std::size_t>(idx)...})];
    }
    template <typename... Idx>
    double operator()(Idx... idx) const
    {
        return data_[offset({static_cast<std::size_t>(idx)...})];
    }

    /// Same buffer, new extents. The element order never changes.
    Tensor reshaped(Shape new_shape) const
    {
        validate_shape(new_shape);
        if (element_count(new_shape) != data_.size())
        {
            throw ShapeError("cannot reshape " + to_string(shape_) + " to " + to_string(new_shape));
        }
        Tensor out;
        out.shape_ = std::move(new_shape);
        out.data_ = data_;
        return out;
    }

    Tensor& operator+=(const Tensor& other)
    {
        require_same_shape(other, "+=");
        for (std::size_t i = 0; i < data_.size(); ++i)
            data_[i] += other.data_[i];
        return *this;
    }
    Tensor& operator-=(const Tensor& other)
    {
        require_same_shape(other, "-=");
        for (std::size_t i = 0; i < data_.size(); ++i)
            data_[i] -= other.data_[i];
        return *this;
    }
    Tensor& operator*=(double a)
    {
        for (auto& v : data_)
            v *= a;
        return *this;
    }

    friend Tensor operator+(Tensor a, const Tensor& b) { return a += b; }
    friend Tensor operator-(Tensor a, const Tensor& b) { return a -= b; }
    friend Tensor operator*(double a, Tensor b) { return b *= a; }
    friend Tensor operator*(Tensor b, double a) { return b *= a; }

    friend bool operator==(const Tensor& a, const Tensor& b) { return a.shape_ == b.shape_ && a.data_ == b.data_; }

    void require_same_shape(const Tensor& other, const char* what) const
    {
        if (other.shape_ != shape_)
        {
            throw ShapeError(std::string(what) + ": shape " + to_string(shape_) + " vs " + to_string(other.shape_));
        }
    }

private:
    static void validate_shape(const Shape& shape)
    {
        if (shape.empty())
            throw ShapeError("tensor rank must be at least 1");
        for (std::size_t i = 0; i < shape.size(); ++i)
        {
            if (shape[i] == 0)
                throw ShapeError("extent of axis " + std::to_string(i) + " is zero");
        }
    }

    std::size_t offset(std::initializer_list<std::size_t> idx) const
    {
        std::size_t off = 0;
        std::size_t axis = 0;
        for (auto i : idx)
            off = off * shape_[axis++] + i;
        return off;
    }

    Shape shape_;
    std::vector<double> data_;
};

/// a*x + b*y, elementwise.
inline Tensor axpby(double a, const Tensor& x, double b, const Tensor& y)
{
    x.require_same_shape(y, "axpby");
    Tensor out(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i)
        out[i] = a * x[i] + b * y[i];
    return out;
}

inline double sum(const Tensor& t)
{
    double s = 0.0;
    for (double v : t.data())
        s += v;
    return s;
}

inline double mean(const Tensor& t) { return sum(t) / static_cast<double>(t.size()); }

/// Population variance (divides by N).
inline double variance(const Tensor& t)
{
    const double m = mean(t);
    double s = 0.0;
    for (double v : t.data())
        s += (v - m) * (v - m);
    return s / static_cast<double>(t.size());
}

inline double max_abs_diff(const Tensor& a, const Tensor& b)
{
    a.require_same_shape(b, "max_abs_diff");
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
        m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

inline double rmse(const Tensor& a, const Tensor& b)
{
    a.require_same_shape(b, "rmse");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
        s += (a[i] - b[i]) * (a[i] - b[i]);
    return std::sqrt(s / static_cast<double>(a.size()));
}

inline bool all_finite(const Tensor& t)
{
    return std::all_of(t.data().begin(), t.data().end(), [](double v) { return std::isfinite(v); });
}

/// Concatenate along axis 0. All other extents must agree.
inline Tensor concat_leading(const Tensor& a, const Tensor& b)
{
    if (a.rank() != b.rank())
        throw ShapeError("concat: rank " + std::to_string(a.rank()) + " vs " + std::to_string(b.rank()));
    for (std::size_t axis = 1; axis < a.rank(); ++axis)
    {
        if (a.shape()[axis] != b.shape()[axis])
            throw ShapeError("concat: extent mismatch on axis " + std::to_string(axis));
    }
    Shape shape = a.shape();
    shape[0] += b.shape()[0];
    std::vector<double> data;
    data.reserve(a.size() + b.size());
    data.insert(data.end(), a.data().begin(), a.data().end());
    data.insert(data.end(), b.data().begin(), b.data().end());
    return Tensor(std::move(shape), std::move(data));
}

} // namespace dexp
