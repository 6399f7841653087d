#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace vqdisc {

#ifdef VQDISC_REAL_DOUBLE
using Real = double;
#else
using Real = float;
#endif

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Raised when an operation's shape or range preconditions are violated.
class ContractError : public Error {
public:
    using Error::Error;
};

class FramingError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

/// Dense row-major array of Real.
struct Tensor {
    Shape shape;
    std::vector<Real> data;

    Tensor() = default;
    explicit Tensor(Shape s, Real fill = Real(0));
    Tensor(Shape s, std::vector<Real> values);

    static Tensor zeros_like(const Tensor& t) { return Tensor(t.shape); }

    std::size_t numel() const { return data.size(); }
    std::size_t rank() const { return shape.size(); }
    std::size_t dim(std::size_t i) const { return shape.at(i); }
    // Extent of the innermost axis; rows() * last() == numel().
    std::size_t last() const { return shape.empty() ? 1 : shape.back(); }
    std::size_t rows() const { return last() == 0 ? 0 : numel() / last(); }

    Real& operator[](std::size_t i) { return data[i]; }
    Real operator[](std::size_t i) const { return data[i]; }

    Real* row(std::size_t r) { return data.data() + r * last(); }
    const Real* row(std::size_t r) const { return data.data() + r * last(); }

    std::span<Real> span() { return data; }
    std::span<const Real> span() const { return data; }

    bool all_finite() const;
    void fill(Real v);
    Tensor reshaped(Shape s) const;
};

bool same_shape(const Tensor& a, const Tensor& b);
void require_shape(const Tensor& t, const Shape& expected, const char* what);

// a += b, elementwise.
void add_inplace(Tensor& a, const Tensor& b);
void scale_inplace(Tensor& a, Real s);

}  // namespace vqdisc
