#include "vqdisc/tensor.hpp"

#include <cmath>
#include <sstream>

namespace vqdisc {

std::size_t shape_numel(const Shape& shape)
{
    std::size_t n = 1;
    for (auto e : shape) n *= e;
    return n;
}

std::string shape_str(const Shape& shape)
{
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ',';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

Tensor::Tensor(Shape s, Real fill) : shape(std::move(s)), data(shape_numel(shape), fill) {}

Tensor::Tensor(Shape s, std::vector<Real> values) : shape(std::move(s)), data(std::move(values))
{
    if (data.size() != shape_numel(shape))
        throw ContractError("tensor: " + std::to_string(data.size()) + " values for shape " +
                            shape_str(shape));
}

bool Tensor::all_finite() const
{
    for (Real v : data)
        if (!std::isfinite(v)) return false;
    return true;
}

void Tensor::fill(Real v)
{
    for (auto& x : data) x = v;
}

Tensor Tensor::reshaped(Shape s) const
{
    if (shape_numel(s) != numel())
        throw ContractError("reshape " + shape_str(shape) + " -> " + shape_str(s));
    return Tensor(std::move(s), data);
}

bool same_shape(const Tensor& a, const Tensor& b) { return a.shape == b.shape; }

void require_shape(const Tensor& t, const Shape& expected, const char* what)
{
    if (t.shape != expected)
        throw ContractError(std::string(what) + ": expected shape " + shape_str(expected) +
                            ", got " + shape_str(t.shape));
}

void add_inplace(Tensor& a, const Tensor& b)
{
    if (a.numel() != b.numel())
        throw ContractError("add: shape " + shape_str(a.shape) + " vs " + shape_str(b.shape));
    for (std::size_t i = 0; i < a.numel(); ++i) a.data[i] += b.data[i];
}

void scale_inplace(Tensor& a, Real s)
{
    for (auto& x : a.data) x *= s;
}

}  // namespace vqdisc
