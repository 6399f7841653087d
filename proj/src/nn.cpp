#include "vqdisc/nn.hpp"

#include <Eigen/Core>
#include <cmath>

namespace vqdisc::nn {

namespace {

using RowMat = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;
using ConstVecMap = Eigen::Map<const Eigen::Matrix<Real, 1, Eigen::Dynamic>>;
using VecMap = Eigen::Map<Eigen::Matrix<Real, 1, Eigen::Dynamic>>;

void require_grid(const Tensor& x, const char* what)
{
    if (x.rank() != 3) throw ContractError(std::string(what) + ": expected [H,W,C], got " + shape_str(x.shape));
}

}  // namespace

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b)
{
    if (w.rank() != 2 || x.rank() == 0 || x.last() != w.dim(0))
        throw ContractError("linear: input " + shape_str(x.shape) + " vs weight " + shape_str(w.shape));
    if (b.numel() != w.dim(1))
        throw ContractError("linear: bias " + shape_str(b.shape) + " vs weight " + shape_str(w.shape));
    const auto rows = x.rows(), in = w.dim(0), out = w.dim(1);
    Shape ys = x.shape;
    ys.back() = out;
    Tensor y(ys);
    ConstMatMap xm(x.data.data(), rows, in);
    ConstMatMap wm(w.data.data(), in, out);
    MatMap ym(y.data.data(), rows, out);
    ym.noalias() = xm * wm;
    ym.rowwise() += ConstVecMap(b.data.data(), out);
    return y;
}

Tensor linear_backward(const Tensor& x, const Tensor& w, const Tensor& dy, Tensor& dw, Tensor& db)
{
    const auto rows = x.rows(), in = w.dim(0), out = w.dim(1);
    if (dy.rows() != rows || dy.last() != out) throw ContractError("linear_backward: dy " + shape_str(dy.shape));
    Tensor dx(x.shape);
    ConstMatMap xm(x.data.data(), rows, in);
    ConstMatMap wm(w.data.data(), in, out);
    ConstMatMap dym(dy.data.data(), rows, out);
    MatMap(dx.data.data(), rows, in).noalias() = dym * wm.transpose();
    MatMap(dw.data.data(), in, out).noalias() += xm.transpose() * dym;
    VecMap(db.data.data(), out) += dym.colwise().sum();
    return dx;
}

Tensor space_to_depth(const Tensor& x, std::size_t r)
{
    require_grid(x, "space_to_depth");
    const auto h = x.dim(0), w = x.dim(1), c = x.dim(2);
    if (r == 0 || h % r || w % r)
        throw ContractError("space_to_depth: factor " + std::to_string(r) + " does not divide " + shape_str(x.shape));
    const auto ho = h / r, wo = w / r;
    Tensor y({ho, wo, r * r * c});
    for (std::size_t i = 0; i < ho; ++i)
        for (std::size_t j = 0; j < wo; ++j) {
            Real* dst = y.data.data() + (i * wo + j) * r * r * c;
            for (std::size_t a = 0; a < r; ++a)
                for (std::size_t b = 0; b < r; ++b) {
                    const Real* src = x.data.data() + ((i * r + a) * w + (j * r + b)) * c;
                    std::copy(src, src + c, dst + (a * r + b) * c);
                }
        }
    return y;
}

Tensor depth_to_space(const Tensor& x, std::size_t r)
{
    require_grid(x, "depth_to_space");
    const auto h = x.dim(0), w = x.dim(1), cin = x.dim(2);
    if (r == 0 || cin % (r * r))
        throw ContractError("depth_to_space: factor " + std::to_string(r) + " incompatible with " + shape_str(x.shape));
    const auto c = cin / (r * r), wo = w * r;
    Tensor y({h * r, wo, c});
    for (std::size_t i = 0; i < h; ++i)
        for (std::size_t j = 0; j < w; ++j) {
            const Real* src = x.data.data() + (i * w + j) * cin;
            for (std::size_t a = 0; a < r; ++a)
                for (std::size_t b = 0; b < r; ++b)
                    std::copy(src + (a * r + b) * c, src + (a * r + b + 1) * c,
                              y.data.data() + ((i * r + a) * wo + (j * r + b)) * c);
        }
    return y;
}

namespace {

void check_tconv(const Tensor& x, const Tensor& kernel, std::size_t stride)
{
    require_grid(x, "transposed_conv2d");
    if (stride == 0) throw ContractError("transposed_conv2d: stride must be >= 1");
    if (kernel.rank() != 4 || kernel.dim(0) != kernel.dim(1))
        throw ContractError("transposed_conv2d: kernel must be [k,k,in,out], got " + shape_str(kernel.shape));
    if (kernel.dim(0) != stride)
        throw ContractError("transposed_conv2d: unsupported kernel " + std::to_string(kernel.dim(0)) +
                            " with stride " + std::to_string(stride) + " (kernel must equal stride)");
    if (kernel.dim(2) != x.dim(2))
        throw ContractError("transposed_conv2d: kernel " + shape_str(kernel.shape) + " vs input " + shape_str(x.shape));
}

}  // namespace

Tensor transposed_conv2d(const Tensor& x, const Tensor& kernel, const Tensor& bias, std::size_t stride)
{
    check_tconv(x, kernel, stride);
    const auto h = x.dim(0), w = x.dim(1), in = x.dim(2), out = kernel.dim(3), s = stride;
    if (bias.numel() != out) throw ContractError("transposed_conv2d: bias " + shape_str(bias.shape));
    Tensor y({h * s, w * s, out});
    ConstMatMap xm(x.data.data(), h * w, in);
    RowMat tap(h * w, out);
    for (std::size_t a = 0; a < s; ++a)
        for (std::size_t b = 0; b < s; ++b) {
            ConstMatMap k(kernel.data.data() + (a * s + b) * in * out, in, out);
            tap.noalias() = xm * k;
            for (std::size_t i = 0; i < h; ++i)
                for (std::size_t j = 0; j < w; ++j) {
                    Real* dst = y.data.data() + ((i * s + a) * (w * s) + (j * s + b)) * out;
                    const Real* src = tap.data() + (i * w + j) * out;
                    for (std::size_t o = 0; o < out; ++o) dst[o] = src[o] + bias[o];
                }
        }
    return y;
}

Tensor transposed_conv2d_backward(const Tensor& x, const Tensor& kernel, std::size_t stride, const Tensor& dy,
                                  Tensor& dkernel, Tensor& dbias)
{
    check_tconv(x, kernel, stride);
    const auto h = x.dim(0), w = x.dim(1), in = x.dim(2), out = kernel.dim(3), s = stride;
    require_shape(dy, {h * s, w * s, out}, "transposed_conv2d_backward");
    Tensor dx(x.shape);
    ConstMatMap xm(x.data.data(), h * w, in);
    MatMap dxm(dx.data.data(), h * w, in);
    RowMat tap(h * w, out);
    for (std::size_t a = 0; a < s; ++a)
        for (std::size_t b = 0; b < s; ++b) {
            for (std::size_t i = 0; i < h; ++i)
                for (std::size_t j = 0; j < w; ++j) {
                    const Real* src = dy.data.data() + ((i * s + a) * (w * s) + (j * s + b)) * out;
                    std::copy(src, src + out, tap.data() + (i * w + j) * out);
                }
            ConstMatMap k(kernel.data.data() + (a * s + b) * in * out, in, out);
            MatMap dk(dkernel.data.data() + (a * s + b) * in * out, in, out);
            dxm.noalias() += tap * k.transpose();
            dk.noalias() += xm.transpose() * tap;
            VecMap(dbias.data.data(), out) += tap.colwise().sum();
        }
    return dx;
}

Tensor activation(const Tensor& x, Activation kind)
{
    Tensor y(x.shape);
    if (kind == Activation::relu) {
        for (std::size_t i = 0; i < x.numel(); ++i) y[i] = x[i] > Real(0) ? x[i] : Real(0);
    } else {
        for (std::size_t i = 0; i < x.numel(); ++i) y[i] = Real(1) / (Real(1) + std::exp(-x[i]));
    }
    return y;
}

Tensor activation_backward(const Tensor& y, const Tensor& dy, Activation kind)
{
    if (!same_shape(y, dy)) throw ContractError("activation_backward: shape mismatch");
    Tensor dx(y.shape);
    if (kind == Activation::relu) {
        for (std::size_t i = 0; i < y.numel(); ++i) dx[i] = y[i] > Real(0) ? dy[i] : Real(0);
    } else {
        for (std::size_t i = 0; i < y.numel(); ++i) dx[i] = dy[i] * y[i] * (Real(1) - y[i]);
    }
    return dx;
}

Tensor global_avg_pool(const Tensor& x)
{
    const auto c = x.last(), rows = x.rows();
    if (rows == 0) throw ContractError("global_avg_pool: empty input");
    std::vector<double> acc(c, 0.0);
    for (std::size_t r = 0; r < rows; ++r) {
        const Real* p = x.row(r);
        for (std::size_t k = 0; k < c; ++k) acc[k] += p[k];
    }
    Tensor y({c});
    for (std::size_t k = 0; k < c; ++k) y[k] = static_cast<Real>(acc[k] / static_cast<double>(rows));
    return y;
}

Tensor global_avg_pool_backward(const Shape& input_shape, const Tensor& dy)
{
    Tensor dx(input_shape);
    const auto c = dx.last(), rows = dx.rows();
    if (dy.numel() != c) throw ContractError("global_avg_pool_backward: dy " + shape_str(dy.shape));
    const Real inv = Real(1) / static_cast<Real>(rows);
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t k = 0; k < c; ++k) dx.row(r)[k] = dy[k] * inv;
    return dx;
}

Tensor area_downsample(const Tensor& x, std::size_t r)
{
    require_grid(x, "area_downsample");
    if (r == 1) return x;
    const auto h = x.dim(0), w = x.dim(1), c = x.dim(2);
    if (r == 0 || h % r || w % r) throw ContractError("area_downsample: factor does not divide " + shape_str(x.shape));
    const auto ho = h / r, wo = w / r;
    Tensor y({ho, wo, c});
    const Real inv = Real(1) / static_cast<Real>(r * r);
    for (std::size_t i = 0; i < h; ++i)
        for (std::size_t j = 0; j < w; ++j) {
            const Real* src = x.data.data() + (i * w + j) * c;
            Real* dst = y.data.data() + ((i / r) * wo + j / r) * c;
            for (std::size_t k = 0; k < c; ++k) dst[k] += src[k] * inv;
        }
    return y;
}

Tensor area_downsample_backward(const Shape& input_shape, std::size_t r, const Tensor& dy)
{
    Tensor dx(input_shape);
    if (r == 1) {
        dx.data = dy.data;
        return dx;
    }
    const auto h = dx.dim(0), w = dx.dim(1), c = dx.dim(2), wo = w / r;
    const Real inv = Real(1) / static_cast<Real>(r * r);
    for (std::size_t i = 0; i < h; ++i)
        for (std::size_t j = 0; j < w; ++j) {
            const Real* src = dy.data.data() + ((i / r) * wo + j / r) * c;
            Real* dst = dx.data.data() + (i * w + j) * c;
            for (std::size_t k = 0; k < c; ++k) dst[k] = src[k] * inv;
        }
    return dx;
}

}  // namespace vqdisc::nn
