#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "dsvit/tensor.hpp"

namespace dsvit {

// Binary elementwise ops broadcast the smaller operand into the larger one by
// right-aligning shapes; each aligned dimension must match or be 1.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);

Tensor scale(const Tensor& a, double factor);
Tensor add_scalar(const Tensor& a, double value);

Tensor relu(const Tensor& a);
/// Logistic function; sigmoid(0) is exactly 0.5.
Tensor sigmoid(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor sqrt(const Tensor& a);
Tensor square(const Tensor& a);
/// Gradient passes only where lo < x < hi.
Tensor clamp(const Tensor& a, double lo, double hi);

enum class Elementwise { relu, sigmoid, add, mul, scale };
/// Dispatches to the named op. `factor` is used by `scale` only.
Tensor elementwise(Elementwise kind, std::span<const Tensor> operands, double factor = 1.0);

/// Max-subtracted softmax along `axis`.
Tensor softmax(const Tensor& x, std::size_t axis);
/// log(sum(exp(x))) along `axis`; the reduced axis is kept with size 1.
Tensor logsumexp(const Tensor& x, std::size_t axis);

Tensor sum(const Tensor& x);
/// Reduction along `axis`, kept with size 1.
Tensor sum(const Tensor& x, std::size_t axis);
Tensor mean(const Tensor& x);

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor reshape(const Tensor& a, Shape shape);
/// out.flat[i] = a.flat[index[i]]; gradients scatter-add back.
Tensor gather(const Tensor& a, Shape shape, std::vector<std::size_t> index);
/// Half-open range [begin, end) along `axis`.
Tensor slice(const Tensor& a, std::size_t axis, std::size_t begin, std::size_t end);
Tensor concat(const std::vector<Tensor>& parts, std::size_t axis);

/// Cross-correlation of a C×H×W input with a C'×C×p×p kernel.
Tensor conv2d(const Tensor& input, const Tensor& kernel, std::size_t stride, std::size_t pad);
/// Non-overlapping window maximum over C×H×W. Ties route the gradient to the
/// first element in row-major window order.
Tensor max_pool2d(const Tensor& input, std::size_t window);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator*(const Tensor& a, double s) { return scale(a, s); }
inline Tensor operator*(double s, const Tensor& a) { return scale(a, s); }

}  // namespace dsvit
