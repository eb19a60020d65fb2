#include "dsvit/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>

#include "dsvit/errors.hpp"

namespace dsvit {

namespace {

using detail::Node;

// C[m×n] += A[m×k] · B[k×n]
void gemm_nn(const double* __restrict a, const double* __restrict b, double* __restrict c,
             std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    double* __restrict row = c + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      double s = a[i * k + p];
      const double* __restrict brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) row[j] += s * brow[j];
    }
  }
}

double dot(const double* __restrict x, const double* __restrict y, std::size_t n) {
  double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
  std::size_t j = 0;
  for (; j + 4 <= n; j += 4) {
    s0 += x[j] * y[j];
    s1 += x[j + 1] * y[j + 1];
    s2 += x[j + 2] * y[j + 2];
    s3 += x[j + 3] * y[j + 3];
  }
  for (; j < n; ++j) s0 += x[j] * y[j];
  return (s0 + s1) + (s2 + s3);
}

// C[m×k] += G[m×n] · B[k×n]ᵀ
void gemm_nt(const double* g, const double* b, double* c, std::size_t m, std::size_t k,
             std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) c[i * k + p] += dot(g + i * n, b + p * n, n);
  }
}

// C[k×n] += A[m×k]ᵀ · G[m×n]
void gemm_tn(const double* __restrict a, const double* __restrict g, double* __restrict c,
             std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t p = 0; p < k; ++p) {
    double* __restrict crow = c + p * n;
    for (std::size_t i = 0; i < m; ++i) {
      double s = a[i * k + p];
      const double* __restrict grow = g + i * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += s * grow[j];
    }
  }
}

bool broadcasts_into(const Shape& small, const Shape& big) {
  if (small.size() > big.size()) return false;
  std::size_t offset = big.size() - small.size();
  for (std::size_t i = 0; i < small.size(); ++i) {
    if (small[i] != big[offset + i] && small[i] != 1) return false;
  }
  return true;
}

// Maps every flat index of `big` to the flat index of `small` it reads.
std::vector<std::size_t> broadcast_map(const Shape& small, const Shape& big) {
  std::size_t rank = big.size();
  std::size_t offset = rank - small.size();
  std::vector<std::size_t> strides(rank, 0);
  std::size_t stride = 1;
  for (std::size_t i = small.size(); i-- > 0;) {
    strides[offset + i] = small[i] == 1 ? 0 : stride;
    stride *= small[i];
  }
  std::vector<std::size_t> map(shape_numel(big));
  std::vector<std::size_t> idx(rank, 0);
  std::size_t src = 0;
  for (std::size_t flat = 0; flat < map.size(); ++flat) {
    map[flat] = src;
    for (std::size_t ax = rank; ax-- > 0;) {
      ++idx[ax];
      src += strides[ax];
      if (idx[ax] < big[ax]) break;
      src -= strides[ax] * idx[ax];
      idx[ax] = 0;
    }
  }
  return map;
}

enum class BinOp { add, sub, mul, div };

Tensor binary(const Tensor& a, const Tensor& b, BinOp op) {
  Shape out_shape;
  std::vector<std::size_t> amap, bmap;  // empty means identity
  if (a.shape() == b.shape()) {
    out_shape = a.shape();
  } else if (broadcasts_into(b.shape(), a.shape())) {
    out_shape = a.shape();
    bmap = broadcast_map(b.shape(), a.shape());
  } else if (broadcasts_into(a.shape(), b.shape())) {
    out_shape = b.shape();
    amap = broadcast_map(a.shape(), b.shape());
  } else {
    throw DimensionError("cannot broadcast shapes " + shape_string(a.shape()) + " and " +
                         shape_string(b.shape()));
  }
  const auto& av = a.values();
  const auto& bv = b.values();
  std::size_t n = shape_numel(out_shape);
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    double x = av[amap.empty() ? i : amap[i]];
    double y = bv[bmap.empty() ? i : bmap[i]];
    switch (op) {
      case BinOp::add: out[i] = x + y; break;
      case BinOp::sub: out[i] = x - y; break;
      case BinOp::mul: out[i] = x * y; break;
      case BinOp::div: out[i] = x / y; break;
    }
  }
  auto an = a.node();
  auto bn = b.node();
  return make_result(std::move(out_shape), std::move(out), {&a, &b},
                     [an, bn, amap, bmap, op](const Node& self) {
                       const auto& g = self.grad;
                       const auto& av = an->data;
                       const auto& bv = bn->data;
                       double* ga = an->requires_grad ? an->ensure_grad().data() : nullptr;
                       double* gb = bn->requires_grad ? bn->ensure_grad().data() : nullptr;
                       for (std::size_t i = 0; i < g.size(); ++i) {
                         std::size_t ia = amap.empty() ? i : amap[i];
                         std::size_t ib = bmap.empty() ? i : bmap[i];
                         switch (op) {
                           case BinOp::add:
                             if (ga) ga[ia] += g[i];
                             if (gb) gb[ib] += g[i];
                             break;
                           case BinOp::sub:
                             if (ga) ga[ia] += g[i];
                             if (gb) gb[ib] -= g[i];
                             break;
                           case BinOp::mul:
                             if (ga) ga[ia] += g[i] * bv[ib];
                             if (gb) gb[ib] += g[i] * av[ia];
                             break;
                           case BinOp::div:
                             if (ga) ga[ia] += g[i] / bv[ib];
                             if (gb) gb[ib] -= g[i] * av[ia] / (bv[ib] * bv[ib]);
                             break;
                         }
                       }
                     });
}

// Unary op whose local derivative is a function of (input, output).
template <typename Forward, typename Derivative>
Tensor unary(const Tensor& a, Forward f, Derivative df) {
  const auto& av = a.values();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = f(av[i]);
  auto an = a.node();
  return make_result(a.shape(), std::move(out), {&a}, [an, df](const Node& self) {
    auto& ga = an->ensure_grad();
    for (std::size_t i = 0; i < ga.size(); ++i) {
      ga[i] += self.grad[i] * df(an->data[i], self.data[i]);
    }
  });
}

struct AxisSplit {
  std::size_t outer, len, inner;
};

AxisSplit split_axis(const Shape& shape, std::size_t axis) {
  if (axis >= shape.size()) {
    throw DimensionError("axis " + std::to_string(axis) + " out of range for shape " +
                         shape_string(shape));
  }
  AxisSplit s{1, shape[axis], 1};
  for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
  return s;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) { return binary(a, b, BinOp::add); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary(a, b, BinOp::sub); }
Tensor mul(const Tensor& a, const Tensor& b) { return binary(a, b, BinOp::mul); }
Tensor div(const Tensor& a, const Tensor& b) { return binary(a, b, BinOp::div); }

Tensor scale(const Tensor& a, double factor) {
  return unary(
      a, [factor](double x) { return x * factor; },
      [factor](double, double) { return factor; });
}

Tensor add_scalar(const Tensor& a, double value) {
  return unary(
      a, [value](double x) { return x + value; }, [](double, double) { return 1.0; });
}

Tensor relu(const Tensor& a) {
  return unary(
      a, [](double x) { return x > 0.0 ? x : 0.0; },
      [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor sigmoid(const Tensor& a) {
  return unary(
      a,
      [](double x) {
        if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
        double e = std::exp(x);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor exp(const Tensor& a) {
  return unary(
      a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Tensor log(const Tensor& a) {
  return unary(
      a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Tensor sqrt(const Tensor& a) {
  return unary(
      a, [](double x) { return std::sqrt(x); },
      [](double, double y) { return 0.5 / y; });
}

Tensor square(const Tensor& a) {
  return unary(
      a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Tensor clamp(const Tensor& a, double lo, double hi) {
  return unary(
      a, [lo, hi](double x) { return std::clamp(x, lo, hi); },
      [lo, hi](double x, double) { return (x > lo && x < hi) ? 1.0 : 0.0; });
}

Tensor elementwise(Elementwise kind, std::span<const Tensor> operands, double factor) {
  auto need = [&](std::size_t n) {
    if (operands.size() != n) {
      throw ContractError("elementwise op expects " + std::to_string(n) + " operands, got " +
                          std::to_string(operands.size()));
    }
  };
  switch (kind) {
    case Elementwise::relu: need(1); return relu(operands[0]);
    case Elementwise::sigmoid: need(1); return sigmoid(operands[0]);
    case Elementwise::add: need(2); return add(operands[0], operands[1]);
    case Elementwise::mul: need(2); return mul(operands[0], operands[1]);
    case Elementwise::scale: need(1); return scale(operands[0], factor);
  }
  throw ContractError("unknown elementwise kind");
}

Tensor softmax(const Tensor& x, std::size_t axis) {
  auto [outer, len, inner] = split_axis(x.shape(), axis);
  const auto& xv = x.values();
  std::vector<double> out(xv.size());
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t in = 0; in < inner; ++in) {
      std::size_t base = o * len * inner + in;
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t k = 0; k < len; ++k) mx = std::max(mx, xv[base + k * inner]);
      double total = 0.0;
      for (std::size_t k = 0; k < len; ++k) {
        double e = std::exp(xv[base + k * inner] - mx);
        out[base + k * inner] = e;
        total += e;
      }
      for (std::size_t k = 0; k < len; ++k) out[base + k * inner] /= total;
    }
  }
  auto xn = x.node();
  return make_result(x.shape(), std::move(out), {&x},
                     [xn, outer, len, inner](const Node& self) {
                       auto& gx = xn->ensure_grad();
                       const auto& y = self.data;
                       const auto& g = self.grad;
                       for (std::size_t o = 0; o < outer; ++o) {
                         for (std::size_t in = 0; in < inner; ++in) {
                           std::size_t base = o * len * inner + in;
                           double dot = 0.0;
                           for (std::size_t k = 0; k < len; ++k) {
                             dot += g[base + k * inner] * y[base + k * inner];
                           }
                           for (std::size_t k = 0; k < len; ++k) {
                             std::size_t i = base + k * inner;
                             gx[i] += y[i] * (g[i] - dot);
                           }
                         }
                       }
                     });
}

Tensor logsumexp(const Tensor& x, std::size_t axis) {
  auto [outer, len, inner] = split_axis(x.shape(), axis);
  const auto& xv = x.values();
  Shape out_shape = x.shape();
  out_shape[axis] = 1;
  std::vector<double> out(outer * inner);
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t in = 0; in < inner; ++in) {
      std::size_t base = o * len * inner + in;
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t k = 0; k < len; ++k) mx = std::max(mx, xv[base + k * inner]);
      double total = 0.0;
      for (std::size_t k = 0; k < len; ++k) total += std::exp(xv[base + k * inner] - mx);
      out[o * inner + in] = mx + std::log(total);
    }
  }
  auto xn = x.node();
  return make_result(std::move(out_shape), std::move(out), {&x},
                     [xn, outer, len, inner](const Node& self) {
                       auto& gx = xn->ensure_grad();
                       for (std::size_t o = 0; o < outer; ++o) {
                         for (std::size_t in = 0; in < inner; ++in) {
                           std::size_t base = o * len * inner + in;
                           double lse = self.data[o * inner + in];
                           double g = self.grad[o * inner + in];
                           for (std::size_t k = 0; k < len; ++k) {
                             std::size_t i = base + k * inner;
                             gx[i] += g * std::exp(xn->data[i] - lse);
                           }
                         }
                       }
                     });
}

Tensor sum(const Tensor& x) {
  double total = 0.0;
  for (double v : x.values()) total += v;
  auto xn = x.node();
  return make_result(Shape{1}, {total}, {&x}, [xn](const Node& self) {
    auto& gx = xn->ensure_grad();
    for (auto& g : gx) g += self.grad[0];
  });
}

Tensor sum(const Tensor& x, std::size_t axis) {
  auto [outer, len, inner] = split_axis(x.shape(), axis);
  Shape out_shape = x.shape();
  out_shape[axis] = 1;
  const auto& xv = x.values();
  std::vector<double> out(outer * inner, 0.0);
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t k = 0; k < len; ++k) {
      for (std::size_t in = 0; in < inner; ++in) {
        out[o * inner + in] += xv[(o * len + k) * inner + in];
      }
    }
  }
  auto xn = x.node();
  return make_result(std::move(out_shape), std::move(out), {&x},
                     [xn, outer, len, inner](const Node& self) {
                       auto& gx = xn->ensure_grad();
                       for (std::size_t o = 0; o < outer; ++o) {
                         for (std::size_t k = 0; k < len; ++k) {
                           for (std::size_t in = 0; in < inner; ++in) {
                             gx[(o * len + k) * inner + in] += self.grad[o * inner + in];
                           }
                         }
                       }
                     });
}

Tensor mean(const Tensor& x) {
  return scale(sum(x), 1.0 / static_cast<double>(x.numel()));
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw DimensionError("matmul shape mismatch: " + shape_string(a.shape()) + " x " +
                         shape_string(b.shape()));
  }
  std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<double> out(m * n, 0.0);
  gemm_nn(a.values().data(), b.values().data(), out.data(), m, k, n);
  auto an = a.node();
  auto bn = b.node();
  return make_result(Shape{m, n}, std::move(out), {&a, &b}, [an, bn, m, k, n](const Node& self) {
    const double* g = self.grad.data();
    if (an->requires_grad) gemm_nt(g, bn->data.data(), an->ensure_grad().data(), m, k, n);
    if (bn->requires_grad) gemm_tn(an->data.data(), g, bn->ensure_grad().data(), m, k, n);
  });
}

Tensor transpose(const Tensor& a) {
  if (a.rank() != 2) {
    throw DimensionError("transpose needs a matrix, got " + shape_string(a.shape()));
  }
  std::size_t r = a.dim(0), c = a.dim(1);
  std::vector<std::size_t> index(r * c);
  for (std::size_t i = 0; i < c; ++i) {
    for (std::size_t j = 0; j < r; ++j) index[i * r + j] = j * c + i;
  }
  return gather(a, Shape{c, r}, std::move(index));
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (shape_numel(shape) != a.numel()) {
    throw DimensionError("cannot reshape " + shape_string(a.shape()) + " to " +
                         shape_string(shape));
  }
  auto an = a.node();
  return make_result(std::move(shape), a.values(), {&a}, [an](const Node& self) {
    auto& ga = an->ensure_grad();
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += self.grad[i];
  });
}

Tensor gather(const Tensor& a, Shape shape, std::vector<std::size_t> index) {
  if (shape_numel(shape) != index.size()) {
    throw DimensionError("gather index count " + std::to_string(index.size()) +
                         " does not match shape " + shape_string(shape));
  }
  const auto& av = a.values();
  std::vector<double> out(index.size());
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] >= av.size()) {
      throw DimensionError("gather index out of range for shape " + shape_string(a.shape()));
    }
    out[i] = av[index[i]];
  }
  auto an = a.node();
  return make_result(std::move(shape), std::move(out), {&a},
                     [an, index = std::move(index)](const Node& self) {
                       auto& ga = an->ensure_grad();
                       for (std::size_t i = 0; i < index.size(); ++i) {
                         ga[index[i]] += self.grad[i];
                       }
                     });
}

Tensor slice(const Tensor& a, std::size_t axis, std::size_t begin, std::size_t end) {
  auto [outer, len, inner] = split_axis(a.shape(), axis);
  if (begin >= end || end > len) {
    throw DimensionError("slice [" + std::to_string(begin) + "," + std::to_string(end) +
                         ") out of range on axis " + std::to_string(axis) + " of " +
                         shape_string(a.shape()));
  }
  Shape shape = a.shape();
  shape[axis] = end - begin;
  std::vector<std::size_t> index;
  index.reserve(outer * (end - begin) * inner);
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t k = begin; k < end; ++k) {
      for (std::size_t in = 0; in < inner; ++in) index.push_back((o * len + k) * inner + in);
    }
  }
  return gather(a, std::move(shape), std::move(index));
}

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
  if (parts.empty()) throw ContractError("concat of zero tensors");
  const Shape& first = parts.front().shape();
  if (axis >= first.size()) {
    throw DimensionError("concat axis " + std::to_string(axis) + " out of range for " +
                         shape_string(first));
  }
  Shape out_shape = first;
  out_shape[axis] = 0;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    bool ok = s.size() == first.size();
    for (std::size_t i = 0; ok && i < s.size(); ++i) ok = (i == axis) || s[i] == first[i];
    if (!ok) {
      throw DimensionError("concat shape mismatch: " + shape_string(first) + " vs " +
                           shape_string(s));
    }
    out_shape[axis] += s[axis];
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= first[i];
  for (std::size_t i = axis + 1; i < first.size(); ++i) inner *= first[i];
  std::size_t total_len = out_shape[axis];

  std::vector<double> out(shape_numel(out_shape));
  std::vector<std::size_t> offsets;
  std::size_t off = 0;
  for (const auto& p : parts) {
    offsets.push_back(off);
    std::size_t len = p.shape()[axis];
    const auto& pv = p.values();
    for (std::size_t o = 0; o < outer; ++o) {
      std::copy_n(pv.begin() + o * len * inner, len * inner,
                  out.begin() + (o * total_len + off) * inner);
    }
    off += len;
  }
  std::vector<detail::NodePtr> nodes;
  for (const auto& p : parts) nodes.push_back(p.node());
  return make_result(std::move(out_shape), std::move(out), parts,
                     [nodes, offsets, axis, outer, inner, total_len](const Node& self) {
                       for (std::size_t n = 0; n < nodes.size(); ++n) {
                         if (!nodes[n]->requires_grad) continue;
                         auto& gp = nodes[n]->ensure_grad();
                         std::size_t len = nodes[n]->shape[axis];
                         for (std::size_t o = 0; o < outer; ++o) {
                           const double* src =
                               self.grad.data() + (o * total_len + offsets[n]) * inner;
                           double* dst = gp.data() + o * len * inner;
                           for (std::size_t i = 0; i < len * inner; ++i) dst[i] += src[i];
                         }
                       }
                     });
}

namespace {

struct ConvGeometry {
  std::size_t cin, h, w, cout, p, stride, pad, oh, ow;
};

// Column matrix [cin*p*p, oh*ow]; out-of-image taps are zero.
std::vector<double> im2col(const ConvGeometry& g, const double* in) {
  std::size_t cols = g.oh * g.ow;
  std::vector<double> out(g.cin * g.p * g.p * cols, 0.0);
  for (std::size_t ci = 0; ci < g.cin; ++ci) {
    for (std::size_t ky = 0; ky < g.p; ++ky) {
      for (std::size_t kx = 0; kx < g.p; ++kx) {
        double* row = out.data() + ((ci * g.p + ky) * g.p + kx) * cols;
        for (std::size_t oy = 0; oy < g.oh; ++oy) {
          std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) -
                              static_cast<std::ptrdiff_t>(g.pad);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.h)) continue;
          const double* irow = in + (ci * g.h + static_cast<std::size_t>(iy)) * g.w;
          double* orow = row + oy * g.ow;
          for (std::size_t ox = 0; ox < g.ow; ++ox) {
            std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * g.stride + kx) -
                                static_cast<std::ptrdiff_t>(g.pad);
            if (ix >= 0 && ix < static_cast<std::ptrdiff_t>(g.w)) orow[ox] = irow[ix];
          }
        }
      }
    }
  }
  return out;
}

void col2im_add(const ConvGeometry& g, const double* cols_grad, double* gin) {
  std::size_t cols = g.oh * g.ow;
  for (std::size_t ci = 0; ci < g.cin; ++ci) {
    for (std::size_t ky = 0; ky < g.p; ++ky) {
      for (std::size_t kx = 0; kx < g.p; ++kx) {
        const double* row = cols_grad + ((ci * g.p + ky) * g.p + kx) * cols;
        for (std::size_t oy = 0; oy < g.oh; ++oy) {
          std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) -
                              static_cast<std::ptrdiff_t>(g.pad);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.h)) continue;
          double* irow = gin + (ci * g.h + static_cast<std::size_t>(iy)) * g.w;
          const double* grow = row + oy * g.ow;
          for (std::size_t ox = 0; ox < g.ow; ++ox) {
            std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * g.stride + kx) -
                                static_cast<std::ptrdiff_t>(g.pad);
            if (ix >= 0 && ix < static_cast<std::ptrdiff_t>(g.w)) irow[ix] += grow[ox];
          }
        }
      }
    }
  }
}

}  // namespace

Tensor conv2d(const Tensor& input, const Tensor& kernel, std::size_t stride, std::size_t pad) {
  if (input.rank() != 3 || kernel.rank() != 4 || kernel.dim(1) != input.dim(0) ||
      kernel.dim(2) != kernel.dim(3)) {
    throw DimensionError("conv2d shape mismatch: input " + shape_string(input.shape()) +
                         ", kernel " + shape_string(kernel.shape()));
  }
  if (stride == 0) throw ContractError("conv2d stride must be >= 1");
  ConvGeometry g{input.dim(0), input.dim(1), input.dim(2), kernel.dim(0), kernel.dim(2),
                 stride, pad, 0, 0};
  if (g.h + 2 * pad < g.p || g.w + 2 * pad < g.p) {
    throw DimensionError("conv2d kernel " + shape_string(kernel.shape()) +
                         " larger than padded input " + shape_string(input.shape()));
  }
  g.oh = (g.h + 2 * pad - g.p) / stride + 1;
  g.ow = (g.w + 2 * pad - g.p) / stride + 1;

  std::size_t taps = g.cin * g.p * g.p;
  std::size_t cols = g.oh * g.ow;
  auto colmat = std::make_shared<std::vector<double>>(im2col(g, input.values().data()));
  const double* k = kernel.values().data();
  std::vector<double> out(g.cout * cols, 0.0);
  gemm_nn(k, colmat->data(), out.data(), g.cout, taps, cols);
  auto inn = input.node();
  auto kn = kernel.node();
  return make_result(
      Shape{g.cout, g.oh, g.ow}, std::move(out), {&input, &kernel},
      [inn, kn, g, colmat](const Node& self) {
        std::size_t taps = g.cin * g.p * g.p;
        std::size_t cols = g.oh * g.ow;
        const double* grad = self.grad.data();
        if (kn->requires_grad) {
          gemm_nt(grad, colmat->data(), kn->ensure_grad().data(), g.cout, taps, cols);
        }
        if (inn->requires_grad) {
          std::vector<double> gcols(taps * cols, 0.0);
          gemm_tn(kn->data.data(), grad, gcols.data(), g.cout, taps, cols);
          col2im_add(g, gcols.data(), inn->ensure_grad().data());
        }
      });
}

Tensor max_pool2d(const Tensor& input, std::size_t window) {
  if (input.rank() != 3 || window == 0 || input.dim(1) % window != 0 ||
      input.dim(2) % window != 0) {
    throw DimensionError("max_pool2d window " + std::to_string(window) +
                         " does not divide input " + shape_string(input.shape()));
  }
  std::size_t c = input.dim(0), h = input.dim(1), w = input.dim(2);
  std::size_t oh = h / window, ow = w / window;
  const auto& in = input.values();
  std::vector<double> out(c * oh * ow);
  std::vector<std::size_t> argmax(out.size());
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t oy = 0; oy < oh; ++oy) {
      for (std::size_t ox = 0; ox < ow; ++ox) {
        std::size_t best = (ch * h + oy * window) * w + ox * window;
        for (std::size_t dy = 0; dy < window; ++dy) {
          for (std::size_t dx = 0; dx < window; ++dx) {
            std::size_t i = (ch * h + oy * window + dy) * w + ox * window + dx;
            if (in[i] > in[best]) best = i;
          }
        }
        std::size_t o = (ch * oh + oy) * ow + ox;
        out[o] = in[best];
        argmax[o] = best;
      }
    }
  }
  auto inn = input.node();
  return make_result(Shape{c, oh, ow}, std::move(out), {&input},
                     [inn, argmax = std::move(argmax)](const Node& self) {
                       auto& gin = inn->ensure_grad();
                       for (std::size_t o = 0; o < argmax.size(); ++o) {
                         gin[argmax[o]] += self.grad[o];
                       }
                     });
}

}  // namespace dsvit
