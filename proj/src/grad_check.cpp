#include "dsvit/grad_check.hpp"

#include <algorithm>
#include <cmath>

#include "dsvit/errors.hpp"

namespace dsvit {

GradCheckResult grad_check(const std::function<Tensor()>& f, Tensor& x, double eps,
                           std::size_t stride) {
  if (!(eps > 0.0)) throw ContractError("grad_check step must be positive");
  if (!x.requires_grad()) throw ContractError("grad_check target must require grad");
  if (stride == 0) stride = 1;

  x.zero_grad();
  Tensor loss = f();
  if (loss.numel() != 1) {
    throw ContractError("grad_check function must return a scalar, got " +
                        shape_string(loss.shape()));
  }
  backward(loss);
  std::vector<double> analytic = x.grad();
  x.zero_grad();

  GradCheckResult result;
  auto values = x.mutable_data();
  for (std::size_t i = 0; i < values.size(); i += stride) {
    const double original = values[i];
    values[i] = original + eps;
    double up = f().item();
    values[i] = original - eps;
    double down = f().item();
    values[i] = original;
    if (!std::isfinite(up) || !std::isfinite(down) || !std::isfinite(analytic[i])) {
      throw NonFiniteError(i, "f(x+eps)=" + std::to_string(up) + " f(x-eps)=" +
                                  std::to_string(down) + " analytic=" +
                                  std::to_string(analytic[i]));
    }
    double numeric = (up - down) / (2.0 * eps);
    double err = std::abs(analytic[i] - numeric) / std::max(1.0, std::abs(analytic[i]));
    if (err > result.max_relative_error) {
      result.max_relative_error = err;
      result.worst_coordinate = i;
    }
    ++result.coordinates_checked;
  }
  return result;
}

GradCheckResult grad_check_all(const std::function<Tensor()>& f, std::vector<Tensor>& leaves,
                               double eps, std::size_t stride) {
  GradCheckResult worst;
  for (auto& leaf : leaves) {
    GradCheckResult r = grad_check(f, leaf, eps, stride);
    worst.coordinates_checked += r.coordinates_checked;
    if (r.max_relative_error >= worst.max_relative_error) {
      worst.max_relative_error = r.max_relative_error;
      worst.worst_coordinate = r.worst_coordinate;
    }
  }
  return worst;
}

}  // namespace dsvit
