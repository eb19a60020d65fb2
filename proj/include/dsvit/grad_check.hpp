#pragma once

#include <functional>
#include <vector>

#include "dsvit/tensor.hpp"

namespace dsvit {

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::size_t worst_coordinate = 0;
  std::size_t coordinates_checked = 0;
};

/// Compares the reverse-mode gradient of `f` with respect to the leaf `x`
/// against central differences with step `eps`. The error per coordinate is
/// |analytic - numeric| / max(1, |analytic|). `f` must rebuild its graph on
/// every call and read `x` each time; `x` is restored before returning.
/// `stride` > 1 probes every stride-th coordinate only.
GradCheckResult grad_check(const std::function<Tensor()>& f, Tensor& x, double eps,
                           std::size_t stride = 1);

/// Runs grad_check over several leaves; returns the worst error seen.
GradCheckResult grad_check_all(const std::function<Tensor()>& f, std::vector<Tensor>& leaves,
                               double eps, std::size_t stride = 1);

}  // namespace dsvit
