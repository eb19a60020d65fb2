#pragma once

#include <functional>
#include <string>

#include "dsvit/tensor.hpp"

namespace dsvit {

/// Called once per learnable tensor with its fully qualified name.
using ParamVisitor = std::function<void(const std::string& name, Tensor& param)>;

}  // namespace dsvit
