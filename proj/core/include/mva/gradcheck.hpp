#pragma once

#include <functional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "mva/tensor.hpp"

namespace mva {

/// Central-difference gradient verification.
///
/// `loss_fn` must be a pure, deterministic scalar function of the parameter
/// buffers (evaluated without a graph); `analytic` maps parameter names to
/// gradients from a reverse-mode backward pass (missing entries are treated
/// as zero). Each tunable scalar is perturbed by +-eps in place and restored
/// bit-exactly. Returns the maximum symmetric relative error
/// |a - n| / max(1e-12, |a| + |n|) over all checked scalars (0 for an empty
/// parameter list).
double finite_diff_check(const std::function<double()>& loss_fn,
                         const std::vector<std::pair<std::string, Tensor>>& params,
                         const std::unordered_map<std::string, Tensor>& analytic, double eps);

}  // namespace mva
