#pragma once

#include <cstdint>

#include "mva/tensor.hpp"

namespace mva {

enum class Modality { Vision, Text };

/// Shared cross-modal parameter space for one equipped encoder block. Both
/// modalities materialize their downsample weights from the same m x n
/// matrix, so its gradient accumulates contributions from both branches in a
/// single backward pass.
struct CmiSpace {
  Tensor shared;        // m x n, one instance per equipped block
  Tensor vision_factor; // (d_v/m) x (d'/n)
  Tensor text_factor;   // (d_t/m) x (d'/n)
};

/// Kronecker product: out[i*p+a, j*q+b] = lhs[i,j] * rhs[a,b]. Differentiable
/// with respect to both factors.
Tensor kron(const Tensor& lhs, const Tensor& rhs);

/// kron(shared, factor of the requested modality). Rejects a modality whose
/// factor matrix is missing.
Tensor materialize_down(const CmiSpace& space, Modality modality);

struct CmiSavings {
  std::int64_t dense = 0;                 // d * d'
  std::int64_t factored_per_modality = 0; // (d/m) * (d'/n)
  std::int64_t shared = 0;                // m * n, counted once across modalities
};

/// Parameter counts for a d -> d' downsample with an m x n shared factor.
/// Rejects shapes where m does not divide d or n does not divide d'.
CmiSavings cmi_param_savings(int d, int d_prime, int m, int n);

}  // namespace mva
