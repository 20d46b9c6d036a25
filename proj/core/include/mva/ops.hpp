#pragma once

#include <vector>

#include "mva/tensor.hpp"

namespace mva {

// Differentiable primitive catalog. Every op validates shapes up front,
// computes its output in a fixed deterministic order, and appends a node to
// the active GradGraph when any input is tracked. Without an active graph
// (or with only frozen inputs) ops are plain functions.

Tensor matmul(const Tensor& a, const Tensor& b);   // [MxK] x [KxN] -> [MxN]
Tensor transpose(const Tensor& a);                 // [MxN] -> [NxM]
Tensor add(const Tensor& a, const Tensor& b);      // same shape
Tensor sub(const Tensor& a, const Tensor& b);      // same shape
Tensor mul(const Tensor& a, const Tensor& b);      // same shape, elementwise
Tensor add_rows(const Tensor& a, const Tensor& b); // a: [..xC], b: [C], broadcast over rows
Tensor scale_rows(const Tensor& a, const Tensor& s);  // a: [RxC], s: [R], row r scaled by s[r]
Tensor scale(const Tensor& a, double c);
Tensor scale_by(const Tensor& a, const Tensor& s); // s scalar tensor (gradient flows into s)
Tensor concat(const std::vector<Tensor>& parts, int axis);
Tensor slice(const Tensor& a, int axis, int start, int len);
Tensor mean(const Tensor& a, int axis);            // removes the axis
Tensor reshape(const Tensor& a, std::vector<int> new_shape);
Tensor relu(const Tensor& a);
Tensor gelu(const Tensor& a);
Tensor softmax(const Tensor& a);                   // over the last axis
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-5);
Tensor l2_normalize(const Tensor& a);              // over the last axis; rejects zero rows
/// Mean negative log-likelihood of integer targets under row-wise softmax.
Tensor cross_entropy(const Tensor& logits, const std::vector<int>& targets);
/// Row gather from an embedding table: out[i] = table[ids[i]].
Tensor rows_select(const Tensor& table, const std::vector<int>& ids);

}  // namespace mva
