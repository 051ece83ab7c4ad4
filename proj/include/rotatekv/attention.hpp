#pragma once

#include <span>

#include "rotatekv/tensor.hpp"

namespace rotatekv {

// Plain per-head softmax attention: O = softmax(Q K^T / sqrt(d)) V, with an
// optional causal mask. All inputs are [b,h,s,d].
Tensor reference_attention(const Tensor& q, const Tensor& k, const Tensor& v, bool causal);

// Softmax over the trailing axis of one row; exposed for tests.
void softmax_inplace(std::span<float> row);

}  // namespace rotatekv
