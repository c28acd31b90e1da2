#pragma once

#include <cstdint>
#include <vector>

#include "nmt/tensor.hpp"

namespace nmt::ops {

// Forward + vector-Jacobian product per primitive. Backward functions take
// whatever forward values they need (inputs or outputs) plus the upstream
// gradient and return input gradients. Shape violations throw
// std::invalid_argument naming the op and the shapes involved.

// [m,k] x [k,n] -> [m,n]
Tensor matmul(const Tensor& a, const Tensor& b);
void matmul_backward(const Tensor& a, const Tensor& b, const Tensor& g,
                     Tensor* grad_a, Tensor* grad_b);

// Same shape, or b broadcast across the leading axes when b.shape matches
// a's trailing axis (bias add).
Tensor add(const Tensor& a, const Tensor& b);
void add_backward(const Tensor& a, const Tensor& b, const Tensor& g,
                  Tensor* grad_a, Tensor* grad_b);

Tensor scale(const Tensor& a, double s);

Tensor relu(const Tensor& a);
Tensor relu_backward(const Tensor& a, const Tensor& g);

// Softmax over the last axis; rows sum to 1.
Tensor softmax(const Tensor& a);
// Backward from the softmax output y.
Tensor softmax_backward(const Tensor& y, const Tensor& g);

Tensor log_softmax(const Tensor& a);
Tensor log_softmax_backward(const Tensor& y, const Tensor& g);

// Last-axis layer norm with learned gain/bias (both shaped [last]).
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps);
void layer_norm_backward(const Tensor& x, const Tensor& gain, double eps, const Tensor& g,
                         Tensor* grad_x, Tensor* grad_gain, Tensor* grad_bias);

// table [V,d], ids -> [len,d]
Tensor embedding_lookup(const Tensor& table, const std::vector<int>& ids);
// Accumulates into grad_table (shape [V,d], caller-initialized).
void embedding_backward(const Tensor& g, const std::vector<int>& ids, Tensor* grad_table);

Tensor concat(const std::vector<const Tensor*>& parts, std::size_t axis);
Tensor slice(const Tensor& a, std::size_t axis, std::size_t start, std::size_t len);
// Scatter of a slice gradient back into the enclosing shape: adds g (the
// gradient of slice(a, axis, start, len)) into grad_a.
void slice_backward_into(const Tensor& g, std::size_t axis, std::size_t start,
                         Tensor* grad_a);

// 2-D transpose
Tensor transpose(const Tensor& a);

constexpr double kLayerNormEps = 1e-9;

}  // namespace nmt::ops
