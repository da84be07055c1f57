#pragma once

#include <cstddef>
#include <random>
#include <span>
#include <vector>

#include "c2pc/diffmath/tensor.hpp"

namespace c2pc::dm {

// Elementwise and reductions.
Tensor add(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
/// x[..., n] + bias[n], broadcast over leading axes.
Tensor add_bias(const Tensor& x, const Tensor& bias);
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
Tensor reshape(const Tensor& a, Shape shape);

/// a[m x k] * b[k x n].
Tensor matmul(const Tensor& a, const Tensor& b);

/// Embedding lookup: out[i] = table[indices[i]].
Tensor gather_rows(const Tensor& table, std::span<const std::size_t> indices);

/// Exact (erf) GELU.
Tensor gelu(const Tensor& x);

/// Normalises along the last axis: (v - mean) / sqrt(var + eps) * gamma + beta.
Tensor layer_norm(const Tensor& v, const Tensor& gamma, const Tensor& beta, double eps = 1e-5);

/// Row-wise softmax of a 2-D tensor, stabilised by subtracting the row maximum.
Tensor softmax_rows(const Tensor& m);

/// Valid-padding 1-D cross-correlation (no kernel flip).
///   x: [T x C_in] or [B x T x C_in], kernel: [K x C_in x C_out], bias: [C_out]
///   y[t, o] = bias[o] + sum_{k,c} x[t + k, c] * kernel[k, c, o]
/// Output: [(T-K+1) x C_out] or [B x (T-K+1) x C_out].
Tensor conv1d_valid(const Tensor& x, const Tensor& kernel, const Tensor& bias);

/// Mean over the middle axis of [B x L x C] -> [B x C].
Tensor mean_axis1(const Tensor& x);

/// Inverted dropout; identity when rate == 0.
Tensor dropout(const Tensor& x, double rate, std::mt19937_64& rng);

/// Scaled dot-product attention with `heads` heads over column blocks of width E / heads:
/// per head softmax(Q_h K_h^T / sqrt(d_k)) V_h, heads concatenated back to [L_q x E].
Tensor multi_head_attention(const Tensor& q, const Tensor& k, const Tensor& v, std::size_t heads);

/// The attention weight matrices multi_head_attention would use, one row-major
/// [L_q x L_k] block per head. Not recorded in the graph.
std::vector<std::vector<double>> attention_probabilities(const Tensor& q, const Tensor& k, std::size_t heads);

}  // namespace c2pc::dm
