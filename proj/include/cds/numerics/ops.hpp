// SPDX-License-Identifier: Apache-2.0
//
// Differentiable ops on rank-2 tensors. Each op records its value and a
// backward rule on the tape of its first argument. Shape errors name the op and
// the offending shapes.
#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "cds/numerics/autodiff.hpp"

namespace cds::ops {

// a + b. `b` may also be a single row (1 x n) broadcast over the rows of `a`.
template <typename T>
Var<T> add(Var<T> a, Var<T> b);

template <typename T>
Var<T> sub(Var<T> a, Var<T> b);

// Elementwise product; `b` may be a single column (m x 1) broadcast over cols.
template <typename T>
Var<T> mul(Var<T> a, Var<T> b);

template <typename T>
Var<T> scale(Var<T> a, T factor);

// factor * a + offset.
template <typename T>
Var<T> affine(Var<T> a, T factor, T offset);

template <typename T>
Var<T> matmul(Var<T> a, Var<T> b);

template <typename T>
Var<T> transpose(Var<T> a);

// Concatenates along columns; all inputs must share the row count.
template <typename T>
Var<T> concat(const std::vector<Var<T>>& parts);

// Rows of `table` at `index` (embedding lookup); backward scatter-adds.
template <typename T>
Var<T> gather_rows(Var<T> table, std::span<const int> index);

// out(r, 0) = a(r, cols[r]).
template <typename T>
Var<T> pick(Var<T> a, std::span<const int> cols);

template <typename T>
Var<T> tanh(Var<T> a);

template <typename T>
Var<T> sigmoid(Var<T> a);

// log(max(a, floor)); zero gradient where the floor is active.
template <typename T>
Var<T> log(Var<T> a, T floor);

// clamp(a, lo, hi); zero gradient where clamped.
template <typename T>
Var<T> clamp(Var<T> a, T lo, T hi);

// Row-wise softmax(a / tau). Throws ConfigError unless tau > 0.
template <typename T>
Var<T> softmax(Var<T> a, T tau);

// Row-wise a / ||a||. Throws NumericError if a row norm is <= floor.
template <typename T>
Var<T> l2_normalize(Var<T> a, T floor = T(1e-12));

// Mean over all entries (1 x 1).
template <typename T>
Var<T> mean(Var<T> a);

// Sum over all entries (1 x 1).
template <typename T>
Var<T> sum(Var<T> a);

// Mean squared difference (1 x 1).
template <typename T>
Var<T> mse(Var<T> a, Var<T> b);

// Batched one-layer multi-head self-attention with residual:
// out = x + concat_h(softmax(Q_h K_h^T / sqrt(d_h)) V_h) Wo, over x stacked as
// (batch * seq) x dim. Throws ConfigError unless dim % heads == 0.
template <typename T>
Var<T> mhsa(Var<T> x, Var<T> wq, Var<T> wk, Var<T> wv, Var<T> wo,
            std::size_t seq, std::size_t heads);

}  // namespace cds::ops
