// SPDX-License-Identifier: Apache-2.0
//
// Dense kernels behind the autodiff ops. Every kernel in `cds::kernels` is
// OpenMP-parallel over independent output rows (or samples); each output
// element is still reduced serially in a fixed order, so results do not depend
// on the thread count. `cds::kernels::reference` holds plain serial loops used
// as test oracles and benchmark baselines.
#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace cds::kernels {

// Geometry of a batched multi-head self-attention call: `batch` sequences of
// `seq` tokens, model width `dim`, `heads` heads of width dim / heads.
struct AttentionDims {
  std::size_t batch = 0;
  std::size_t seq = 0;
  std::size_t dim = 0;
  std::size_t heads = 1;
  std::size_t head_dim() const { return dim / heads; }
};

// Intermediate tensors kept from the forward pass for the backward pass.
template <typename T>
struct AttentionCache {
  std::vector<T> q, k, v;  // (batch*seq) x dim projections
  std::vector<T> probs;    // batch x heads x seq x seq attention weights
  std::vector<T> context;  // (batch*seq) x dim concatenated head outputs
};

template <typename T>
struct AttentionWeights {
  std::span<const T> wq, wk, wv, wo;  // each dim x dim, row-major (x @ W)
};

template <typename T>
struct AttentionGrads {
  std::span<T> wq, wk, wv, wo;  // accumulated into
};

// C (m x n) = op(A) @ op(B), op(A) is m x k. With `accumulate`, C += result.
template <typename T>
void gemm(std::span<const T> a, std::span<const T> b, std::span<T> c,
          std::size_t m, std::size_t k, std::size_t n, bool trans_a,
          bool trans_b, bool accumulate);

// y = softmax(x * inv_tau) per row, with max subtraction.
template <typename T>
void row_softmax(std::span<const T> x, std::span<T> y, std::size_t rows,
                 std::size_t cols, T inv_tau);

template <typename T>
void row_softmax_backward(std::span<const T> y, std::span<const T> dy,
                          std::span<T> dx, std::size_t rows, std::size_t cols,
                          T inv_tau);

// y = x / ||x|| per row; returns false if any row norm is <= floor.
template <typename T>
bool row_l2_normalize(std::span<const T> x, std::span<T> y, std::span<T> norms,
                      std::size_t rows, std::size_t cols, T floor);

template <typename T>
void row_l2_normalize_backward(std::span<const T> y, std::span<const T> norms,
                               std::span<const T> dy, std::span<T> dx,
                               std::size_t rows, std::size_t cols);

// out = x + Attention(x) for each of dims.batch sequences.
template <typename T>
void mhsa_forward(std::span<const T> x, const AttentionWeights<T>& w,
                  const AttentionDims& dims, std::span<T> out,
                  AttentionCache<T>& cache);

// Accumulates into dx and the weight gradients.
template <typename T>
void mhsa_backward(std::span<const T> x, const AttentionWeights<T>& w,
                   const AttentionDims& dims, const AttentionCache<T>& cache,
                   std::span<const T> dout, std::span<T> dx,
                   const AttentionGrads<T>& grads);

// Index of the nearest centroid (squared Euclidean, ties -> lowest id) per
// point, and the squared distance to it.
template <typename T>
void nearest_centroid(std::span<const T> points, std::span<const T> centroids,
                      std::size_t n, std::size_t k, std::size_t dim,
                      std::span<int> assignment, std::span<T> sq_dist);

namespace reference {

template <typename T>
void gemm(std::span<const T> a, std::span<const T> b, std::span<T> c,
          std::size_t m, std::size_t k, std::size_t n, bool trans_a,
          bool trans_b, bool accumulate);

template <typename T>
void row_softmax(std::span<const T> x, std::span<T> y, std::size_t rows,
                 std::size_t cols, T inv_tau);

template <typename T>
bool row_l2_normalize(std::span<const T> x, std::span<T> y, std::span<T> norms,
                      std::size_t rows, std::size_t cols, T floor);

// Dense loop attention with no shared helpers; returns out = x + attn(x).
template <typename T>
void mhsa_forward(std::span<const T> x, const AttentionWeights<T>& w,
                  const AttentionDims& dims, std::span<T> out);

template <typename T>
void nearest_centroid(std::span<const T> points, std::span<const T> centroids,
                      std::size_t n, std::size_t k, std::size_t dim,
                      std::span<int> assignment, std::span<T> sq_dist);

}  // namespace reference

// Number of OpenMP threads the parallel kernels will use (1 without OpenMP).
int max_threads();

}  // namespace cds::kernels
