// SPDX-License-Identifier: Apache-2.0
#include "cds/numerics/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace cds::kernels {

namespace {

// Below this many multiply-adds a parallel region costs more than it saves.
constexpr std::size_t kParallelWork = std::size_t{1} << 15;

inline bool go_parallel(std::size_t work) { return work >= kParallelWork; }

}  // namespace

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

template <typename T>
void gemm(std::span<const T> a, std::span<const T> b, std::span<T> c,
          std::size_t m, std::size_t k, std::size_t n, bool trans_a,
          bool trans_b, bool accumulate) {
  const T* A = a.data();
  const T* B = b.data();
  T* C = c.data();
  const auto rows = static_cast<std::ptrdiff_t>(m);
#pragma omp parallel for schedule(static) if (go_parallel(m * n * k))
  for (std::ptrdiff_t ii = 0; ii < rows; ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    T* crow = C + i * n;
    if (!accumulate) std::fill(crow, crow + n, T(0));
    if (!trans_b) {
      // Stream rows of B; each C(i,j) still sums over p in ascending order.
      for (std::size_t p = 0; p < k; ++p) {
        const T av = trans_a ? A[p * m + i] : A[i * k + p];
        const T* brow = B + p * n;
        for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
      }
    } else {
      for (std::size_t j = 0; j < n; ++j) {
        const T* bcol = B + j * k;
        T acc = crow[j];
        for (std::size_t p = 0; p < k; ++p) {
          const T av = trans_a ? A[p * m + i] : A[i * k + p];
          acc += av * bcol[p];
        }
        crow[j] = acc;
      }
    }
  }
}

template <typename T>
void row_softmax(std::span<const T> x, std::span<T> y, std::size_t rows,
                 std::size_t cols, T inv_tau) {
  const auto nrows = static_cast<std::ptrdiff_t>(rows);
#pragma omp parallel for schedule(static) if (go_parallel(rows * cols * 8))
  for (std::ptrdiff_t rr = 0; rr < nrows; ++rr) {
    const auto r = static_cast<std::size_t>(rr);
    const T* xr = x.data() + r * cols;
    T* yr = y.data() + r * cols;
    T mx = -std::numeric_limits<T>::infinity();
    for (std::size_t j = 0; j < cols; ++j) mx = std::max(mx, xr[j] * inv_tau);
    T sum = 0;
    for (std::size_t j = 0; j < cols; ++j) {
      yr[j] = std::exp(xr[j] * inv_tau - mx);
      sum += yr[j];
    }
    for (std::size_t j = 0; j < cols; ++j) yr[j] /= sum;
  }
}

template <typename T>
void row_softmax_backward(std::span<const T> y, std::span<const T> dy,
                          std::span<T> dx, std::size_t rows, std::size_t cols,
                          T inv_tau) {
  const auto nrows = static_cast<std::ptrdiff_t>(rows);
#pragma omp parallel for schedule(static) if (go_parallel(rows * cols * 4))
  for (std::ptrdiff_t rr = 0; rr < nrows; ++rr) {
    const auto r = static_cast<std::size_t>(rr);
    const T* yr = y.data() + r * cols;
    const T* gr = dy.data() + r * cols;
    T* dr = dx.data() + r * cols;
    T dot = 0;
    for (std::size_t j = 0; j < cols; ++j) dot += yr[j] * gr[j];
    for (std::size_t j = 0; j < cols; ++j) dr[j] += inv_tau * yr[j] * (gr[j] - dot);
  }
}

template <typename T>
bool row_l2_normalize(std::span<const T> x, std::span<T> y, std::span<T> norms,
                      std::size_t rows, std::size_t cols, T floor) {
  bool ok = true;
  const auto nrows = static_cast<std::ptrdiff_t>(rows);
#pragma omp parallel for schedule(static) reduction(&& : ok) if (go_parallel(rows * cols * 4))
  for (std::ptrdiff_t rr = 0; rr < nrows; ++rr) {
    const auto r = static_cast<std::size_t>(rr);
    const T* xr = x.data() + r * cols;
    T* yr = y.data() + r * cols;
    T ss = 0;
    for (std::size_t j = 0; j < cols; ++j) ss += xr[j] * xr[j];
    const T norm = std::sqrt(ss);
    norms[r] = norm;
    if (!(norm > floor)) {
      ok = false;
      continue;
    }
    for (std::size_t j = 0; j < cols; ++j) yr[j] = xr[j] / norm;
  }
  return ok;
}

template <typename T>
void row_l2_normalize_backward(std::span<const T> y, std::span<const T> norms,
                               std::span<const T> dy, std::span<T> dx,
                               std::size_t rows, std::size_t cols) {
  const auto nrows = static_cast<std::ptrdiff_t>(rows);
#pragma omp parallel for schedule(static) if (go_parallel(rows * cols * 4))
  for (std::ptrdiff_t rr = 0; rr < nrows; ++rr) {
    const auto r = static_cast<std::size_t>(rr);
    const T* yr = y.data() + r * cols;
    const T* gr = dy.data() + r * cols;
    T* dr = dx.data() + r * cols;
    T dot = 0;
    for (std::size_t j = 0; j < cols; ++j) dot += yr[j] * gr[j];
    for (std::size_t j = 0; j < cols; ++j) dr[j] += (gr[j] - yr[j] * dot) / norms[r];
  }
}

template <typename T>
void mhsa_forward(std::span<const T> x, const AttentionWeights<T>& w,
                  const AttentionDims& dims, std::span<T> out,
                  AttentionCache<T>& cache) {
  const std::size_t rows = dims.batch * dims.seq;
  const std::size_t d = dims.dim;
  const std::size_t S = dims.seq;
  const std::size_t H = dims.heads;
  const std::size_t dh = dims.head_dim();
  const T scale = T(1) / std::sqrt(static_cast<T>(dh));

  cache.q.assign(rows * d, T(0));
  cache.k.assign(rows * d, T(0));
  cache.v.assign(rows * d, T(0));
  cache.context.assign(rows * d, T(0));
  cache.probs.assign(dims.batch * H * S * S, T(0));
  gemm<T>(x, w.wq, cache.q, rows, d, d, false, false, false);
  gemm<T>(x, w.wk, cache.k, rows, d, d, false, false, false);
  gemm<T>(x, w.wv, cache.v, rows, d, d, false, false, false);

  const auto nbatch = static_cast<std::ptrdiff_t>(dims.batch);
#pragma omp parallel for schedule(static) if (go_parallel(dims.batch * S * S * d * 2))
  for (std::ptrdiff_t bb = 0; bb < nbatch; ++bb) {
    const auto b = static_cast<std::size_t>(bb);
    const T* Q = cache.q.data() + b * S * d;
    const T* K = cache.k.data() + b * S * d;
    const T* V = cache.v.data() + b * S * d;
    T* C = cache.context.data() + b * S * d;
    for (std::size_t h = 0; h < H; ++h) {
      T* P = cache.probs.data() + ((b * H + h) * S) * S;
      const std::size_t off = h * dh;
      for (std::size_t i = 0; i < S; ++i) {
        T* prow = P + i * S;
        T mx = -std::numeric_limits<T>::infinity();
        for (std::size_t j = 0; j < S; ++j) {
          T s = 0;
          for (std::size_t e = 0; e < dh; ++e) s += Q[i * d + off + e] * K[j * d + off + e];
          prow[j] = s * scale;
          mx = std::max(mx, prow[j]);
        }
        T sum = 0;
        for (std::size_t j = 0; j < S; ++j) {
          prow[j] = std::exp(prow[j] - mx);
          sum += prow[j];
        }
        for (std::size_t j = 0; j < S; ++j) prow[j] /= sum;
        for (std::size_t e = 0; e < dh; ++e) {
          T acc = 0;
          for (std::size_t j = 0; j < S; ++j) acc += prow[j] * V[j * d + off + e];
          C[i * d + off + e] = acc;
        }
      }
    }
  }

  std::copy(x.begin(), x.begin() + static_cast<std::ptrdiff_t>(rows * d), out.begin());
  gemm<T>(cache.context, w.wo, out, rows, d, d, false, false, true);
}

template <typename T>
void mhsa_backward(std::span<const T> x, const AttentionWeights<T>& w,
                   const AttentionDims& dims, const AttentionCache<T>& cache,
                   std::span<const T> dout, std::span<T> dx,
                   const AttentionGrads<T>& grads) {
  const std::size_t rows = dims.batch * dims.seq;
  const std::size_t d = dims.dim;
  const std::size_t S = dims.seq;
  const std::size_t H = dims.heads;
  const std::size_t dh = dims.head_dim();
  const T scale = T(1) / std::sqrt(static_cast<T>(dh));

  std::vector<T> dctx(rows * d, T(0));
  std::vector<T> dq(rows * d, T(0)), dk(rows * d, T(0)), dv(rows * d, T(0));

  // Residual path.
  for (std::size_t i = 0; i < rows * d; ++i) dx[i] += dout[i];
  gemm<T>(dout, w.wo, dctx, rows, d, d, false, true, false);
  gemm<T>(cache.context, dout, grads.wo, d, rows, d, true, false, true);

  const auto nbatch = static_cast<std::ptrdiff_t>(dims.batch);
#pragma omp parallel for schedule(static) if (go_parallel(dims.batch * S * S * d * 4))
  for (std::ptrdiff_t bb = 0; bb < nbatch; ++bb) {
    const auto b = static_cast<std::size_t>(bb);
    const T* Q = cache.q.data() + b * S * d;
    const T* K = cache.k.data() + b * S * d;
    const T* V = cache.v.data() + b * S * d;
    const T* dC = dctx.data() + b * S * d;
    T* dQ = dq.data() + b * S * d;
    T* dK = dk.data() + b * S * d;
    T* dV = dv.data() + b * S * d;
    std::vector<T> dp(S * S);
    for (std::size_t h = 0; h < H; ++h) {
      const T* P = cache.probs.data() + ((b * H + h) * S) * S;
      const std::size_t off = h * dh;
      for (std::size_t i = 0; i < S; ++i) {
        for (std::size_t j = 0; j < S; ++j) {
          T s = 0;
          for (std::size_t e = 0; e < dh; ++e) s += dC[i * d + off + e] * V[j * d + off + e];
          dp[i * S + j] = s;
        }
      }
      for (std::size_t j = 0; j < S; ++j) {
        for (std::size_t e = 0; e < dh; ++e) {
          T acc = 0;
          for (std::size_t i = 0; i < S; ++i) acc += P[i * S + j] * dC[i * d + off + e];
          dV[j * d + off + e] = acc;
        }
      }
      // dp becomes the gradient w.r.t. the scaled scores.
      for (std::size_t i = 0; i < S; ++i) {
        T dot = 0;
        for (std::size_t j = 0; j < S; ++j) dot += dp[i * S + j] * P[i * S + j];
        for (std::size_t j = 0; j < S; ++j) {
          dp[i * S + j] = P[i * S + j] * (dp[i * S + j] - dot) * scale;
        }
      }
      for (std::size_t i = 0; i < S; ++i) {
        for (std::size_t e = 0; e < dh; ++e) {
          T acc = 0;
          for (std::size_t j = 0; j < S; ++j) acc += dp[i * S + j] * K[j * d + off + e];
          dQ[i * d + off + e] = acc;
        }
      }
      for (std::size_t j = 0; j < S; ++j) {
        for (std::size_t e = 0; e < dh; ++e) {
          T acc = 0;
          for (std::size_t i = 0; i < S; ++i) acc += dp[i * S + j] * Q[i * d + off + e];
          dK[j * d + off + e] = acc;
        }
      }
    }
  }

  const std::span<const T> cdq(dq), cdk(dk), cdv(dv);
  gemm<T>(x, cdq, grads.wq, d, rows, d, true, false, true);
  gemm<T>(x, cdk, grads.wk, d, rows, d, true, false, true);
  gemm<T>(x, cdv, grads.wv, d, rows, d, true, false, true);
  gemm<T>(cdq, w.wq, dx, rows, d, d, false, true, true);
  gemm<T>(cdk, w.wk, dx, rows, d, d, false, true, true);
  gemm<T>(cdv, w.wv, dx, rows, d, d, false, true, true);
}

template <typename T>
void nearest_centroid(std::span<const T> points, std::span<const T> centroids,
                      std::size_t n, std::size_t k, std::size_t dim,
                      std::span<int> assignment, std::span<T> sq_dist) {
  const auto npts = static_cast<std::ptrdiff_t>(n);
#pragma omp parallel for schedule(static) if (go_parallel(n * k * dim))
  for (std::ptrdiff_t ii = 0; ii < npts; ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    const T* p = points.data() + i * dim;
    int best = 0;
    T best_d = std::numeric_limits<T>::infinity();
    for (std::size_t c = 0; c < k; ++c) {
      const T* q = centroids.data() + c * dim;
      T acc = 0;
      for (std::size_t e = 0; e < dim; ++e) {
        const T diff = p[e] - q[e];
        acc += diff * diff;
      }
      if (acc < best_d) {
        best_d = acc;
        best = static_cast<int>(c);
      }
    }
    assignment[i] = best;
    sq_dist[i] = best_d;
  }
}

#define CDS_INSTANTIATE_KERNELS(T)                                                    \
  template void gemm<T>(std::span<const T>, std::span<const T>, std::span<T>,        \
                        std::size_t, std::size_t, std::size_t, bool, bool, bool);    \
  template void row_softmax<T>(std::span<const T>, std::span<T>, std::size_t,        \
                               std::size_t, T);                                      \
  template void row_softmax_backward<T>(std::span<const T>, std::span<const T>,      \
                                        std::span<T>, std::size_t, std::size_t, T);  \
  template bool row_l2_normalize<T>(std::span<const T>, std::span<T>, std::span<T>,  \
                                    std::size_t, std::size_t, T);                    \
  template void row_l2_normalize_backward<T>(std::span<const T>, std::span<const T>, \
                                             std::span<const T>, std::span<T>,       \
                                             std::size_t, std::size_t);              \
  template void mhsa_forward<T>(std::span<const T>, const AttentionWeights<T>&,      \
                                const AttentionDims&, std::span<T>,                  \
                                AttentionCache<T>&);                                 \
  template void mhsa_backward<T>(std::span<const T>, const AttentionWeights<T>&,     \
                                 const AttentionDims&, const AttentionCache<T>&,     \
                                 std::span<const T>, std::span<T>,                   \
                                 const AttentionGrads<T>&);                          \
  template void nearest_centroid<T>(std::span<const T>, std::span<const T>,          \
                                    std::size_t, std::size_t, std::size_t,           \
                                    std::span<int>, std::span<T>);

CDS_INSTANTIATE_KERNELS(float)
CDS_INSTANTIATE_KERNELS(double)

#undef CDS_INSTANTIATE_KERNELS

}  // namespace cds::kernels
