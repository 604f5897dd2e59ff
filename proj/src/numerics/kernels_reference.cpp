// SPDX-License-Identifier: Apache-2.0
// Serial reference kernels. Deliberately naive: these are the oracles the
// parallel kernels are tested against, so they share no code with them.
#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "cds/numerics/kernels.hpp"

namespace cds::kernels::reference {

template <typename T>
void gemm(std::span<const T> a, std::span<const T> b, std::span<T> c,
          std::size_t m, std::size_t k, std::size_t n, bool trans_a,
          bool trans_b, bool accumulate) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      T acc = accumulate ? c[i * n + j] : T(0);
      for (std::size_t p = 0; p < k; ++p) {
        const T av = trans_a ? a[p * m + i] : a[i * k + p];
        const T bv = trans_b ? b[j * k + p] : b[p * n + j];
        acc += av * bv;
      }
      c[i * n + j] = acc;
    }
  }
}

template <typename T>
void row_softmax(std::span<const T> x, std::span<T> y, std::size_t rows,
                 std::size_t cols, T inv_tau) {
  for (std::size_t r = 0; r < rows; ++r) {
    T mx = -std::numeric_limits<T>::infinity();
    for (std::size_t j = 0; j < cols; ++j) mx = std::max(mx, x[r * cols + j] * inv_tau);
    T sum = 0;
    for (std::size_t j = 0; j < cols; ++j) sum += std::exp(x[r * cols + j] * inv_tau - mx);
    for (std::size_t j = 0; j < cols; ++j) {
      y[r * cols + j] = std::exp(x[r * cols + j] * inv_tau - mx) / sum;
    }
  }
}

template <typename T>
bool row_l2_normalize(std::span<const T> x, std::span<T> y, std::span<T> norms,
                      std::size_t rows, std::size_t cols, T floor) {
  bool ok = true;
  for (std::size_t r = 0; r < rows; ++r) {
    T ss = 0;
    for (std::size_t j = 0; j < cols; ++j) ss += x[r * cols + j] * x[r * cols + j];
    norms[r] = std::sqrt(ss);
    if (!(norms[r] > floor)) {
      ok = false;
      continue;
    }
    for (std::size_t j = 0; j < cols; ++j) y[r * cols + j] = x[r * cols + j] / norms[r];
  }
  return ok;
}

template <typename T>
void mhsa_forward(std::span<const T> x, const AttentionWeights<T>& w,
                  const AttentionDims& dims, std::span<T> out) {
  const std::size_t S = dims.seq, d = dims.dim, H = dims.heads, dh = dims.head_dim();
  for (std::size_t b = 0; b < dims.batch; ++b) {
    const T* X = x.data() + b * S * d;
    auto proj = [&](std::span<const T> W, std::size_t t, std::size_t col) {
      T acc = 0;
      for (std::size_t e = 0; e < d; ++e) acc += X[t * d + e] * W[e * d + col];
      return acc;
    };
    std::vector<T> context(S * d, T(0));
    for (std::size_t h = 0; h < H; ++h) {
      for (std::size_t i = 0; i < S; ++i) {
        std::vector<T> score(S);
        for (std::size_t j = 0; j < S; ++j) {
          T s = 0;
          for (std::size_t e = h * dh; e < (h + 1) * dh; ++e) {
            s += proj(w.wq, i, e) * proj(w.wk, j, e);
          }
          score[j] = s / std::sqrt(static_cast<T>(dh));
        }
        T mx = score[0];
        for (T s : score) mx = std::max(mx, s);
        T z = 0;
        for (T s : score) z += std::exp(s - mx);
        for (std::size_t e = h * dh; e < (h + 1) * dh; ++e) {
          T acc = 0;
          for (std::size_t j = 0; j < S; ++j) {
            acc += std::exp(score[j] - mx) / z * proj(w.wv, j, e);
          }
          context[i * d + e] = acc;
        }
      }
    }
    for (std::size_t i = 0; i < S; ++i) {
      for (std::size_t c = 0; c < d; ++c) {
        T acc = X[i * d + c];
        for (std::size_t e = 0; e < d; ++e) acc += context[i * d + e] * w.wo[e * d + c];
        out[b * S * d + i * d + c] = acc;
      }
    }
  }
}

template <typename T>
void nearest_centroid(std::span<const T> points, std::span<const T> centroids,
                      std::size_t n, std::size_t k, std::size_t dim,
                      std::span<int> assignment, std::span<T> sq_dist) {
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<T> dist(k, T(0));
    for (std::size_t c = 0; c < k; ++c) {
      for (std::size_t e = 0; e < dim; ++e) {
        const T diff = points[i * dim + e] - centroids[c * dim + e];
        dist[c] += diff * diff;
      }
    }
    std::size_t best = 0;
    for (std::size_t c = 1; c < k; ++c) {
      if (dist[c] < dist[best]) best = c;
    }
    assignment[i] = static_cast<int>(best);
    sq_dist[i] = dist[best];
  }
}

#define CDS_INSTANTIATE_REFERENCE(T)                                                  \
  template void gemm<T>(std::span<const T>, std::span<const T>, std::span<T>,        \
                        std::size_t, std::size_t, std::size_t, bool, bool, bool);    \
  template void row_softmax<T>(std::span<const T>, std::span<T>, std::size_t,        \
                               std::size_t, T);                                      \
  template bool row_l2_normalize<T>(std::span<const T>, std::span<T>, std::span<T>,  \
                                    std::size_t, std::size_t, T);                    \
  template void mhsa_forward<T>(std::span<const T>, const AttentionWeights<T>&,      \
                                const AttentionDims&, std::span<T>);                 \
  template void nearest_centroid<T>(std::span<const T>, std::span<const T>,          \
                                    std::size_t, std::size_t, std::size_t,           \
                                    std::span<int>, std::span<T>);

CDS_INSTANTIATE_REFERENCE(float)
CDS_INSTANTIATE_REFERENCE(double)

#undef CDS_INSTANTIATE_REFERENCE

}  // namespace cds::kernels::reference
