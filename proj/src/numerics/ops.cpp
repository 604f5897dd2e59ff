// SPDX-License-Identifier: Apache-2.0
#include "cds/numerics/ops.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <string>

#include "cds/numerics/kernels.hpp"

namespace cds::ops {

namespace {

template <typename T>
[[noreturn]] void shape_fail(const char* op, const Var<T>& a, const Var<T>& b) {
  throw ShapeError(std::string(op) + ": incompatible shapes " + shape_str(a.shape()) +
                   " and " + shape_str(b.shape()));
}

template <typename T>
void require_matrix(const char* op, const Var<T>& a) {
  if (a.value().rank() > 2) {
    throw ShapeError(std::string(op) + ": expected a matrix, got " + shape_str(a.shape()));
  }
}

template <typename T>
Shape mat_shape(const Var<T>& a) {
  return {a.rows(), a.cols()};
}

// Runs `f(grad_of_parent)` if the parent participates in differentiation.
template <typename T, typename F>
void with_grad(Tape<T>& tape, std::size_t parent, F&& f) {
  if (tape.requires_grad(parent)) f(tape.grad_acc(parent));
}

template <typename T, typename F>
Var<T> unary(const char* op, Var<T> a, F&& forward,
             typename Tape<T>::BackwardFn backward) {
  Tensor<T> out(mat_shape(a));
  const auto& x = a.value();
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = forward(x[i]);
  return a.tape().record(op, std::move(out), {a.id()}, std::move(backward));
}

}  // namespace

template <typename T>
Var<T> add(Var<T> a, Var<T> b) {
  const bool same = a.rows() == b.rows() && a.cols() == b.cols();
  const bool bcast = !same && b.rows() == 1 && b.cols() == a.cols();
  if (!same && !bcast) shape_fail("add", a, b);
  Tensor<T> out(mat_shape(a));
  const std::size_t n = a.cols();
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = a.value()[i] + (same ? b.value()[i] : b.value()[i % n]);
  }
  const auto ia = a.id(), ib = b.id();
  return a.tape().record("add", std::move(out), {ia, ib},
                         [ia, ib, same, n](Tape<T>& t, std::size_t self) {
                           const auto& g = t.grad(self);
                           with_grad(t, ia, [&](Tensor<T>& ga) {
                             for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
                           });
                           with_grad(t, ib, [&](Tensor<T>& gb) {
                             for (std::size_t i = 0; i < g.size(); ++i) {
                               gb[same ? i : i % n] += g[i];
                             }
                           });
                         });
}

template <typename T>
Var<T> sub(Var<T> a, Var<T> b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) shape_fail("sub", a, b);
  Tensor<T> out(mat_shape(a));
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] - b.value()[i];
  const auto ia = a.id(), ib = b.id();
  return a.tape().record("sub", std::move(out), {ia, ib},
                         [ia, ib](Tape<T>& t, std::size_t self) {
                           const auto& g = t.grad(self);
                           with_grad(t, ia, [&](Tensor<T>& ga) {
                             for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
                           });
                           with_grad(t, ib, [&](Tensor<T>& gb) {
                             for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
                           });
                         });
}

template <typename T>
Var<T> mul(Var<T> a, Var<T> b) {
  const bool same = a.rows() == b.rows() && a.cols() == b.cols();
  const bool bcast = !same && b.cols() == 1 && b.rows() == a.rows();
  if (!same && !bcast) shape_fail("mul", a, b);
  const std::size_t n = a.cols();
  auto bidx = [same, n](std::size_t i) { return same ? i : i / n; };
  Tensor<T> out(mat_shape(a));
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] * b.value()[bidx(i)];
  const auto ia = a.id(), ib = b.id();
  return a.tape().record("mul", std::move(out), {ia, ib},
                         [ia, ib, bidx](Tape<T>& t, std::size_t self) {
                           const auto& g = t.grad(self);
                           const auto& av = t.value(ia);
                           const auto& bv = t.value(ib);
                           with_grad(t, ia, [&](Tensor<T>& ga) {
                             for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[bidx(i)];
                           });
                           with_grad(t, ib, [&](Tensor<T>& gb) {
                             for (std::size_t i = 0; i < g.size(); ++i) gb[bidx(i)] += g[i] * av[i];
                           });
                         });
}

template <typename T>
Var<T> scale(Var<T> a, T factor) {
  return affine(a, factor, T(0));
}

template <typename T>
Var<T> affine(Var<T> a, T factor, T offset) {
  const auto ia = a.id();
  return unary<T>("scale", a, [=](T x) { return factor * x + offset; },
                  [ia, factor](Tape<T>& t, std::size_t self) {
                    const auto& g = t.grad(self);
                    with_grad(t, ia, [&](Tensor<T>& ga) {
                      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += factor * g[i];
                    });
                  });
}

template <typename T>
Var<T> matmul(Var<T> a, Var<T> b) {
  require_matrix("matmul", a);
  require_matrix("matmul", b);
  if (a.cols() != b.rows()) shape_fail("matmul", a, b);
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  Tensor<T> out = Tensor<T>::matrix(m, n);
  kernels::gemm<T>(a.value().data(), b.value().data(), out.data(), m, k, n, false,
                   false, false);
  const auto ia = a.id(), ib = b.id();
  return a.tape().record("matmul", std::move(out), {ia, ib},
                         [ia, ib, m, k, n](Tape<T>& t, std::size_t self) {
                           const auto& g = t.grad(self);
                           with_grad(t, ia, [&](Tensor<T>& ga) {
                             kernels::gemm<T>(g.data(), t.value(ib).data(), ga.data(), m, n,
                                              k, false, true, true);
                           });
                           with_grad(t, ib, [&](Tensor<T>& gb) {
                             kernels::gemm<T>(t.value(ia).data(), g.data(), gb.data(), k, m,
                                              n, true, false, true);
                           });
                         });
}

template <typename T>
Var<T> transpose(Var<T> a) {
  require_matrix("transpose", a);
  const std::size_t m = a.rows(), n = a.cols();
  Tensor<T> out = Tensor<T>::matrix(n, m);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) out(j, i) = a.value()(i, j);
  }
  const auto ia = a.id();
  return a.tape().record("transpose", std::move(out), {ia},
                         [ia, m, n](Tape<T>& t, std::size_t self) {
                           const auto& g = t.grad(self);
                           with_grad(t, ia, [&](Tensor<T>& ga) {
                             for (std::size_t i = 0; i < m; ++i) {
                               for (std::size_t j = 0; j < n; ++j) ga(i, j) += g(j, i);
                             }
                           });
                         });
}

template <typename T>
Var<T> concat(const std::vector<Var<T>>& parts) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  const std::size_t m = parts[0].rows();
  std::size_t total = 0;
  std::vector<std::size_t> ids, offs, widths;
  for (const auto& p : parts) {
    if (p.rows() != m) shape_fail("concat", parts[0], p);
    ids.push_back(p.id());
    offs.push_back(total);
    widths.push_back(p.cols());
    total += p.cols();
  }
  Tensor<T> out = Tensor<T>::matrix(m, total);
  for (std::size_t q = 0; q < parts.size(); ++q) {
    const auto& v = parts[q].value();
    for (std::size_t r = 0; r < m; ++r) {
      std::copy(v.row(r).begin(), v.row(r).end(), out.row(r).begin() + offs[q]);
    }
  }
  return parts[0].tape().record(
      "concat", std::move(out), ids,
      [ids, offs, widths, m, total](Tape<T>& t, std::size_t self) {
        const auto& g = t.grad(self);
        for (std::size_t q = 0; q < ids.size(); ++q) {
          with_grad(t, ids[q], [&](Tensor<T>& gq) {
            for (std::size_t r = 0; r < m; ++r) {
              for (std::size_t c = 0; c < widths[q]; ++c) {
                gq[r * widths[q] + c] += g[r * total + offs[q] + c];
              }
            }
          });
        }
      });
}

template <typename T>
Var<T> gather_rows(Var<T> table, std::span<const int> index) {
  require_matrix("gather_rows", table);
  const std::size_t n = table.cols();
  const auto rows = static_cast<int>(table.rows());
  std::vector<int> idx(index.begin(), index.end());
  Tensor<T> out = Tensor<T>::matrix(idx.size(), n);
  for (std::size_t r = 0; r < idx.size(); ++r) {
    if (idx[r] < 0 || idx[r] >= rows) {
      throw ShapeError("gather_rows: index " + std::to_string(idx[r]) +
                       " out of range for table " + shape_str(table.shape()));
    }
    const auto src = table.value().row(static_cast<std::size_t>(idx[r]));
    std::copy(src.begin(), src.end(), out.row(r).begin());
  }
  const auto it = table.id();
  return table.tape().record("gather_rows", std::move(out), {it},
                             [it, idx, n](Tape<T>& t, std::size_t self) {
                               const auto& g = t.grad(self);
                               with_grad(t, it, [&](Tensor<T>& gt) {
                                 for (std::size_t r = 0; r < idx.size(); ++r) {
                                   const auto dst = static_cast<std::size_t>(idx[r]) * n;
                                   for (std::size_t c = 0; c < n; ++c) gt[dst + c] += g[r * n + c];
                                 }
                               });
                             });
}

template <typename T>
Var<T> pick(Var<T> a, std::span<const int> cols) {
  require_matrix("pick", a);
  if (cols.size() != a.rows()) {
    throw ShapeError("pick: " + std::to_string(cols.size()) + " indices for " +
                     shape_str(a.shape()));
  }
  const std::size_t n = a.cols();
  std::vector<int> idx(cols.begin(), cols.end());
  Tensor<T> out = Tensor<T>::matrix(idx.size(), 1);
  for (std::size_t r = 0; r < idx.size(); ++r) {
    if (idx[r] < 0 || static_cast<std::size_t>(idx[r]) >= n) {
      throw ShapeError("pick: column " + std::to_string(idx[r]) + " out of range for " +
                       shape_str(a.shape()));
    }
    out[r] = a.value()(r, static_cast<std::size_t>(idx[r]));
  }
  const auto ia = a.id();
  return a.tape().record("pick", std::move(out), {ia}, [ia, idx, n](Tape<T>& t, std::size_t self) {
    const auto& g = t.grad(self);
    with_grad(t, ia, [&](Tensor<T>& ga) {
      for (std::size_t r = 0; r < idx.size(); ++r) ga[r * n + static_cast<std::size_t>(idx[r])] += g[r];
    });
  });
}

template <typename T>
Var<T> tanh(Var<T> a) {
  const auto ia = a.id();
  return unary<T>("tanh", a, [](T x) { return std::tanh(x); },
                  [ia](Tape<T>& t, std::size_t self) {
                    const auto& g = t.grad(self);
                    const auto& y = t.value(self);
                    with_grad(t, ia, [&](Tensor<T>& ga) {
                      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * (T(1) - y[i] * y[i]);
                    });
                  });
}

template <typename T>
Var<T> sigmoid(Var<T> a) {
  const auto ia = a.id();
  return unary<T>("sigmoid", a,
                  [](T x) {
                    return x >= 0 ? T(1) / (T(1) + std::exp(-x))
                                  : std::exp(x) / (T(1) + std::exp(x));
                  },
                  [ia](Tape<T>& t, std::size_t self) {
                    const auto& g = t.grad(self);
                    const auto& y = t.value(self);
                    with_grad(t, ia, [&](Tensor<T>& ga) {
                      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * y[i] * (T(1) - y[i]);
                    });
                  });
}

template <typename T>
Var<T> log(Var<T> a, T floor) {
  const auto ia = a.id();
  return unary<T>("log", a, [floor](T x) { return std::log(std::max(x, floor)); },
                  [ia, floor](Tape<T>& t, std::size_t self) {
                    const auto& g = t.grad(self);
                    const auto& x = t.value(ia);
                    with_grad(t, ia, [&](Tensor<T>& ga) {
                      for (std::size_t i = 0; i < g.size(); ++i) {
                        if (x[i] > floor) ga[i] += g[i] / x[i];
                      }
                    });
                  });
}

template <typename T>
Var<T> clamp(Var<T> a, T lo, T hi) {
  const auto ia = a.id();
  return unary<T>("clamp", a, [lo, hi](T x) { return std::clamp(x, lo, hi); },
                  [ia, lo, hi](Tape<T>& t, std::size_t self) {
                    const auto& g = t.grad(self);
                    const auto& x = t.value(ia);
                    with_grad(t, ia, [&](Tensor<T>& ga) {
                      for (std::size_t i = 0; i < g.size(); ++i) {
                        if (x[i] > lo && x[i] < hi) ga[i] += g[i];
                      }
                    });
                  });
}

template <typename T>
Var<T> softmax(Var<T> a, T tau) {
  require_matrix("softmax", a);
  if (!(tau > T(0))) {
    throw ConfigError("softmax: temperature must be positive, got " + std::to_string(tau));
  }
  const std::size_t m = a.rows(), n = a.cols();
  const T inv_tau = T(1) / tau;
  Tensor<T> out = Tensor<T>::matrix(m, n);
  kernels::row_softmax<T>(a.value().data(), out.data(), m, n, inv_tau);
  const auto ia = a.id();
  return a.tape().record("softmax", std::move(out), {ia},
                         [ia, m, n, inv_tau](Tape<T>& t, std::size_t self) {
                           with_grad(t, ia, [&](Tensor<T>& ga) {
                             kernels::row_softmax_backward<T>(t.value(self).data(),
                                                              t.grad(self).data(), ga.data(), m,
                                                              n, inv_tau);
                           });
                         });
}

template <typename T>
Var<T> l2_normalize(Var<T> a, T floor) {
  require_matrix("l2_normalize", a);
  const std::size_t m = a.rows(), n = a.cols();
  Tensor<T> out = Tensor<T>::matrix(m, n);
  auto norms = std::make_shared<std::vector<T>>(m);
  if (!kernels::row_l2_normalize<T>(a.value().data(), out.data(), *norms, m, n, floor)) {
    throw NumericError("l2_normalize: row norm below floor (degenerate representation)");
  }
  const auto ia = a.id();
  return a.tape().record("l2_normalize", std::move(out), {ia},
                         [ia, m, n, norms](Tape<T>& t, std::size_t self) {
                           with_grad(t, ia, [&](Tensor<T>& ga) {
                             kernels::row_l2_normalize_backward<T>(
                                 t.value(self).data(), *norms, t.grad(self).data(), ga.data(),
                                 m, n);
                           });
                         });
}

template <typename T>
Var<T> mean(Var<T> a) {
  const auto& x = a.value();
  T s = 0;
  for (T v : x.data()) s += v;
  const T inv = T(1) / static_cast<T>(x.size());
  const auto ia = a.id();
  return a.tape().record("mean", Tensor<T>::matrix(1, 1, s * inv), {ia},
                         [ia, inv](Tape<T>& t, std::size_t self) {
                           const T g = t.grad(self)[0];
                           with_grad(t, ia, [&](Tensor<T>& ga) {
                             for (auto& v : ga.data()) v += g * inv;
                           });
                         });
}

template <typename T>
Var<T> sum(Var<T> a) {
  T s = 0;
  for (T v : a.value().data()) s += v;
  const auto ia = a.id();
  return a.tape().record("sum", Tensor<T>::matrix(1, 1, s), {ia},
                         [ia](Tape<T>& t, std::size_t self) {
                           const T g = t.grad(self)[0];
                           with_grad(t, ia, [&](Tensor<T>& ga) {
                             for (auto& v : ga.data()) v += g;
                           });
                         });
}

template <typename T>
Var<T> mse(Var<T> a, Var<T> b) {
  if (a.value().size() != b.value().size()) shape_fail("mse", a, b);
  const auto& x = a.value();
  const auto& y = b.value();
  T s = 0;
  for (std::size_t i = 0; i < x.size(); ++i) s += (x[i] - y[i]) * (x[i] - y[i]);
  const T inv = T(1) / static_cast<T>(x.size());
  const auto ia = a.id(), ib = b.id();
  return a.tape().record("mse", Tensor<T>::matrix(1, 1, s * inv), {ia, ib},
                         [ia, ib, inv](Tape<T>& t, std::size_t self) {
                           const T g = t.grad(self)[0];
                           const auto& x = t.value(ia);
                           const auto& y = t.value(ib);
                           with_grad(t, ia, [&](Tensor<T>& ga) {
                             for (std::size_t i = 0; i < x.size(); ++i) ga[i] += g * 2 * inv * (x[i] - y[i]);
                           });
                           with_grad(t, ib, [&](Tensor<T>& gb) {
                             for (std::size_t i = 0; i < x.size(); ++i) gb[i] -= g * 2 * inv * (x[i] - y[i]);
                           });
                         });
}

template <typename T>
Var<T> mhsa(Var<T> x, Var<T> wq, Var<T> wk, Var<T> wv, Var<T> wo, std::size_t seq,
            std::size_t heads) {
  const std::size_t d = x.cols();
  if (heads == 0 || d % heads != 0) {
    throw ConfigError("mhsa: width " + std::to_string(d) + " not divisible by " +
                      std::to_string(heads) + " heads");
  }
  if (seq == 0 || x.rows() % seq != 0) {
    throw ShapeError("mhsa: " + std::to_string(x.rows()) + " rows is not a multiple of seq " +
                     std::to_string(seq));
  }
  for (const auto* w : {&wq, &wk, &wv, &wo}) {
    if (w->rows() != d || w->cols() != d) shape_fail("mhsa", x, *w);
  }
  const kernels::AttentionDims dims{x.rows() / seq, seq, d, heads};
  auto cache = std::make_shared<kernels::AttentionCache<T>>();
  Tensor<T> out = Tensor<T>::matrix(x.rows(), d);
  const kernels::AttentionWeights<T> w{wq.value().data(), wk.value().data(),
                                       wv.value().data(), wo.value().data()};
  kernels::mhsa_forward<T>(x.value().data(), w, dims, out.data(), *cache);
  const std::size_t ix = x.id(), iq = wq.id(), ik = wk.id(), iv = wv.id(), io = wo.id();
  return x.tape().record(
      "mhsa", std::move(out), {ix, iq, ik, iv, io},
      [=](Tape<T>& t, std::size_t self) {
        // Scratch buffers for inputs that do not need gradients.
        Tensor<T> sx, sq, sk, sv, so;
        auto target = [&t](std::size_t id, Tensor<T>& scratch) -> std::span<T> {
          if (t.requires_grad(id)) return t.grad_acc(id).data();
          scratch = Tensor<T>(t.value(id).shape(), T(0));
          return scratch.data();
        };
        const kernels::AttentionWeights<T> wv_{t.value(iq).data(), t.value(ik).data(),
                                               t.value(iv).data(), t.value(io).data()};
        const kernels::AttentionGrads<T> grads{target(iq, sq), target(ik, sk), target(iv, sv),
                                               target(io, so)};
        kernels::mhsa_backward<T>(t.value(ix).data(), wv_, dims, *cache, t.grad(self).data(),
                                  target(ix, sx), grads);
      });
}

#define CDS_INSTANTIATE_OPS(T)                                                     \
  template Var<T> add<T>(Var<T>, Var<T>);                                          \
  template Var<T> sub<T>(Var<T>, Var<T>);                                          \
  template Var<T> mul<T>(Var<T>, Var<T>);                                          \
  template Var<T> scale<T>(Var<T>, T);                                             \
  template Var<T> affine<T>(Var<T>, T, T);                                         \
  template Var<T> matmul<T>(Var<T>, Var<T>);                                       \
  template Var<T> transpose<T>(Var<T>);                                            \
  template Var<T> concat<T>(const std::vector<Var<T>>&);                           \
  template Var<T> gather_rows<T>(Var<T>, std::span<const int>);                    \
  template Var<T> pick<T>(Var<T>, std::span<const int>);                           \
  template Var<T> tanh<T>(Var<T>);                                                 \
  template Var<T> sigmoid<T>(Var<T>);                                              \
  template Var<T> log<T>(Var<T>, T);                                               \
  template Var<T> clamp<T>(Var<T>, T, T);                                          \
  template Var<T> softmax<T>(Var<T>, T);                                           \
  template Var<T> l2_normalize<T>(Var<T>, T);                                      \
  template Var<T> mean<T>(Var<T>);                                                 \
  template Var<T> sum<T>(Var<T>);                                                  \
  template Var<T> mse<T>(Var<T>, Var<T>);                                          \
  template Var<T> mhsa<T>(Var<T>, Var<T>, Var<T>, Var<T>, Var<T>, std::size_t,     \
                          std::size_t);

CDS_INSTANTIATE_OPS(float)
CDS_INSTANTIATE_OPS(double)

#undef CDS_INSTANTIATE_OPS

}  // namespace cds::ops
