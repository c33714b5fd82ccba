#include "pairnet/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace pairnet::ops {

namespace {

void accumulate(Tape& t, const Var& v, const Tensor& g, double scale = 1.0) {
  if (v.requires_grad()) t.grad_of(v.id()).add_scaled(g, scale);
}

std::size_t last_dim(const Tensor& t) {
  return t.rank() == 0 ? 1 : t.shape().back();
}

void require_rank(const Var& v, std::size_t rank, const char* what) {
  if (v.value().rank() != rank) {
    throw std::invalid_argument(std::string(what) + ": expected rank " +
                                std::to_string(rank) + ", got shape " +
                                shape_string(v.shape()));
  }
}

void require_same_shape(const Var& a, const Var& b, const char* what) {
  if (a.shape() != b.shape()) {
    throw std::invalid_argument(std::string(what) + ": shape mismatch " +
                                shape_string(a.shape()) + " vs " +
                                shape_string(b.shape()));
  }
}

double softplus(double z) {
  return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z)));
}

double logistic(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

void check_targets(std::span<const std::size_t> targets, std::size_t rows,
                   std::size_t classes, const char* what) {
  if (targets.size() != rows) {
    throw std::invalid_argument(std::string(what) + ": " +
                                std::to_string(targets.size()) +
                                " targets for " + std::to_string(rows) +
                                " rows");
  }
  for (auto t : targets) {
    if (t >= classes) {
      throw std::invalid_argument(std::string(what) + ": target " +
                                  std::to_string(t) + " out of range for " +
                                  std::to_string(classes) + " classes");
    }
  }
}

}  // namespace

Var add(Var a, Var b) {
  require_same_shape(a, b, "add");
  Tensor out = a.value();
  out.add_scaled(b.value());
  return a.tape().record(std::move(out), {a, b},
                         [a, b](Tape& t, const Tensor& g) {
                           accumulate(t, a, g);
                           accumulate(t, b, g);
                         });
}

Var sub(Var a, Var b) {
  require_same_shape(a, b, "sub");
  Tensor out = a.value();
  out.add_scaled(b.value(), -1.0);
  return a.tape().record(std::move(out), {a, b},
                         [a, b](Tape& t, const Tensor& g) {
                           accumulate(t, a, g);
                           accumulate(t, b, g, -1.0);
                         });
}

Var scale(Var x, double factor) {
  Tensor out = x.value();
  for (auto& v : out.values()) v *= factor;
  return x.tape().record(std::move(out), {x},
                         [x, factor](Tape& t, const Tensor& g) {
                           accumulate(t, x, g, factor);
                         });
}

Var add_row(Var x, Var row) {
  const std::size_t n = last_dim(x.value());
  require_shape(row.value(), {n}, "add_row");
  Tensor out = x.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += row.value()[i % n];
  return x.tape().record(std::move(out), {x, row},
                         [x, row, n](Tape& t, const Tensor& g) {
                           accumulate(t, x, g);
                           if (row.requires_grad()) {
                             auto& gr = t.grad_of(row.id());
                             for (std::size_t i = 0; i < g.size(); ++i) {
                               gr[i % n] += g[i];
                             }
                           }
                         });
}

Var mul_row(Var x, Var row) {
  const std::size_t n = last_dim(x.value());
  require_shape(row.value(), {n}, "mul_row");
  Tensor out = x.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= row.value()[i % n];
  return x.tape().record(
      std::move(out), {x, row}, [x, row, n](Tape& t, const Tensor& g) {
        const Tensor& xv = t.value_of(x.id());
        const Tensor& rv = t.value_of(row.id());
        if (x.requires_grad()) {
          auto& gx = t.grad_of(x.id());
          for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * rv[i % n];
        }
        if (row.requires_grad()) {
          auto& gr = t.grad_of(row.id());
          for (std::size_t i = 0; i < g.size(); ++i) gr[i % n] += g[i] * xv[i];
        }
      });
}

Var reshape(Var x, Shape shape) {
  Shape original = x.shape();
  Tensor out = x.value().reshaped(std::move(shape));
  return x.tape().record(std::move(out), {x},
                         [x, original](Tape& t, const Tensor& g) {
                           accumulate(t, x, g.reshaped(original));
                         });
}

namespace {

// c[n,m] += a[n,k] * b[k,m]
void gemm_nn(const double* a, const double* b, double* c, std::size_t n,
             std::size_t k, std::size_t m) {
  for (std::size_t i = 0; i < n; ++i) {
    double* crow = c + i * m;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a[i * k + p];
      if (av == 0.0) continue;
      const double* brow = b + p * m;
      for (std::size_t j = 0; j < m; ++j) crow[j] += av * brow[j];
    }
  }
}

// c[n,m] += a[n,k] * b[m,k]^T
void gemm_nt(const double* a, const double* b, double* c, std::size_t n,
             std::size_t k, std::size_t m) {
  for (std::size_t i = 0; i < n; ++i) {
    const double* arow = a + i * k;
    for (std::size_t j = 0; j < m; ++j) {
      const double* brow = b + j * k;
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) s += arow[p] * brow[p];
      c[i * m + j] += s;
    }
  }
}

// c[k,m] += a[n,k]^T * b[n,m]
void gemm_tn(const double* a, const double* b, double* c, std::size_t n,
             std::size_t k, std::size_t m) {
  for (std::size_t i = 0; i < n; ++i) {
    const double* brow = b + i * m;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a[i * k + p];
      if (av == 0.0) continue;
      double* crow = c + p * m;
      for (std::size_t j = 0; j < m; ++j) crow[j] += av * brow[j];
    }
  }
}

}  // namespace

Var matmul(Var a, Var b) {
  require_rank(a, 2, "matmul");
  require_rank(b, 2, "matmul");
  const std::size_t n = a.shape()[0], k = a.shape()[1], m = b.shape()[1];
  if (b.shape()[0] != k) {
    throw std::invalid_argument("matmul: inner extents differ " +
                                shape_string(a.shape()) + " x " +
                                shape_string(b.shape()));
  }
  Tensor out({n, m});
  gemm_nn(a.value().data(), b.value().data(), out.data(), n, k, m);
  return a.tape().record(
      std::move(out), {a, b}, [a, b, n, k, m](Tape& t, const Tensor& g) {
        if (a.requires_grad()) {
          gemm_nt(g.data(), t.value_of(b.id()).data(),
                  t.grad_of(a.id()).data(), n, m, k);
        }
        if (b.requires_grad()) {
          gemm_tn(t.value_of(a.id()).data(), g.data(),
                  t.grad_of(b.id()).data(), n, k, m);
        }
      });
}

Var matmul_nt(Var a, Var b) {
  require_rank(a, 2, "matmul_nt");
  require_rank(b, 2, "matmul_nt");
  const std::size_t n = a.shape()[0], k = a.shape()[1], m = b.shape()[0];
  if (b.shape()[1] != k) {
    throw std::invalid_argument("matmul_nt: inner extents differ " +
                                shape_string(a.shape()) + " x " +
                                shape_string(b.shape()) + "^T");
  }
  Tensor out({n, m});
  gemm_nt(a.value().data(), b.value().data(), out.data(), n, k, m);
  return a.tape().record(
      std::move(out), {a, b}, [a, b, n, k, m](Tape& t, const Tensor& g) {
        if (a.requires_grad()) {
          gemm_nn(g.data(), t.value_of(b.id()).data(),
                  t.grad_of(a.id()).data(), n, m, k);
        }
        if (b.requires_grad()) {
          gemm_tn(g.data(), t.value_of(a.id()).data(),
                  t.grad_of(b.id()).data(), n, m, k);
        }
      });
}

Var linear(Var input, Var weights, Var bias) {
  require_rank(weights, 2, "linear weights");
  const std::size_t out_dim = weights.shape()[0], in_dim = weights.shape()[1];
  require_shape(bias.value(), {out_dim}, "linear bias");
  const Tensor& x = input.value();
  if (x.rank() == 0 || x.shape().back() != in_dim) {
    throw std::invalid_argument("linear: input " + shape_string(x.shape()) +
                                " does not end in " + std::to_string(in_dim));
  }
  const std::size_t rows = x.size() / in_dim;
  Shape out_shape = x.shape();
  out_shape.back() = out_dim;
  Tensor out(out_shape);
  for (std::size_t r = 0; r < rows; ++r) {
    std::copy(bias.value().data(), bias.value().data() + out_dim,
              out.data() + r * out_dim);
  }
  gemm_nt(x.data(), weights.value().data(), out.data(), rows, in_dim, out_dim);
  return input.tape().record(
      std::move(out), {input, weights, bias},
      [input, weights, bias, rows, in_dim, out_dim](Tape& t, const Tensor& g) {
        if (input.requires_grad()) {
          gemm_nn(g.data(), t.value_of(weights.id()).data(),
                  t.grad_of(input.id()).data(), rows, out_dim, in_dim);
        }
        if (weights.requires_grad()) {
          gemm_tn(g.data(), t.value_of(input.id()).data(),
                  t.grad_of(weights.id()).data(), rows, out_dim, in_dim);
        }
        if (bias.requires_grad()) {
          auto& gb = t.grad_of(bias.id());
          for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t o = 0; o < out_dim; ++o) gb[o] += g[r * out_dim + o];
          }
        }
      });
}

namespace {

struct ConvGeometry {
  std::size_t c_in, c_out, h, w, k, pad;
};

// Calls fn(dst_offset, src_offset, count) for every (output row, shifted
// input row) overlap of one kernel tap.
template <typename Fn>
void for_each_tap_span(const ConvGeometry& geo, std::size_t ky, std::size_t kx,
                       Fn&& fn) {
  const long p = static_cast<long>(geo.pad);
  const long h = static_cast<long>(geo.h), w = static_cast<long>(geo.w);
  const long dy = static_cast<long>(ky) - p, dx = static_cast<long>(kx) - p;
  const long y0 = std::max(0L, -dy), y1 = std::min(h, h - dy);
  const long x0 = std::max(0L, -dx), x1 = std::min(w, w - dx);
  if (x1 <= x0) return;
  for (long y = y0; y < y1; ++y) {
    fn(static_cast<std::size_t>(y * w + x0),
       static_cast<std::size_t>((y + dy) * w + x0 + dx),
       static_cast<std::size_t>(x1 - x0));
  }
}

}  // namespace

Var conv2d(Var input, Var kernels, Var bias) {
  require_rank(input, 3, "conv2d input");
  require_rank(kernels, 4, "conv2d kernels");
  const auto& ks = kernels.shape();
  const auto& xs = input.shape();
  if (ks[2] != ks[3]) {
    throw std::invalid_argument("conv2d: kernels must be square, got " +
                                shape_string(ks));
  }
  if (ks[2] % 2 == 0) {
    throw std::invalid_argument("conv2d: kernel size must be odd, got " +
                                std::to_string(ks[2]));
  }
  if (ks[1] != xs[0]) {
    throw std::invalid_argument("conv2d: input channels " +
                                std::to_string(xs[0]) + " vs kernels " +
                                shape_string(ks));
  }
  require_shape(bias.value(), {ks[0]}, "conv2d bias");
  const ConvGeometry geo{xs[0], ks[0], xs[1], xs[2], ks[2], (ks[2] - 1) / 2};
  const std::size_t hw = geo.h * geo.w;

  Tensor out({geo.c_out, geo.h, geo.w});
  const double* x = input.value().data();
  const double* kv = kernels.value().data();
  for (std::size_t co = 0; co < geo.c_out; ++co) {
    double* dst = out.data() + co * hw;
    std::fill(dst, dst + hw, bias.value()[co]);
    for (std::size_t ci = 0; ci < geo.c_in; ++ci) {
      const double* src = x + ci * hw;
      const double* kern = kv + (co * geo.c_in + ci) * geo.k * geo.k;
      for (std::size_t ky = 0; ky < geo.k; ++ky) {
        for (std::size_t kx = 0; kx < geo.k; ++kx) {
          const double wv = kern[ky * geo.k + kx];
          if (wv == 0.0) continue;
          for_each_tap_span(geo, ky, kx,
                            [&](std::size_t d, std::size_t s, std::size_t n) {
                              double* o = dst + d;
                              const double* i = src + s;
                              for (std::size_t q = 0; q < n; ++q) o[q] += wv * i[q];
                            });
        }
      }
    }
  }

  return input.tape().record(
      std::move(out), {input, kernels, bias},
      [input, kernels, bias, geo, hw](Tape& t, const Tensor& g) {
        const double* xv = t.value_of(input.id()).data();
        const double* kv = t.value_of(kernels.id()).data();
        double* gx = input.requires_grad() ? t.grad_of(input.id()).data() : nullptr;
        double* gk =
            kernels.requires_grad() ? t.grad_of(kernels.id()).data() : nullptr;
        for (std::size_t co = 0; co < geo.c_out; ++co) {
          const double* gout = g.data() + co * hw;
          for (std::size_t ci = 0; ci < geo.c_in; ++ci) {
            const std::size_t kbase = (co * geo.c_in + ci) * geo.k * geo.k;
            for (std::size_t ky = 0; ky < geo.k; ++ky) {
              for (std::size_t kx = 0; kx < geo.k; ++kx) {
                const std::size_t kidx = kbase + ky * geo.k + kx;
                const double wv = kv[kidx];
                double acc = 0.0;
                for_each_tap_span(
                    geo, ky, kx, [&](std::size_t d, std::size_t s, std::size_t n) {
                      const double* go = gout + d;
                      if (gx != nullptr && wv != 0.0) {
                        double* gi = gx + ci * hw + s;
                        for (std::size_t q = 0; q < n; ++q) gi[q] += wv * go[q];
                      }
                      if (gk != nullptr) {
                        const double* xi = xv + ci * hw + s;
                        for (std::size_t q = 0; q < n; ++q) acc += go[q] * xi[q];
                      }
                    });
                if (gk != nullptr) gk[kidx] += acc;
              }
            }
          }
        }
        if (bias.requires_grad()) {
          auto& gb = t.grad_of(bias.id());
          for (std::size_t co = 0; co < geo.c_out; ++co) {
            double s = 0.0;
            for (std::size_t i = 0; i < hw; ++i) s += g[co * hw + i];
            gb[co] += s;
          }
        }
      });
}

Var relu(Var x) {
  Tensor out = x.value();
  for (auto& v : out.values()) v = v > 0.0 ? v : 0.0;
  return x.tape().record(std::move(out), {x}, [x](Tape& t, const Tensor& g) {
    const Tensor& xv = t.value_of(x.id());
    auto& gx = t.grad_of(x.id());
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (xv[i] > 0.0) gx[i] += g[i];
    }
  });
}

Var sigmoid(Var x) {
  Tensor out = x.value();
  for (auto& v : out.values()) v = logistic(v);
  auto y = std::make_shared<Tensor>(out);
  return x.tape().record(std::move(out), {x}, [x, y](Tape& t, const Tensor& g) {
    auto& gx = t.grad_of(x.id());
    for (std::size_t i = 0; i < g.size(); ++i) {
      gx[i] += g[i] * (*y)[i] * (1.0 - (*y)[i]);
    }
  });
}

Var softmax(Var x, std::size_t axis) {
  const auto& shape = x.shape();
  if (axis >= shape.size()) {
    throw std::invalid_argument("softmax: axis " + std::to_string(axis) +
                                " out of range for " + shape_string(shape));
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= shape[i];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) inner *= shape[i];
  const std::size_t n = shape[axis];

  Tensor out = x.value();
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t in = 0; in < inner; ++in) {
      const std::size_t base = o * n * inner + in;
      double m = -std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < n; ++j) m = std::max(m, out[base + j * inner]);
      double s = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        double& v = out[base + j * inner];
        v = std::exp(v - m);
        s += v;
      }
      for (std::size_t j = 0; j < n; ++j) out[base + j * inner] /= s;
    }
  }
  auto y = std::make_shared<Tensor>(out);
  return x.tape().record(
      std::move(out), {x}, [x, y, outer, inner, n](Tape& t, const Tensor& g) {
        auto& gx = t.grad_of(x.id());
        for (std::size_t o = 0; o < outer; ++o) {
          for (std::size_t in = 0; in < inner; ++in) {
            const std::size_t base = o * n * inner + in;
            double dot = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
              dot += g[base + j * inner] * (*y)[base + j * inner];
            }
            for (std::size_t j = 0; j < n; ++j) {
              const std::size_t idx = base + j * inner;
              gx[idx] += (*y)[idx] * (g[idx] - dot);
            }
          }
        }
      });
}

Var log_softmax(Var x) {
  const std::size_t n = last_dim(x.value());
  const std::size_t rows = x.value().size() / n;
  Tensor out = x.value();
  auto probs = std::make_shared<Tensor>(x.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    double* row = out.data() + r * n;
    const double m = *std::max_element(row, row + n);
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) s += std::exp(row[j] - m);
    const double lse = m + std::log(s);
    for (std::size_t j = 0; j < n; ++j) {
      row[j] -= lse;
      (*probs)[r * n + j] = std::exp(row[j]);
    }
  }
  return x.tape().record(std::move(out), {x},
                         [x, probs, rows, n](Tape& t, const Tensor& g) {
                           auto& gx = t.grad_of(x.id());
                           for (std::size_t r = 0; r < rows; ++r) {
                             double s = 0.0;
                             for (std::size_t j = 0; j < n; ++j) s += g[r * n + j];
                             for (std::size_t j = 0; j < n; ++j) {
                               gx[r * n + j] += g[r * n + j] - (*probs)[r * n + j] * s;
                             }
                           }
                         });
}

Var layer_norm(Var x, double eps) {
  const std::size_t n = last_dim(x.value());
  const std::size_t rows = x.value().size() / n;
  Tensor out = x.value();
  auto inv_std = std::make_shared<std::vector<double>>(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    double* row = out.data() + r * n;
    double mu = 0.0;
    for (std::size_t j = 0; j < n; ++j) mu += row[j];
    mu /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t j = 0; j < n; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= static_cast<double>(n);
    const double is = 1.0 / std::sqrt(var + eps);
    (*inv_std)[r] = is;
    for (std::size_t j = 0; j < n; ++j) row[j] = (row[j] - mu) * is;
  }
  auto y = std::make_shared<Tensor>(out);
  return x.tape().record(
      std::move(out), {x}, [x, y, inv_std, rows, n](Tape& t, const Tensor& g) {
        auto& gx = t.grad_of(x.id());
        const double inv_n = 1.0 / static_cast<double>(n);
        for (std::size_t r = 0; r < rows; ++r) {
          double gm = 0.0, gy = 0.0;
          for (std::size_t j = 0; j < n; ++j) {
            gm += g[r * n + j];
            gy += g[r * n + j] * (*y)[r * n + j];
          }
          gm *= inv_n;
          gy *= inv_n;
          for (std::size_t j = 0; j < n; ++j) {
            const std::size_t i = r * n + j;
            gx[i] += (*inv_std)[r] * (g[i] - gm - (*y)[i] * gy);
          }
        }
      });
}

Var cosine_matrix(Var a, Var b, double eps) {
  require_rank(a, 2, "cosine_matrix");
  require_rank(b, 2, "cosine_matrix");
  const std::size_t n = a.shape()[0], m = b.shape()[0], d = a.shape()[1];
  if (b.shape()[1] != d) {
    throw std::invalid_argument("cosine_matrix: embedding widths differ " +
                                shape_string(a.shape()) + " vs " +
                                shape_string(b.shape()));
  }
  auto norms = [d](const Tensor& t, std::size_t rows, double eps_) {
    std::vector<double> out(rows);
    std::vector<bool> clamped(rows);
    for (std::size_t i = 0; i < rows; ++i) {
      double s = 0.0;
      for (std::size_t k = 0; k < d; ++k) s += t[i * d + k] * t[i * d + k];
      const double nrm = std::sqrt(s);
      clamped[i] = nrm <= eps_;
      out[i] = clamped[i] ? eps_ : nrm;
    }
    return std::make_pair(out, clamped);
  };
  auto [na, ca] = norms(a.value(), n, eps);
  auto [nb, cb] = norms(b.value(), m, eps);
  Tensor out({n, m});
  gemm_nt(a.value().data(), b.value().data(), out.data(), n, d, m);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) out[i * m + j] /= na[i] * nb[j];
  }
  auto y = std::make_shared<Tensor>(out);
  return a.tape().record(
      std::move(out), {a, b},
      [a, b, y, n, m, d, na = std::move(na), nb = std::move(nb),
       ca = std::move(ca), cb = std::move(cb)](Tape& t, const Tensor& g) {
        const Tensor& av = t.value_of(a.id());
        const Tensor& bv = t.value_of(b.id());
        if (a.requires_grad()) {
          auto& ga = t.grad_of(a.id());
          for (std::size_t i = 0; i < n; ++i) {
            double radial = 0.0;
            for (std::size_t j = 0; j < m; ++j) {
              const double gij = g[i * m + j];
              if (gij == 0.0) continue;
              const double c = gij / (na[i] * nb[j]);
              for (std::size_t k = 0; k < d; ++k) ga[i * d + k] += c * bv[j * d + k];
              radial += gij * (*y)[i * m + j];
            }
            if (!ca[i]) {
              const double c = radial / (na[i] * na[i]);
              for (std::size_t k = 0; k < d; ++k) ga[i * d + k] -= c * av[i * d + k];
            }
          }
        }
        if (b.requires_grad()) {
          auto& gb = t.grad_of(b.id());
          for (std::size_t j = 0; j < m; ++j) {
            double radial = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
              const double gij = g[i * m + j];
              if (gij == 0.0) continue;
              const double c = gij / (na[i] * nb[j]);
              for (std::size_t k = 0; k < d; ++k) gb[j * d + k] += c * av[i * d + k];
              radial += gij * (*y)[i * m + j];
            }
            if (!cb[j]) {
              const double c = radial / (nb[j] * nb[j]);
              for (std::size_t k = 0; k < d; ++k) gb[j * d + k] -= c * bv[j * d + k];
            }
          }
        }
      });
}

Var gather_rows(Var x, std::span<const std::size_t> indices) {
  require_rank(x, 2, "gather_rows");
  const std::size_t rows = x.shape()[0], d = x.shape()[1];
  std::vector<std::size_t> idx(indices.begin(), indices.end());
  if (idx.empty()) throw std::invalid_argument("gather_rows: no indices");
  Tensor out({idx.size(), d});
  for (std::size_t t = 0; t < idx.size(); ++t) {
    if (idx[t] >= rows) {
      throw std::invalid_argument("gather_rows: index " + std::to_string(idx[t]) +
                                  " out of range for " + std::to_string(rows) +
                                  " rows");
    }
    std::copy_n(x.value().data() + idx[t] * d, d, out.data() + t * d);
  }
  return x.tape().record(std::move(out), {x},
                         [x, idx = std::move(idx), d](Tape& t, const Tensor& g) {
                           auto& gx = t.grad_of(x.id());
                           for (std::size_t r = 0; r < idx.size(); ++r) {
                             for (std::size_t k = 0; k < d; ++k) {
                               gx[idx[r] * d + k] += g[r * d + k];
                             }
                           }
                         });
}

Var concat_rows(Var a, Var b) {
  require_rank(a, 2, "concat_rows");
  require_rank(b, 2, "concat_rows");
  const std::size_t d = a.shape()[1];
  if (b.shape()[1] != d) {
    throw std::invalid_argument("concat_rows: widths differ " +
                                shape_string(a.shape()) + " vs " +
                                shape_string(b.shape()));
  }
  const std::size_t na = a.shape()[0], nb = b.shape()[0];
  Tensor out({na + nb, d});
  std::copy_n(a.value().data(), na * d, out.data());
  std::copy_n(b.value().data(), nb * d, out.data() + na * d);
  return a.tape().record(std::move(out), {a, b},
                         [a, b, na, nb, d](Tape& t, const Tensor& g) {
                           if (a.requires_grad()) {
                             auto& ga = t.grad_of(a.id());
                             for (std::size_t i = 0; i < na * d; ++i) ga[i] += g[i];
                           }
                           if (b.requires_grad()) {
                             auto& gb = t.grad_of(b.id());
                             for (std::size_t i = 0; i < nb * d; ++i) {
                               gb[i] += g[na * d + i];
                             }
                           }
                         });
}

Var slice_cols(Var x, std::size_t begin, std::size_t count) {
  require_rank(x, 2, "slice_cols");
  const std::size_t rows = x.shape()[0], cols = x.shape()[1];
  if (count == 0 || begin + count > cols) {
    throw std::invalid_argument("slice_cols: [" + std::to_string(begin) + ", " +
                                std::to_string(begin + count) +
                                ") out of range for " + shape_string(x.shape()));
  }
  Tensor out({rows, count});
  for (std::size_t r = 0; r < rows; ++r) {
    std::copy_n(x.value().data() + r * cols + begin, count, out.data() + r * count);
  }
  return x.tape().record(std::move(out), {x},
                         [x, rows, cols, begin, count](Tape& t, const Tensor& g) {
                           auto& gx = t.grad_of(x.id());
                           for (std::size_t r = 0; r < rows; ++r) {
                             for (std::size_t c = 0; c < count; ++c) {
                               gx[r * cols + begin + c] += g[r * count + c];
                             }
                           }
                         });
}

Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: no parts");
  const std::size_t rows = parts[0].shape().at(0);
  std::size_t cols = 0;
  for (const auto& p : parts) {
    require_rank(p, 2, "concat_cols");
    if (p.shape()[0] != rows) {
      throw std::invalid_argument("concat_cols: row counts differ");
    }
    cols += p.shape()[1];
  }
  Tensor out({rows, cols});
  std::size_t offset = 0;
  for (const auto& p : parts) {
    const std::size_t w = p.shape()[1];
    for (std::size_t r = 0; r < rows; ++r) {
      std::copy_n(p.value().data() + r * w, w, out.data() + r * cols + offset);
    }
    offset += w;
  }
  return parts[0].tape().record(
      std::move(out), parts, [parts, rows, cols](Tape& t, const Tensor& g) {
        std::size_t off = 0;
        for (const auto& p : parts) {
          const std::size_t w = p.shape()[1];
          if (p.requires_grad()) {
            auto& gp = t.grad_of(p.id());
            for (std::size_t r = 0; r < rows; ++r) {
              for (std::size_t c = 0; c < w; ++c) {
                gp[r * w + c] += g[r * cols + off + c];
              }
            }
          }
          off += w;
        }
      });
}

Var sum(Var x) {
  double s = 0.0;
  for (double v : x.value().values()) s += v;
  return x.tape().record(Tensor::scalar(s), {x}, [x](Tape& t, const Tensor& g) {
    auto& gx = t.grad_of(x.id());
    for (auto& v : gx.values()) v += g[0];
  });
}

Var mean(Var x) {
  return scale(sum(x), 1.0 / static_cast<double>(x.value().size()));
}

Var weighted_sum(const std::vector<Var>& terms,
                 std::span<const double> weights) {
  if (terms.empty() || terms.size() != weights.size()) {
    throw std::invalid_argument("weighted_sum: " + std::to_string(terms.size()) +
                                " terms, " + std::to_string(weights.size()) +
                                " weights");
  }
  double s = 0.0;
  for (std::size_t i = 0; i < terms.size(); ++i) {
    s += weights[i] * terms[i].value().item();
  }
  std::vector<double> w(weights.begin(), weights.end());
  return terms[0].tape().record(Tensor::scalar(s), terms,
                                [terms, w](Tape& t, const Tensor& g) {
                                  for (std::size_t i = 0; i < terms.size(); ++i) {
                                    if (terms[i].requires_grad()) {
                                      t.grad_of(terms[i].id())[0] += w[i] * g[0];
                                    }
                                  }
                                });
}

Var positive_weighted_bce(Var logits, const Tensor& targets,
                          double positive_weight) {
  require_shape(targets, logits.shape(), "positive_weighted_bce targets");
  const Tensor& x = logits.value();
  const double n = static_cast<double>(x.size());
  double total = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double y = targets[i];
    total += positive_weight * y * softplus(-x[i]) + (1.0 - y) * softplus(x[i]);
  }
  auto y = std::make_shared<Tensor>(targets);
  return logits.tape().record(
      Tensor::scalar(total / n), {logits},
      [logits, y, positive_weight, n](Tape& t, const Tensor& g) {
        const Tensor& xv = t.value_of(logits.id());
        auto& gx = t.grad_of(logits.id());
        for (std::size_t i = 0; i < xv.size(); ++i) {
          const double s = logistic(xv[i]);
          const double yi = (*y)[i];
          gx[i] += g[0] * (-positive_weight * yi * (1.0 - s) + (1.0 - yi) * s) / n;
        }
      });
}

Var weighted_softmax_cross_entropy(Var logits,
                                   std::span<const std::size_t> targets,
                                   const Tensor& denominator_weights) {
  require_rank(logits, 2, "cross_entropy logits");
  const std::size_t rows = logits.shape()[0], classes = logits.shape()[1];
  check_targets(targets, rows, classes, "cross_entropy");
  require_shape(denominator_weights, logits.shape(),
                "cross_entropy denominator weights");
  const Tensor& z = logits.value();
  // Per-entry w_j * exp(z_j) / sum, the gradient of each row's log-sum-exp.
  auto weighted_probs = std::make_shared<Tensor>(logits.shape());
  std::vector<std::size_t> tgt(targets.begin(), targets.end());
  double total = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    const double* zr = z.data() + r * classes;
    const double* wr = denominator_weights.data() + r * classes;
    double m = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < classes; ++j) {
      if (wr[j] > 0.0) m = std::max(m, zr[j]);
    }
    double s = 0.0;
    for (std::size_t j = 0; j < classes; ++j) {
      const double e = wr[j] > 0.0 ? wr[j] * std::exp(zr[j] - m) : 0.0;
      (*weighted_probs)[r * classes + j] = e;
      s += e;
    }
    for (std::size_t j = 0; j < classes; ++j) {
      (*weighted_probs)[r * classes + j] /= s;
    }
    total += m + std::log(s) - zr[tgt[r]];
  }
  const double inv_rows = 1.0 / static_cast<double>(rows);
  return logits.tape().record(
      Tensor::scalar(total * inv_rows), {logits},
      [logits, weighted_probs, tgt = std::move(tgt), rows, classes,
       inv_rows](Tape& t, const Tensor& g) {
        auto& gz = t.grad_of(logits.id());
        const double c = g[0] * inv_rows;
        for (std::size_t r = 0; r < rows; ++r) {
          for (std::size_t j = 0; j < classes; ++j) {
            gz[r * classes + j] += c * (*weighted_probs)[r * classes + j];
          }
          gz[r * classes + tgt[r]] -= c;
        }
      });
}

Var cross_entropy(Var logits, std::span<const std::size_t> targets) {
  return weighted_softmax_cross_entropy(logits, targets,
                                        Tensor(logits.shape(), 1.0));
}

Var focal_cross_entropy(Var logits, std::span<const std::size_t> targets,
                        double gamma) {
  require_rank(logits, 2, "focal logits");
  if (gamma < 0.0) throw std::invalid_argument("focal: gamma must be >= 0");
  const std::size_t rows = logits.shape()[0], classes = logits.shape()[1];
  check_targets(targets, rows, classes, "focal");
  const Tensor& z = logits.value();
  auto probs = std::make_shared<Tensor>(logits.shape());
  // d(row loss)/dz_k = coef_r * (delta_tk - p_k)
  auto coef = std::make_shared<std::vector<double>>(rows);
  std::vector<std::size_t> tgt(targets.begin(), targets.end());
  double total = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    const double* zr = z.data() + r * classes;
    const double m = *std::max_element(zr, zr + classes);
    double s = 0.0;
    for (std::size_t j = 0; j < classes; ++j) s += std::exp(zr[j] - m);
    const double lse = m + std::log(s);
    double rest = 0.0;  // 1 - p_t, summed from the other classes for accuracy
    for (std::size_t j = 0; j < classes; ++j) {
      const double p = std::exp(zr[j] - lse);
      (*probs)[r * classes + j] = p;
      if (j != tgt[r]) rest += p;
    }
    const double log_pt = zr[tgt[r]] - lse;
    const double pt = (*probs)[r * classes + tgt[r]];
    const double modulating = std::pow(rest, gamma);
    total += -modulating * log_pt;
    double slope = 0.0;
    if (gamma > 0.0 && rest > 0.0) {
      slope = gamma * std::pow(rest, gamma - 1.0) * pt * log_pt;
    }
    (*coef)[r] = slope - modulating;
  }
  const double inv_rows = 1.0 / static_cast<double>(rows);
  return logits.tape().record(
      Tensor::scalar(total * inv_rows), {logits},
      [logits, probs, coef, tgt = std::move(tgt), rows, classes,
       inv_rows](Tape& t, const Tensor& g) {
        auto& gz = t.grad_of(logits.id());
        const double c = g[0] * inv_rows;
        for (std::size_t r = 0; r < rows; ++r) {
          for (std::size_t j = 0; j < classes; ++j) {
            const double delta = j == tgt[r] ? 1.0 : 0.0;
            gz[r * classes + j] +=
                c * (*coef)[r] * (delta - (*probs)[r * classes + j]);
          }
        }
      });
}

}  // namespace pairnet::ops
