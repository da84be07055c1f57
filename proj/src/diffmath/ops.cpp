#include "c2pc/diffmath/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "c2pc/errors.hpp"
#include "c2pc/kernels/gemm.hpp"
#include "c2pc/kernels/vecmath.hpp"

namespace c2pc::dm {
namespace {

using kernels::MatrixView;
using kernels::row_major;

// Gradient sink for an input, or an empty span when it takes no gradient.
std::span<double> sink(Tensor t) {
  if (!t.requires_grad()) return {};
  return t.grad();
}

void require_rank(const Tensor& t, std::size_t rank, const char* op) {
  if (t.rank() != rank) {
    throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " + to_string(t.shape()));
  }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + to_string(a.shape()) + " vs " + to_string(b.shape()));
  }
}

bool recording(std::initializer_list<const Tensor*> inputs) {
  if (!grad_enabled()) return false;
  for (const Tensor* t : inputs) {
    if (t->requires_grad()) return true;
  }
  return false;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  auto av = a.data();
  auto bv = b.data();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
  return Tensor::make_op("add", a.shape(), std::move(out), {a, b},
                         [a, b](std::span<const double>, std::span<const double> g) {
                           for (auto s : {sink(a), sink(b)}) {
                             for (std::size_t i = 0; i < s.size(); ++i) s[i] += g[i];
                           }
                         });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  auto av = a.data();
  auto bv = b.data();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
  return Tensor::make_op("mul", a.shape(), std::move(out), {a, b},
                         [a, b](std::span<const double>, std::span<const double> g) {
                           auto ga = sink(a);
                           auto bv = b.data();
                           for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[i] * bv[i];
                           auto gb = sink(b);
                           auto av = a.data();
                           for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += g[i] * av[i];
                         });
}

Tensor scale(const Tensor& a, double factor) {
  auto av = a.data();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * factor;
  return Tensor::make_op("scale", a.shape(), std::move(out), {a},
                         [a, factor](std::span<const double>, std::span<const double> g) {
                           auto ga = sink(a);
                           for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[i] * factor;
                         });
}

Tensor add_bias(const Tensor& x, const Tensor& bias) {
  require_rank(bias, 1, "add_bias");
  const std::size_t n = bias.dim(0);
  if (x.shape().back() != n) {
    throw ShapeError("add_bias: bias " + to_string(bias.shape()) + " does not match " + to_string(x.shape()));
  }
  auto xv = x.data();
  auto bv = bias.data();
  std::vector<double> out(xv.size());
  for (std::size_t r = 0; r < out.size(); r += n) {
    for (std::size_t j = 0; j < n; ++j) out[r + j] = xv[r + j] + bv[j];
  }
  return Tensor::make_op("add_bias", x.shape(), std::move(out), {x, bias},
                         [x, bias, n](std::span<const double>, std::span<const double> g) {
                           auto gx = sink(x);
                           for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[i];
                           auto gb = sink(bias);
                           if (!gb.empty()) {
                             for (std::size_t r = 0; r < g.size(); r += n) {
                               for (std::size_t j = 0; j < n; ++j) gb[j] += g[r + j];
                             }
                           }
                         });
}

Tensor sum(const Tensor& a) {
  double s = 0.0;
  for (double v : a.data()) s += v;
  return Tensor::make_op("sum", {1}, {s}, {a}, [a](std::span<const double>, std::span<const double> g) {
    auto ga = sink(a);
    for (auto& v : ga) v += g[0];
  });
}

Tensor mean(const Tensor& a) { return scale(sum(a), 1.0 / static_cast<double>(a.numel())); }

Tensor reshape(const Tensor& a, Shape shape) {
  if (numel(shape) != a.numel()) {
    throw ShapeError("reshape: cannot view " + to_string(a.shape()) + " as " + to_string(shape));
  }
  return Tensor::make_op("reshape", std::move(shape), a.to_vector(), {a},
                         [a](std::span<const double>, std::span<const double> g) {
                           auto ga = sink(a);
                           for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[i];
                         });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "matmul");
  require_rank(b, 2, "matmul");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    throw ShapeError("matmul: inner dimensions differ " + to_string(a.shape()) + " x " + to_string(b.shape()));
  }
  std::vector<double> out(m * n);
  kernels::gemm(m, n, k, row_major(a.data().data(), k), row_major(b.data().data(), n), out.data(), n);
  return Tensor::make_op("matmul", {m, n}, std::move(out), {a, b},
                         [a, b, m, k, n](std::span<const double>, std::span<const double> g) {
                           const MatrixView gv = row_major(g.data(), n);
                           if (auto ga = sink(a); !ga.empty()) {
                             // dA = G * B^T
                             kernels::gemm(m, k, n, gv, row_major(b.data().data(), n).transposed(), ga.data(), k,
                                           true);
                           }
                           if (auto gb = sink(b); !gb.empty()) {
                             // dB = A^T * G
                             kernels::gemm(k, n, m, row_major(a.data().data(), k).transposed(), gv, gb.data(), n,
                                           true);
                           }
                         });
}

Tensor gather_rows(const Tensor& table, std::span<const std::size_t> indices) {
  require_rank(table, 2, "gather_rows");
  const std::size_t rows = table.dim(0), width = table.dim(1);
  for (auto idx : indices) {
    if (idx >= rows) {
      throw std::out_of_range("gather_rows: index " + std::to_string(idx) + " out of range for table with " +
                              std::to_string(rows) + " rows");
    }
  }
  if (indices.empty()) throw ShapeError("gather_rows: no indices");
  auto tv = table.data();
  std::vector<double> out(indices.size() * width);
  for (std::size_t i = 0; i < indices.size(); ++i) {
    std::copy_n(tv.begin() + indices[i] * width, width, out.begin() + i * width);
  }
  std::vector<std::size_t> idx(indices.begin(), indices.end());
  return Tensor::make_op("gather_rows", {indices.size(), width}, std::move(out), {table},
                         [table, idx = std::move(idx), width](std::span<const double>, std::span<const double> g) {
                           auto gt = sink(table);
                           for (std::size_t i = 0; i < idx.size(); ++i) {
                             for (std::size_t j = 0; j < width; ++j) gt[idx[i] * width + j] += g[i * width + j];
                           }
                         });
}

Tensor gelu(const Tensor& x) {
  auto xv = x.data();
  const std::size_t n = xv.size();
  const double inv_sqrt2 = 1.0 / std::numbers::sqrt2;
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = xv[i] * inv_sqrt2;
  kernels::erf_array(out.data(), out.data(), n);
  for (std::size_t i = 0; i < n; ++i) out[i] = 0.5 * xv[i] * (1.0 + out[i]);
  return Tensor::make_op("gelu", x.shape(), std::move(out), {x},
                         [x, inv_sqrt2](std::span<const double>, std::span<const double> g) {
                           auto gx = sink(x);
                           if (gx.empty()) return;
                           auto xv = x.data();
                           const std::size_t n = xv.size();
                           const double inv_sqrt_2pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);
                           std::vector<double> cdf(n), pdf(n);
                           for (std::size_t i = 0; i < n; ++i) {
                             cdf[i] = xv[i] * inv_sqrt2;
                             pdf[i] = -0.5 * xv[i] * xv[i];
                           }
                           kernels::erf_array(cdf.data(), cdf.data(), n);
                           kernels::exp_array(pdf.data(), pdf.data(), n);
                           for (std::size_t i = 0; i < n; ++i) {
                             gx[i] += g[i] * (0.5 * (1.0 + cdf[i]) + xv[i] * inv_sqrt_2pi * pdf[i]);
                           }
                         });
}

Tensor layer_norm(const Tensor& v, const Tensor& gamma, const Tensor& beta, double eps) {
  require_rank(gamma, 1, "layer_norm");
  require_rank(beta, 1, "layer_norm");
  const std::size_t width = v.shape().back();
  if (gamma.dim(0) != width || beta.dim(0) != width) {
    throw ShapeError("layer_norm: gamma/beta do not match last axis of " + to_string(v.shape()));
  }
  const std::size_t rows = v.numel() / width;
  auto vv = v.data();
  auto gv = gamma.data();
  auto bv = beta.data();
  std::vector<double> out(vv.size());
  std::vector<double> xhat(vv.size());
  std::vector<double> inv_std(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = vv.data() + r * width;
    double mu = 0.0;
    for (std::size_t j = 0; j < width; ++j) mu += row[j];
    mu /= static_cast<double>(width);
    double var = 0.0;
    for (std::size_t j = 0; j < width; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= static_cast<double>(width);
    inv_std[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < width; ++j) {
      const double h = (row[j] - mu) * inv_std[r];
      xhat[r * width + j] = h;
      out[r * width + j] = h * gv[j] + bv[j];
    }
  }
  const bool keep = recording({&v, &gamma, &beta});
  if (!keep) {
    xhat.clear();
    inv_std.clear();
  }
  return Tensor::make_op(
      "layer_norm", v.shape(), std::move(out), {v, gamma, beta},
      [v, gamma, beta, width, rows, xhat = std::move(xhat), inv_std = std::move(inv_std)](
          std::span<const double>, std::span<const double> g) {
        auto gg = sink(gamma);
        auto gb = sink(beta);
        auto gv = sink(v);
        auto gam = gamma.data();
        std::vector<double> dxhat(width);
        for (std::size_t r = 0; r < rows; ++r) {
          const double* gr = g.data() + r * width;
          const double* hr = xhat.data() + r * width;
          for (std::size_t j = 0; j < width; ++j) {
            if (!gg.empty()) gg[j] += gr[j] * hr[j];
            if (!gb.empty()) gb[j] += gr[j];
          }
          if (gv.empty()) continue;
          double mean_d = 0.0, mean_dh = 0.0;
          for (std::size_t j = 0; j < width; ++j) {
            dxhat[j] = gr[j] * gam[j];
            mean_d += dxhat[j];
            mean_dh += dxhat[j] * hr[j];
          }
          mean_d /= static_cast<double>(width);
          mean_dh /= static_cast<double>(width);
          for (std::size_t j = 0; j < width; ++j) {
            gv[r * width + j] += inv_std[r] * (dxhat[j] - mean_d - hr[j] * mean_dh);
          }
        }
      });
}

namespace {

// In-place stabilised softmax of each row of scale * [rows x cols] (scale > 0).
void softmax_inplace(double* m, std::size_t rows, std::size_t cols, double scale = 1.0) {
#pragma omp parallel for schedule(static) if (rows * cols > 65536)
  for (std::size_t r = 0; r < rows; ++r) {
    double* row = m + r * cols;
    double mx = row[0];
    for (std::size_t j = 1; j < cols; ++j) mx = std::max(mx, row[j]);
    for (std::size_t j = 0; j < cols; ++j) row[j] = (row[j] - mx) * scale;
    kernels::exp_array(row, row, cols);
    double z = 0.0;
    for (std::size_t j = 0; j < cols; ++j) z += row[j];
    const double inv = 1.0 / z;
    for (std::size_t j = 0; j < cols; ++j) row[j] *= inv;
  }
}

// dS = scale * P .* (dP - rowsum(dP .* P)), in place over dP.
void softmax_backward_inplace(const double* p, double* dp, std::size_t rows, std::size_t cols,
                              double scale = 1.0) {
#pragma omp parallel for schedule(static) if (rows * cols > 65536)
  for (std::size_t r = 0; r < rows; ++r) {
    const double* pr = p + r * cols;
    double* dr = dp + r * cols;
    double dot = 0.0;
    for (std::size_t j = 0; j < cols; ++j) dot += dr[j] * pr[j];
    for (std::size_t j = 0; j < cols; ++j) dr[j] = pr[j] * (dr[j] - dot) * scale;
  }
}

}  // namespace

Tensor softmax_rows(const Tensor& m) {
  require_rank(m, 2, "softmax_rows");
  const std::size_t rows = m.dim(0), cols = m.dim(1);
  std::vector<double> out = m.to_vector();
  softmax_inplace(out.data(), rows, cols);
  return Tensor::make_op("softmax_rows", m.shape(), std::move(out), {m},
                         [m, rows, cols](std::span<const double> p, std::span<const double> g) {
                           auto gm = sink(m);
                           std::vector<double> d(g.begin(), g.end());
                           softmax_backward_inplace(p.data(), d.data(), rows, cols);
                           for (std::size_t i = 0; i < gm.size(); ++i) gm[i] += d[i];
                         });
}

Tensor conv1d_valid(const Tensor& x, const Tensor& kernel, const Tensor& bias) {
  require_rank(kernel, 3, "conv1d_valid");
  require_rank(bias, 1, "conv1d_valid");
  if (x.rank() != 2 && x.rank() != 3) {
    throw ShapeError("conv1d_valid: input must be [T x C] or [B x T x C], got " + to_string(x.shape()));
  }
  const bool batched = x.rank() == 3;
  const std::size_t batch = batched ? x.dim(0) : 1;
  const std::size_t steps = x.dim(batched ? 1 : 0);
  const std::size_t c_in = x.dim(batched ? 2 : 1);
  const std::size_t ksize = kernel.dim(0), c_out = kernel.dim(2);
  if (kernel.dim(1) != c_in || bias.dim(0) != c_out) {
    throw ShapeError("conv1d_valid: kernel " + to_string(kernel.shape()) + " / bias " + to_string(bias.shape()) +
                     " incompatible with input " + to_string(x.shape()));
  }
  if (ksize > steps) {
    throw ShapeError("conv1d_valid: kernel size " + std::to_string(ksize) + " exceeds input length " +
                     std::to_string(steps));
  }
  const std::size_t positions = steps - ksize + 1;
  const std::size_t window = ksize * c_in;
  const std::size_t rows = batch * positions;

  // Each output position reads a contiguous window of K * C_in input values.
  auto xv = x.data();
  std::vector<double> cols(rows * window);
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t p = 0; p < positions; ++p) {
      std::copy_n(xv.begin() + (b * steps + p) * c_in, window, cols.begin() + (b * positions + p) * window);
    }
  }
  std::vector<double> out(rows * c_out);
  kernels::gemm(rows, c_out, window, row_major(cols.data(), window), row_major(kernel.data().data(), c_out),
                out.data(), c_out);
  auto bv = bias.data();
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t o = 0; o < c_out; ++o) out[r * c_out + o] += bv[o];
  }
  Shape shape = batched ? Shape{batch, positions, c_out} : Shape{positions, c_out};
  if (!recording({&x, &kernel, &bias})) cols.clear();
  return Tensor::make_op(
      "conv1d_valid", std::move(shape), std::move(out), {x, kernel, bias},
      [x, kernel, bias, cols = std::move(cols), batch, steps, c_in, positions, window, rows, c_out](
          std::span<const double>, std::span<const double> g) {
        const auto gv = row_major(g.data(), c_out);
        if (auto gk = sink(kernel); !gk.empty()) {
          kernels::gemm(window, c_out, rows, row_major(cols.data(), window).transposed(), gv, gk.data(), c_out, true);
        }
        if (auto gb = sink(bias); !gb.empty()) {
          for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t o = 0; o < c_out; ++o) gb[o] += g[r * c_out + o];
          }
        }
        if (auto gx = sink(x); !gx.empty()) {
          std::vector<double> dcols(rows * window);
          kernels::gemm(rows, window, c_out, gv, row_major(kernel.data().data(), c_out).transposed(), dcols.data(),
                        window);
          for (std::size_t b = 0; b < batch; ++b) {
            for (std::size_t p = 0; p < positions; ++p) {
              double* dst = gx.data() + (b * steps + p) * c_in;
              const double* src = dcols.data() + (b * positions + p) * window;
              for (std::size_t j = 0; j < window; ++j) dst[j] += src[j];
            }
          }
        }
      });
}

Tensor mean_axis1(const Tensor& x) {
  require_rank(x, 3, "mean_axis1");
  const std::size_t batch = x.dim(0), len = x.dim(1), width = x.dim(2);
  auto xv = x.data();
  std::vector<double> out(batch * width, 0.0);
  const double inv = 1.0 / static_cast<double>(len);
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t l = 0; l < len; ++l) {
      for (std::size_t j = 0; j < width; ++j) out[b * width + j] += xv[(b * len + l) * width + j];
    }
    for (std::size_t j = 0; j < width; ++j) out[b * width + j] *= inv;
  }
  return Tensor::make_op("mean_axis1", {batch, width}, std::move(out), {x},
                         [x, batch, len, width, inv](std::span<const double>, std::span<const double> g) {
                           auto gx = sink(x);
                           for (std::size_t b = 0; b < batch; ++b) {
                             for (std::size_t l = 0; l < len; ++l) {
                               for (std::size_t j = 0; j < width; ++j) {
                                 gx[(b * len + l) * width + j] += g[b * width + j] * inv;
                               }
                             }
                           }
                         });
}

Tensor dropout(const Tensor& x, double rate, std::mt19937_64& rng) {
  if (rate < 0.0 || rate >= 1.0) throw std::invalid_argument("dropout: rate must be in [0, 1)");
  if (rate == 0.0) return x;
  std::bernoulli_distribution keep(1.0 - rate);
  const double factor = 1.0 / (1.0 - rate);
  std::vector<double> mask(x.numel());
  for (auto& m : mask) m = keep(rng) ? factor : 0.0;
  auto xv = x.data();
  std::vector<double> out(xv.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[i] * mask[i];
  return Tensor::make_op("dropout", x.shape(), std::move(out), {x},
                         [x, mask = std::move(mask)](std::span<const double>, std::span<const double> g) {
                           auto gx = sink(x);
                           for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[i] * mask[i];
                         });
}

namespace {

struct AttentionDims {
  std::size_t lq, lk, width, heads, head_dim;
};

AttentionDims attention_dims(const Tensor& q, const Tensor& k, const Tensor* v, std::size_t heads) {
  require_rank(q, 2, "multi_head_attention");
  require_rank(k, 2, "multi_head_attention");
  const std::size_t width = q.dim(1);
  if (k.dim(1) != width || (v && (v->rank() != 2 || v->dim(0) != k.dim(0) || v->dim(1) != width))) {
    throw ShapeError("multi_head_attention: incompatible q/k/v shapes " + to_string(q.shape()) + ", " +
                     to_string(k.shape()) + (v ? ", " + to_string(v->shape()) : std::string()));
  }
  if (heads == 0 || width % heads != 0) {
    throw ShapeError("multi_head_attention: width " + std::to_string(width) + " not divisible by " +
                     std::to_string(heads) + " heads");
  }
  return {q.dim(0), k.dim(0), width, heads, width / heads};
}

// Head h of an [L x E] row-major matrix as an [L x d] view.
MatrixView head_view(const double* base, const AttentionDims& d, std::size_t h) {
  return {base + h * d.head_dim, static_cast<std::ptrdiff_t>(d.width), 1};
}

// Query rows [r0, r0 + rows) of one head: scaled scores, then the row softmax into p ([rows x L_k]).
void head_probabilities(const double* q, const double* k, const AttentionDims& d, std::size_t h, std::size_t r0,
                        std::size_t rows, double* p) {
  kernels::gemm(rows, d.lk, d.head_dim, head_view(q + r0 * d.width, d, h), head_view(k, d, h).transposed(), p, d.lk);
  softmax_inplace(p, rows, d.lk, 1.0 / std::sqrt(static_cast<double>(d.head_dim)));
}

// Query rows per attention task; keeps a probability block cache resident between softmax and P V.
constexpr std::size_t kAttentionRows = 64;

}  // namespace

std::vector<std::vector<double>> attention_probabilities(const Tensor& q, const Tensor& k, std::size_t heads) {
  const AttentionDims d = attention_dims(q, k, nullptr, heads);
  std::vector<std::vector<double>> probs(heads, std::vector<double>(d.lq * d.lk));
  for (std::size_t h = 0; h < heads; ++h) {
    head_probabilities(q.data().data(), k.data().data(), d, h, 0, d.lq, probs[h].data());
  }
  return probs;
}

Tensor multi_head_attention(const Tensor& q, const Tensor& k, const Tensor& v, std::size_t heads) {
  const AttentionDims d = attention_dims(q, k, &v, heads);
  const bool keep = recording({&q, &k, &v});
  std::vector<double> out(d.lq * d.width);
  std::vector<double> probs(keep ? heads * d.lq * d.lk : 0);
  const std::size_t blocks = (d.lq + kAttentionRows - 1) / kAttentionRows;
  const std::size_t tasks = heads * blocks;
#pragma omp parallel if (tasks > 1 && d.lq * d.lk > 65536)
  {
    std::vector<double> scratch(keep ? 0 : kAttentionRows * d.lk);
#pragma omp for schedule(static)
    for (std::size_t t = 0; t < tasks; ++t) {
      const std::size_t h = t / blocks;
      const std::size_t r0 = (t % blocks) * kAttentionRows;
      const std::size_t rows = std::min(kAttentionRows, d.lq - r0);
      double* p = keep ? probs.data() + h * d.lq * d.lk + r0 * d.lk : scratch.data();
      head_probabilities(q.data().data(), k.data().data(), d, h, r0, rows, p);
      kernels::gemm(rows, d.head_dim, d.lk, row_major(p, d.lk), head_view(v.data().data(), d, h),
                    out.data() + r0 * d.width + h * d.head_dim, d.width);
    }
  }
  return Tensor::make_op(
      "multi_head_attention", {d.lq, d.width}, std::move(out), {q, k, v},
      [q, k, v, d, probs = std::move(probs)](std::span<const double>, std::span<const double> g) {
        auto gq = sink(q);
        auto gk = sink(k);
        auto gv = sink(v);
        const double s = 1.0 / std::sqrt(static_cast<double>(d.head_dim));
        std::vector<double> dp(d.lq * d.lk);
        for (std::size_t h = 0; h < d.heads; ++h) {
          const double* p = probs.data() + h * d.lq * d.lk;
          const MatrixView g_h = head_view(g.data(), d, h);
          if (!gv.empty()) {
            // dV_h += P^T dO_h
            kernels::gemm(d.lk, d.head_dim, d.lq, row_major(p, d.lk).transposed(), g_h, gv.data() + h * d.head_dim,
                          d.width, true);
          }
          if (gq.empty() && gk.empty()) continue;
          // dP = dO_h V_h^T, then through the softmax and the 1/sqrt(d_k) scale.
          kernels::gemm(d.lq, d.lk, d.head_dim, g_h, head_view(v.data().data(), d, h).transposed(), dp.data(), d.lk);
          softmax_backward_inplace(p, dp.data(), d.lq, d.lk, s);
          if (!gq.empty()) {
            kernels::gemm(d.lq, d.head_dim, d.lk, row_major(dp.data(), d.lk), head_view(k.data().data(), d, h),
                          gq.data() + h * d.head_dim, d.width, true);
          }
          if (!gk.empty()) {
            kernels::gemm(d.lk, d.head_dim, d.lq, row_major(dp.data(), d.lk).transposed(),
                          head_view(q.data().data(), d, h), gk.data() + h * d.head_dim, d.width, true);
          }
        }
      });
}

}  // namespace c2pc::dm
