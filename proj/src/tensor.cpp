#include "lesa/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <stdexcept>
#include <unordered_set>

#include "lesa/kernels.hpp"

namespace lesa {

namespace {

constexpr float kNegInf = -std::numeric_limits<float>::infinity();

thread_local bool t_grad_enabled = true;

std::size_t shape_numel(const std::vector<int>& shape) {
  std::size_t n = 1;
  for (int d : shape) n *= static_cast<std::size_t>(d);
  return n;
}

void check_shape(const std::vector<int>& shape) {
  if (shape.empty() || shape.size() > 3)
    throw std::invalid_argument("tensor rank must be 1..3, got " +
                                shape_str(shape));
  for (int d : shape)
    if (d <= 0)
      throw std::invalid_argument("tensor dimensions must be positive, got " +
                                  shape_str(shape));
}

void require_rank2(const Tensor& t, const char* op) {
  if (t.rank() != 2)
    throw std::invalid_argument(std::string(op) + ": expected a matrix, got " +
                                shape_str(t.shape));
}

// Output of a differentiable op: tracks iff recording is on and some parent
// tracks. Tracked tensors get a zeroed grad buffer up front.
Tensor make_out(std::vector<int> shape, bool tracked) {
  return Tensor::zeros(std::move(shape), tracked && t_grad_enabled);
}

void attach(Tensor& out, std::vector<Tensor> parents,
            std::function<void(const Tensor&)> fn) {
  if (!out.requires_grad) return;
  out.node = std::make_shared<Node>();
  out.node->parents = std::move(parents);
  out.node->backward = std::move(fn);
}

bool tracks(const Tensor& t) { return t.requires_grad; }

}  // namespace

std::string shape_str(const std::vector<int>& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

bool grad_enabled() { return t_grad_enabled; }

NoGradGuard::NoGradGuard() : prev_(t_grad_enabled) { t_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { t_grad_enabled = prev_; }

Tensor Tensor::zeros(std::vector<int> shape, bool requires_grad) {
  check_shape(shape);
  Tensor t;
  const std::size_t n = shape_numel(shape);
  t.shape = std::move(shape);
  t.data = std::make_shared<std::vector<float>>(n, 0.0f);
  t.requires_grad = requires_grad;
  if (requires_grad) t.grad = std::make_shared<std::vector<float>>(n, 0.0f);
  return t;
}

Tensor Tensor::from_data(std::vector<int> shape, std::vector<float> values,
                         bool requires_grad) {
  check_shape(shape);
  if (shape_numel(shape) != values.size())
    throw std::invalid_argument("from_data: " + std::to_string(values.size()) +
                                " values for shape " + shape_str(shape));
  Tensor t;
  t.shape = std::move(shape);
  t.data = std::make_shared<std::vector<float>>(std::move(values));
  t.requires_grad = requires_grad;
  if (requires_grad)
    t.grad = std::make_shared<std::vector<float>>(t.data->size(), 0.0f);
  return t;
}

Tensor Tensor::full(std::vector<int> shape, float value, bool requires_grad) {
  Tensor t = zeros(std::move(shape), requires_grad);
  std::fill(t.data->begin(), t.data->end(), value);
  return t;
}

int Tensor::rows() const {
  require_rank2(*this, "rows");
  return shape[0];
}

int Tensor::cols() const {
  require_rank2(*this, "cols");
  return shape[1];
}

float Tensor::scalar() const {
  if (numel() != 1)
    throw std::invalid_argument("scalar: tensor has shape " +
                                shape_str(shape));
  return (*data)[0];
}

Tensor Tensor::detached_copy() const {
  Tensor t;
  t.shape = shape;
  t.data = std::make_shared<std::vector<float>>(*data);
  return t;
}

// ---- ops ----------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank2(a, "matmul");
  require_rank2(b, "matmul");
  if (a.shape[1] != b.shape[0])
    throw std::invalid_argument("matmul: shape mismatch " + shape_str(a.shape) +
                                " x " + shape_str(b.shape));
  const int m = a.shape[0], k = a.shape[1], n = b.shape[1];
  Tensor out = make_out({m, n}, tracks(a) || tracks(b));
  kernels::active().matmul_nn(out.data->data(), a.data->data(), b.data->data(),
                              m, k, n, false);
  attach(out, {a, b}, [m, k, n](const Tensor& o) {
    const Tensor& pa = o.node->parents[0];
    const Tensor& pb = o.node->parents[1];
    if (pa.requires_grad)
      kernels::active().matmul_nt(pa.grad->data(), o.grad->data(),
                                  pb.data->data(), m, n, k, true);
    if (pb.requires_grad)
      kernels::active().matmul_tn(pb.grad->data(), pa.data->data(),
                                  o.grad->data(), k, m, n, true);
  });
  return out;
}

Tensor transpose(const Tensor& a) {
  require_rank2(a, "transpose");
  const int m = a.shape[0], n = a.shape[1];
  Tensor out = make_out({n, m}, tracks(a));
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) out.at(j, i) = a.at(i, j);
  attach(out, {a}, [m, n](const Tensor& o) {
    const Tensor& pa = o.node->parents[0];
    if (!pa.requires_grad) return;
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j)
        (*pa.grad)[static_cast<std::size_t>(i) * n + j] += o.grad->at(
            static_cast<std::size_t>(j) * m + i);
  });
  return out;
}

Tensor row_softmax(const Tensor& a) {
  require_rank2(a, "row_softmax");
  const int m = a.shape[0], n = a.shape[1];
  Tensor out = make_out({m, n}, tracks(a));
  std::copy(a.data->begin(), a.data->end(), out.data->begin());
  for (int i = 0; i < m; ++i) {
    if (!kernels::active().softmax_row(
            out.data->data() + static_cast<std::size_t>(i) * n, n))
      throw std::domain_error("row_softmax: row " + std::to_string(i) +
                              " is fully masked");
  }
  attach(out, {a}, [m, n](const Tensor& o) {
    const Tensor& pa = o.node->parents[0];
    if (!pa.requires_grad) return;
    for (int i = 0; i < m; ++i) {
      const float* y = o.data->data() + static_cast<std::size_t>(i) * n;
      const float* gy = o.grad->data() + static_cast<std::size_t>(i) * n;
      float* gx = pa.grad->data() + static_cast<std::size_t>(i) * n;
      float dot = 0.0f;
      for (int j = 0; j < n; ++j) dot += gy[j] * y[j];
      for (int j = 0; j < n; ++j) gx[j] += y[j] * (gy[j] - dot);
    }
  });
  return out;
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                  float epsilon) {
  require_rank2(x, "layer_norm");
  const int m = x.shape[0], d = x.shape[1];
  if (d < 2) throw std::invalid_argument("layer_norm: feature dim must be >= 2");
  if (gain.rank() != 1 || gain.shape[0] != d || bias.rank() != 1 ||
      bias.shape[0] != d)
    throw std::invalid_argument("layer_norm: gain/bias must be [" +
                                std::to_string(d) + "], got " +
                                shape_str(gain.shape) + ", " +
                                shape_str(bias.shape));
  Tensor out = make_out({m, d}, tracks(x) || tracks(gain) || tracks(bias));
  auto means = std::make_shared<std::vector<float>>(m);
  auto rstds = std::make_shared<std::vector<float>>(m);
  for (int i = 0; i < m; ++i) {
    kernels::active().layernorm_row(
        out.data->data() + static_cast<std::size_t>(i) * d,
        x.data->data() + static_cast<std::size_t>(i) * d, gain.data->data(),
        bias.data->data(), d, epsilon, &(*means)[i], &(*rstds)[i]);
  }
  attach(out, {x, gain, bias}, [m, d, means, rstds](const Tensor& o) {
    const Tensor& px = o.node->parents[0];
    const Tensor& pg = o.node->parents[1];
    const Tensor& pb = o.node->parents[2];
    for (int i = 0; i < m; ++i) {
      const float* xr = px.data->data() + static_cast<std::size_t>(i) * d;
      const float* gy = o.grad->data() + static_cast<std::size_t>(i) * d;
      const float mean = (*means)[i];
      const float rstd = (*rstds)[i];
      float sum_dxhat = 0.0f, sum_dxhat_xhat = 0.0f;
      for (int j = 0; j < d; ++j) {
        const float xhat = (xr[j] - mean) * rstd;
        const float dxhat = gy[j] * pg.data->at(static_cast<std::size_t>(j));
        sum_dxhat += dxhat;
        sum_dxhat_xhat += dxhat * xhat;
        if (pg.requires_grad) (*pg.grad)[static_cast<std::size_t>(j)] += gy[j] * xhat;
        if (pb.requires_grad) (*pb.grad)[static_cast<std::size_t>(j)] += gy[j];
      }
      if (px.requires_grad) {
        const float inv_d = 1.0f / static_cast<float>(d);
        float* gx = px.grad->data() + static_cast<std::size_t>(i) * d;
        for (int j = 0; j < d; ++j) {
          const float xhat = (xr[j] - mean) * rstd;
          const float dxhat = gy[j] * pg.data->at(static_cast<std::size_t>(j));
          gx[j] += rstd * (dxhat - inv_d * sum_dxhat - xhat * inv_d * sum_dxhat_xhat);
        }
      }
    }
  });
  return out;
}

Tensor relu(const Tensor& x) {
  Tensor out = make_out(x.shape, tracks(x));
  kernels::active().relu(out.data->data(), x.data->data(),
                         static_cast<int>(x.numel()));
  attach(out, {x}, [](const Tensor& o) {
    const Tensor& px = o.node->parents[0];
    if (!px.requires_grad) return;
    const std::size_t n = o.numel();
    for (std::size_t i = 0; i < n; ++i)
      if ((*px.data)[i] > 0.0f) (*px.grad)[i] += (*o.grad)[i];
  });
  return out;
}

Tensor dropout(const Tensor& x, float p, Rng& rng, bool training) {
  if (p < 0.0f || p >= 1.0f)
    throw std::invalid_argument("dropout: p must be in [0,1), got " +
                                std::to_string(p));
  if (!training || p == 0.0f) return x;
  const std::size_t n = x.numel();
  auto mask = std::make_shared<std::vector<std::uint8_t>>(n);
  const float inv_keep = 1.0f / (1.0f - p);
  Tensor out = make_out(x.shape, tracks(x));
  for (std::size_t i = 0; i < n; ++i) {
    const bool keep = rng.uniform() >= p;
    (*mask)[i] = keep;
    (*out.data)[i] = keep ? (*x.data)[i] * inv_keep : 0.0f;
  }
  attach(out, {x}, [mask, inv_keep](const Tensor& o) {
    const Tensor& px = o.node->parents[0];
    if (!px.requires_grad) return;
    const std::size_t n2 = o.numel();
    for (std::size_t i = 0; i < n2; ++i)
      if ((*mask)[i]) (*px.grad)[i] += (*o.grad)[i] * inv_keep;
  });
  return out;
}

Tensor add(const Tensor& a, const Tensor& b) {
  if (a.shape != b.shape)
    throw std::invalid_argument("add: shape mismatch " + shape_str(a.shape) +
                                " vs " + shape_str(b.shape));
  Tensor out = make_out(a.shape, tracks(a) || tracks(b));
  kernels::active().add(out.data->data(), a.data->data(), b.data->data(),
                        static_cast<int>(a.numel()));
  attach(out, {a, b}, [](const Tensor& o) {
    const int n = static_cast<int>(o.numel());
    for (int pi = 0; pi < 2; ++pi) {
      const Tensor& p = o.node->parents[static_cast<std::size_t>(pi)];
      if (p.requires_grad)
        kernels::active().axpy(p.grad->data(), o.grad->data(), 1.0f, n);
    }
  });
  return out;
}

Tensor add_bias(const Tensor& x, const Tensor& bias) {
  require_rank2(x, "add_bias");
  const int m = x.shape[0], n = x.shape[1];
  if (bias.rank() != 1 || bias.shape[0] != n)
    throw std::invalid_argument("add_bias: bias must be [" + std::to_string(n) +
                                "], got " + shape_str(bias.shape));
  Tensor out = make_out({m, n}, tracks(x) || tracks(bias));
  for (int i = 0; i < m; ++i)
    kernels::active().add(out.data->data() + static_cast<std::size_t>(i) * n,
                          x.data->data() + static_cast<std::size_t>(i) * n,
                          bias.data->data(), n);
  attach(out, {x, bias}, [m, n](const Tensor& o) {
    const Tensor& px = o.node->parents[0];
    const Tensor& pb = o.node->parents[1];
    if (px.requires_grad)
      kernels::active().axpy(px.grad->data(), o.grad->data(), 1.0f, m * n);
    if (pb.requires_grad)
      for (int i = 0; i < m; ++i)
        kernels::active().axpy(pb.grad->data(),
                               o.grad->data() + static_cast<std::size_t>(i) * n,
                               1.0f, n);
  });
  return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  if (a.shape != b.shape)
    throw std::invalid_argument("mul: shape mismatch " + shape_str(a.shape) +
                                " vs " + shape_str(b.shape));
  Tensor out = make_out(a.shape, tracks(a) || tracks(b));
  const std::size_t n = a.numel();
  for (std::size_t i = 0; i < n; ++i)
    (*out.data)[i] = (*a.data)[i] * (*b.data)[i];
  attach(out, {a, b}, [](const Tensor& o) {
    const Tensor& pa = o.node->parents[0];
    const Tensor& pb = o.node->parents[1];
    const std::size_t n2 = o.numel();
    if (pa.requires_grad)
      for (std::size_t i = 0; i < n2; ++i)
        (*pa.grad)[i] += (*o.grad)[i] * (*pb.data)[i];
    if (pb.requires_grad)
      for (std::size_t i = 0; i < n2; ++i)
        (*pb.grad)[i] += (*o.grad)[i] * (*pa.data)[i];
  });
  return out;
}

Tensor scale(const Tensor& x, float s) {
  Tensor out = make_out(x.shape, tracks(x));
  kernels::active().scale(out.data->data(), x.data->data(), s,
                          static_cast<int>(x.numel()));
  attach(out, {x}, [s](const Tensor& o) {
    const Tensor& px = o.node->parents[0];
    if (px.requires_grad)
      kernels::active().axpy(px.grad->data(), o.grad->data(), s,
                             static_cast<int>(o.numel()));
  });
  return out;
}

Tensor concat_rows(std::span<const Tensor> parts) {
  if (parts.empty()) throw std::invalid_argument("concat_rows: no inputs");
  const int n = parts[0].cols();
  int total = 0;
  bool tracked = false;
  for (const Tensor& p : parts) {
    require_rank2(p, "concat_rows");
    if (p.shape[1] != n)
      throw std::invalid_argument(
          "concat_rows: column count mismatch, expected " + std::to_string(n) +
          " got " + shape_str(p.shape));
    total += p.shape[0];
    tracked = tracked || tracks(p);
  }
  Tensor out = make_out({total, n}, tracked);
  std::size_t off = 0;
  for (const Tensor& p : parts) {
    std::copy(p.data->begin(), p.data->end(), out.data->begin() + off);
    off += p.numel();
  }
  attach(out, {parts.begin(), parts.end()}, [n](const Tensor& o) {
    std::size_t off2 = 0;
    for (const Tensor& p : o.node->parents) {
      if (p.requires_grad)
        kernels::active().axpy(p.grad->data(), o.grad->data() + off2, 1.0f,
                               static_cast<int>(p.numel()));
      off2 += p.numel();
    }
    (void)n;
  });
  return out;
}

Tensor concat_cols(std::span<const Tensor> parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: no inputs");
  const int m = parts[0].rows();
  int total = 0;
  bool tracked = false;
  for (const Tensor& p : parts) {
    require_rank2(p, "concat_cols");
    if (p.shape[0] != m)
      throw std::invalid_argument("concat_cols: row count mismatch, expected " +
                                  std::to_string(m) + " got " +
                                  shape_str(p.shape));
    total += p.shape[1];
    tracked = tracked || tracks(p);
  }
  Tensor out = make_out({m, total}, tracked);
  int col = 0;
  for (const Tensor& p : parts) {
    const int pc = p.shape[1];
    for (int i = 0; i < m; ++i)
      std::copy(p.data->begin() + static_cast<std::size_t>(i) * pc,
                p.data->begin() + static_cast<std::size_t>(i + 1) * pc,
                out.data->begin() + static_cast<std::size_t>(i) * total + col);
    col += pc;
  }
  attach(out, {parts.begin(), parts.end()}, [m, total](const Tensor& o) {
    int col2 = 0;
    for (const Tensor& p : o.node->parents) {
      const int pc = p.shape[1];
      if (p.requires_grad) {
        for (int i = 0; i < m; ++i) {
          const float* g =
              o.grad->data() + static_cast<std::size_t>(i) * total + col2;
          float* pg = p.grad->data() + static_cast<std::size_t>(i) * pc;
          for (int j = 0; j < pc; ++j) pg[j] += g[j];
        }
      }
      col2 += pc;
    }
  });
  return out;
}

Tensor slice_rows(const Tensor& x, int row0, int count) {
  require_rank2(x, "slice_rows");
  const int m = x.shape[0], n = x.shape[1];
  if (row0 < 0 || count <= 0 || row0 + count > m)
    throw std::invalid_argument("slice_rows: rows [" + std::to_string(row0) +
                                ", " + std::to_string(row0 + count) +
                                ") out of " + std::to_string(m));
  Tensor out = make_out({count, n}, tracks(x));
  std::copy(x.data->begin() + static_cast<std::size_t>(row0) * n,
            x.data->begin() + static_cast<std::size_t>(row0 + count) * n,
            out.data->begin());
  attach(out, {x}, [row0, n](const Tensor& o) {
    const Tensor& px = o.node->parents[0];
    if (!px.requires_grad) return;
    kernels::active().axpy(px.grad->data() + static_cast<std::size_t>(row0) * n,
                           o.grad->data(), 1.0f, static_cast<int>(o.numel()));
  });
  return out;
}

Tensor slice_block(const Tensor& x, int row0, int col0, int rows, int cols) {
  require_rank2(x, "slice_block");
  const int m = x.shape[0], n = x.shape[1];
  if (row0 < 0 || col0 < 0 || rows <= 0 || cols <= 0 || row0 + rows > m ||
      col0 + cols > n)
    throw std::invalid_argument("slice_block: block out of range for " +
                                shape_str(x.shape));
  Tensor out = make_out({rows, cols}, tracks(x));
  for (int i = 0; i < rows; ++i)
    std::copy(
        x.data->begin() + static_cast<std::size_t>(row0 + i) * n + col0,
        x.data->begin() + static_cast<std::size_t>(row0 + i) * n + col0 + cols,
        out.data->begin() + static_cast<std::size_t>(i) * cols);
  attach(out, {x}, [row0, col0, rows, cols, n](const Tensor& o) {
    const Tensor& px = o.node->parents[0];
    if (!px.requires_grad) return;
    for (int i = 0; i < rows; ++i) {
      const float* g = o.grad->data() + static_cast<std::size_t>(i) * cols;
      float* pg =
          px.grad->data() + static_cast<std::size_t>(row0 + i) * n + col0;
      for (int j = 0; j < cols; ++j) pg[j] += g[j];
    }
  });
  return out;
}

Tensor replace_block(const Tensor& x, const Tensor& patch, int row0, int col0) {
  require_rank2(x, "replace_block");
  require_rank2(patch, "replace_block");
  const int m = x.shape[0], n = x.shape[1];
  const int pr = patch.shape[0], pc = patch.shape[1];
  if (row0 < 0 || col0 < 0 || row0 + pr > m || col0 + pc > n)
    throw std::invalid_argument("replace_block: patch " +
                                shape_str(patch.shape) + " at (" +
                                std::to_string(row0) + "," +
                                std::to_string(col0) + ") out of range for " +
                                shape_str(x.shape));
  Tensor out = make_out({m, n}, tracks(x) || tracks(patch));
  std::copy(x.data->begin(), x.data->end(), out.data->begin());
  for (int i = 0; i < pr; ++i)
    std::copy(patch.data->begin() + static_cast<std::size_t>(i) * pc,
              patch.data->begin() + static_cast<std::size_t>(i + 1) * pc,
              out.data->begin() + static_cast<std::size_t>(row0 + i) * n + col0);
  attach(out, {x, patch}, [row0, col0, pr, pc, m, n](const Tensor& o) {
    const Tensor& px = o.node->parents[0];
    const Tensor& pp = o.node->parents[1];
    if (px.requires_grad) {
      for (int i = 0; i < m; ++i) {
        const bool in_rows = i >= row0 && i < row0 + pr;
        const float* g = o.grad->data() + static_cast<std::size_t>(i) * n;
        float* pg = px.grad->data() + static_cast<std::size_t>(i) * n;
        for (int j = 0; j < n; ++j)
          if (!(in_rows && j >= col0 && j < col0 + pc)) pg[j] += g[j];
      }
    }
    if (pp.requires_grad) {
      for (int i = 0; i < pr; ++i) {
        const float* g =
            o.grad->data() + static_cast<std::size_t>(row0 + i) * n + col0;
        float* pg = pp.grad->data() + static_cast<std::size_t>(i) * pc;
        for (int j = 0; j < pc; ++j) pg[j] += g[j];
      }
    }
  });
  return out;
}

Tensor mask_columns(const Tensor& x, const std::vector<std::uint8_t>& keep) {
  require_rank2(x, "mask_columns");
  const int m = x.shape[0], n = x.shape[1];
  if (static_cast<int>(keep.size()) != n)
    throw std::invalid_argument("mask_columns: mask size " +
                                std::to_string(keep.size()) + " for " +
                                shape_str(x.shape));
  Tensor out = make_out({m, n}, tracks(x));
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j)
      out.at(i, j) = keep[static_cast<std::size_t>(j)] ? x.at(i, j) : kNegInf;
  auto keep_copy = std::make_shared<std::vector<std::uint8_t>>(keep);
  attach(out, {x}, [m, n, keep_copy](const Tensor& o) {
    const Tensor& px = o.node->parents[0];
    if (!px.requires_grad) return;
    for (int i = 0; i < m; ++i) {
      const float* g = o.grad->data() + static_cast<std::size_t>(i) * n;
      float* pg = px.grad->data() + static_cast<std::size_t>(i) * n;
      for (int j = 0; j < n; ++j)
        if ((*keep_copy)[static_cast<std::size_t>(j)]) pg[j] += g[j];
    }
  });
  return out;
}

Tensor gather_rows(const Tensor& table, const std::vector<int>& ids) {
  require_rank2(table, "gather_rows");
  const int v = table.shape[0], d = table.shape[1];
  if (ids.empty()) throw std::invalid_argument("gather_rows: empty id list");
  for (int id : ids)
    if (id < 0 || id >= v)
      throw std::out_of_range("gather_rows: id " + std::to_string(id) +
                              " out of range [0, " + std::to_string(v) + ")");
  Tensor out = make_out({static_cast<int>(ids.size()), d}, tracks(table));
  for (std::size_t i = 0; i < ids.size(); ++i)
    std::copy(
        table.data->begin() + static_cast<std::size_t>(ids[i]) * d,
        table.data->begin() + static_cast<std::size_t>(ids[i] + 1) * d,
        out.data->begin() + i * static_cast<std::size_t>(d));
  auto ids_copy = std::make_shared<std::vector<int>>(ids);
  attach(out, {table}, [d, ids_copy](const Tensor& o) {
    const Tensor& pt = o.node->parents[0];
    if (!pt.requires_grad) return;
    for (std::size_t i = 0; i < ids_copy->size(); ++i)
      kernels::active().axpy(
          pt.grad->data() + static_cast<std::size_t>((*ids_copy)[i]) * d,
          o.grad->data() + i * static_cast<std::size_t>(d), 1.0f, d);
  });
  return out;
}

Tensor sum_all(const Tensor& x) {
  Tensor out = make_out({1}, tracks(x));
  double acc = 0.0;
  for (float v : *x.data) acc += static_cast<double>(v);
  (*out.data)[0] = static_cast<float>(acc);
  attach(out, {x}, [](const Tensor& o) {
    const Tensor& px = o.node->parents[0];
    if (!px.requires_grad) return;
    const float g = (*o.grad)[0];
    for (float& gv : *px.grad) gv += g;
  });
  return out;
}

ColumnwiseMax columnwise_max(const Tensor& a) {
  require_rank2(a, "columnwise_max");
  const int m = a.shape[0], n = a.shape[1];
  ColumnwiseMax result;
  result.argrows.assign(static_cast<std::size_t>(n), 0);
  Tensor out = make_out({1, n}, tracks(a));
  for (int j = 0; j < n; ++j) {
    float best = a.at(0, j);
    int arg = 0;
    for (int i = 1; i < m; ++i) {
      if (a.at(i, j) > best) {  // strict: ties keep the smallest row index
        best = a.at(i, j);
        arg = i;
      }
    }
    out.at(0, j) = best;
    result.argrows[static_cast<std::size_t>(j)] = arg;
  }
  auto args = std::make_shared<std::vector<int>>(result.argrows);
  attach(out, {a}, [n, args](const Tensor& o) {
    const Tensor& pa = o.node->parents[0];
    if (!pa.requires_grad) return;
    for (int j = 0; j < n; ++j)
      (*pa.grad)[static_cast<std::size_t>((*args)[static_cast<std::size_t>(j)]) *
                     n +
                 j] += (*o.grad)[static_cast<std::size_t>(j)];
  });
  result.values = out;
  return result;
}

Tensor softmax_cross_entropy(const Tensor& logits,
                             const std::vector<int>& labels,
                             const std::vector<float>& class_weights) {
  require_rank2(logits, "softmax_cross_entropy");
  const int b = logits.shape[0], c = logits.shape[1];
  if (static_cast<int>(labels.size()) != b)
    throw std::invalid_argument("softmax_cross_entropy: " +
                                std::to_string(labels.size()) +
                                " labels for batch " + std::to_string(b));
  if (!class_weights.empty() && static_cast<int>(class_weights.size()) != c)
    throw std::invalid_argument("softmax_cross_entropy: expected " +
                                std::to_string(c) + " class weights");
  for (int y : labels)
    if (y < 0 || y >= c)
      throw std::out_of_range("softmax_cross_entropy: label " +
                              std::to_string(y) + " out of range [0, " +
                              std::to_string(c) + ")");
  auto probs = std::make_shared<std::vector<float>>(
      static_cast<std::size_t>(b) * c);
  double total = 0.0;
  for (int i = 0; i < b; ++i) {
    const float* z = logits.data->data() + static_cast<std::size_t>(i) * c;
    double mx = z[0];
    for (int j = 1; j < c; ++j) mx = std::max(mx, static_cast<double>(z[j]));
    double sum = 0.0;
    for (int j = 0; j < c; ++j) sum += std::exp(static_cast<double>(z[j]) - mx);
    const double lse = mx + std::log(sum);
    for (int j = 0; j < c; ++j)
      (*probs)[static_cast<std::size_t>(i) * c + j] =
          static_cast<float>(std::exp(static_cast<double>(z[j]) - lse));
    const float w =
        class_weights.empty()
            ? 1.0f
            : class_weights[static_cast<std::size_t>(labels[static_cast<std::size_t>(i)])];
    total += static_cast<double>(w) *
             (lse - static_cast<double>(z[labels[static_cast<std::size_t>(i)]]));
  }
  Tensor out = make_out({1}, tracks(logits));
  (*out.data)[0] = static_cast<float>(total / b);
  auto labels_copy = std::make_shared<std::vector<int>>(labels);
  auto weights_copy = std::make_shared<std::vector<float>>(class_weights);
  attach(out, {logits}, [b, c, probs, labels_copy, weights_copy](const Tensor& o) {
    const Tensor& pl = o.node->parents[0];
    if (!pl.requires_grad) return;
    const float go = (*o.grad)[0] / static_cast<float>(b);
    for (int i = 0; i < b; ++i) {
      const int y = (*labels_copy)[static_cast<std::size_t>(i)];
      const float w = weights_copy->empty()
                          ? 1.0f
                          : (*weights_copy)[static_cast<std::size_t>(y)];
      float* g = pl.grad->data() + static_cast<std::size_t>(i) * c;
      const float* p = probs->data() + static_cast<std::size_t>(i) * c;
      for (int j = 0; j < c; ++j)
        g[j] += go * w * (p[j] - (j == y ? 1.0f : 0.0f));
    }
  });
  return out;
}

Tensor distill_loss(const Tensor& teacher_logits, const Tensor& student_logits,
                    float t0) {
  require_rank2(teacher_logits, "distill_loss");
  require_rank2(student_logits, "distill_loss");
  if (teacher_logits.shape != student_logits.shape)
    throw std::invalid_argument("distill_loss: logit shape mismatch " +
                                shape_str(teacher_logits.shape) + " vs " +
                                shape_str(student_logits.shape));
  if (!(t0 > 0.0f))
    throw std::invalid_argument("distill_loss: temperature must be > 0");
  const int b = student_logits.shape[0], c = student_logits.shape[1];
  const double t = static_cast<double>(t0);

  // Teacher probabilities are constants for the backward pass.
  std::vector<double> teacher_p(static_cast<std::size_t>(b) * c);
  for (int i = 0; i < b; ++i) {
    const float* zt =
        teacher_logits.data->data() + static_cast<std::size_t>(i) * c;
    double mx = static_cast<double>(zt[0]) / t;
    for (int j = 1; j < c; ++j) mx = std::max(mx, static_cast<double>(zt[j]) / t);
    double sum = 0.0;
    for (int j = 0; j < c; ++j)
      sum += std::exp(static_cast<double>(zt[j]) / t - mx);
    for (int j = 0; j < c; ++j)
      teacher_p[static_cast<std::size_t>(i) * c + j] =
          std::exp(static_cast<double>(zt[j]) / t - mx) / sum;
  }

  auto grad_coeff = std::make_shared<std::vector<float>>(
      static_cast<std::size_t>(b) * c);  // (q - p) / (B * t0)
  double total = 0.0;
  for (int i = 0; i < b; ++i) {
    const float* zs =
        student_logits.data->data() + static_cast<std::size_t>(i) * c;
    double mx = static_cast<double>(zs[0]) / t;
    for (int j = 1; j < c; ++j) mx = std::max(mx, static_cast<double>(zs[j]) / t);
    double sum = 0.0;
    for (int j = 0; j < c; ++j)
      sum += std::exp(static_cast<double>(zs[j]) / t - mx);
    const double lse = mx + std::log(sum);
    double row = 0.0;
    for (int j = 0; j < c; ++j) {
      const double p = teacher_p[static_cast<std::size_t>(i) * c + j];
      const double logq = static_cast<double>(zs[j]) / t - lse;
      row -= p * logq;
      const double q = std::exp(logq);
      (*grad_coeff)[static_cast<std::size_t>(i) * c + j] =
          static_cast<float>((q - p) / (static_cast<double>(b) * t));
    }
    total += row;
  }
  Tensor out = make_out({1}, tracks(student_logits));
  (*out.data)[0] = static_cast<float>(total / b);
  attach(out, {student_logits}, [grad_coeff](const Tensor& o) {
    const Tensor& ps = o.node->parents[0];
    if (!ps.requires_grad) return;
    kernels::active().axpy(ps.grad->data(), grad_coeff->data(), (*o.grad)[0],
                           static_cast<int>(ps.numel()));
  });
  return out;
}

void backward(const Tensor& loss) {
  if (loss.numel() != 1)
    throw std::invalid_argument("backward: loss must be scalar, got " +
                                shape_str(loss.shape));
  if (!loss.requires_grad || !loss.grad)
    throw std::invalid_argument(
        "backward: loss is not connected to any tracked parameter");

  std::vector<Tensor> order;
  std::unordered_set<const Node*> visited;
  // Iterative DFS; training graphs can be a few hundred nodes deep.
  struct Frame {
    Tensor t;
    std::size_t next_parent;
  };
  std::vector<Frame> stack;
  if (loss.node && visited.insert(loss.node.get()).second)
    stack.push_back({loss, 0});
  while (!stack.empty()) {
    Frame& f = stack.back();
    const auto& parents = f.t.node->parents;
    if (f.next_parent < parents.size()) {
      const Tensor& p = parents[f.next_parent++];
      if (p.node && visited.insert(p.node.get()).second)
        stack.push_back({p, 0});
    } else {
      order.push_back(f.t);
      stack.pop_back();
    }
  }

  // Fresh propagation: computed tensors restart at zero, leaves accumulate.
  for (Tensor& t : order)
    if (t.grad) std::fill(t.grad->begin(), t.grad->end(), 0.0f);
  (*loss.grad)[0] += 1.0f;
  for (auto it = order.rbegin(); it != order.rend(); ++it)
    it->node->backward(*it);
}

}  // namespace lesa
