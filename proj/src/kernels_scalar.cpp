#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>

#include "lesa/kernels.hpp"

namespace lesa::kernels {
namespace {

void matmul_nn(float* c, const float* a, const float* b, int m, int k, int n,
               bool accumulate) {
  for (int i = 0; i < m; ++i) {
    float* crow = c + static_cast<std::size_t>(i) * n;
    if (!accumulate) std::memset(crow, 0, sizeof(float) * n);
    const float* arow = a + static_cast<std::size_t>(i) * k;
    for (int kk = 0; kk < k; ++kk) {
      const float av = arow[kk];
      const float* brow = b + static_cast<std::size_t>(kk) * n;
      for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

void matmul_nt(float* c, const float* a, const float* b, int m, int k, int n,
               bool accumulate) {
  for (int i = 0; i < m; ++i) {
    const float* arow = a + static_cast<std::size_t>(i) * k;
    float* crow = c + static_cast<std::size_t>(i) * n;
    for (int j = 0; j < n; ++j) {
      const float* brow = b + static_cast<std::size_t>(j) * k;
      float acc = 0.0f;
      for (int kk = 0; kk < k; ++kk) acc += arow[kk] * brow[kk];
      crow[j] = accumulate ? crow[j] + acc : acc;
    }
  }
}

void matmul_tn(float* c, const float* a, const float* b, int m, int k, int n,
               bool accumulate) {
  if (!accumulate) std::memset(c, 0, sizeof(float) * m * n);
  for (int kk = 0; kk < k; ++kk) {
    const float* arow = a + static_cast<std::size_t>(kk) * m;
    const float* brow = b + static_cast<std::size_t>(kk) * n;
    for (int i = 0; i < m; ++i) {
      const float av = arow[i];
      float* crow = c + static_cast<std::size_t>(i) * n;
      for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

void add(float* out, const float* a, const float* b, int n) {
  for (int i = 0; i < n; ++i) out[i] = a[i] + b[i];
}

void axpy(float* y, const float* x, float alpha, int n) {
  for (int i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void scale(float* out, const float* x, float s, int n) {
  for (int i = 0; i < n; ++i) out[i] = x[i] * s;
}

void relu(float* out, const float* x, int n) {
  for (int i = 0; i < n; ++i) out[i] = x[i] > 0.0f ? x[i] : 0.0f;
}

bool softmax_row(float* row, int n) {
  float mx = -std::numeric_limits<float>::infinity();
  for (int i = 0; i < n; ++i) mx = std::max(mx, row[i]);
  if (std::isinf(mx) && mx < 0.0f) return false;
  float sum = 0.0f;
  for (int i = 0; i < n; ++i) {
    // exp(-inf - mx) == 0 exactly, so masked entries stay at zero mass
    const float e = std::exp(row[i] - mx);
    row[i] = e;
    sum += e;
  }
  const float inv = 1.0f / sum;
  for (int i = 0; i < n; ++i) row[i] *= inv;
  return true;
}

void layernorm_row(float* out, const float* x, const float* gain,
                   const float* bias, int n, float eps, float* mean_out,
                   float* rstd_out) {
  float sum = 0.0f;
  for (int i = 0; i < n; ++i) sum += x[i];
  const float mean = sum / static_cast<float>(n);
  float var = 0.0f;
  for (int i = 0; i < n; ++i) {
    const float d = x[i] - mean;
    var += d * d;
  }
  var /= static_cast<float>(n);
  const float rstd = 1.0f / std::sqrt(var + eps);
  for (int i = 0; i < n; ++i) out[i] = gain[i] * ((x[i] - mean) * rstd) + bias[i];
  *mean_out = mean;
  *rstd_out = rstd;
}

void adam_update(float* p, const float* g, float* m, float* v, int n, float lr,
                 float beta1, float beta2, float eps, float bc1_inv,
                 float bc2_inv) {
  for (int i = 0; i < n; ++i) {
    m[i] = beta1 * m[i] + (1.0f - beta1) * g[i];
    v[i] = beta2 * v[i] + (1.0f - beta2) * g[i] * g[i];
    const float mhat = m[i] * bc1_inv;
    const float vhat = v[i] * bc2_inv;
    p[i] -= lr * mhat / (std::sqrt(vhat) + eps);
  }
}

}  // namespace

const Ops& scalar_ops() {
  static const Ops ops = {
      "scalar",  matmul_nn, matmul_nt,   matmul_tn,     add,        axpy,
      scale,     relu,      softmax_row, layernorm_row, adam_update};
  return ops;
}

}  // namespace lesa::kernels
