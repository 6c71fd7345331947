// AVX2+FMA kernel variants. This translation unit is the only one compiled
// with -mavx2 -mfma; it is reached only after runtime CPU detection.
// -ffp-contract=off keeps the compiler from fusing the plain mul/add paths,
// so elementwise kernels stay bit-identical to the scalar reference.

#include "lesa/kernels.hpp"

#if defined(LESA_BUILD_AVX2) && defined(__AVX2__) && defined(__FMA__)

#include <immintrin.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>

namespace lesa::kernels {
namespace {

inline float hsum8(__m256 v) {
  __m128 lo = _mm256_castps256_ps128(v);
  __m128 hi = _mm256_extractf128_ps(v, 1);
  lo = _mm_add_ps(lo, hi);
  lo = _mm_hadd_ps(lo, lo);
  lo = _mm_hadd_ps(lo, lo);
  return _mm_cvtss_f32(lo);
}

void matmul_nn(float* c, const float* a, const float* b, int m, int k, int n,
               bool accumulate) {
  const int n8 = n & ~7;
  for (int i = 0; i < m; ++i) {
    float* crow = c + static_cast<std::size_t>(i) * n;
    if (!accumulate) std::memset(crow, 0, sizeof(float) * n);
    const float* arow = a + static_cast<std::size_t>(i) * k;
    for (int kk = 0; kk < k; ++kk) {
      const __m256 av = _mm256_set1_ps(arow[kk]);
      const float* brow = b + static_cast<std::size_t>(kk) * n;
      int j = 0;
      for (; j < n8; j += 8) {
        __m256 cv = _mm256_loadu_ps(crow + j);
        cv = _mm256_fmadd_ps(av, _mm256_loadu_ps(brow + j), cv);
        _mm256_storeu_ps(crow + j, cv);
      }
      const float as = arow[kk];
      for (; j < n; ++j) crow[j] += as * brow[j];
    }
  }
}

void matmul_nt(float* c, const float* a, const float* b, int m, int k, int n,
               bool accumulate) {
  const int k8 = k & ~7;
  for (int i = 0; i < m; ++i) {
    const float* arow = a + static_cast<std::size_t>(i) * k;
    float* crow = c + static_cast<std::size_t>(i) * n;
    for (int j = 0; j < n; ++j) {
      const float* brow = b + static_cast<std::size_t>(j) * k;
      __m256 accv = _mm256_setzero_ps();
      int kk = 0;
      for (; kk < k8; kk += 8) {
        accv = _mm256_fmadd_ps(_mm256_loadu_ps(arow + kk),
                               _mm256_loadu_ps(brow + kk), accv);
      }
      float acc = hsum8(accv);
      for (; kk < k; ++kk) acc += arow[kk] * brow[kk];
      crow[j] = accumulate ? crow[j] + acc : acc;
    }
  }
}

void matmul_tn(float* c, const float* a, const float* b, int m, int k, int n,
               bool accumulate) {
  if (!accumulate) std::memset(c, 0, sizeof(float) * m * n);
  const int n8 = n & ~7;
  for (int kk = 0; kk < k; ++kk) {
    const float* arow = a + static_cast<std::size_t>(kk) * m;
    const float* brow = b + static_cast<std::size_t>(kk) * n;
    for (int i = 0; i < m; ++i) {
      const __m256 av = _mm256_set1_ps(arow[i]);
      float* crow = c + static_cast<std::size_t>(i) * n;
      int j = 0;
      for (; j < n8; j += 8) {
        __m256 cv = _mm256_loadu_ps(crow + j);
        cv = _mm256_fmadd_ps(av, _mm256_loadu_ps(brow + j), cv);
        _mm256_storeu_ps(crow + j, cv);
      }
      const float as = arow[i];
      for (; j < n; ++j) crow[j] += as * brow[j];
    }
  }
}

void add(float* out, const float* a, const float* b, int n) {
  const int n8 = n & ~7;
  int i = 0;
  for (; i < n8; i += 8)
    _mm256_storeu_ps(out + i, _mm256_add_ps(_mm256_loadu_ps(a + i),
                                            _mm256_loadu_ps(b + i)));
  for (; i < n; ++i) out[i] = a[i] + b[i];
}

void axpy(float* y, const float* x, float alpha, int n) {
  const __m256 av = _mm256_set1_ps(alpha);
  const int n8 = n & ~7;
  int i = 0;
  for (; i < n8; i += 8) {
    const __m256 prod = _mm256_mul_ps(av, _mm256_loadu_ps(x + i));
    _mm256_storeu_ps(y + i, _mm256_add_ps(_mm256_loadu_ps(y + i), prod));
  }
  for (; i < n; ++i) y[i] += alpha * x[i];
}

void scale(float* out, const float* x, float s, int n) {
  const __m256 sv = _mm256_set1_ps(s);
  const int n8 = n & ~7;
  int i = 0;
  for (; i < n8; i += 8)
    _mm256_storeu_ps(out + i, _mm256_mul_ps(_mm256_loadu_ps(x + i), sv));
  for (; i < n; ++i) out[i] = x[i] * s;
}

void relu(float* out, const float* x, int n) {
  const __m256 zero = _mm256_setzero_ps();
  const int n8 = n & ~7;
  int i = 0;
  for (; i < n8; i += 8)
    _mm256_storeu_ps(out + i, _mm256_max_ps(_mm256_loadu_ps(x + i), zero));
  for (; i < n; ++i) out[i] = x[i] > 0.0f ? x[i] : 0.0f;
}

bool softmax_row(float* row, int n) {
  const int n8 = n & ~7;
  float mx = -std::numeric_limits<float>::infinity();
  int i = 0;
  if (n8 > 0) {
    __m256 mv = _mm256_loadu_ps(row);
    for (i = 8; i < n8; i += 8) mv = _mm256_max_ps(mv, _mm256_loadu_ps(row + i));
    alignas(32) float lanes[8];
    _mm256_store_ps(lanes, mv);
    for (float l : lanes) mx = std::max(mx, l);
  }
  for (i = n8; i < n; ++i) mx = std::max(mx, row[i]);
  if (std::isinf(mx) && mx < 0.0f) return false;
  // exp stays scalar (libm) so every backend produces the same exponentials
  float sum = 0.0f;
  for (i = 0; i < n; ++i) {
    const float e = std::exp(row[i] - mx);
    row[i] = e;
    sum += e;
  }
  const __m256 inv = _mm256_set1_ps(1.0f / sum);
  for (i = 0; i < n8; i += 8)
    _mm256_storeu_ps(row + i, _mm256_mul_ps(_mm256_loadu_ps(row + i), inv));
  const float invs = 1.0f / sum;
  for (i = n8; i < n; ++i) row[i] *= invs;
  return true;
}

void layernorm_row(float* out, const float* x, const float* gain,
                   const float* bias, int n, float eps, float* mean_out,
                   float* rstd_out) {
  const int n8 = n & ~7;
  __m256 sv = _mm256_setzero_ps();
  int i = 0;
  for (; i < n8; i += 8) sv = _mm256_add_ps(sv, _mm256_loadu_ps(x + i));
  float sum = hsum8(sv);
  for (; i < n; ++i) sum += x[i];
  const float mean = sum / static_cast<float>(n);

  const __m256 mv = _mm256_set1_ps(mean);
  __m256 vv = _mm256_setzero_ps();
  for (i = 0; i < n8; i += 8) {
    const __m256 d = _mm256_sub_ps(_mm256_loadu_ps(x + i), mv);
    vv = _mm256_fmadd_ps(d, d, vv);
  }
  float var = hsum8(vv);
  for (i = n8; i < n; ++i) {
    const float d = x[i] - mean;
    var += d * d;
  }
  var /= static_cast<float>(n);
  const float rstd = 1.0f / std::sqrt(var + eps);

  const __m256 rv = _mm256_set1_ps(rstd);
  for (i = 0; i < n8; i += 8) {
    const __m256 xn =
        _mm256_mul_ps(_mm256_sub_ps(_mm256_loadu_ps(x + i), mv), rv);
    const __m256 o = _mm256_add_ps(
        _mm256_mul_ps(_mm256_loadu_ps(gain + i), xn), _mm256_loadu_ps(bias + i));
    _mm256_storeu_ps(out + i, o);
  }
  for (i = n8; i < n; ++i)
    out[i] = gain[i] * ((x[i] - mean) * rstd) + bias[i];
  *mean_out = mean;
  *rstd_out = rstd;
}

void adam_update(float* p, const float* g, float* m, float* v, int n, float lr,
                 float beta1, float beta2, float eps, float bc1_inv,
                 float bc2_inv) {
  // mul/add (no fma) so the update is bit-identical to the scalar kernel
  const __m256 b1 = _mm256_set1_ps(beta1);
  const __m256 b1c = _mm256_set1_ps(1.0f - beta1);
  const __m256 b2 = _mm256_set1_ps(beta2);
  const __m256 b2c = _mm256_set1_ps(1.0f - beta2);
  const __m256 lrv = _mm256_set1_ps(lr);
  const __m256 epsv = _mm256_set1_ps(eps);
  const __m256 c1 = _mm256_set1_ps(bc1_inv);
  const __m256 c2 = _mm256_set1_ps(bc2_inv);
  const int n8 = n & ~7;
  int i = 0;
  for (; i < n8; i += 8) {
    const __m256 gv = _mm256_loadu_ps(g + i);
    __m256 mv = _mm256_loadu_ps(m + i);
    __m256 vv = _mm256_loadu_ps(v + i);
    mv = _mm256_add_ps(_mm256_mul_ps(b1, mv), _mm256_mul_ps(b1c, gv));
    vv = _mm256_add_ps(_mm256_mul_ps(b2, vv),
                       _mm256_mul_ps(b2c, _mm256_mul_ps(gv, gv)));
    _mm256_storeu_ps(m + i, mv);
    _mm256_storeu_ps(v + i, vv);
    const __m256 mhat = _mm256_mul_ps(mv, c1);
    const __m256 vhat = _mm256_mul_ps(vv, c2);
    const __m256 denom = _mm256_add_ps(_mm256_sqrt_ps(vhat), epsv);
    const __m256 step = _mm256_div_ps(_mm256_mul_ps(lrv, mhat), denom);
    _mm256_storeu_ps(p + i, _mm256_sub_ps(_mm256_loadu_ps(p + i), step));
  }
  for (; i < n; ++i) {
    m[i] = beta1 * m[i] + (1.0f - beta1) * g[i];
    v[i] = beta2 * v[i] + (1.0f - beta2) * g[i] * g[i];
    const float mhat = m[i] * bc1_inv;
    const float vhat = v[i] * bc2_inv;
    p[i] -= lr * mhat / (std::sqrt(vhat) + eps);
  }
}

}  // namespace

const Ops& avx2_ops() {
  static const Ops ops = {
      "avx2",    matmul_nn, matmul_nt,   matmul_tn,     add,        axpy,
      scale,     relu,      softmax_row, layernorm_row, adam_update};
  return ops;
}

}  // namespace lesa::kernels

#else

namespace lesa::kernels {
const Ops& avx2_ops() { return scalar_ops(); }
}  // namespace lesa::kernels

#endif
