#pragma once

namespace lesa::kernels {

enum class Backend { Auto, Scalar, Avx2 };

// Inner-loop math kernels. Scalar reference implementations always exist;
// an AVX2+FMA variant is selected at runtime when the CPU supports it.
//
// All matrices are row-major float buffers. (m, k, n) always name the
// product dimensions: the output is m x n and k is contracted.
struct Ops {
  const char* name;

  // c = a[m x k] . b[k x n]          (+= into c when accumulate)
  void (*matmul_nn)(float* c, const float* a, const float* b, int m, int k,
                    int n, bool accumulate);
  // c = a[m x k] . b[n x k]^T
  void (*matmul_nt)(float* c, const float* a, const float* b, int m, int k,
                    int n, bool accumulate);
  // c = a[k x m]^T . b[k x n]
  void (*matmul_tn)(float* c, const float* a, const float* b, int m, int k,
                    int n, bool accumulate);

  void (*add)(float* out, const float* a, const float* b, int n);
  void (*axpy)(float* y, const float* x, float alpha, int n);  // y += alpha*x
  void (*scale)(float* out, const float* x, float s, int n);
  void (*relu)(float* out, const float* x, int n);

  // In-place stable softmax over one row (per-row max subtraction).
  // -inf entries map to exactly 0. Returns false when the whole row is -inf.
  bool (*softmax_row)(float* row, int n);

  // out = gain * (x - mean) / sqrt(var + eps) + bias over one row.
  // Population variance. Saves mean and 1/sqrt(var+eps) for the backward pass.
  void (*layernorm_row)(float* out, const float* x, const float* gain,
                        const float* bias, int n, float eps, float* mean_out,
                        float* rstd_out);

  // Standard Adam update with precomputed bias corrections
  // bc1_inv = 1/(1-beta1^t), bc2_inv = 1/(1-beta2^t).
  void (*adam_update)(float* p, const float* g, float* m, float* v, int n,
                      float lr, float beta1, float beta2, float eps,
                      float bc1_inv, float bc2_inv);
};

const Ops& scalar_ops();
bool avx2_supported();  // false when not compiled in or CPU lacks AVX2/FMA
const Ops& avx2_ops();  // only meaningful when avx2_supported()

// Active table. Picked once per process from the LESA_KERNELS environment
// variable (scalar|avx2|auto) and CPU detection; set_backend overrides.
const Ops& active();
void set_backend(Backend b);

}  // namespace lesa::kernels
