#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "lesa/rng.hpp"

namespace lesa {

class Tensor;

// Tape entry created by a differentiable op. `backward` receives the op's
// output and accumulates into the parents' grad buffers.
struct Node {
  std::vector<Tensor> parents;
  std::function<void(const Tensor&)> backward;
};

// Dense rank-1..3 float tensor, row-major. Value-like: copies share the
// underlying data/grad buffers.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(std::vector<int> shape, bool requires_grad = false);
  static Tensor from_data(std::vector<int> shape, std::vector<float> values,
                          bool requires_grad = false);
  static Tensor full(std::vector<int> shape, float value,
                     bool requires_grad = false);

  bool defined() const { return static_cast<bool>(data); }
  std::size_t numel() const { return data ? data->size() : 0; }
  int rank() const { return static_cast<int>(shape.size()); }
  int rows() const;  // rank-2 only
  int cols() const;  // rank-2 only

  float& at(int i) { return (*data)[static_cast<std::size_t>(i)]; }
  float at(int i) const { return (*data)[static_cast<std::size_t>(i)]; }
  float& at(int r, int c) {
    return (*data)[static_cast<std::size_t>(r) * cols() + c];
  }
  float at(int r, int c) const {
    return (*data)[static_cast<std::size_t>(r) * cols() + c];
  }

  float scalar() const;  // numel()==1
  Tensor detached_copy() const;  // fresh buffers, no tape, no grad

  std::vector<int> shape;
  std::shared_ptr<std::vector<float>> data;
  std::shared_ptr<std::vector<float>> grad;  // allocated iff requires_grad
  bool requires_grad = false;
  std::shared_ptr<Node> node;
};

std::string shape_str(const std::vector<int>& shape);

// Grad recording is on by default; disable it around inference-only forward
// passes. The flag is thread-local, so independently seeded models may train
// on separate threads.
bool grad_enabled();

class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

// ---- differentiable ops -----------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor row_softmax(const Tensor& a);
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                  float epsilon = 1e-5f);
Tensor relu(const Tensor& x);
Tensor dropout(const Tensor& x, float p, Rng& rng, bool training);
Tensor add(const Tensor& a, const Tensor& b);
Tensor add_bias(const Tensor& x, const Tensor& bias);  // bias over rows
Tensor mul(const Tensor& a, const Tensor& b);          // elementwise
Tensor scale(const Tensor& x, float s);
Tensor concat_rows(std::span<const Tensor> parts);
Tensor concat_cols(std::span<const Tensor> parts);
Tensor slice_rows(const Tensor& x, int row0, int count);
Tensor slice_block(const Tensor& x, int row0, int col0, int rows, int cols);
// Copy of x with the block at (row0, col0) overwritten by patch.
Tensor replace_block(const Tensor& x, const Tensor& patch, int row0, int col0);
// Columns with keep[j]==0 are set to -inf (no gradient flows through them).
Tensor mask_columns(const Tensor& x, const std::vector<std::uint8_t>& keep);
Tensor gather_rows(const Tensor& table, const std::vector<int>& ids);
Tensor sum_all(const Tensor& x);

// Per-column max over rows. argrows[j] is the winning row for column j;
// ties pick the smallest row index, and the gradient routes only there.
struct ColumnwiseMax {
  Tensor values;  // 1 x n
  std::vector<int> argrows;
};
ColumnwiseMax columnwise_max(const Tensor& a);

// Mean softmax cross-entropy against hard labels. Optional per-class
// weights (size C); empty means uniform.
Tensor softmax_cross_entropy(const Tensor& logits,
                             const std::vector<int>& labels,
                             const std::vector<float>& class_weights = {});

// Soft-target cross-entropy between teacher and student logits at
// temperature t0, mean over the batch. The teacher side is a constant:
// no gradient flows to teacher_logits.
Tensor distill_loss(const Tensor& teacher_logits, const Tensor& student_logits,
                    float t0);

// Reverse-mode accumulation from a scalar loss. Parameter grads accumulate
// across calls; intermediate grads are reset per call, so two backward
// calls without zeroing exactly double every parameter grad.
void backward(const Tensor& loss);

}  // namespace lesa
