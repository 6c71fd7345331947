#pragma once

#include <cstdint>
#include <vector>

#include "lesa/tensor.hpp"

namespace lesa {

struct EmbeddingTable {
  Tensor token_emb;  // V x D
  Tensor pos_emb;    // (max_len+1) x D
};

struct AttentionHeadParams {
  Tensor w_k, w_q, w_v;  // each D x d
};

struct LayerNormParams {
  Tensor gain, bias;  // each D
};

struct EncoderLayerParams {
  std::vector<AttentionHeadParams> heads;
  Tensor w_out;            // (h*d) x D
  Tensor w1, b1, w2, b2;   // D x D_ff, D_ff, D_ff x D, D
  LayerNormParams ln1, ln2;
};

enum class AttentionMode { Standard, Lesa };

// Diagnostics captured during a forward pass; plain copies, no gradients.
struct HeadTrace {
  std::vector<float> s_pre;     // unscaled [CLS]->token scores S (length L)
  std::vector<float> s_merged;  // S' after the label max-merge
  std::vector<int> winners;     // per column: 0 = S kept, k>0 = label k-1 won
  std::vector<float> cls_row;   // post-softmax row 0 (length L+1)
};
struct LayerTrace {
  std::vector<HeadTrace> heads;
};
struct AttentionTrace {
  std::vector<LayerTrace> layers;
};

struct ForwardOptions {
  bool training = false;
  float dropout_p = 0.0f;
  Rng* rng = nullptr;  // required when training with dropout_p > 0
  // Test hook: force every label cross-score to -inf so the merge must
  // reproduce standard attention exactly.
  bool suppress_label_scores = false;
  AttentionTrace* trace = nullptr;
};

// Row i = token_emb[ids[i]] + pos_emb[i].
Tensor embed(const std::vector<int>& ids, const EmbeddingTable& table);

struct KqvTriple {
  Tensor k, q, v;  // each (L+1) x d
};
KqvTriple head_kqv(const Tensor& x, const AttentionHeadParams& head);

// Q*K^T / sqrt(d) with masked key columns at -inf.
Tensor scores_standard(const Tensor& k, const Tensor& q,
                       const std::vector<std::uint8_t>& mask);

// Unscaled label-to-token cross scores (X_l * W_Q) * K_w^T, masked columns
// at -inf. token_keep covers the L message positions (no [CLS]).
Tensor label_cross_attention(const Tensor& x_l, const Tensor& w_q,
                             const Tensor& k_w,
                             const std::vector<std::uint8_t>& token_keep);

// Columnwise max of [S; A_l]; ties keep S (row 0).
struct MergedRow {
  Tensor values;             // 1 x L
  std::vector<int> winners;  // 0 = S, k > 0 = label row k-1
};
MergedRow merge_cls_row(const Tensor& s, const Tensor& a_l);

// Standard scores with row 0, columns 1..L replaced by S'/sqrt(d); rows
// 1..L and the [CLS]->[CLS] entry are bit-identical to scores_standard.
Tensor scores_lesa(const Tensor& k, const Tensor& q, const Tensor& x_l,
                   const Tensor& w_q, const std::vector<std::uint8_t>& mask,
                   bool suppress_label_scores = false, HeadTrace* trace = nullptr);

Tensor attention_block(const Tensor& x, const EncoderLayerParams& layer,
                       const Tensor& x_l, AttentionMode mode,
                       const std::vector<std::uint8_t>& mask,
                       const ForwardOptions& opt, LayerTrace* trace = nullptr);

Tensor ffn_block(const Tensor& u, const EncoderLayerParams& layer,
                 const ForwardOptions& opt);

Tensor encoder_forward(const Tensor& x,
                       const std::vector<EncoderLayerParams>& layers,
                       const Tensor& x_l, AttentionMode mode,
                       const std::vector<std::uint8_t>& mask,
                       const ForwardOptions& opt);

}  // namespace lesa
