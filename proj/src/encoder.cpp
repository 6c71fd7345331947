#include "lesa/encoder.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace lesa {

namespace {

void check_mask(const Tensor& x, const std::vector<std::uint8_t>& mask,
                const char* op) {
  if (static_cast<int>(mask.size()) != x.rows())
    throw std::invalid_argument(std::string(op) + ": mask length " +
                                std::to_string(mask.size()) + " for " +
                                std::to_string(x.rows()) + " positions");
  if (mask.empty() || !mask[0])
    throw std::invalid_argument(std::string(op) +
                                ": position 0 ([CLS]) must be unmasked");
}

Tensor maybe_dropout(const Tensor& x, const ForwardOptions& opt) {
  if (!opt.training || opt.dropout_p <= 0.0f) return x;
  if (!opt.rng)
    throw std::invalid_argument("dropout: training forward needs an rng");
  return dropout(x, opt.dropout_p, *opt.rng, true);
}

}  // namespace

Tensor embed(const std::vector<int>& ids, const EmbeddingTable& table) {
  const int capacity = table.pos_emb.rows();
  if (static_cast<int>(ids.size()) > capacity)
    throw std::invalid_argument("embed: sequence length " +
                                std::to_string(ids.size()) +
                                " exceeds position capacity " +
                                std::to_string(capacity));
  const Tensor tok = gather_rows(table.token_emb, ids);
  const Tensor pos =
      slice_rows(table.pos_emb, 0, static_cast<int>(ids.size()));
  return add(tok, pos);
}

KqvTriple head_kqv(const Tensor& x, const AttentionHeadParams& head) {
  return {matmul(x, head.w_k), matmul(x, head.w_q), matmul(x, head.w_v)};
}

Tensor scores_standard(const Tensor& k, const Tensor& q,
                       const std::vector<std::uint8_t>& mask) {
  check_mask(k, mask, "scores_standard");
  const Tensor raw = matmul(q, transpose(k));
  const float inv_sqrt_d = 1.0f / std::sqrt(static_cast<float>(k.cols()));
  return scale(mask_columns(raw, mask), inv_sqrt_d);
}

Tensor label_cross_attention(const Tensor& x_l, const Tensor& w_q,
                             const Tensor& k_w,
                             const std::vector<std::uint8_t>& token_keep) {
  if (static_cast<int>(token_keep.size()) != k_w.rows())
    throw std::invalid_argument("label_cross_attention: mask length " +
                                std::to_string(token_keep.size()) + " for " +
                                std::to_string(k_w.rows()) + " tokens");
  const Tensor q_l = matmul(x_l, w_q);  // C x d
  return mask_columns(matmul(q_l, transpose(k_w)), token_keep);
}

MergedRow merge_cls_row(const Tensor& s, const Tensor& a_l) {
  if (s.rows() != 1)
    throw std::invalid_argument("merge_cls_row: S must be a single row, got " +
                                shape_str(s.shape));
  if (a_l.cols() != s.cols())
    throw std::invalid_argument("merge_cls_row: column mismatch " +
                                shape_str(s.shape) + " vs " +
                                shape_str(a_l.shape));
  const Tensor stacked[] = {s, a_l};
  const ColumnwiseMax mx = columnwise_max(concat_rows(stacked));
  return {mx.values, mx.argrows};
}

Tensor scores_lesa(const Tensor& k, const Tensor& q, const Tensor& x_l,
                   const Tensor& w_q, const std::vector<std::uint8_t>& mask,
                   bool suppress_label_scores, HeadTrace* trace) {
  check_mask(k, mask, "scores_lesa");
  const int len = k.rows();     // L+1
  const int l = len - 1;        // message tokens
  const Tensor raw = matmul(q, transpose(k));
  const Tensor masked = mask_columns(raw, mask);
  const float inv_sqrt_d = 1.0f / std::sqrt(static_cast<float>(k.cols()));
  if (l == 0) {
    // [CLS]-only sequence: there is no token row to merge into.
    return scale(masked, inv_sqrt_d);
  }

  const Tensor s = slice_block(masked, 0, 1, 1, l);
  std::vector<std::uint8_t> token_keep(mask.begin() + 1, mask.end());
  if (suppress_label_scores)
    token_keep.assign(static_cast<std::size_t>(l), 0);
  const Tensor k_w = slice_rows(k, 1, l);
  const Tensor a_l = label_cross_attention(x_l, w_q, k_w, token_keep);
  const MergedRow merged = merge_cls_row(s, a_l);
  if (trace) {
    trace->s_pre.assign(s.data->begin(), s.data->end());
    trace->s_merged.assign(merged.values.data->begin(),
                           merged.values.data->end());
    trace->winners = merged.winners;
  }
  return scale(replace_block(masked, merged.values, 0, 1), inv_sqrt_d);
}

Tensor attention_block(const Tensor& x, const EncoderLayerParams& layer,
                       const Tensor& x_l, AttentionMode mode,
                       const std::vector<std::uint8_t>& mask,
                       const ForwardOptions& opt, LayerTrace* trace) {
  if (layer.heads.empty())
    throw std::invalid_argument("attention_block: layer has no heads");
  if (mode == AttentionMode::Lesa && !x_l.defined())
    throw std::invalid_argument(
        "attention_block: LESA mode needs a label embedding");
  if (trace) trace->heads.resize(layer.heads.size());

  std::vector<Tensor> head_outputs;
  head_outputs.reserve(layer.heads.size());
  for (std::size_t hi = 0; hi < layer.heads.size(); ++hi) {
    const AttentionHeadParams& head = layer.heads[hi];
    const KqvTriple kqv = head_kqv(x, head);
    HeadTrace* head_trace = trace ? &trace->heads[hi] : nullptr;
    const Tensor scores =
        mode == AttentionMode::Lesa
            ? scores_lesa(kqv.k, kqv.q, x_l, head.w_q, mask,
                          opt.suppress_label_scores, head_trace)
            : scores_standard(kqv.k, kqv.q, mask);
    const Tensor probs = row_softmax(scores);
    if (head_trace) {
      head_trace->cls_row.assign(
          probs.data->begin(), probs.data->begin() + probs.cols());
      if (mode == AttentionMode::Standard) {
        // Standard attention has no merge; record S for both fields.
        const int l = probs.cols() - 1;
        if (l > 0) {
          const Tensor raw = mask_columns(matmul(kqv.q, transpose(kqv.k)), mask);
          head_trace->s_pre.assign(
              raw.data->begin() + 1, raw.data->begin() + 1 + l);
          head_trace->s_merged = head_trace->s_pre;
          head_trace->winners.assign(static_cast<std::size_t>(l), 0);
        }
      }
    }
    head_outputs.push_back(matmul(probs, kqv.v));
  }
  const Tensor concat = concat_cols(head_outputs);
  const Tensor projected = maybe_dropout(matmul(concat, layer.w_out), opt);
  return layer_norm(add(x, projected), layer.ln1.gain, layer.ln1.bias);
}

Tensor ffn_block(const Tensor& u, const EncoderLayerParams& layer,
                 const ForwardOptions& opt) {
  const Tensor hidden = relu(add_bias(matmul(u, layer.w1), layer.b1));
  const Tensor out =
      maybe_dropout(add_bias(matmul(hidden, layer.w2), layer.b2), opt);
  return layer_norm(add(u, out), layer.ln2.gain, layer.ln2.bias);
}

Tensor encoder_forward(const Tensor& x,
                       const std::vector<EncoderLayerParams>& layers,
                       const Tensor& x_l, AttentionMode mode,
                       const std::vector<std::uint8_t>& mask,
                       const ForwardOptions& opt) {
  if (layers.empty())
    throw std::invalid_argument("encoder_forward: need at least one layer");
  if (opt.trace) {
    opt.trace->layers.clear();
    opt.trace->layers.resize(layers.size());
  }
  Tensor h = x;
  for (std::size_t li = 0; li < layers.size(); ++li) {
    LayerTrace* layer_trace = opt.trace ? &opt.trace->layers[li] : nullptr;
    h = attention_block(h, layers[li], x_l, mode, mask, opt, layer_trace);
    h = ffn_block(h, layers[li], opt);
  }
  return h;
}

}  // namespace lesa
