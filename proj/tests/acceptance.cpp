// Acceptance harness: one pass/fail line per criterion, nonzero exit if any
// criterion fails. Run with criterion numbers as arguments to check a subset
// (e.g. `acceptance 5 6 7`).

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "gradcheck.hpp"
#include "lesa/checkpoint.hpp"
#include "lesa/distill.hpp"
#include "ref_math.hpp"
#include "synthetic.hpp"

using lesa::AttentionMode;
using lesa::EncodedExample;
using lesa::ModelConfig;
using lesa::Tensor;
using lesa::TriageModel;
using lesa::Vocab;

namespace {

double now_seconds() {
  return std::chrono::duration<double>(
             std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

std::string fmt(double v, int digits = 4) {
  std::ostringstream ss;
  ss.setf(std::ios::fixed);
  ss.precision(digits);
  ss << v;
  return ss.str();
}

std::string fmt_sci(double v) {
  std::ostringstream ss;
  ss.setf(std::ios::scientific);
  ss.precision(1);
  ss << v;
  return ss.str();
}

// ---- criterion 1: finite-difference gradient suite ----------------------

// Fixed readout weights so matrix-valued outputs reduce to one scalar loss.
double wpat(std::size_t i) { return 0.07 * static_cast<double>(i % 5) - 0.13; }

double wsum(const refmath::Mat& m) {
  double total = 0.0;
  for (std::size_t i = 0; i < m.v.size(); ++i) total += wpat(i) * m.v[i];
  return total;
}

Tensor rand_tensor(std::vector<int> shape, lesa::Rng& rng, float lo = -1.0f,
                   float hi = 1.0f) {
  std::size_t n = 1;
  for (int d : shape) n *= static_cast<std::size_t>(d);
  std::vector<float> v(n);
  for (float& x : v) x = lo + rng.uniform() * (hi - lo);
  return Tensor::from_data(std::move(shape), std::move(v), true);
}

std::vector<double> mirror_of(const Tensor& t) {
  return std::vector<double>(t.data->begin(), t.data->end());
}

refmath::Mat as_mat(const std::vector<double>& buf, int rows, int cols) {
  refmath::Mat m(rows, cols);
  m.v = buf;
  return m;
}

// Runs one op through f32 autodiff and an f64 mirror; returns the worst
// relative error across all gradient-bearing inputs.
template <typename F32, typename F64>
double fd_op(std::vector<Tensor>& ins, std::vector<std::vector<double>>& mirrors,
             F32&& fwd32, F64&& fwd64) {
  for (Tensor& t : ins)
    if (t.requires_grad) std::fill(t.grad->begin(), t.grad->end(), 0.0f);
  const Tensor out = fwd32();
  std::vector<float> w(out.numel());
  for (std::size_t i = 0; i < w.size(); ++i)
    w[i] = static_cast<float>(wpat(i));
  const Tensor loss =
      lesa::sum_all(lesa::mul(out, Tensor::from_data(out.shape, w, false)));
  lesa::backward(loss);

  double worst = 0.0;
  for (std::size_t k = 0; k < ins.size(); ++k) {
    if (!ins[k].requires_grad) continue;
    const std::vector<double> numeric =
        gradcheck::fd_gradient(mirrors[k], fwd64);
    worst = std::max(worst, gradcheck::rel_err(*ins[k].grad, numeric));
  }
  return worst;
}

struct OpResult {
  std::string name;
  double err = 0.0;
};

std::vector<OpResult> run_op_checks() {
  std::vector<OpResult> results;
  const auto record = [&](const char* name, double err) {
    results.push_back({name, err});
  };
  lesa::Rng rng(17);

  {  // matmul
    std::vector<Tensor> ins = {rand_tensor({3, 4}, rng),
                               rand_tensor({4, 2}, rng)};
    std::vector<std::vector<double>> m = {mirror_of(ins[0]), mirror_of(ins[1])};
    record("matmul",
           fd_op(ins, m, [&] { return lesa::matmul(ins[0], ins[1]); },
                 [&] {
                   return wsum(refmath::matmul(as_mat(m[0], 3, 4),
                                               as_mat(m[1], 4, 2)));
                 }));
  }
  {  // transpose
    std::vector<Tensor> ins = {rand_tensor({3, 4}, rng)};
    std::vector<std::vector<double>> m = {mirror_of(ins[0])};
    record("transpose",
           fd_op(ins, m, [&] { return lesa::transpose(ins[0]); },
                 [&] { return wsum(refmath::transpose(as_mat(m[0], 3, 4))); }));
  }
  {  // row_softmax
    std::vector<Tensor> ins = {rand_tensor({3, 4}, rng, -2.0f, 2.0f)};
    std::vector<std::vector<double>> m = {mirror_of(ins[0])};
    record("row_softmax",
           fd_op(ins, m, [&] { return lesa::row_softmax(ins[0]); },
                 [&] {
                   refmath::Mat x = as_mat(m[0], 3, 4);
                   return wsum(refmath::row_softmax(x));
                 }));
  }
  {  // layer_norm
    std::vector<Tensor> ins = {rand_tensor({3, 8}, rng, -2.0f, 2.0f),
                               rand_tensor({8}, rng, 0.5f, 1.5f),
                               rand_tensor({8}, rng, -0.3f, 0.3f)};
    std::vector<std::vector<double>> m = {mirror_of(ins[0]), mirror_of(ins[1]),
                                          mirror_of(ins[2])};
    record("layer_norm",
           fd_op(ins, m,
                 [&] { return lesa::layer_norm(ins[0], ins[1], ins[2]); },
                 [&] {
                   return wsum(refmath::layer_norm(as_mat(m[0], 3, 8), m[1],
                                                   m[2]));
                 }));
  }
  {  // relu, inputs kept away from the kink
    std::vector<float> v(12);
    for (std::size_t i = 0; i < v.size(); ++i)
      v[i] = (i % 2 ? 1.0f : -1.0f) * (0.2f + 0.6f * rng.uniform());
    std::vector<Tensor> ins = {Tensor::from_data({3, 4}, v, true)};
    std::vector<std::vector<double>> m = {mirror_of(ins[0])};
    record("relu", fd_op(ins, m, [&] { return lesa::relu(ins[0]); },
                         [&] {
                           double total = 0.0;
                           for (std::size_t i = 0; i < m[0].size(); ++i)
                             total += wpat(i) * std::max(0.0, m[0][i]);
                           return total;
                         }));
  }
  {  // add + mul + scale + add_bias, composed
    std::vector<Tensor> ins = {rand_tensor({3, 4}, rng),
                               rand_tensor({3, 4}, rng),
                               rand_tensor({4}, rng)};
    std::vector<std::vector<double>> m = {mirror_of(ins[0]), mirror_of(ins[1]),
                                          mirror_of(ins[2])};
    record("add/mul/scale/add_bias",
           fd_op(ins, m,
                 [&] {
                   return lesa::add_bias(
                       lesa::scale(lesa::mul(lesa::add(ins[0], ins[1]), ins[0]),
                                   -1.7f),
                       ins[2]);
                 },
                 [&] {
                   double total = 0.0;
                   for (std::size_t i = 0; i < m[0].size(); ++i)
                     total += wpat(i) * (-1.7 * (m[0][i] + m[1][i]) * m[0][i] +
                                         m[2][i % 4]);
                   return total;
                 }));
  }
  {  // concat_rows
    std::vector<Tensor> ins = {rand_tensor({2, 3}, rng),
                               rand_tensor({3, 3}, rng)};
    std::vector<std::vector<double>> m = {mirror_of(ins[0]), mirror_of(ins[1])};
    record("concat_rows",
           fd_op(ins, m,
                 [&] {
                   const Tensor parts[] = {ins[0], ins[1]};
                   return lesa::concat_rows(parts);
                 },
                 [&] {
                   double total = 0.0;
                   for (std::size_t i = 0; i < 6; ++i)
                     total += wpat(i) * m[0][i];
                   for (std::size_t i = 0; i < 9; ++i)
                     total += wpat(6 + i) * m[1][i];
                   return total;
                 }));
  }
  {  // concat_cols
    std::vector<Tensor> ins = {rand_tensor({3, 2}, rng),
                               rand_tensor({3, 3}, rng)};
    std::vector<std::vector<double>> m = {mirror_of(ins[0]), mirror_of(ins[1])};
    record("concat_cols",
           fd_op(ins, m,
                 [&] {
                   const Tensor parts[] = {ins[0], ins[1]};
                   return lesa::concat_cols(parts);
                 },
                 [&] {
                   double total = 0.0;
                   for (int r = 0; r < 3; ++r) {
                     for (int c = 0; c < 2; ++c)
                       total += wpat(static_cast<std::size_t>(r * 5 + c)) *
                                m[0][static_cast<std::size_t>(r * 2 + c)];
                     for (int c = 0; c < 3; ++c)
                       total += wpat(static_cast<std::size_t>(r * 5 + 2 + c)) *
                                m[1][static_cast<std::size_t>(r * 3 + c)];
                   }
                   return total;
                 }));
  }
  {  // slice_rows
    std::vector<Tensor> ins = {rand_tensor({4, 3}, rng)};
    std::vector<std::vector<double>> m = {mirror_of(ins[0])};
    record("slice_rows",
           fd_op(ins, m, [&] { return lesa::slice_rows(ins[0], 1, 2); },
                 [&] {
                   double total = 0.0;
                   for (std::size_t i = 0; i < 6; ++i)
                     total += wpat(i) * m[0][3 + i];
                   return total;
                 }));
  }
  {  // slice_block
    std::vector<Tensor> ins = {rand_tensor({4, 5}, rng)};
    std::vector<std::vector<double>> m = {mirror_of(ins[0])};
    record("slice_block",
           fd_op(ins, m, [&] { return lesa::slice_block(ins[0], 1, 1, 2, 3); },
                 [&] {
                   double total = 0.0;
                   for (int r = 0; r < 2; ++r)
                     for (int c = 0; c < 3; ++c)
                       total += wpat(static_cast<std::size_t>(r * 3 + c)) *
                                m[0][static_cast<std::size_t>((r + 1) * 5 +
                                                              (c + 1))];
                   return total;
                 }));
  }
  {  // replace_block
    std::vector<Tensor> ins = {rand_tensor({4, 5}, rng),
                               rand_tensor({2, 3}, rng)};
    std::vector<std::vector<double>> m = {mirror_of(ins[0]), mirror_of(ins[1])};
    record("replace_block",
           fd_op(ins, m,
                 [&] { return lesa::replace_block(ins[0], ins[1], 1, 1); },
                 [&] {
                   double total = 0.0;
                   for (int r = 0; r < 4; ++r)
                     for (int c = 0; c < 5; ++c) {
                       const bool patched =
                           r >= 1 && r < 3 && c >= 1 && c < 4;
                       const double v =
                           patched
                               ? m[1][static_cast<std::size_t>((r - 1) * 3 +
                                                               (c - 1))]
                               : m[0][static_cast<std::size_t>(r * 5 + c)];
                       total += wpat(static_cast<std::size_t>(r * 5 + c)) * v;
                     }
                   return total;
                 }));
  }
  {  // mask_columns through a softmax
    std::vector<Tensor> ins = {rand_tensor({3, 4}, rng, -2.0f, 2.0f)};
    std::vector<std::vector<double>> m = {mirror_of(ins[0])};
    const std::vector<std::uint8_t> keep = {1, 0, 1, 1};
    record("mask_columns",
           fd_op(ins, m,
                 [&] {
                   return lesa::row_softmax(lesa::mask_columns(ins[0], keep));
                 },
                 [&] {
                   refmath::Mat x = as_mat(m[0], 3, 4);
                   for (int r = 0; r < 3; ++r)
                     for (int c = 0; c < 4; ++c)
                       if (!keep[static_cast<std::size_t>(c)])
                         x.at(r, c) = -std::numeric_limits<double>::infinity();
                   return wsum(refmath::row_softmax(x));
                 }));
  }
  {  // gather_rows with duplicate ids
    std::vector<Tensor> ins = {rand_tensor({5, 3}, rng)};
    std::vector<std::vector<double>> m = {mirror_of(ins[0])};
    const std::vector<int> ids = {0, 2, 2, 4, 1};
    record("gather_rows",
           fd_op(ins, m, [&] { return lesa::gather_rows(ins[0], ids); },
                 [&] {
                   double total = 0.0;
                   for (std::size_t r = 0; r < ids.size(); ++r)
                     for (std::size_t c = 0; c < 3; ++c)
                       total +=
                           wpat(r * 3 + c) *
                           m[0][static_cast<std::size_t>(ids[r]) * 3 + c];
                   return total;
                 }));
  }
  {  // columnwise_max with clear margins
    std::vector<float> v = {0.1f, 2.0f, -0.4f,  //
                            1.3f, 0.2f, -1.8f,  //
                            0.6f, 0.9f, 0.7f,   //
                            -0.9f, 1.4f, 0.1f};
    std::vector<Tensor> ins = {Tensor::from_data({4, 3}, v, true)};
    std::vector<std::vector<double>> m = {mirror_of(ins[0])};
    record("columnwise_max",
           fd_op(ins, m, [&] { return lesa::columnwise_max(ins[0]).values; },
                 [&] {
                   double total = 0.0;
                   for (int c = 0; c < 3; ++c) {
                     double best = -1e300;
                     for (int r = 0; r < 4; ++r)
                       best = std::max(
                           best, m[0][static_cast<std::size_t>(r * 3 + c)]);
                     total += wpat(static_cast<std::size_t>(c)) * best;
                   }
                   return total;
                 }));
  }
  {  // softmax_cross_entropy with class weights
    std::vector<Tensor> ins = {rand_tensor({3, 3}, rng, -2.0f, 2.0f)};
    std::vector<std::vector<double>> m = {mirror_of(ins[0])};
    const std::vector<int> labels = {0, 2, 1};
    const std::vector<float> cw = {1.5f, 0.5f, 1.0f};
    record("softmax_cross_entropy",
           fd_op(ins, m,
                 [&] {
                   return lesa::softmax_cross_entropy(ins[0], labels, cw);
                 },
                 [&] {
                   return wpat(0) *
                          refmath::cross_entropy(as_mat(m[0], 3, 3), labels,
                                                 {1.5, 0.5, 1.0});
                 }));
  }
  {  // distill_loss; the teacher side stays constant
    Tensor zt = rand_tensor({3, 4}, rng, -2.0f, 2.0f);
    zt.requires_grad = false;
    zt.grad.reset();
    const refmath::Mat zt64 = refmath::from_tensor(zt);
    std::vector<Tensor> ins = {zt, rand_tensor({3, 4}, rng, -2.0f, 2.0f)};
    std::vector<std::vector<double>> m = {mirror_of(ins[0]), mirror_of(ins[1])};
    record("distill_loss",
           fd_op(ins, m, [&] { return lesa::distill_loss(ins[0], ins[1], 2.5f); },
                 [&] {
                   return wpat(0) *
                          refmath::distill(zt64, as_mat(m[1], 3, 4), 2.5);
                 }));
  }
  return results;
}

ModelConfig tiny_config(AttentionMode mode) {
  ModelConfig cfg;
  cfg.layers = 2;
  cfg.dim = 8;
  cfg.heads = 2;
  cfg.head_dim = 4;
  cfg.ffn_dim = 16;
  cfg.max_len = 6;
  cfg.dropout = 0.0f;
  cfg.mode = mode;
  return cfg;
}

// Large, well-separated draws keep every ReLU and max-merge away from its
// kink so finite differences stay on one smooth branch.
void randomize_for_gradcheck(TriageModel& model, lesa::Rng& rng) {
  for (lesa::Parameter& p : lesa::parameters(model)) {
    std::vector<float>& v = *p.value.data;
    if (p.name.find("ln1.gain") != std::string::npos ||
        p.name.find("ln2.gain") != std::string::npos) {
      for (float& x : v) x = 1.0f + rng.normal(0.0f, 0.1f);
    } else if (p.name.find("ffn.b1") != std::string::npos) {
      for (std::size_t i = 0; i < v.size(); ++i)
        v[i] = (i % 2 ? 0.5f : -0.5f) + rng.normal(0.0f, 0.05f);
    } else if (p.name.find("ffn.w1") != std::string::npos) {
      for (float& x : v) x = rng.normal(0.0f, 0.05f);
    } else if (p.name.find("bias") != std::string::npos ||
               p.name.find(".b") != std::string::npos) {
      for (float& x : v) x = rng.normal(0.0f, 0.1f);
    } else {
      for (float& x : v) x = rng.normal(0.0f, 0.3f);
    }
  }
}

// Full-model FD check (2 layers, D=8, d=4, h=2, 3-token messages, C=3).
// Returns the worst per-parameter relative error.
double model_gradcheck(AttentionMode mode) {
  const Vocab vocab = lesa::build_vocab(
      {"chestpain breathless urgent", "dizzy headache mild",
       "routine refill question"},
      1);
  const std::vector<std::pair<std::string, int>> rows = {
      {"dizzy headache mild", 0},
      {"routine refill question", 1},
      {"chestpain breathless urgent", 2}};

  for (std::uint64_t seed = 100; seed < 140; ++seed) {
    lesa::Rng rng(seed);
    TriageModel model =
        lesa::init_model(tiny_config(mode), {"a", "b", "c"}, vocab, {}, rng);
    randomize_for_gradcheck(model, rng);

    std::vector<EncodedExample> batch;
    std::vector<int> labels;
    for (const auto& [text, label] : rows) {
      EncodedExample ex = lesa::encode(text, vocab, model.config.max_len);
      ex.label = label;
      labels.push_back(label);
      batch.push_back(std::move(ex));
    }

    refmath::ModelRef ref = refmath::ModelRef::from(model);
    ref.reset_gap_tracking();
    ref.loss(batch);
    if (std::getenv("ACCEPTANCE_DEBUG"))
      std::cerr << "seed " << seed << " relu_gap " << ref.min_relu_gap
                << " merge_gap " << ref.min_merge_gap << "\n";
    // Margins sized for the h=1e-4 step below: a one-parameter nudge moves
    // any pre-activation or merge score by well under these gaps.
    if (ref.min_relu_gap < 1e-3 || ref.min_merge_gap < 5e-3)
      continue;  // too close to a kink; redraw

    const Tensor logits = lesa::forward_logits(model, batch);
    const Tensor loss = lesa::softmax_cross_entropy(logits, labels);
    lesa::backward(loss);

    double worst = 0.0;
    for (const lesa::Parameter& p : lesa::parameters(model)) {
      std::vector<double>& buf = ref.params.at(p.name);
      const std::vector<double> numeric =
          gradcheck::fd_gradient(buf, [&]() { return ref.loss(batch); }, 1e-4);
      const double err = gradcheck::rel_err(*p.value.grad, numeric);
      if (std::getenv("ACCEPTANCE_DEBUG") && err > 1e-3)
        std::cerr << "  param " << p.name << " rel err " << err << "\n";
      worst = std::max(worst, err);
    }
    return worst;
  }
  return 1.0;  // no margin-safe draw found: report as a failure
}

bool criterion1(std::string& detail) {
  const double t0 = now_seconds();
  const std::vector<OpResult> ops = run_op_checks();
  double worst_op = 0.0;
  std::string worst_name;
  bool ok = true;
  for (const OpResult& r : ops) {
    if (r.err > worst_op) {
      worst_op = r.err;
      worst_name = r.name;
    }
    if (!(r.err < 1e-3)) ok = false;
  }
  const double lesa_err = model_gradcheck(AttentionMode::Lesa);
  const double std_err = model_gradcheck(AttentionMode::Standard);
  const double elapsed = now_seconds() - t0;
  ok = ok && lesa_err < 1e-3 && std_err < 1e-3 && elapsed < 30.0;
  detail = std::to_string(ops.size()) + " op checks worst " +
           fmt_sci(worst_op) + " (" + worst_name + "); full model " +
           fmt_sci(lesa_err) + " lesa / " + fmt_sci(std_err) + " standard; " +
           fmt(elapsed, 1) + " s (< 30 s)";
  return ok;
}

// ---- criterion 2: reduction equivalence ----------------------------------

bool criterion2(std::string& detail) {
  lesa::Rng rng(23);
  std::vector<std::string> tokens = {"[PAD]", "[CLS]", "[UNK]"};
  for (int i = 0; i < 12; ++i) tokens.push_back("t" + std::to_string(i));
  const Vocab vocab = Vocab::from_tokens(tokens);

  double max_diff = 0.0;
  long long merges = 0;
  for (int trial = 0; trial < 100; ++trial) {
    ModelConfig cfg = tiny_config(AttentionMode::Lesa);
    cfg.layers = 1 + trial % 3;
    cfg.max_len = 8;
    lesa::Rng init_rng(static_cast<std::uint64_t>(1000 + trial));
    TriageModel model =
        lesa::init_model(cfg, {"a", "b", "c"}, vocab, {}, init_rng);
    // Boost the label embedding so the unsuppressed merge genuinely engages.
    for (float& v : *model.label_embedding.data) v *= 25.0f;

    TriageModel standard = model;
    standard.config.mode = AttentionMode::Standard;
    standard.label_embedding = Tensor();

    std::vector<EncodedExample> batch;
    for (int b = 0; b < 2; ++b) {
      EncodedExample ex;
      const int live = 1 + rng.uniform_int(cfg.max_len);
      ex.ids.assign(static_cast<std::size_t>(cfg.max_len) + 1, Vocab::kPad);
      ex.mask.assign(static_cast<std::size_t>(cfg.max_len) + 1, 0);
      ex.ids[0] = Vocab::kCls;
      ex.mask[0] = 1;
      for (int j = 1; j <= live; ++j) {
        ex.ids[static_cast<std::size_t>(j)] =
            3 + rng.uniform_int(vocab.size() - 3);
        ex.mask[static_cast<std::size_t>(j)] = 1;
      }
      ex.label = 0;
      batch.push_back(std::move(ex));
    }

    lesa::NoGradGuard no_grad;
    lesa::ForwardOptions suppressed;
    suppressed.suppress_label_scores = true;
    const Tensor za = lesa::forward_logits(model, batch, suppressed);
    const Tensor zb = lesa::forward_logits(standard, batch);
    for (std::size_t i = 0; i < za.data->size(); ++i)
      max_diff = std::max(max_diff,
                          std::abs(static_cast<double>((*za.data)[i]) -
                                   static_cast<double>((*zb.data)[i])));

    std::vector<lesa::AttentionTrace> traces;
    lesa::forward_logits(model, batch, {}, &traces);
    for (const lesa::AttentionTrace& trace : traces)
      for (const lesa::LayerTrace& layer : trace.layers)
        for (const lesa::HeadTrace& head : layer.heads) {
          if (head.s_pre.size() != head.s_merged.size()) return false;
          for (std::size_t j = 0; j < head.s_pre.size(); ++j)
            if (head.s_merged[j] < head.s_pre[j]) {
              detail = "S' < S at trial " + std::to_string(trial);
              return false;
            }
          for (int w : head.winners)
            if (w != 0) ++merges;
        }
  }
  detail = "100 models: max |suppressed-lesa - standard| " +
           fmt_sci(max_diff) + " (<= 1e-6); S' >= S everywhere, " +
           std::to_string(merges) + " label wins";
  return max_diff <= 1e-6 && merges > 0;
}

// ---- criterion 3: distillation identities --------------------------------

bool criterion3(std::string& detail) {
  lesa::Rng rng(31);
  double max_eq_err = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const int b = 1 + rng.uniform_int(4);
    const int c = 2 + rng.uniform_int(5);
    std::vector<float> vals(static_cast<std::size_t>(b * c));
    for (float& v : vals) v = rng.uniform() * 6.0f - 3.0f;
    const Tensor z = Tensor::from_data({b, c}, vals, false);
    double entropy = 0.0;
    for (int i = 0; i < b; ++i) {
      std::vector<double> row;
      for (int j = 0; j < c; ++j)
        row.push_back(static_cast<double>(z.at(i, j)));
      entropy += refmath::entropy(row, 1.0);
    }
    entropy /= b;
    max_eq_err = std::max(
        max_eq_err,
        std::abs(static_cast<double>(lesa::distill_loss(z, z, 1.0f).scalar()) -
                 entropy));
  }

  long long gibbs_violations = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const int b = 1 + rng.uniform_int(4);
    const int c = 2 + rng.uniform_int(5);
    const float t0 = 0.5f + rng.uniform() * 3.5f;
    std::vector<float> zt(static_cast<std::size_t>(b * c));
    std::vector<float> zs(static_cast<std::size_t>(b * c));
    for (float& v : zt) v = rng.uniform() * 6.0f - 3.0f;
    for (float& v : zs) v = rng.uniform() * 6.0f - 3.0f;
    const Tensor tt = Tensor::from_data({b, c}, zt, false);
    const Tensor ts = Tensor::from_data({b, c}, zs, false);
    double entropy = 0.0;
    for (int i = 0; i < b; ++i) {
      std::vector<double> row;
      for (int j = 0; j < c; ++j)
        row.push_back(static_cast<double>(tt.at(i, j)));
      entropy += refmath::entropy(row, static_cast<double>(t0));
    }
    entropy /= b;
    if (static_cast<double>(lesa::distill_loss(tt, ts, t0).scalar()) <
        entropy - 1e-9)
      ++gibbs_violations;
  }

  // Full-copy student: step-0 objective equals the mean teacher entropy.
  const Vocab vocab = lesa::build_vocab(
      {"chestpain breathless urgent stuff", "dizzy headache mild words",
       "routine refill question note"},
      1);
  lesa::Rng init_rng(47);
  const TriageModel teacher = lesa::init_model(
      tiny_config(AttentionMode::Lesa), {"a", "b", "c"}, vocab, {}, init_rng);
  TriageModel student = lesa::init_student(teacher, teacher.config.layers);
  std::vector<EncodedExample> data;
  for (const char* text :
       {"chestpain breathless", "dizzy headache mild", "routine refill",
        "urgent stuff", "question note", "mild words"}) {
    EncodedExample ex = lesa::encode(text, vocab, teacher.config.max_len);
    ex.label = 0;
    data.push_back(std::move(ex));
  }
  lesa::DistillConfig dcfg;
  dcfg.student_layers = teacher.config.layers;
  dcfg.temperature = 1.0f;
  dcfg.hyper.epochs = 0;
  dcfg.hyper.batch_size = 4;
  const double initial =
      lesa::distill_train(teacher, student, data, dcfg).initial_loss;
  double teacher_entropy = 0.0;
  {
    lesa::NoGradGuard no_grad;
    const Tensor zt = lesa::forward_logits(teacher, data);
    for (int i = 0; i < zt.shape[0]; ++i) {
      std::vector<double> row;
      for (int j = 0; j < zt.shape[1]; ++j)
        row.push_back(static_cast<double>(zt.at(i, j)));
      teacher_entropy += refmath::entropy(row, 1.0);
    }
    teacher_entropy /= zt.shape[0];
  }
  const double copy_err = std::abs(initial - teacher_entropy);

  detail = "self-distillation vs entropy: max err " + fmt_sci(max_eq_err) +
           " over 1000 draws; Gibbs violations " +
           std::to_string(gibbs_violations) + "/1000; full-copy step-0 err " +
           fmt_sci(copy_err);
  return max_eq_err < 1e-6 && gibbs_violations == 0 && copy_err < 1e-6;
}

// ---- criterion 4: metrics oracle -----------------------------------------

bool criterion4(std::string& detail) {
  lesa::Rng rng(41);
  double max_err = 0.0;
  long long zero_division_cases = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const int c = 1 + rng.uniform_int(6);
    const int n = 1 + rng.uniform_int(40);
    std::vector<int> y_true(static_cast<std::size_t>(n));
    std::vector<int> y_pred(static_cast<std::size_t>(n));
    for (int& v : y_true) v = rng.uniform_int(c);
    for (int& v : y_pred) v = rng.uniform_int(c);

    const lesa::MacroMetrics got =
        lesa::macro_metrics(lesa::confusion(y_true, y_pred, c));

    // Brute-force counting oracle straight off the label vectors.
    double sp = 0.0, sr = 0.0, sf = 0.0;
    long long correct = 0;
    for (int i = 0; i < n; ++i)
      if (y_true[static_cast<std::size_t>(i)] ==
          y_pred[static_cast<std::size_t>(i)])
        ++correct;
    for (int k = 0; k < c; ++k) {
      long long tp = 0, fp = 0, fn = 0;
      for (int i = 0; i < n; ++i) {
        const int t = y_true[static_cast<std::size_t>(i)];
        const int p = y_pred[static_cast<std::size_t>(i)];
        if (t == k && p == k) ++tp;
        if (t != k && p == k) ++fp;
        if (t == k && p != k) ++fn;
      }
      if (tp + fp == 0 || tp + fn == 0) ++zero_division_cases;
      const double prec = tp + fp > 0 ? double(tp) / double(tp + fp) : 0.0;
      const double rec = tp + fn > 0 ? double(tp) / double(tp + fn) : 0.0;
      const double f1 =
          prec + rec > 0.0 ? 2.0 * prec * rec / (prec + rec) : 0.0;
      const lesa::ClassMetrics& cls = got.per_class[static_cast<std::size_t>(k)];
      max_err = std::max({max_err, std::abs(cls.precision - prec),
                          std::abs(cls.recall - rec), std::abs(cls.f1 - f1)});
      sp += prec;
      sr += rec;
      sf += f1;
    }
    max_err = std::max({max_err, std::abs(got.macro_precision - sp / c),
                        std::abs(got.macro_recall - sr / c),
                        std::abs(got.macro_f1 - sf / c),
                        std::abs(got.accuracy - double(correct) / n)});
  }
  detail = "1000 prediction sets: max |library - oracle| " + fmt_sci(max_err) +
           " (<= 1e-12), " + std::to_string(zero_division_cases) +
           " zero-division class cases exercised";
  return max_err <= 1e-12 && zero_division_cases > 0;
}

// ---- criteria 5-7: the synthetic keyword experiment -----------------------

struct SynthState {
  bool ready = false;
  Vocab vocab;
  std::vector<EncodedExample> train, test;
  std::vector<TriageModel> lesa_models;
  std::vector<TriageModel> students;
  std::vector<double> lesa_f1, std_f1, student_f1;
  double train_seconds = 0.0;
  double distill_seconds = 0.0;
};

ModelConfig desk_config(AttentionMode mode) {
  ModelConfig cfg;
  cfg.layers = 4;
  cfg.dim = 64;
  cfg.heads = 4;
  cfg.head_dim = 16;
  cfg.ffn_dim = 128;
  cfg.max_len = 44;
  cfg.dropout = 0.1f;
  cfg.mode = mode;
  return cfg;
}

const std::vector<std::uint64_t> kSeeds = {1, 2, 3, 4, 5};

SynthState& synth_state() {
  static SynthState state;
  if (state.ready) return state;

  const lesa::LabeledDataset dataset = synth::make_dataset(1500, 7);
  lesa::Rng split_rng(101);
  lesa::SplitResult split = lesa::stratified_split(dataset, 0.2f, split_rng);
  std::vector<std::string> texts;
  for (const lesa::LabeledExample& ex : split.train.examples)
    texts.push_back(ex.text);
  state.vocab = lesa::build_vocab(texts, 1);
  state.train = lesa::encode_dataset(split.train, state.vocab, 44);
  state.test = lesa::encode_dataset(split.test, state.vocab, 44);

  const double t0 = now_seconds();
  for (const std::uint64_t seed : kSeeds) {
    for (const AttentionMode mode :
         {AttentionMode::Lesa, AttentionMode::Standard}) {
      lesa::Rng rng(seed);
      TriageModel model = lesa::init_model(
          desk_config(mode), synth::labels(), state.vocab,
          mode == AttentionMode::Lesa ? synth::keyword_map()
                                      : lesa::KeywordMap{},
          rng);
      lesa::TrainHyper hyper;
      hyper.lr = 1e-3f;
      hyper.epochs = 8;
      hyper.batch_size = 16;
      hyper.seed = seed;
      hyper.inverse_freq_weights = true;  // 3.4x weight on the rare class
      lesa::train_supervised(model, state.train, nullptr, hyper);
      const double f1 = lesa::evaluate(model, state.test).metrics.macro_f1;
      if (mode == AttentionMode::Lesa) {
        state.lesa_f1.push_back(f1);
        state.lesa_models.push_back(std::move(model));
      } else {
        state.std_f1.push_back(f1);
      }
    }
  }
  state.train_seconds = now_seconds() - t0;
  state.ready = true;
  return state;
}

double mean_of(const std::vector<double>& v) {
  double total = 0.0;
  for (double x : v) total += x;
  return total / static_cast<double>(v.size());
}

std::string join4(const std::vector<double>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ",";
    out += fmt(v[i], 3);
  }
  return out;
}

bool criterion5(std::string& detail) {
  SynthState& s = synth_state();
  const double lesa_mean = mean_of(s.lesa_f1);
  const double std_mean = mean_of(s.std_f1);
  detail = "LESA macro F1 " + fmt(lesa_mean, 4) + " [" + join4(s.lesa_f1) +
           "], Standard " + fmt(std_mean, 4) + " [" + join4(s.std_f1) +
           "]; " + fmt(s.train_seconds, 1) + " s (< 600 s)";
  return lesa_mean >= 0.95 && lesa_mean >= std_mean - 0.02 &&
         s.train_seconds < 600.0;
}

void ensure_students(SynthState& s) {
  if (!s.students.empty()) return;
  const double t0 = now_seconds();
  for (std::size_t i = 0; i < kSeeds.size(); ++i) {
    lesa::DistillConfig dcfg;
    dcfg.student_layers = 2;
    dcfg.temperature = 2.0f;
    dcfg.hard_label_weight = 0.0f;
    dcfg.init_from_teacher = true;
    dcfg.hyper.lr = 1e-3f;
    dcfg.hyper.epochs = 2;
    dcfg.hyper.batch_size = 16;
    dcfg.hyper.seed = kSeeds[i];
    lesa::Rng rng(kSeeds[i]);
    TriageModel student = lesa::make_student(s.lesa_models[i], dcfg, rng);
    lesa::distill_train(s.lesa_models[i], student, s.train, dcfg);
    s.student_f1.push_back(
        lesa::evaluate(student, s.test).metrics.macro_f1);
    s.students.push_back(std::move(student));
  }
  s.distill_seconds = now_seconds() - t0;
}

bool criterion6(std::string& detail) {
  SynthState& s = synth_state();
  ensure_students(s);
  const double teacher_mean = mean_of(s.lesa_f1);
  const double student_mean = mean_of(s.student_f1);
  const double retention = student_mean / teacher_mean;
  detail = "teacher macro F1 " + fmt(teacher_mean, 4) + ", 2-layer student " +
           fmt(student_mean, 4) + " [" + join4(s.student_f1) +
           "]; retention " + fmt(retention, 4) + " (>= 0.95); " +
           fmt(s.distill_seconds, 1) + " s";
  return retention >= 0.95;
}

bool criterion7(std::string& detail) {
  SynthState& s = synth_state();
  ensure_students(s);
  const TriageModel& teacher = s.lesa_models[0];
  const TriageModel& student = s.students[0];

  const long long teacher_count = lesa::param_count(teacher);
  const long long student_count = lesa::param_count(student);
  const long long teacher_formula = lesa::closed_form_param_count(
      teacher.config, teacher.vocab.size(), teacher.num_classes());
  const long long student_formula = lesa::closed_form_param_count(
      student.config, student.vocab.size(), student.num_classes());
  const bool counts_ok =
      teacher_count == teacher_formula && student_count == student_formula;

  // Batch-1 pass over the whole synthetic test set, teacher vs student.
  lesa::NoGradGuard no_grad;
  for (int i = 0; i < 3; ++i) {  // warm-up
    lesa::forward_logits(teacher, {s.test[static_cast<std::size_t>(i)]});
    lesa::forward_logits(student, {s.test[static_cast<std::size_t>(i)]});
  }
  const double t0 = now_seconds();
  for (const EncodedExample& ex : s.test) lesa::forward_logits(teacher, {ex});
  const double teacher_time = now_seconds() - t0;
  const double t1 = now_seconds();
  for (const EncodedExample& ex : s.test) lesa::forward_logits(student, {ex});
  const double student_time = now_seconds() - t1;

  detail = "params " + std::to_string(teacher_count) + " -> " +
           std::to_string(student_count) + " (x" +
           fmt(double(student_count) / double(teacher_count), 3) +
           "), closed form " + (counts_ok ? "exact" : "MISMATCH") +
           "; batch-1 " + fmt(teacher_time, 2) + " s -> " +
           fmt(student_time, 2) + " s over " + std::to_string(s.test.size()) +
           " examples";
  return counts_ok && student_time < teacher_time;
}

// ---- criterion 8: pipeline round-trips ------------------------------------

bool criterion8(std::string& detail) {
  namespace fs = std::filesystem;

  // Checkpoint bit-identity.
  const Vocab vocab = lesa::build_vocab(
      {"chestpain breathless urgent stuff", "dizzy headache mild words",
       "routine refill question note"},
      1);
  lesa::Rng rng(53);
  const TriageModel model =
      lesa::init_model(tiny_config(AttentionMode::Lesa), {"a", "b", "c"},
                       vocab, {{"c", {"chestpain"}}}, rng);
  const fs::path dir = fs::temp_directory_path() / "lesa_acceptance";
  fs::create_directories(dir);
  const std::string p1 = (dir / "a.ckpt").string();
  const std::string p2 = (dir / "b.ckpt").string();
  lesa::save_checkpoint(model, p1);
  const TriageModel loaded = lesa::load_checkpoint(p1);
  lesa::save_checkpoint(loaded, p2);
  const auto read_all = [](const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in),
                       std::istreambuf_iterator<char>());
  };
  bool ckpt_ok = read_all(p1) == read_all(p2) && !read_all(p1).empty();
  const auto pa = lesa::parameters(model);
  const auto pb = lesa::parameters(loaded);
  ckpt_ok = ckpt_ok && pa.size() == pb.size();
  for (std::size_t i = 0; ckpt_ok && i < pa.size(); ++i)
    ckpt_ok = pa[i].name == pb[i].name &&
              std::memcmp(pa[i].value.data->data(), pb[i].value.data->data(),
                          pa[i].value.numel() * sizeof(float)) == 0;

  // Encode/vocab round-trip.
  bool encode_ok = true;
  {
    const std::vector<std::string> toks = lesa::tokenize("Chestpain, mild!");
    const EncodedExample ex = lesa::encode("Chestpain, mild!", vocab, 8);
    encode_ok = ex.ids[0] == Vocab::kCls && ex.mask[0] == 1;
    for (std::size_t i = 0; i < toks.size(); ++i) {
      const int id = ex.ids[i + 1];
      const std::string& back =
          vocab.id_to_token[static_cast<std::size_t>(id)];
      const bool known = vocab.token_to_id.count(toks[i]) > 0;
      encode_ok = encode_ok && (known ? back == toks[i] : id == Vocab::kUnk);
      encode_ok = encode_ok && ex.mask[i + 1] == 1;
    }
    for (std::size_t i = toks.size() + 1; i < ex.ids.size(); ++i)
      encode_ok = encode_ok && ex.ids[i] == Vocab::kPad && ex.mask[i] == 0;
    const Vocab rebuilt = Vocab::from_tokens(vocab.id_to_token);
    encode_ok = encode_ok && rebuilt.id_to_token == vocab.id_to_token;
    for (const auto& [token, id] : vocab.token_to_id)
      encode_ok = encode_ok && rebuilt.id_of(token) == id;
  }

  // Stratified split on the reference class counts.
  bool split_ok = true;
  int max_dev_milli = 0;
  {
    lesa::LabeledDataset data;
    data.label_names = {"a", "b", "c"};
    const int counts[3] = {631, 955, 170};
    for (int c = 0; c < 3; ++c)
      for (int i = 0; i < counts[c]; ++i)
        data.examples.push_back({"msg " + std::to_string(i), c});
    for (const std::uint64_t seed : {1ull, 7ull, 42ull}) {
      lesa::Rng split_rng(seed);
      const lesa::SplitResult split =
          lesa::stratified_split(data, 0.2f, split_rng);
      const std::vector<int> test_counts = split.test.class_counts();
      const std::vector<int> train_counts = split.train.class_counts();
      for (int c = 0; c < 3; ++c) {
        const double want = 0.2 * counts[c];
        const double dev =
            std::abs(test_counts[static_cast<std::size_t>(c)] - want);
        max_dev_milli = std::max(max_dev_milli,
                                 static_cast<int>(std::lround(dev * 1000)));
        split_ok = split_ok && dev <= 1.0;
        split_ok = split_ok &&
                   train_counts[static_cast<std::size_t>(c)] +
                           test_counts[static_cast<std::size_t>(c)] ==
                       counts[c];
      }
    }
  }

  detail = std::string("checkpoint bytes ") +
           (ckpt_ok ? "identical" : "DIFFER") + "; encode/vocab round-trip " +
           (encode_ok ? "exact" : "BROKEN") +
           "; split 631/955/170 max deviation " +
           fmt(max_dev_milli / 1000.0, 3) + " examples (<= 1)";
  return ckpt_ok && encode_ok && split_ok;
}

}  // namespace

int main(int argc, char** argv) {
  struct Criterion {
    int id;
    const char* name;
    bool (*run)(std::string&);
  };
  const Criterion criteria[] = {
      {1, "gradient suite", criterion1},
      {2, "reduction equivalence", criterion2},
      {3, "distillation identities", criterion3},
      {4, "metrics oracle", criterion4},
      {5, "synthetic keyword experiment", criterion5},
      {6, "distillation retention", criterion6},
      {7, "compression accounting", criterion7},
      {8, "pipeline round-trips", criterion8},
  };

  std::vector<int> wanted;
  for (int i = 1; i < argc; ++i) wanted.push_back(std::atoi(argv[i]));

  bool all_ok = true;
  for (const Criterion& c : criteria) {
    if (!wanted.empty() &&
        std::find(wanted.begin(), wanted.end(), c.id) == wanted.end())
      continue;
    std::string detail;
    bool ok = false;
    try {
      ok = c.run(detail);
    } catch (const std::exception& e) {
      detail = std::string("exception: ") + e.what();
    }
    std::cout << (ok ? "[PASS]" : "[FAIL]") << " criterion " << c.id << ": "
              << c.name << " — " << detail << "\n";
    all_ok = all_ok && ok;
  }
  return all_ok ? 0 : 1;
}
