#pragma once

// Double-precision reference implementations, written as plain loops with no
// dependence on the library kernels. Tests use these as independent oracles
// for values and finite-difference gradients.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "lesa/model.hpp"

namespace refmath {

struct Mat {
  int rows = 0, cols = 0;
  std::vector<double> v;

  Mat() = default;
  Mat(int r, int c) : rows(r), cols(c), v(static_cast<std::size_t>(r) * c) {}

  double& at(int i, int j) { return v[static_cast<std::size_t>(i) * cols + j]; }
  double at(int i, int j) const {
    return v[static_cast<std::size_t>(i) * cols + j];
  }
};

inline Mat from_tensor(const lesa::Tensor& t) {
  Mat m;
  if (t.rank() == 2) {
    m.rows = t.shape[0];
    m.cols = t.shape[1];
  } else if (t.rank() == 1) {
    m.rows = 1;
    m.cols = t.shape[0];
  } else {
    throw std::invalid_argument("from_tensor: rank 1 or 2 only");
  }
  m.v.assign(t.data->begin(), t.data->end());
  return m;
}

inline Mat matmul(const Mat& a, const Mat& b) {
  if (a.cols != b.rows) throw std::invalid_argument("ref matmul shape");
  Mat c(a.rows, b.cols);
  for (int i = 0; i < a.rows; ++i)
    for (int j = 0; j < b.cols; ++j) {
      double acc = 0.0;
      for (int k = 0; k < a.cols; ++k) acc += a.at(i, k) * b.at(k, j);
      c.at(i, j) = acc;
    }
  return c;
}

inline Mat transpose(const Mat& a) {
  Mat c(a.cols, a.rows);
  for (int i = 0; i < a.rows; ++i)
    for (int j = 0; j < a.cols; ++j) c.at(j, i) = a.at(i, j);
  return c;
}

inline void softmax_row_inplace(double* row, int n) {
  double mx = -std::numeric_limits<double>::infinity();
  for (int i = 0; i < n; ++i) mx = std::max(mx, row[i]);
  if (std::isinf(mx) && mx < 0.0)
    throw std::domain_error("ref softmax: fully masked row");
  double sum = 0.0;
  for (int i = 0; i < n; ++i) {
    row[i] = std::exp(row[i] - mx);
    sum += row[i];
  }
  for (int i = 0; i < n; ++i) row[i] /= sum;
}

inline Mat row_softmax(Mat a) {
  for (int i = 0; i < a.rows; ++i)
    softmax_row_inplace(a.v.data() + static_cast<std::size_t>(i) * a.cols,
                        a.cols);
  return a;
}

inline Mat layer_norm(const Mat& x, const std::vector<double>& gain,
                      const std::vector<double>& bias, double eps = 1e-5) {
  Mat out(x.rows, x.cols);
  for (int i = 0; i < x.rows; ++i) {
    double mean = 0.0;
    for (int j = 0; j < x.cols; ++j) mean += x.at(i, j);
    mean /= x.cols;
    double var = 0.0;
    for (int j = 0; j < x.cols; ++j) {
      const double d = x.at(i, j) - mean;
      var += d * d;
    }
    var /= x.cols;
    const double rstd = 1.0 / std::sqrt(var + eps);
    for (int j = 0; j < x.cols; ++j)
      out.at(i, j) =
          gain[static_cast<std::size_t>(j)] * ((x.at(i, j) - mean) * rstd) +
          bias[static_cast<std::size_t>(j)];
  }
  return out;
}

inline Mat relu(Mat a) {
  for (double& x : a.v) x = x > 0.0 ? x : 0.0;
  return a;
}

inline Mat add(const Mat& a, const Mat& b) {
  Mat c(a.rows, a.cols);
  for (std::size_t i = 0; i < a.v.size(); ++i) c.v[i] = a.v[i] + b.v[i];
  return c;
}

// Mean cross-entropy against hard labels, optional class weights.
inline double cross_entropy(const Mat& logits, const std::vector<int>& labels,
                            const std::vector<double>& weights = {}) {
  double total = 0.0;
  for (int i = 0; i < logits.rows; ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (int j = 0; j < logits.cols; ++j) mx = std::max(mx, logits.at(i, j));
    double sum = 0.0;
    for (int j = 0; j < logits.cols; ++j) sum += std::exp(logits.at(i, j) - mx);
    const double lse = mx + std::log(sum);
    const int y = labels[static_cast<std::size_t>(i)];
    const double w = weights.empty() ? 1.0 : weights[static_cast<std::size_t>(y)];
    total += w * (lse - logits.at(i, y));
  }
  return total / logits.rows;
}

// Soft-target cross-entropy of Eq-10 form with a constant teacher.
inline double distill(const Mat& zt, const Mat& zs, double t0) {
  double total = 0.0;
  for (int i = 0; i < zs.rows; ++i) {
    std::vector<double> p(static_cast<std::size_t>(zt.cols));
    double mx = -std::numeric_limits<double>::infinity();
    for (int j = 0; j < zt.cols; ++j) mx = std::max(mx, zt.at(i, j) / t0);
    double sum = 0.0;
    for (int j = 0; j < zt.cols; ++j) {
      p[static_cast<std::size_t>(j)] = std::exp(zt.at(i, j) / t0 - mx);
      sum += p[static_cast<std::size_t>(j)];
    }
    for (double& x : p) x /= sum;

    double mxs = -std::numeric_limits<double>::infinity();
    for (int j = 0; j < zs.cols; ++j) mxs = std::max(mxs, zs.at(i, j) / t0);
    double sums = 0.0;
    for (int j = 0; j < zs.cols; ++j) sums += std::exp(zs.at(i, j) / t0 - mxs);
    const double lses = mxs + std::log(sums);
    for (int j = 0; j < zs.cols; ++j)
      total -= p[static_cast<std::size_t>(j)] * (zs.at(i, j) / t0 - lses);
  }
  return total / zs.rows;
}

inline double entropy(const std::vector<double>& z, double t0) {
  std::vector<double> p(z.size());
  double mx = -std::numeric_limits<double>::infinity();
  for (double x : z) mx = std::max(mx, x / t0);
  double sum = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    p[i] = std::exp(z[i] / t0 - mx);
    sum += p[i];
  }
  double h = 0.0;
  for (double& x : p) {
    x /= sum;
    if (x > 0.0) h -= x * std::log(x);
  }
  return h;
}

// ---- full-model double-precision mirror --------------------------------

// Flat copy of a model's parameters, keyed by the library parameter names,
// plus just enough shape information to run the forward pass.
struct ModelRef {
  lesa::ModelConfig config;
  int num_classes = 0;
  std::map<std::string, std::vector<double>> params;

  // Distance of the forward pass from its two non-smooth points, tracked so
  // gradient checks can reject draws where finite differences would cross a
  // kink: smallest |pre-activation| at any ReLU, and smallest winner-vs-
  // runner-up gap in any label merge.
  mutable double min_relu_gap = std::numeric_limits<double>::infinity();
  mutable double min_merge_gap = std::numeric_limits<double>::infinity();

  void reset_gap_tracking() const {
    min_relu_gap = std::numeric_limits<double>::infinity();
    min_merge_gap = std::numeric_limits<double>::infinity();
  }

  static ModelRef from(const lesa::TriageModel& model) {
    ModelRef ref;
    ref.config = model.config;
    ref.num_classes = model.num_classes();
    for (const lesa::Parameter& p : lesa::parameters(model))
      ref.params[p.name] = std::vector<double>(p.value.data->begin(),
                                               p.value.data->end());
    return ref;
  }

  const std::vector<double>& buf(const std::string& name) const {
    const auto it = params.find(name);
    if (it == params.end())
      throw std::invalid_argument("ModelRef: no parameter " + name);
    return it->second;
  }

  Mat project(const Mat& x, const std::vector<double>& w, int out_dim) const {
    Mat out(x.rows, out_dim);
    for (int i = 0; i < x.rows; ++i)
      for (int jj = 0; jj < out_dim; ++jj) {
        double acc = 0.0;
        for (int j = 0; j < x.cols; ++j)
          acc += x.at(i, j) * w[static_cast<std::size_t>(j) * out_dim + jj];
        out.at(i, jj) = acc;
      }
    return out;
  }

  // Logits for one encoded example (eval mode, sequence trimmed to its
  // live length like the library forward).
  Mat logits(const lesa::EncodedExample& ex) const {
    const int d_model = config.dim, d = config.head_dim, h = config.heads;
    const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));
    int len = 0;
    while (len < static_cast<int>(ex.mask.size()) &&
           ex.mask[static_cast<std::size_t>(len)])
      ++len;

    const std::vector<double>& tok = buf("token_embedding");
    const std::vector<double>& pos = buf("position_embedding");
    Mat x(len, d_model);
    for (int i = 0; i < len; ++i)
      for (int j = 0; j < d_model; ++j)
        x.at(i, j) =
            tok[static_cast<std::size_t>(ex.ids[static_cast<std::size_t>(i)]) *
                    d_model +
                j] +
            pos[static_cast<std::size_t>(i) * d_model + j];

    const bool lesa_mode = config.mode == lesa::AttentionMode::Lesa;
    for (int li = 0; li < config.layers; ++li) {
      const std::string base = "layers." + std::to_string(li) + ".";
      Mat concat(len, h * d);
      for (int hi = 0; hi < h; ++hi) {
        const std::string hbase = base + "heads." + std::to_string(hi) + ".";
        const Mat k = project(x, buf(hbase + "w_k"), d);
        const Mat q = project(x, buf(hbase + "w_q"), d);
        const Mat v = project(x, buf(hbase + "w_v"), d);
        Mat scores = matmul(q, transpose(k));
        if (lesa_mode && len > 1) {
          const std::vector<double>& xl = buf("label_embedding");
          Mat label_emb(num_classes, d_model);
          label_emb.v = xl;
          const Mat ql = project(label_emb, buf(hbase + "w_q"), d);
          for (int col = 1; col < len; ++col) {
            double best = scores.at(0, col);
            double second = -std::numeric_limits<double>::infinity();
            for (int c = 0; c < num_classes; ++c) {
              double cand = 0.0;
              for (int jj = 0; jj < d; ++jj)
                cand += ql.at(c, jj) * k.at(col, jj);
              if (cand > best) {
                second = best;
                best = cand;
              } else if (cand > second) {
                second = cand;
              }
            }
            min_merge_gap = std::min(min_merge_gap, best - second);
            scores.at(0, col) = best;
          }
        }
        for (double& s : scores.v) s *= inv_sqrt_d;
        const Mat probs = row_softmax(scores);
        const Mat o = matmul(probs, v);
        for (int i = 0; i < len; ++i)
          for (int jj = 0; jj < d; ++jj) concat.at(i, hi * d + jj) = o.at(i, jj);
      }
      const Mat projected = project(concat, buf(base + "w_out"), d_model);
      const Mat u = layer_norm(add(x, projected), buf(base + "ln1.gain"),
                               buf(base + "ln1.bias"));

      Mat hidden = project(u, buf(base + "ffn.w1"), config.ffn_dim);
      const std::vector<double>& b1 = buf(base + "ffn.b1");
      for (int i = 0; i < len; ++i)
        for (int j = 0; j < config.ffn_dim; ++j) {
          hidden.at(i, j) += b1[static_cast<std::size_t>(j)];
          min_relu_gap = std::min(min_relu_gap, std::abs(hidden.at(i, j)));
        }
      hidden = relu(std::move(hidden));
      Mat f = project(hidden, buf(base + "ffn.w2"), d_model);
      const std::vector<double>& b2 = buf(base + "ffn.b2");
      for (int i = 0; i < len; ++i)
        for (int j = 0; j < d_model; ++j)
          f.at(i, j) += b2[static_cast<std::size_t>(j)];
      x = layer_norm(add(u, f), buf(base + "ln2.gain"), buf(base + "ln2.bias"));
    }

    const std::vector<double>& w = buf("classifier.w");
    const std::vector<double>& b = buf("classifier.b");
    Mat out(1, num_classes);
    for (int c = 0; c < num_classes; ++c) {
      double acc = b[static_cast<std::size_t>(c)];
      for (int j = 0; j < d_model; ++j)
        acc += x.at(0, j) * w[static_cast<std::size_t>(j) * num_classes + c];
      out.at(0, c) = acc;
    }
    return out;
  }

  double loss(const std::vector<lesa::EncodedExample>& batch) const {
    Mat all(static_cast<int>(batch.size()), num_classes);
    std::vector<int> labels;
    for (std::size_t i = 0; i < batch.size(); ++i) {
      const Mat row = logits(batch[i]);
      for (int c = 0; c < num_classes; ++c)
        all.at(static_cast<int>(i), c) = row.at(0, c);
      labels.push_back(batch[i].label);
    }
    return cross_entropy(all, labels);
  }
};

}  // namespace refmath
