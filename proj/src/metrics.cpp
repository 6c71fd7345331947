#include "lesa/metrics.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace lesa {

long long ConfusionMatrix::total() const {
  return std::accumulate(counts.begin(), counts.end(), 0LL);
}

ConfusionMatrix confusion(const std::vector<int>& y_true,
                          const std::vector<int>& y_pred, int num_classes) {
  if (num_classes < 1)
    throw std::invalid_argument("confusion: num_classes must be >= 1");
  if (y_true.size() != y_pred.size())
    throw std::invalid_argument(
        "confusion: " + std::to_string(y_true.size()) + " true labels vs " +
        std::to_string(y_pred.size()) + " predictions");
  ConfusionMatrix cm;
  cm.num_classes = num_classes;
  cm.counts.assign(
      static_cast<std::size_t>(num_classes) * num_classes, 0);
  for (std::size_t i = 0; i < y_true.size(); ++i) {
    const int t = y_true[i], p = y_pred[i];
    if (t < 0 || t >= num_classes || p < 0 || p >= num_classes)
      throw std::out_of_range("confusion: label pair (" + std::to_string(t) +
                              ", " + std::to_string(p) + ") out of range [0, " +
                              std::to_string(num_classes) + ")");
    ++cm.at(t, p);
  }
  return cm;
}

MacroMetrics macro_metrics(const ConfusionMatrix& cm) {
  const int c = cm.num_classes;
  MacroMetrics m;
  m.per_class.resize(static_cast<std::size_t>(c));
  long long correct = 0;
  for (int k = 0; k < c; ++k) {
    const long long tp = cm.at(k, k);
    long long fp = 0, fn = 0;
    for (int j = 0; j < c; ++j) {
      if (j == k) continue;
      fp += cm.at(j, k);
      fn += cm.at(k, j);
    }
    correct += tp;
    ClassMetrics& cls = m.per_class[static_cast<std::size_t>(k)];
    cls.precision = tp + fp > 0 ? static_cast<double>(tp) / (tp + fp) : 0.0;
    cls.recall = tp + fn > 0 ? static_cast<double>(tp) / (tp + fn) : 0.0;
    cls.f1 = cls.precision + cls.recall > 0.0
                 ? 2.0 * cls.precision * cls.recall /
                       (cls.precision + cls.recall)
                 : 0.0;
    m.macro_precision += cls.precision / c;
    m.macro_recall += cls.recall / c;
    m.macro_f1 += cls.f1 / c;
  }
  const long long n = cm.total();
  m.accuracy = n > 0 ? static_cast<double>(correct) / n : 0.0;
  return m;
}

MeanStderr mean_stderr(const std::vector<double>& values) {
  if (values.empty())
    throw std::invalid_argument("mean_stderr: no values");
  MeanStderr r;
  for (double v : values) r.mean += v;
  r.mean /= static_cast<double>(values.size());
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - r.mean) * (v - r.mean);
    const double var = ss / static_cast<double>(values.size() - 1);
    r.stderr_ = std::sqrt(var / static_cast<double>(values.size()));
  }
  return r;
}

}  // namespace lesa
