#pragma once

#include <vector>

namespace lesa {

// Rows are true labels, columns predictions.
struct ConfusionMatrix {
  int num_classes = 0;
  std::vector<long long> counts;  // num_classes * num_classes, row-major

  long long& at(int t, int p) {
    return counts[static_cast<std::size_t>(t) * num_classes + p];
  }
  long long at(int t, int p) const {
    return counts[static_cast<std::size_t>(t) * num_classes + p];
  }
  long long total() const;
};

ConfusionMatrix confusion(const std::vector<int>& y_true,
                          const std::vector<int>& y_pred, int num_classes);

struct ClassMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

// Macros are unweighted means over classes; 0/0 ratios resolve to 0.
struct MacroMetrics {
  std::vector<ClassMetrics> per_class;
  double macro_precision = 0.0;
  double macro_recall = 0.0;
  double macro_f1 = 0.0;
  double accuracy = 0.0;
};

MacroMetrics macro_metrics(const ConfusionMatrix& cm);

// Sample mean and standard error of the mean (0 for a single value).
struct MeanStderr {
  double mean = 0.0;
  double stderr_ = 0.0;
};
MeanStderr mean_stderr(const std::vector<double>& values);

}  // namespace lesa
