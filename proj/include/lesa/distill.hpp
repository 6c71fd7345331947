#pragma once

#include "lesa/model.hpp"

namespace lesa {

struct DistillConfig {
  int student_layers = 2;          // M <= teacher layers
  float temperature = 1.0f;        // T0
  bool init_from_teacher = true;   // prefix copy vs fresh random init
  float hard_label_weight = 0.0f;  // w in (1-w)*soft + w*hard
  TrainHyper hyper;
};

// Student with the teacher's embeddings, label embedding, classification
// head, and encoder layers 0..M-1 copied verbatim (fresh buffers).
TriageModel init_student(const TriageModel& teacher, int student_layers);

// Honors init_from_teacher; random students draw from rng.
TriageModel make_student(const TriageModel& teacher, const DistillConfig& cfg,
                         Rng& rng);

struct DistillLog {
  // Mixture objective over the training set before any update, both models
  // in eval mode. With a full-copy student and w=0 this is the mean teacher
  // entropy.
  double initial_loss = 0.0;
  std::vector<EpochLog> epochs;
};

// Minimizes (1-w) * distill_loss + w * hard-label cross-entropy against a
// frozen teacher running in eval mode.
DistillLog distill_train(const TriageModel& teacher, TriageModel& student,
                         const std::vector<EncodedExample>& train,
                         const DistillConfig& cfg);

}  // namespace lesa
