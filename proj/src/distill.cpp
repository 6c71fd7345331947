#include "lesa/distill.hpp"

#include <stdexcept>

namespace lesa {

namespace {

Tensor deep_copy_param(const Tensor& t) {
  return Tensor::from_data(t.shape, *t.data, true);
}

void check_compatible(const TriageModel& teacher, const TriageModel& student) {
  if (teacher.vocab.id_to_token != student.vocab.id_to_token)
    throw std::invalid_argument("distill: teacher and student vocab differ");
  if (teacher.labels != student.labels)
    throw std::invalid_argument("distill: teacher and student labels differ");
}

double eval_objective(const TriageModel& teacher, const TriageModel& student,
                      const std::vector<EncodedExample>& examples,
                      const DistillConfig& cfg) {
  NoGradGuard no_grad;
  const float w = cfg.hard_label_weight;
  double total = 0.0;
  const std::size_t bs = static_cast<std::size_t>(cfg.hyper.batch_size);
  for (std::size_t start = 0; start < examples.size(); start += bs) {
    const std::size_t end = std::min(examples.size(), start + bs);
    const std::vector<EncodedExample> batch(examples.begin() + start,
                                            examples.begin() + end);
    const Tensor zt = forward_logits(teacher, batch);
    const Tensor zs = forward_logits(student, batch);
    double value = 0.0;
    if (w < 1.0f)
      value += (1.0 - static_cast<double>(w)) *
               distill_loss(zt, zs, cfg.temperature).scalar();
    if (w > 0.0f) {
      std::vector<int> labels;
      for (const EncodedExample& ex : batch) labels.push_back(ex.label);
      value += static_cast<double>(w) *
               softmax_cross_entropy(zs, labels).scalar();
    }
    total += value * static_cast<double>(batch.size());
  }
  return total / static_cast<double>(examples.size());
}

}  // namespace

TriageModel init_student(const TriageModel& teacher, int student_layers) {
  if (student_layers < 1 || student_layers > teacher.config.layers)
    throw std::invalid_argument(
        "init_student: student layers must be in [1, " +
        std::to_string(teacher.config.layers) + "], got " +
        std::to_string(student_layers));
  TriageModel student;
  student.config = teacher.config;
  student.config.layers = student_layers;
  student.labels = teacher.labels;
  student.vocab = teacher.vocab;
  student.embeddings.token_emb = deep_copy_param(teacher.embeddings.token_emb);
  student.embeddings.pos_emb = deep_copy_param(teacher.embeddings.pos_emb);
  for (int li = 0; li < student_layers; ++li) {
    const EncoderLayerParams& src = teacher.layers[static_cast<std::size_t>(li)];
    EncoderLayerParams dst;
    for (const AttentionHeadParams& head : src.heads)
      dst.heads.push_back({deep_copy_param(head.w_k), deep_copy_param(head.w_q),
                           deep_copy_param(head.w_v)});
    dst.w_out = deep_copy_param(src.w_out);
    dst.w1 = deep_copy_param(src.w1);
    dst.b1 = deep_copy_param(src.b1);
    dst.w2 = deep_copy_param(src.w2);
    dst.b2 = deep_copy_param(src.b2);
    dst.ln1 = {deep_copy_param(src.ln1.gain), deep_copy_param(src.ln1.bias)};
    dst.ln2 = {deep_copy_param(src.ln2.gain), deep_copy_param(src.ln2.bias)};
    student.layers.push_back(std::move(dst));
  }
  if (teacher.label_embedding.defined())
    student.label_embedding = deep_copy_param(teacher.label_embedding);
  student.head_w = deep_copy_param(teacher.head_w);
  student.head_b = deep_copy_param(teacher.head_b);
  return student;
}

TriageModel make_student(const TriageModel& teacher, const DistillConfig& cfg,
                         Rng& rng) {
  if (cfg.init_from_teacher) return init_student(teacher, cfg.student_layers);
  if (cfg.student_layers < 1 || cfg.student_layers > teacher.config.layers)
    throw std::invalid_argument(
        "make_student: student layers must be in [1, " +
        std::to_string(teacher.config.layers) + "], got " +
        std::to_string(cfg.student_layers));
  ModelConfig config = teacher.config;
  config.layers = cfg.student_layers;
  return init_model(config, teacher.labels, teacher.vocab, {}, rng);
}

DistillLog distill_train(const TriageModel& teacher, TriageModel& student,
                         const std::vector<EncodedExample>& train,
                         const DistillConfig& cfg) {
  check_compatible(teacher, student);
  if (train.empty())
    throw std::invalid_argument("distill_train: empty training set");
  if (!(cfg.temperature > 0.0f))
    throw std::invalid_argument("distill_train: temperature must be > 0");
  const float w = cfg.hard_label_weight;
  if (w < 0.0f || w > 1.0f)
    throw std::invalid_argument(
        "distill_train: hard_label_weight must be in [0,1]");

  DistillLog log;
  log.initial_loss = eval_objective(teacher, student, train, cfg);

  std::vector<Parameter> params = parameters(student);
  Adam adam(params, {cfg.hyper.lr, 0.9f, 0.999f, 1e-8f,
                     cfg.hyper.warmup_steps});
  Rng rng(cfg.hyper.seed);
  const Batcher batcher(train, cfg.hyper.batch_size);

  for (int epoch = 0; epoch < cfg.hyper.epochs; ++epoch) {
    double loss_sum = 0.0;
    std::size_t seen = 0;
    for (const std::vector<EncodedExample>& batch : batcher.epoch(rng)) {
      Tensor zt;
      {
        NoGradGuard no_grad;
        zt = forward_logits(teacher, batch);
      }
      ForwardOptions opt;
      opt.training = true;
      opt.dropout_p = student.config.dropout;
      opt.rng = &rng;
      const Tensor zs = forward_logits(student, batch, opt);

      Tensor loss;
      if (w <= 0.0f) {
        loss = distill_loss(zt, zs, cfg.temperature);
      } else {
        std::vector<int> labels;
        labels.reserve(batch.size());
        for (const EncodedExample& ex : batch) labels.push_back(ex.label);
        const Tensor hard = softmax_cross_entropy(zs, labels);
        loss = w >= 1.0f
                   ? hard
                   : add(scale(distill_loss(zt, zs, cfg.temperature), 1.0f - w),
                         scale(hard, w));
      }
      adam.zero_grad();
      backward(loss);
      adam.step();
      loss_sum += static_cast<double>(loss.scalar()) *
                  static_cast<double>(batch.size());
      seen += batch.size();
    }
    EpochLog el;
    el.train_loss = loss_sum / static_cast<double>(seen);
    log.epochs.push_back(el);
  }
  return log;
}

}  // namespace lesa
